import datetime as dt

import numpy as np
import pytest

from advnews.forecaster import (PARAM_NAMES, ForecasterConfig, ForecastModel, InsufficientHistory,
                                LSTMForecaster, PersistenceForecaster, directional_signal, forecast,
                                forward, init_params, loss_and_grad, loss_only, make_window,
                                price_signal, price_signals, train)
from advnews.market_data import Bar, BarSeries, Calendar


def make_series(closes, ticker="X", start=dt.date(2023, 1, 2)):
    bars = []
    prev = closes[0]
    for k, c in enumerate(closes):
        o = prev
        bars.append(Bar(start + dt.timedelta(days=k), o, max(o, c) * 1.001, min(o, c) * 0.999, c, 1000 + k))
        prev = c
    return BarSeries(ticker, tuple(bars))


def sine_series(n=160):
    t = np.arange(n)
    return make_series(list(100 + 5 * np.sin(2 * np.pi * t / 20)))


def test_directional_signal_examples():
    assert directional_signal(110, 100) == pytest.approx(0.10)
    assert directional_signal(100, 100) == 0.0
    assert directional_signal(95, 100) == pytest.approx(-0.05)
    with pytest.raises(ValueError):
        directional_signal(1, 0)


def test_price_signal_is_recomputable():
    s = price_signal("X", dt.date(2024, 1, 1), 101.7, 99.3)
    assert s.delta == (s.forecast - s.last_close) / s.last_close


def test_window_slicing():
    s = make_series([100, 101, 102])
    w = make_window(s, s.bars[2].date, ForecasterConfig(window=2))
    assert w.matrix.shape == (2, 5) and w.last_close == 102
    with pytest.raises(InsufficientHistory):
        make_window(s, s.bars[0].date, ForecasterConfig(window=2))


def test_constant_window_normalizes_to_zero():
    s = BarSeries("X", tuple(Bar(dt.date(2023, 1, 1) + dt.timedelta(days=k), 5, 5, 5, 5, 7)
                             for k in range(4)))
    w = make_window(s, s.bars[-1].date, ForecasterConfig(window=4))
    assert np.array_equal(w.matrix, np.zeros((4, 5)))


def test_gradient_check():
    rng = np.random.default_rng(0)
    params = init_params(4, seed=3)
    params = {k: v + rng.normal(0, 0.3, v.shape) for k, v in params.items()}
    X = rng.normal(size=(6, 5, 5))
    y = rng.normal(size=6)
    _, grads = loss_and_grad(params, X, y)
    eps = 1e-6
    for name in PARAM_NAMES:
        p = params[name]
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = loss_only(params, X, y)
            p[idx] = old - eps
            dn = loss_only(params, X, y)
            p[idx] = old
            num[idx] = (up - dn) / (2 * eps)
        rel = np.abs(grads[name] - num) / np.maximum(1e-8, np.abs(grads[name]) + np.abs(num))
        assert rel.max() < 1e-4, name


def test_training_is_deterministic():
    cfg = ForecasterConfig(window=10, hidden_size=4, epochs=15)
    s = sine_series(60)
    a, b = train(s, cfg), train(s, cfg)
    for k in PARAM_NAMES:
        assert a.params[k].tobytes() == b.params[k].tobytes()


def test_zero_learning_rate_keeps_init():
    cfg = ForecasterConfig(window=10, hidden_size=4, epochs=5, learning_rate=0.0)
    m = train(sine_series(40), cfg)
    init = init_params(4, cfg.seed)
    for k in PARAM_NAMES:
        assert np.array_equal(m.params[k], init[k])


def test_loss_is_non_increasing():
    m = train(sine_series(80), ForecasterConfig(window=10, hidden_size=6, epochs=40))
    h = m.loss_history
    assert all(b <= a for a, b in zip(h, h[1:]))


def test_zero_head_forecasts_persistence():
    cfg = ForecasterConfig(window=5, hidden_size=3)
    params = init_params(3, 1)
    params["v"][:] = 0
    params["c"][:] = 0
    m = ForecastModel(cfg, params)
    s = sine_series(20)
    w = make_window(s, s.bars[10].date, cfg)
    assert forecast(m, w) == s.bars[10].close
    assert forecast(m, w) == forecast(m, w)


def test_sine_beats_persistence():
    s = sine_series(200)
    train_s = BarSeries("X", s.bars[:150])
    cfg = ForecasterConfig(window=20, hidden_size=8, epochs=200)
    m = train(train_s, cfg)
    # training fit versus the persistence baseline, which predicts zero change
    from advnews.forecaster import training_set
    X, target = training_set(train_s, cfg)
    assert m.final_loss < float(np.mean(target ** 2))
    # out of sample: closer to the truth than persistence on most test days
    wins = 0
    days = [b.date for b in s.bars[150:-1]]
    for d in days:
        i = s.index_of(d)
        p_hat = forecast(m, make_window(s, d, cfg))
        truth = s.bars[i + 1].close
        wins += abs(p_hat - truth) < abs(s.bars[i].close - truth)
    assert wins / len(days) >= 0.6


def test_checkpoint_roundtrip(tmp_path):
    m = train(sine_series(40), ForecasterConfig(window=10, hidden_size=4, epochs=3))
    m.save(tmp_path / "m.json")
    back = ForecastModel.load(tmp_path / "m.json")
    for k in PARAM_NAMES:
        assert back.params[k].tobytes() == m.params[k].tobytes()
    assert back.config == m.config and back.loss_history == m.loss_history


def test_bad_checkpoint_rejected(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        ForecastModel.load(tmp_path / "x.json")
    with pytest.raises(ValueError):
        ForecastModel(ForecasterConfig(hidden_size=2), init_params(3, 0))


def test_training_needs_history():
    with pytest.raises(InsufficientHistory):
        train(sine_series(10), ForecasterConfig(window=10))


def test_price_signals_matrix():
    s = sine_series(40)
    cal = Calendar(tuple(b.date for b in s.bars[5:]))
    delta = price_signals({"X": PersistenceForecaster()}, {"X": s}, ["X"], cal)
    assert np.array_equal(delta, np.zeros((35, 1)))
    m = train(BarSeries("X", s.bars[:30]), ForecasterConfig(window=10, hidden_size=3, epochs=2))
    d2 = price_signals({"X": LSTMForecaster(m)}, {"X": s}, ["X"], cal)
    assert np.isnan(d2[:4]).all() and np.isfinite(d2[4:]).all()


def test_forward_batch_matches_single():
    params = init_params(4, 0)
    X = np.random.default_rng(1).normal(size=(3, 6, 5))
    batch = forward(params, X)
    for i in range(3):
        assert forward(params, X[i:i + 1])[0] == pytest.approx(batch[i], abs=1e-15)
