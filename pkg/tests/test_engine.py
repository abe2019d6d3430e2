import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advnews import kernel
from advnews.accounting import (CLOSE_LEG, OPEN_LEG, Order, PortfolioState, execute, size_position,
                                step)
from advnews.engine import (BacktestError, ConfigError, CostConfig, Decision, MarketFrame,
                            StrategyParams, check_accounting, decide, fuse, run_backtest)
from advnews.market_data import Calendar


def frame(opens, closes, tickers=None):
    opens, closes = np.asarray(opens, float), np.asarray(closes, float)
    T, S = closes.shape
    days = tuple(dt.date(2024, 1, 1) + dt.timedelta(days=k) for k in range(T))
    return MarketFrame(tuple(tickers or [f"S{j}" for j in range(S)]), Calendar(days), opens, closes)


def test_fusion_examples():
    assert fuse(0.03, 0.9, StrategyParams(mode="price_only")) == 0.03
    assert fuse(0.03, 0.9, StrategyParams(w_p=1.0, w_n=0.0)) == 0.03
    assert fuse(0.02, 0.40, StrategyParams()) == pytest.approx(0.21)
    assert fuse(0.0, 0.0, StrategyParams()) == 0


def test_decision_examples():
    assert decide(0.3, 0.1) is Decision.LONG
    assert decide(-0.3, 0.1) is Decision.SHORT
    assert decide(0.1, 0.1) is Decision.HOLD
    assert decide(-0.1, 0.1) is Decision.HOLD


def test_params_validation_lists_everything():
    with pytest.raises(ConfigError) as err:
        StrategyParams(w_p=0.7, w_n=0.7, tau=-1, alpha=2)
    msg = str(err.value)
    assert "sum to 1" in msg and "tau" in msg and "alpha" in msg
    with pytest.raises(ConfigError):
        CostConfig(initial_capital=0)


def test_sizing_examples():
    assert size_position(1_000_000, 0.1, 250) == 400
    assert size_position(100, 0.1, 250) == 0
    with pytest.raises(ValueError):
        size_position(100, 0.1, 0)


def test_reconciliation():
    st_ = PortfolioState(10_000.0, [0])
    assert step([1], [100.0], st_, 0.1) == [Order(0, 10, OPEN_LEG)]
    st_ = PortfolioState(10_000.0, [5])
    assert step([-1], [100.0], st_, 0.1) == [Order(0, -5, CLOSE_LEG), Order(0, -10, OPEN_LEG)]
    assert step([0], [100.0], st_, 0.1) == []
    assert step([1], [100.0], st_, 0.1) == []
    assert step([0], [100.0], st_, 0.1, close_on_hold=True) == [Order(0, -5, CLOSE_LEG)]


def test_closing_legs_come_first():
    st_ = PortfolioState(10_000.0, [0, 3])
    orders = step([1, -1], [100.0, 50.0], st_, 0.1)
    assert [o.leg for o in orders] == [CLOSE_LEG, OPEN_LEG, OPEN_LEG]


def test_buy_cost_example():
    st_ = PortfolioState(10_000.0, [0])
    fills, dropped = execute([Order(0, 100, OPEN_LEG)], [50.0], st_, 0.0002, 0.005, 1)
    assert st_.cash == pytest.approx(10_000 - 5001.50, abs=1e-9)
    assert fills[0].price == pytest.approx(50.01) and fills[0].commission == pytest.approx(0.5)
    assert dropped == 0


def test_unaffordable_buy_is_scaled():
    st_ = PortfolioState(100.0, [0])
    fills, _ = execute([Order(0, 200, OPEN_LEG)], [50.0], st_, 0.0002, 0.005, 1)
    assert fills[0].shares == 1 and st_.cash >= 0


def test_missing_open_drops_order():
    st_ = PortfolioState(100.0, [0])
    fills, dropped = execute([Order(0, 1, OPEN_LEG)], [float("nan")], st_, 0, 0, 1)
    assert fills == [] and dropped == 1 and st_.cash == 100.0


def test_no_signal_no_trade():
    m = frame([[10, 20]] * 5, [[11, 19]] * 5)
    z = np.zeros((5, 2))
    r = run_backtest(m, z, z)
    assert r.cr == 0.0 and len(r.fills) == 0


def test_cr_formula():
    from advnews.engine import BacktestResult
    r = BacktestResult((), (), np.array([1_000_000.0, 1_192_200.0]), None, None, None, None, None,
                       None, 0, 1_000_000.0)
    assert r.cr == pytest.approx(19.22)


def hand_oracle(decisions, opens, closes, alpha, slip, fee, cash0):
    """Independent day-by-day ledger used as the accounting oracle."""
    T, S = decisions.shape
    cash = cash0
    pos = [0] * S
    pending = None
    eq = []
    for t in range(T):
        if pending is not None:
            closes_leg, opens_leg = pending
            for s, q in closes_leg:
                px = opens[t][s] * (1 + slip) if q > 0 else opens[t][s] * (1 - slip)
                cash -= q * px + abs(q) * fee
                pos[s] += q
            for s, q in opens_leg:
                if q > 0:
                    px = opens[t][s] * (1 + slip)
                    while q > 0 and q * px + q * fee > cash:
                        q -= 1
                    if q == 0:
                        continue
                else:
                    px = opens[t][s] * (1 - slip)
                cash -= q * px + abs(q) * fee
                pos[s] += q
        eq.append(cash + sum(p * c for p, c in zip(pos, closes[t])))
        cl, op = [], []
        for s in range(S):
            a = decisions[t][s]
            n = max(0, int(alpha * cash // closes[t][s]))  # no new size from negative cash
            if a == 1 and pos[s] <= 0:
                if pos[s]:
                    cl.append((s, -pos[s]))
                if n:
                    op.append((s, n))
            elif a == -1 and pos[s] >= 0:
                if pos[s]:
                    cl.append((s, -pos[s]))
                if n:
                    op.append((s, -n))
        pending = (cl, op)
    return np.array(eq)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_random_runs_match_oracle_and_conserve(seed):
    rng = np.random.default_rng(seed)
    T, S = 30, 3
    closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, (T, S)), axis=0))
    opens = closes * np.exp(rng.normal(0, 0.005, (T, S)))
    sbar = rng.uniform(-1, 1, (T, S))
    p = StrategyParams(alpha=0.3)
    r = run_backtest(frame(opens, closes), np.zeros((T, S)), sbar, p)
    check_accounting(r.equity, r.cash, r.positions, closes, rtol=1e-9)
    oracle = hand_oracle(r.decisions, opens, closes, 0.3, 0.0002, 0.005, 1e6)
    np.testing.assert_allclose(r.equity, oracle, rtol=1e-9)


def test_one_decision_per_asset_day():
    rng = np.random.default_rng(3)
    T, S = 50, 4
    closes = 50 + rng.uniform(0, 5, (T, S))
    r = run_backtest(frame(closes, closes), np.zeros((T, S)), rng.choice([-1, 1], (T, S)) * 1.0)
    pairs = {}
    for f in r.fills:
        key = (int(f["day"]), int(f["asset"]), int(f["leg"]))
        assert key not in pairs
        pairs[key] = 1


def test_price_only_equivalence():
    rng = np.random.default_rng(5)
    T, S = 40, 3
    closes = 100 + rng.normal(0, 1, (T, S)).cumsum(axis=0)
    delta = rng.normal(0, 0.01, (T, S))
    sbar = rng.uniform(-1, 1, (T, S))
    m = frame(closes, closes)
    a = run_backtest(m, delta, sbar, StrategyParams(w_p=1.0, w_n=0.0))
    b = run_backtest(m, delta, sbar, StrategyParams(mode="price_only"))
    assert a.action_log_bytes() == b.action_log_bytes()


def test_nan_delta_means_hold():
    m = frame([[10.0]] * 3, [[10.0]] * 3)
    r = run_backtest(m, np.full((3, 1), np.nan), np.ones((3, 1)), StrategyParams(mode="price_only"))
    assert (r.decisions == 0).all()


def test_shape_mismatch():
    m = frame([[10.0]] * 3, [[10.0]] * 3)
    with pytest.raises(BacktestError):
        run_backtest(m, np.zeros((2, 1)), np.zeros((3, 1)))


def test_determinism_and_backends_agree():
    rng = np.random.default_rng(9)
    T, S = 60, 5
    closes = 100 + rng.normal(0, 1, (T, S)).cumsum(axis=0)
    opens = closes + rng.normal(0, 0.3, (T, S))
    sbar = rng.uniform(-1, 1, (T, S))
    m = frame(opens, closes)
    a = run_backtest(m, np.zeros((T, S)), sbar, simulate=kernel.py_simulate)
    b = run_backtest(m, np.zeros((T, S)), sbar)
    assert a.trade_log_bytes() == b.trade_log_bytes()
    assert a.equity.tobytes() == b.equity.tobytes()
    assert a.cash.tobytes() == b.cash.tobytes()


def test_write_outputs(tmp_path):
    closes = np.array([[10.0, 20.0], [11.0, 19.0], [12.0, 18.0]])
    r = run_backtest(frame(closes, closes, ["A", "B"]), np.zeros((3, 2)), np.array([[1, -1]] * 3) * 1.0)
    r.write(tmp_path)
    assert (tmp_path / "equity.csv").read_text().startswith("date,equity\n2024-01-01,1000000.0\n")
    trades = (tmp_path / "trades.csv").read_text().splitlines()
    assert trades[1].startswith("2024-01-02,A,buy,")
    assert '"cr"' in (tmp_path / "summary.json").read_text()
