"""One-day-ahead price forecasting: a small LSTM and a persistence baseline.

The LSTM reads a window of normalized OHLCV rows and predicts the next close
as a scaled change from the last close:

    P_hat = close_t + scale_close * y

so an all-zero head reproduces persistence.  Training is full-batch gradient
descent on mean squared error with step halving, which keeps the training
loss non-increasing epoch over epoch.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .market_data import BarSeries, Calendar

STD_FLOOR = 1e-12
N_FEATURES = 5
CHECKPOINT_FORMAT = "advnews-lstm"
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("W", "U", "b", "v", "c")


class InsufficientHistory(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ForecasterConfig:
    window: int = 50
    hidden_size: int = 16
    epochs: int = 200
    learning_rate: float = 0.2
    seed: int = 42
    normalization: str = "zscore"  # or "minmax"
    max_halvings: int = 30

    def __post_init__(self):
        problems = []
        if self.window < 2:
            problems.append("window must be >= 2")
        if self.hidden_size < 1:
            problems.append("hidden_size must be >= 1")
        if not self.learning_rate >= 0:
            problems.append("learning_rate must be >= 0")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if self.normalization not in ("zscore", "minmax"):
            problems.append(f"unknown normalization {self.normalization!r}")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def from_dict(cls, obj: dict) -> "ForecasterConfig":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})


@dataclass(frozen=True)
class FeatureWindow:
    ticker: str
    end_date: dt.date
    matrix: np.ndarray      # (window, 5) normalized
    last_close: float
    close_scale: float      # multiplies the head output back into price units

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("feature window contains non-finite values")


@dataclass(frozen=True)
class PriceSignal:
    ticker: str
    date: dt.date
    forecast: float
    last_close: float
    delta: float


def directional_signal(p_hat: float, p_t: float) -> float:
    if not p_t > 0:
        raise ValueError(f"reference price must be positive, got {p_t}")
    return (p_hat - p_t) / p_t


def price_signal(ticker: str, day: dt.date, p_hat: float, p_t: float) -> PriceSignal:
    return PriceSignal(ticker, day, p_hat, p_t, directional_signal(p_hat, p_t))


# -- normalization ---------------------------------------------------------

def _normalize(raw: np.ndarray, config: ForecasterConfig, ranges=None):
    """raw: (..., W, 5) -> (normalized, close scale per window)."""
    if config.normalization == "zscore":
        mu = raw.mean(axis=-2, keepdims=True)
        sd = np.maximum(raw.std(axis=-2, keepdims=True), STD_FLOOR)
        return (raw - mu) / sd, sd[..., 0, 3]
    lo, hi = ranges
    scale = np.maximum(hi - lo, STD_FLOOR)
    norm = (raw - lo) / scale
    return norm, np.broadcast_to(scale[3], raw.shape[:-2]).copy()


def _train_ranges(series: BarSeries):
    m = series.matrix()
    return m.min(axis=0), m.max(axis=0)


def make_window(series: BarSeries, t: dt.date, config: ForecasterConfig,
                ranges=None) -> FeatureWindow:
    idx = series.index_of(t)
    W = config.window
    if idx + 1 < W:
        earliest = series.bars[W - 1].date if len(series) >= W else None
        raise InsufficientHistory(
            f"{series.ticker}: need {W} bars ending at {t}; earliest feasible day is {earliest}")
    raw = series.matrix()[idx - W + 1: idx + 1]
    if config.normalization == "minmax" and ranges is None:
        raise ValueError("minmax normalization needs training ranges")
    norm, scale = _normalize(raw, config, ranges)
    return FeatureWindow(series.ticker, t, norm, float(raw[-1, 3]), float(scale))


# -- the network -------------------------------------------------------------

def init_params(hidden: int, seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    H = hidden
    return {
        "W": rng.uniform(-0.1, 0.1, (4 * H, N_FEATURES)),
        "U": rng.uniform(-0.1, 0.1, (4 * H, H)),
        "b": rng.uniform(-0.1, 0.1, 4 * H),
        "v": rng.uniform(-0.1, 0.1, H),
        "c": rng.uniform(-0.1, 0.1, 1),
    }


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward(params, X, keep=False):
    """X: (N, W, 5) -> head output (N,); optionally the per-step cache."""
    W, U, b, v, c0 = (params[k] for k in PARAM_NAMES)
    H = v.shape[0]
    N, T, _ = X.shape
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    cache = []
    for t in range(T):
        z = X[:, t] @ W.T + h @ U.T + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        o = _sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        if keep:
            cache.append((X[:, t], h_prev, c_prev, i, f, o, g, tc))
    y = h @ v + c0[0]
    return (y, h, cache) if keep else y


def loss_and_grad(params, X, target):
    y, h_last, cache = forward(params, X, keep=True)
    N = X.shape[0]
    err = y - target
    loss = float(np.mean(err * err))
    W, U, v = params["W"], params["U"], params["v"]
    H = v.shape[0]
    grads = {k: np.zeros_like(p) for k, p in params.items()}
    dy = 2.0 * err / N
    grads["v"] = h_last.T @ dy
    grads["c"] = np.array([dy.sum()])
    dh = np.outer(dy, v)
    dc = np.zeros_like(dh)
    for x_t, h_prev, c_prev, i, f, o, g, tc in reversed(cache):
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)], axis=1)
        grads["W"] += dz.T @ x_t
        grads["U"] += dz.T @ h_prev
        grads["b"] += dz.sum(axis=0)
        dh = dz @ U
        dc = dc * f
    return loss, grads


def loss_only(params, X, target) -> float:
    err = forward(params, X) - target
    return float(np.mean(err * err))


# -- model -------------------------------------------------------------------

@dataclass
class ForecastModel:
    config: ForecasterConfig
    params: dict[str, np.ndarray]
    final_loss: float = float("nan")
    loss_history: list[float] = field(default_factory=list)
    ranges: tuple[np.ndarray, np.ndarray] | None = None
    ticker: str = ""

    def __post_init__(self):
        H = self.config.hidden_size
        shapes = {"W": (4 * H, N_FEATURES), "U": (4 * H, H), "b": (4 * H,), "v": (H,), "c": (1,)}
        for k, shp in shapes.items():
            p = np.asarray(self.params[k], dtype=float)
            if p.shape != shp:
                raise ValueError(f"parameter {k} has shape {p.shape}, expected {shp}")
            if not np.all(np.isfinite(p)):
                raise ValueError(f"parameter {k} has non-finite entries")
            self.params[k] = p

    def save(self, path) -> None:
        obj = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "ticker": self.ticker,
            "config": asdict(self.config),
            "final_loss": self.final_loss,
            "loss_history": self.loss_history,
            "ranges": None if self.ranges is None else [r.tolist() for r in self.ranges],
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
        }
        Path(path).write_text(json.dumps(obj), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ForecastModel":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("format") != CHECKPOINT_FORMAT or obj.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
        params = {k: np.array(v["data"], dtype=float).reshape(v["shape"])
                  for k, v in obj["params"].items()}
        ranges = None if obj["ranges"] is None else tuple(np.array(r) for r in obj["ranges"])
        return cls(ForecasterConfig(**obj["config"]), params, obj["final_loss"],
                   obj["loss_history"], ranges, obj.get("ticker", ""))


def training_set(series: BarSeries, config: ForecasterConfig, ranges=None):
    m = series.matrix()
    W = config.window
    ends = np.arange(W - 1, len(m) - 1)
    raw = np.stack([m[e - W + 1: e + 1] for e in ends])
    norm, scale = _normalize(raw, config, ranges)
    target = (m[ends + 1, 3] - m[ends, 3]) / scale
    return norm, target


def train(train_series: BarSeries, config: ForecasterConfig) -> ForecastModel:
    if len(train_series) < config.window + 2:
        raise InsufficientHistory(
            f"{train_series.ticker}: training needs >= {config.window + 2} bars, got {len(train_series)}")
    ranges = _train_ranges(train_series) if config.normalization == "minmax" else None
    X, target = training_set(train_series, config, ranges)
    params = init_params(config.hidden_size, config.seed)
    history = []
    loss = loss_only(params, X, target)
    for epoch in range(config.epochs):
        loss, grads = loss_and_grad(params, X, target)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDiverged(
                f"non-finite loss at epoch {epoch} (learning rate {config.learning_rate})")
        lr = config.learning_rate
        for _ in range(config.max_halvings + 1):
            trial = {k: params[k] - lr * grads[k] for k in params}
            trial_loss = loss_only(trial, X, target)
            if math.isfinite(trial_loss) and trial_loss <= loss:
                params, loss = trial, trial_loss
                break
            lr *= 0.5
        history.append(loss)
    return ForecastModel(config, params, loss, history, ranges, train_series.ticker)


def forecast(model: ForecastModel, window: FeatureWindow) -> float:
    X = window.matrix
    if X.shape != (model.config.window, N_FEATURES):
        raise ValueError(f"window shape {X.shape} does not match model "
                         f"({model.config.window}, {N_FEATURES})")
    y = forward(model.params, X[None])[0]
    return float(window.last_close + window.close_scale * y)


def persistence_forecast(series: BarSeries, t: dt.date) -> float:
    return series.bar(t).close


class Forecaster(Protocol):
    def forecast_series(self, series: BarSeries, days: Sequence[dt.date]) -> np.ndarray: ...


class PersistenceForecaster:
    name = "persistence"

    def forecast_series(self, series: BarSeries, days: Sequence[dt.date]) -> np.ndarray:
        return np.array([persistence_forecast(series, d) for d in days], dtype=float)


class LSTMForecaster:
    """Forecasts with a trained model; NaN where the window does not fit."""

    name = "lstm"

    def __init__(self, model: ForecastModel):
        self.model = model

    def forecast_series(self, series: BarSeries, days: Sequence[dt.date]) -> np.ndarray:
        cfg = self.model.config
        W = cfg.window
        m = series.matrix()
        out = np.full(len(days), np.nan)
        ok, raws = [], []
        for k, d in enumerate(days):
            idx = series.index_of(d)
            if idx + 1 >= W:
                ok.append(k)
                raws.append(m[idx - W + 1: idx + 1])
        if ok:
            raw = np.stack(raws)
            norm, scale = _normalize(raw, cfg, self.model.ranges)
            y = forward(self.model.params, norm)
            out[ok] = raw[:, -1, 3] + scale * y
        return out


def price_signals(forecasters: dict[str, Forecaster], series: dict[str, BarSeries],
                  tickers: Sequence[str], calendar: Calendar) -> np.ndarray:
    """Directional signal for every (day, asset); NaN when no forecast exists."""
    T, S = len(calendar), len(tickers)
    delta = np.full((T, S), np.nan)
    for j, t in enumerate(tickers):
        p_hat = forecasters[t].forecast_series(series[t], calendar.dates)
        closes = np.array([series[t].bar(d).close for d in calendar.dates])
        delta[:, j] = (p_hat - closes) / closes
    return delta
