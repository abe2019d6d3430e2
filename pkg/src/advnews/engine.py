"""Signal fusion, thresholding and the daily portfolio backtest."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernel as _kernel
from .accounting import size_position  # noqa: F401  (public API)
from .accounting import Fill, Order, PortfolioState, execute, step  # noqa: F401
from .market_data import BarSeries, Calendar, aligned_arrays


class ConfigError(ValueError):
    pass


class BacktestError(RuntimeError):
    pass


class Decision(enum.IntEnum):
    SHORT = -1
    HOLD = 0
    LONG = 1

    @property
    def label(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True)
class StrategyParams:
    w_p: float = 0.5
    w_n: float = 0.5
    tau: float = 0.005
    alpha: float = 0.1
    mode: str = "hybrid"            # or "price_only"
    close_on_hold: bool = False

    def __post_init__(self):
        problems = []
        if self.mode == "price_only":
            object.__setattr__(self, "w_p", 1.0)
            object.__setattr__(self, "w_n", 0.0)
        elif self.mode != "hybrid":
            problems.append(f"unknown mode {self.mode!r}")
        if self.w_p < 0 or self.w_n < 0:
            problems.append("weights must be non-negative")
        if abs(self.w_p + self.w_n - 1.0) > 1e-12:
            problems.append(f"weights must sum to 1, got {self.w_p} + {self.w_n}")
        if not self.tau >= 0:
            problems.append("tau must be >= 0")
        if not 0 < self.alpha <= 1:
            problems.append("alpha must be in (0, 1]")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_dict(cls, obj: dict) -> "StrategyParams":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})


@dataclass(frozen=True)
class CostConfig:
    initial_capital: float = 1_000_000.0
    fee_per_share: float = 0.005
    slippage_frac: float = 0.0002

    def __post_init__(self):
        problems = []
        if not self.initial_capital > 0:
            problems.append("initial_capital must be positive")
        if self.fee_per_share < 0:
            problems.append("fee_per_share must be >= 0")
        if not 0 <= self.slippage_frac < 1:
            problems.append("slippage_frac must be in [0, 1)")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_dict(cls, obj: dict) -> "CostConfig":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})


def fuse(delta, sbar, params: StrategyParams):
    if params.mode == "price_only":
        return delta
    return params.w_p * delta + params.w_n * sbar


def decide(sigma: float, tau: float) -> Decision:
    if sigma > tau:
        return Decision.LONG
    if sigma < -tau:
        return Decision.SHORT
    return Decision.HOLD


def decide_array(sigma: np.ndarray, tau: float) -> np.ndarray:
    """Vectorized ``decide``; NaN scores become Hold."""
    out = np.zeros(sigma.shape, dtype=np.int8)
    out[sigma > tau] = 1
    out[sigma < -tau] = -1
    return out


@dataclass(frozen=True)
class MarketFrame:
    """Opens and closes of every asset on a common calendar."""

    tickers: tuple[str, ...]
    calendar: Calendar
    opens: np.ndarray   # (T, S)
    closes: np.ndarray  # (T, S)

    @classmethod
    def from_series(cls, series: dict[str, BarSeries], tickers: Sequence[str],
                    calendar: Calendar) -> "MarketFrame":
        opens, closes = aligned_arrays(series, tickers, calendar)
        return cls(tuple(tickers), calendar, opens, closes)

    @property
    def dates(self) -> tuple[dt.date, ...]:
        return self.calendar.dates


@dataclass
class BacktestResult:
    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    equity: np.ndarray
    cash: np.ndarray
    positions: np.ndarray
    sigma: np.ndarray
    decisions: np.ndarray
    order_shares: np.ndarray
    fills: np.ndarray
    dropped_orders: int
    initial_capital: float
    config: dict = field(default_factory=dict)

    @property
    def cr(self) -> float:
        """Cumulative return in percent, marked at the final close."""
        return float((self.equity[-1] / self.initial_capital - 1.0) * 100.0)

    @property
    def final_equity(self) -> float:
        return float(self.equity[-1])

    def trade_log(self) -> list[Fill]:
        return [Fill(int(r["day"]), int(r["asset"]), int(r["side"]), int(r["shares"]),
                     float(r["price"]), float(r["commission"]), int(r["leg"])) for r in self.fills]

    def action_log_bytes(self) -> bytes:
        return self.decisions.tobytes() + self.order_shares.tobytes()

    def trade_log_bytes(self) -> bytes:
        return self.fills.tobytes()

    def summary(self) -> dict:
        return {
            "cr": self.cr,
            "initial_capital": self.initial_capital,
            "final_equity": self.final_equity,
            "n_days": len(self.dates),
            "start": self.dates[0].isoformat(),
            "end": self.dates[-1].isoformat(),
            "n_fills": int(len(self.fills)),
            "total_commission": float(self.fills["commission"].sum()) if len(self.fills) else 0.0,
            "dropped_orders": self.dropped_orders,
            "kernel": self.config.get("kernel"),
            "config": self.config,
        }

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "equity.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "equity"])
            for d, e in zip(self.dates, self.equity):
                w.writerow([d.isoformat(), repr(float(e))])
        with (out / "trades.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "ticker", "side", "shares", "price", "commission", "leg"])
            for f in self.trade_log():
                w.writerow([self.dates[f.day].isoformat(), self.tickers[f.asset],
                            "buy" if f.side > 0 else "sell", f.shares, repr(f.price),
                            repr(f.commission), "open" if f.leg else "close"])
        with (out / "actions.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "ticker", "sigma", "action", "target_shares"])
            for i, d in enumerate(self.dates):
                for j, t in enumerate(self.tickers):
                    w.writerow([d.isoformat(), t, repr(float(self.sigma[i, j])),
                                Decision(int(self.decisions[i, j])).label,
                                int(self.order_shares[i, j])])
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2) + "\n")


def check_accounting(equity, cash, positions, closes, rtol=1e-9) -> None:
    """equity == cash + sum(shares * close) on every day."""
    for t in range(len(equity)):
        expect = float(cash[t]) + math.fsum(float(p) * float(c) for p, c in zip(positions[t], closes[t]))
        if abs(equity[t] - expect) > rtol * max(1.0, abs(expect)):
            raise BacktestError(f"accounting mismatch on day {t}: equity {equity[t]} vs {expect}")


def run_backtest(market: MarketFrame, delta: np.ndarray, sbar: np.ndarray,
                 params: StrategyParams = StrategyParams(), costs: CostConfig = CostConfig(),
                 simulate=None, verify: bool = True) -> BacktestResult:
    """Trade the calendar: score at close ``t``, fill at open ``t + 1``."""
    T, S = market.closes.shape
    if T == 0:
        raise BacktestError("empty calendar")
    if delta.shape != (T, S) or sbar.shape != (T, S):
        raise BacktestError(f"signal shape mismatch: delta {delta.shape}, sbar {sbar.shape}, market {(T, S)}")
    sigma = fuse(delta, sbar, params)
    decisions = decide_array(sigma, params.tau)
    sim = simulate or _kernel.simulate
    equity, cash, positions, order_shares, fills, dropped = sim(
        np.ascontiguousarray(decisions), np.ascontiguousarray(market.opens, dtype=float),
        np.ascontiguousarray(market.closes, dtype=float), float(params.alpha),
        float(costs.slippage_frac), float(costs.fee_per_share), float(costs.initial_capital),
        bool(params.close_on_hold))
    if not np.all(np.isfinite(equity)):
        bad = int(np.argmax(~np.isfinite(equity)))
        raise BacktestError(f"non-finite equity on {market.dates[bad]} (cash {cash[bad]}, "
                            f"positions {positions[bad].tolist()})")
    if verify:
        check_accounting(equity, cash, positions, market.closes)
    config = {"params": asdict(params), "costs": asdict(costs),
              "kernel": "cython" if sim is _kernel.c_simulate else "python"}
    return BacktestResult(market.dates, market.tickers, equity, cash, positions, sigma,
                          decisions, order_shares, fills, dropped, costs.initial_capital, config)
