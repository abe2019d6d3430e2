"""Order reconciliation, next-open execution and cash accounting.

This is the reference (pure Python) implementation of one trading day.
The compiled kernel in ``_ckernel`` mirrors it operation for operation and
is tested for bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

LONG, HOLD, SHORT = 1, 0, -1
CLOSE_LEG, OPEN_LEG = 0, 1


@dataclass(frozen=True)
class Order:
    asset: int
    shares: int      # signed: > 0 buy, < 0 sell
    leg: int         # CLOSE_LEG or OPEN_LEG


@dataclass(frozen=True)
class Fill:
    day: int         # calendar index of execution (t + 1)
    asset: int
    side: int        # +1 buy, -1 sell
    shares: int
    price: float
    commission: float
    leg: int


@dataclass
class PortfolioState:
    cash: float
    positions: list[int]


def size_position(cash: float, alpha: float, price: float) -> int:
    """Whole shares bought with a fraction ``alpha`` of ``cash`` at ``price``."""
    if not price > 0:
        raise ValueError(f"reference price must be positive, got {price}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    n = math.floor(alpha * cash / price)
    return n if n > 0 else 0


def step(decisions: Sequence[int], closes_t: Sequence[float], state: PortfolioState,
         alpha: float, close_on_hold: bool = False) -> list[Order]:
    """Orders for the next open: every closing leg first, then opening legs.

    A flip closes the old position and opens the new one.  Holding keeps the
    current position unless ``close_on_hold`` is set.  Re-affirming the
    current direction trades nothing.
    """
    closes: list[Order] = []
    opens: list[Order] = []
    cash = state.cash
    for s, a in enumerate(decisions):
        p = state.positions[s]
        if a == LONG:
            if p < 0:
                closes.append(Order(s, -p, CLOSE_LEG))
            if p <= 0:
                n = math.floor(alpha * cash / closes_t[s])
                opens.append(Order(s, n if n > 0 else 0, OPEN_LEG))
        elif a == SHORT:
            if p > 0:
                closes.append(Order(s, -p, CLOSE_LEG))
            if p >= 0:
                n = math.floor(alpha * cash / closes_t[s])
                opens.append(Order(s, -(n if n > 0 else 0), OPEN_LEG))
        elif close_on_hold and p != 0:
            closes.append(Order(s, -p, CLOSE_LEG))
    return closes + [o for o in opens if o.shares != 0]


def execute(orders: Sequence[Order], opens_next: Sequence[float], state: PortfolioState,
            slippage: float, fee: float, day: int) -> tuple[list[Fill], int]:
    """Fill orders at the next open with slippage and per-share commission.

    Opening buys are cut to what cash can pay for.  Orders on assets with no
    usable open price are dropped; the count is returned.
    """
    fills: list[Fill] = []
    dropped = 0
    for od in orders:
        o = opens_next[od.asset]
        if not o > 0:
            dropped += 1
            continue
        if od.shares > 0:
            price = o * (1.0 + slippage)
            n = od.shares
            if od.leg == OPEN_LEG and n * price + fee * n > state.cash:
                n = math.floor(state.cash / (price + fee)) if state.cash > 0 else 0
                while n > 0 and n * price + fee * n > state.cash:
                    n -= 1
            if n <= 0:
                continue
            comm = fee * n
            state.cash = state.cash - (n * price + comm)
            state.positions[od.asset] += n
            fills.append(Fill(day, od.asset, 1, n, price, comm, od.leg))
        else:
            n = -od.shares
            price = o * (1.0 - slippage)
            comm = fee * n
            state.cash = state.cash + (n * price - comm)
            state.positions[od.asset] -= n
            fills.append(Fill(day, od.asset, -1, n, price, comm, od.leg))
    return fills, dropped


def mark(state: PortfolioState, closes_t: Sequence[float]) -> float:
    eq = state.cash
    for s, p in enumerate(state.positions):
        eq += p * closes_t[s]
    return eq
