"""Pure-Python backtest loop; the fallback when the compiled kernel is absent."""

from __future__ import annotations

import numpy as np

from .accounting import PortfolioState, execute, mark, step

FILL_DTYPE = np.dtype([
    ("day", np.int32), ("asset", np.int32), ("side", np.int8), ("shares", np.int64),
    ("price", np.float64), ("commission", np.float64), ("leg", np.int8),
])


def simulate(decisions, opens, closes, alpha, slippage, fee, initial_cash, close_on_hold):
    """Run the daily loop.

    ``decisions[t]`` are taken after the close of day ``t`` and fill at the
    open of ``t + 1``.  Returns equity, cash, positions, opening order sizes,
    the fill log and the number of dropped orders.
    """
    T, S = decisions.shape
    dec = decisions.tolist()
    op = opens.tolist()
    cl = closes.tolist()
    state = PortfolioState(float(initial_cash), [0] * S)
    equity = np.empty(T)
    cash = np.empty(T)
    positions = np.zeros((T, S), dtype=np.int64)
    order_shares = np.zeros((T, S), dtype=np.int64)
    fills = []
    dropped = 0
    pending = []
    for t in range(T):
        if pending:
            f, d = execute(pending, op[t], state, slippage, fee, t)
            fills.extend(f)
            dropped += d
            pending = []
        equity[t] = mark(state, cl[t])
        cash[t] = state.cash
        positions[t] = state.positions
        if t < T - 1:
            pending = step(dec[t], cl[t], state, alpha, close_on_hold)
            for od in pending:
                if od.leg == 1:
                    order_shares[t, od.asset] = abs(od.shares)
    log = np.array([(f.day, f.asset, f.side, f.shares, f.price, f.commission, f.leg) for f in fills],
                   dtype=FILL_DTYPE)
    return equity, cash, positions, order_shares, log, dropped
