# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backtest loop.

Mirrors ``accounting.step`` / ``accounting.execute`` operation for operation
so results are bit-identical to the pure-Python path.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

from ._pykernel import FILL_DTYPE


cdef inline long long _size(double alpha, double cash, double price) noexcept nogil:
    cdef double x = floor(alpha * cash / price)
    if x > 0:
        return <long long>x
    return 0


def simulate(cnp.int8_t[:, :] decisions, double[:, :] opens, double[:, :] closes,
             double alpha, double slippage, double fee, double initial_cash,
             bint close_on_hold):
    cdef Py_ssize_t T = decisions.shape[0]
    cdef Py_ssize_t S = decisions.shape[1]
    cdef Py_ssize_t t, s, k, nf = 0
    cdef double cash = initial_cash, eq, o, price, comm
    cdef long long p, n, q
    cdef long long dropped = 0
    cdef int a

    equity_a = np.empty(T)
    cash_a = np.empty(T)
    pos_a = np.zeros((T, S), dtype=np.int64)
    size_a = np.zeros((T, S), dtype=np.int64)
    cdef double[:] equity = equity_a
    cdef double[:] cash_log = cash_a
    cdef long long[:, :] pos_log = pos_a
    cdef long long[:, :] order_shares = size_a

    pos_np = np.zeros(S, dtype=np.int64)
    pc_np = np.zeros(S, dtype=np.int64)
    po_np = np.zeros(S, dtype=np.int64)
    cdef long long[:] pos = pos_np
    cdef long long[:] pend_close = pc_np
    cdef long long[:] pend_open = po_np

    cap = 2 * T * S if T * S > 0 else 1
    f_day_np = np.empty(cap, dtype=np.int32)
    f_asset_np = np.empty(cap, dtype=np.int32)
    f_side_np = np.empty(cap, dtype=np.int8)
    f_shares_np = np.empty(cap, dtype=np.int64)
    f_price_np = np.empty(cap, dtype=np.float64)
    f_comm_np = np.empty(cap, dtype=np.float64)
    f_leg_np = np.empty(cap, dtype=np.int8)
    cdef int[:] f_day = f_day_np
    cdef int[:] f_asset = f_asset_np
    cdef cnp.int8_t[:] f_side = f_side_np
    cdef long long[:] f_shares = f_shares_np
    cdef double[:] f_price = f_price_np
    cdef double[:] f_comm = f_comm_np
    cdef cnp.int8_t[:] f_leg = f_leg_np

    with nogil:
        for t in range(T):
            if t > 0:
                # closing legs
                for s in range(S):
                    q = pend_close[s]
                    if q == 0:
                        continue
                    pend_close[s] = 0
                    o = opens[t, s]
                    if not o > 0:
                        dropped += 1
                        continue
                    if q > 0:
                        price = o * (1.0 + slippage)
                        comm = fee * q
                        cash = cash - (q * price + comm)
                        pos[s] += q
                        f_side[nf] = 1
                        f_shares[nf] = q
                    else:
                        n = -q
                        price = o * (1.0 - slippage)
                        comm = fee * n
                        cash = cash + (n * price - comm)
                        pos[s] -= n
                        f_side[nf] = -1
                        f_shares[nf] = n
                    f_day[nf] = <int>t
                    f_asset[nf] = <int>s
                    f_price[nf] = price
                    f_comm[nf] = comm
                    f_leg[nf] = 0
                    nf += 1
                # opening legs
                for s in range(S):
                    q = pend_open[s]
                    if q == 0:
                        continue
                    pend_open[s] = 0
                    o = opens[t, s]
                    if not o > 0:
                        dropped += 1
                        continue
                    if q > 0:
                        price = o * (1.0 + slippage)
                        n = q
                        if n * price + fee * n > cash:
                            if cash > 0:
                                n = <long long>floor(cash / (price + fee))
                            else:
                                n = 0
                            while n > 0 and n * price + fee * n > cash:
                                n -= 1
                        if n <= 0:
                            continue
                        comm = fee * n
                        cash = cash - (n * price + comm)
                        pos[s] += n
                        f_side[nf] = 1
                    else:
                        n = -q
                        price = o * (1.0 - slippage)
                        comm = fee * n
                        cash = cash + (n * price - comm)
                        pos[s] -= n
                        f_side[nf] = -1
                    f_shares[nf] = n
                    f_day[nf] = <int>t
                    f_asset[nf] = <int>s
                    f_price[nf] = price
                    f_comm[nf] = comm
                    f_leg[nf] = 1
                    nf += 1

            eq = cash
            for s in range(S):
                eq += pos[s] * closes[t, s]
                pos_log[t, s] = pos[s]
            equity[t] = eq
            cash_log[t] = cash

            if t < T - 1:
                for s in range(S):
                    a = decisions[t, s]
                    p = pos[s]
                    if a == 1:
                        if p < 0:
                            pend_close[s] = -p
                        if p <= 0:
                            n = _size(alpha, cash, closes[t, s])
                            pend_open[s] = n
                            order_shares[t, s] = n
                    elif a == -1:
                        if p > 0:
                            pend_close[s] = -p
                        if p >= 0:
                            n = _size(alpha, cash, closes[t, s])
                            pend_open[s] = -n
                            order_shares[t, s] = n
                    elif close_on_hold and p != 0:
                        pend_close[s] = -p

    log = np.empty(nf, dtype=FILL_DTYPE)
    log["day"] = f_day_np[:nf]
    log["asset"] = f_asset_np[:nf]
    log["side"] = f_side_np[:nf]
    log["shares"] = f_shares_np[:nf]
    log["price"] = f_price_np[:nf]
    log["commission"] = f_comm_np[:nf]
    log["leg"] = f_leg_np[:nf]
    return equity_a, cash_a, pos_a, size_a, log, int(dropped)
