"""Backtest loop selection: compiled kernel when built, pure Python otherwise.

Set ``ADVNEWS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from ._pykernel import FILL_DTYPE
from ._pykernel import simulate as py_simulate

c_simulate = None
if not os.environ.get("ADVNEWS_PURE_PYTHON"):
    try:
        from ._ckernel import simulate as c_simulate
    except ImportError:  # extension not built
        c_simulate = None

simulate = c_simulate or py_simulate
BACKEND = "cython" if c_simulate is not None else "python"

__all__ = ["simulate", "py_simulate", "c_simulate", "BACKEND", "FILL_DTYPE"]
