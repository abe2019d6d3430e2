import os
import subprocess
import sys

import numpy as np
import pytest

from advnews import kernel


def random_inputs(seed, T=120, S=6):
    rng = np.random.default_rng(seed)
    closes = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, (T, S)), axis=0))
    opens = closes * np.exp(rng.normal(0, 0.005, (T, S)))
    opens[rng.random((T, S)) < 0.02] = np.nan
    dec = rng.choice(np.array([-1, 0, 1], dtype=np.int8), (T, S))
    return dec, opens, closes


@pytest.mark.skipif(kernel.c_simulate is None, reason="compiled kernel not built")
@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("close_on_hold", [False, True])
def test_compiled_matches_python_bitwise(seed, close_on_hold):
    dec, opens, closes = random_inputs(seed)
    args = (dec, opens, closes, 0.4, 0.0002, 0.005, 1e6, close_on_hold)
    py = kernel.py_simulate(*args)
    c = kernel.c_simulate(*args)
    for a, b in zip(py[:5], c[:5]):
        assert a.dtype == b.dtype and a.tobytes() == b.tobytes()
    assert py[5] == c[5]


def test_pure_python_switch():
    code = "import advnews.kernel as k; print(k.BACKEND)"
    env = {**os.environ, "ADVNEWS_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
