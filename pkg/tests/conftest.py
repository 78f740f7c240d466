import numpy as np
import pytest


def central_difference(f, params: dict, h_rel: float = 1e-5) -> dict:
    """Numerical gradient of scalar ``f()`` w.r.t. every array in ``params`` (perturbed in place)."""
    out = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            h = h_rel * max(1.0, abs(orig))
            p[idx] = orig + h
            up = f()
            p[idx] = orig - h
            down = f()
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def max_relative_error(analytic: dict, numeric: dict, floor: float = 1e-6) -> float:
    worst = 0.0
    for name in numeric:
        a, n = analytic[name], numeric[name]
        err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
