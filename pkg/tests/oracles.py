"""Finite-difference oracles used by gradient-correctness tests.

These stay independent of the engine: they only call scalar-valued closures.
"""

import numpy as np


def central_diff(f, x, indices, h_rel=1e-5):
    """Central finite differences of scalar f at x along flat `indices`.

    Step per coordinate: h_rel * max(1, |x_i|), the classic relative step.
    """
    x = np.asarray(x, dtype=np.float64)
    grads = {}
    for i in indices:
        h = h_rel * max(1.0, abs(float(x.reshape(-1)[i])))
        plus = x.copy().reshape(-1)
        minus = x.copy().reshape(-1)
        plus[i] += h
        minus[i] -= h
        grads[i] = (f(plus.reshape(x.shape)) - f(minus.reshape(x.shape))) / (2 * h)
    return grads


def max_rel_error(analytic, numeric, floor=1e-8):
    """max_i |a_i - n_i| / max(floor, |n_i|, |a_i|)."""
    worst = 0.0
    for i, n in numeric.items():
        a = float(analytic.reshape(-1)[i])
        denom = max(floor, abs(n), abs(a))
        worst = max(worst, abs(a - n) / denom)
    return worst


def probe_indices(size, count, seed=0):
    """Deterministic spread of flat indices to probe."""
    if size <= count:
        return list(range(size))
    rng = np.random.Generator(np.random.Philox(key=seed))
    return sorted(rng.choice(size, size=count, replace=False).tolist())
