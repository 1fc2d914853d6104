"""Central finite differences shared by the gradient tests."""
import numpy as np

H = 1e-5
FLOOR = 1e-6


def numeric_grad(fn, params, h=H):
    """d fn / d params[i] for every entry, by central differences."""
    out = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[i][idx] += h
            minus[i][idx] -= h
            g[idx] = (fn(plus) - fn(minus)) / (2 * h)
        out.append(g)
    return out


def max_rel_error(analytic, numeric, floor=FLOOR):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        den = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / den)) if a.size else 0.0)
    return worst
