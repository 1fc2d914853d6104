"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N time for each backend and the
speedup; also checks the two backends agree on the benchmark inputs.
"""
import argparse
import timeit

import numpy as np

from infogap import _kernels_py

try:
    from infogap import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(rng):
    table = rng.random((5000, 10))
    cents = rng.random((64, 10))
    act = rng.random((200, 12))
    imgs = rng.random((500, 28, 28))
    angles = rng.uniform(-np.pi / 4, np.pi / 4, 500)
    return {
        "chebyshev_assign 5000x10, K=64": ("chebyshev_assign", (table, cents)),
        "binary_state_probs 200 rows, m=12": ("binary_state_probs", (act,)),
        "rotate_bilinear 500 x 28x28": ("rotate_bilinear", (imgs, angles)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1
    for label, (name, inputs) in cases(np.random.default_rng(args.seed)).items():
        py_fn, cy_fn = getattr(_kernels_py, name), getattr(_kernels, name)
        same = np.array_equal(np.asarray(py_fn(*inputs)), np.asarray(cy_fn(*inputs)))
        t_py = min(timeit.repeat(lambda: py_fn(*inputs), number=1, repeat=args.repeat))
        t_cy = min(timeit.repeat(lambda: cy_fn(*inputs), number=1, repeat=args.repeat))
        print(f"{label:36s} python {t_py * 1e3:9.2f} ms  cython {t_cy * 1e3:9.2f} ms  speedup {t_py / t_cy:6.1f}x  equal={same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
