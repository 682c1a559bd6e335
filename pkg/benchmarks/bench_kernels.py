"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Each row times the same inputs through both backends and reports the
speedup.  Requires the extension to be built (``pip install -e .``).
"""

import argparse
import timeit

import numpy as np

from polyot import kernels
from polyot.fit import random_convex_polygon
from polyot.transport import build_cost, uniform_marginals


def _sinkhorn_case(n, eps_rel, seed=0):
    rng = np.random.default_rng(seed)
    pred = rng.random((n, 2))
    ref = rng.random((n, 2))
    C = np.ascontiguousarray(build_cost(pred, ref))
    m = uniform_marginals(n, n)
    eps = eps_rel * C.mean()
    args = (C, np.log(m.a), np.log(m.b), eps, np.zeros(n), np.zeros(n), 200, 0.0)
    return f"sinkhorn_log n={n} eps_rel={eps_rel:g} (200 sweeps)", "sinkhorn_log", args


def _raster_case(w, h, n, seed=0):
    rng = np.random.default_rng(seed)
    poly = random_convex_polygon(rng, n)
    xs = poly.vertices[:, 0] * w
    ys = poly.vertices[:, 1] * h
    return f"scanline_fill {w}x{h} n={n}", "scanline_fill", (xs, ys, w, h)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if kernels.compiled is None:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation`")

    cases = [
        _sinkhorn_case(10, 1e-2),
        _sinkhorn_case(10, 1e-3),
        _sinkhorn_case(64, 1e-2),
        _raster_case(256, 256, 10),
        _raster_case(640, 480, 10),
        _raster_case(640, 480, 200),
    ]
    print(f"{'case':<44} {'python':>12} {'cython':>12} {'speedup':>9}")
    for label, name, fn_args in cases:
        times = {}
        for backend in ("python", "compiled"):
            fn = getattr(getattr(kernels, backend), name)
            number = 20
            best = min(timeit.repeat(lambda: fn(*fn_args), number=number, repeat=args.repeat))
            times[backend] = best / number
        print(
            f"{label:<44} {times['python'] * 1e3:>10.3f}ms {times['compiled'] * 1e3:>10.3f}ms "
            f"{times['python'] / times['compiled']:>8.1f}x"
        )


if __name__ == "__main__":
    main()
