"""Compiled vs numpy kernels: bilinear interpolation, Newton inversion of
``x + u(x)`` and the discrete maximal function.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from critlab import _pykernels
from critlab.kernels import backend_module


def fixtures(seed=0, n=201, m=20_000):
    rng = np.random.default_rng(seed)
    ax = np.linspace(-4, 4, n)
    X = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    env = np.exp(-np.sum(X ** 2, axis=-1, keepdims=True) / 2)
    u = 0.3 * np.sin(X[..., ::-1]) * env
    h = ax[1] - ax[0]
    jac = np.stack([np.gradient(u[..., i], h, axis=j) for i in range(2) for j in range(2)], axis=-1)
    lo = np.array([-4.0, -4.0])
    hh = np.array([h, h])
    pts = rng.uniform(-3, 3, size=(m, 2))
    f = rng.random((n, n))
    return {
        "interp": lambda k: k.interp(u, lo, hh, pts),
        "newton_invert": lambda k: k.newton_invert(u, jac, lo, hh, pts, 1e-10, 50),
        "maximal": lambda k: k.maximal(f, 6),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        ck = backend_module("cython")
    except ImportError:
        ck = None
    print(f"{'kernel':15s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, call in fixtures().items():
        tp = min(timeit.repeat(lambda: call(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if ck is None:
            print(f"{name:15s} {tp:12.2f} {'n/a':>12s} {'n/a':>8s}")
            continue
        tc = min(timeit.repeat(lambda: call(ck), number=1, repeat=args.repeat)) * 1e3
        a, b = call(_pykernels), call(ck)
        a = a[0] if isinstance(a, tuple) else a
        b = b[0] if isinstance(b, tuple) else b
        assert np.allclose(a, b, atol=1e-9), f"{name}: backends disagree"
        print(f"{name:15s} {tp:12.2f} {tc:12.2f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
