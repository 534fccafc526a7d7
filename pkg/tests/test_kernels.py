import numpy as np
import pytest

from critlab import kernels
from critlab import _pykernels

backends = [_pykernels]
try:
    from critlab import _ckernels
    backends.append(_ckernels)
except ImportError:  # pragma: no cover - compiled extension optional
    _ckernels = None


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.backend_module("python") is _pykernels


@pytest.mark.parametrize("mod", backends, ids=lambda m: m.BACKEND)
def test_interp_reproduces_multilinear(mod, rng):
    ax = np.linspace(-1, 1, 11)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    vals = np.stack([1 + 2 * X - Y + 0.5 * X * Y, X], axis=-1)
    pts = rng.uniform(-1, 1, size=(200, 2))
    out = mod.interp(vals, np.array([-1.0, -1.0]), np.array([0.2, 0.2]), pts)
    exact = np.stack([1 + 2 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 0] * pts[:, 1], pts[:, 0]], axis=-1)
    assert np.allclose(out, exact, atol=1e-13)
    outside = mod.interp(vals, np.array([-1.0, -1.0]), np.array([0.2, 0.2]), np.array([[1.5, 0.0]]))
    assert np.all(outside == 0)


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
def test_backends_agree(rng):
    n = 21
    ax = np.linspace(-2, 2, n)
    X = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    u = 0.2 * np.sin(X) * np.exp(-np.sum(X ** 2, axis=-1, keepdims=True) / 4)
    jac = np.stack([np.gradient(u[..., i], ax, axis=j) for i in range(2) for j in range(2)], axis=-1)
    lo, h = np.array([-2.0, -2.0]), np.array([0.2, 0.2])
    pts = rng.uniform(-1.5, 1.5, size=(500, 2))
    assert np.allclose(_ckernels.interp(u, lo, h, pts), _pykernels.interp(u, lo, h, pts), atol=1e-14)
    xc, ic, oc = _ckernels.newton_invert(u, jac, lo, h, pts, 1e-10, 50)
    xp, ip, op = _pykernels.newton_invert(u, jac, lo, h, pts, 1e-10, 50)
    assert oc.all() and op.all()
    assert np.allclose(xc, xp, atol=1e-10)
    f = rng.random((15, 15))
    assert np.allclose(_ckernels.maximal(f, 7), _pykernels.maximal(f, 7), atol=1e-14)


@pytest.mark.parametrize("mod", backends, ids=lambda m: m.BACKEND)
def test_newton_affine(mod):
    ax = np.linspace(-2, 2, 21)
    u = np.broadcast_to(np.array([0.3, -0.1]), (21, 21, 2)).copy()
    jac = np.zeros((21, 21, 4))
    y = np.array([[0.5, 0.5], [1.0, -1.0]])
    x, it, ok = mod.newton_invert(u, jac, np.array([-2.0, -2.0]), np.array([0.2, 0.2]), y, 1e-10, 50)
    assert ok.all() and np.all(it == 1)
    assert np.allclose(x, y - [0.3, -0.1], atol=1e-14)
