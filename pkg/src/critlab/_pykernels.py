"""Pure numpy implementations of the hot kernels.

Signatures match the compiled ``_ckernels`` module exactly; the compiled
version is preferred at import time when it is available.
"""

import itertools

import numpy as np
from scipy import ndimage

BACKEND = "python"

_EDGE_TOL = 1e-12


def _locate(lo, h, shape, pts):
    """Cell index, fractional offset and inside-mask for each point/axis."""
    D = len(shape)
    s = (pts - lo[None, :]) / h[None, :]
    n = np.asarray(shape, dtype=np.int64)
    inside = np.all((s >= -_EDGE_TOL) & (s <= (n - 1)[None, :] + _EDGE_TOL), axis=1)
    base = np.floor(s).astype(np.int64)
    base = np.clip(base, 0, (n - 2)[None, :])
    frac = s - base
    return base, frac, inside, D


def interp(values, lo, h, pts):
    """Multilinear interpolation of a lattice field; zero outside the box.

    values has shape ``shape + (C,)``; pts has shape ``(M, D)``.
    Returns an ``(M, C)`` array.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    pts = np.ascontiguousarray(pts, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    shape = values.shape[:-1]
    C = values.shape[-1]
    base, frac, inside, D = _locate(lo, h, shape, pts)
    out = np.zeros((pts.shape[0], C))
    for corner in itertools.product((0, 1), repeat=D):
        w = np.ones(pts.shape[0])
        idx = []
        for a, c in enumerate(corner):
            w = w * (frac[:, a] if c else 1.0 - frac[:, a])
            idx.append(base[:, a] + c)
        out += w[:, None] * values[tuple(idx)]
    out[~inside] = 0.0
    return out


def newton_invert(u, jac, lo, h, y, tol, maxit):
    """Solve ``x + u(x) = y`` pointwise by Newton iteration from ``x = y``.

    u has shape ``shape + (d,)``, jac has shape ``shape + (d*d,)`` holding
    the row-major gradient ``du_i/dx_j``.  Returns ``(x, iters, converged)``.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    M, d = y.shape
    x = y.copy()
    iters = np.zeros(M, dtype=np.int64)
    done = np.zeros(M, dtype=bool)
    eye = np.eye(d)
    for _ in range(maxit + 1):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        xa = x[active]
        r = xa + interp(u, lo, h, xa) - y[active]
        ok = np.sqrt(np.sum(r * r, axis=1)) < tol
        done[active[ok]] = True
        step_idx = active[~ok]
        if step_idx.size == 0:
            break
        stepped = iters[step_idx] < maxit
        step_idx = step_idx[stepped]
        if step_idx.size == 0:
            break
        J = interp(jac, lo, h, x[step_idx]).reshape(-1, d, d) + eye
        dx = np.linalg.solve(J, r[~ok][stepped][:, :, None])[:, :, 0]
        x[step_idx] -= dx
        iters[step_idx] += 1
    return x, iters, done


def ball_offsets(D, kmax):
    """Integer offsets with ``|o| <= kmax`` sorted by radius, plus group ends."""
    rng = np.arange(-kmax, kmax + 1)
    grid = np.stack(np.meshgrid(*([rng] * D), indexing="ij"), axis=-1).reshape(-1, D)
    r2 = np.sum(grid * grid, axis=1)
    keep = r2 <= kmax * kmax
    grid, r2 = grid[keep], r2[keep]
    order = np.lexsort(tuple(grid[:, a] for a in reversed(range(D))) + (r2,))
    grid, r2 = grid[order], r2[order]
    ends = np.searchsorted(r2, np.arange(kmax + 1) ** 2, side="right")
    return np.ascontiguousarray(grid, dtype=np.int64), ends.astype(np.int64)


def maximal(absf, kmax):
    """Discrete maximal function over lattice balls of radius 0..kmax nodes.

    Averages are taken over the ball intersected with the lattice.
    """
    absf = np.ascontiguousarray(absf, dtype=np.float64)
    D = absf.ndim
    best = absf.copy()
    ones = np.ones_like(absf)
    for k in range(1, kmax + 1):
        rng = np.arange(-k, k + 1)
        mesh = np.meshgrid(*([rng] * D), indexing="ij")
        mask = (sum(m * m for m in mesh) <= k * k).astype(np.float64)
        s = ndimage.correlate(absf, mask, mode="constant", cval=0.0)
        c = ndimage.correlate(ones, mask, mode="constant", cval=0.0)
        np.maximum(best, s / c, out=best)
    return best
