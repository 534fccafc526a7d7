"""Uniform space-time lattices, sampled fields, drift families, mollification,
finite differences and the discrete Hardy-Littlewood maximal function.

Fields live on the box ``[-L, L]^d`` and are extended by zero outside it.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from critlab import kernels

_INT_TOL = 1e-9


class GridError(ValueError):
    pass


class SingularityError(GridError):
    pass


def _as_int(x, what):
    k = int(round(x))
    if abs(x - k) > _INT_TOL * max(1.0, abs(x)):
        raise GridError(f"{what} must be integral, got {x!r}")
    return k


@dataclass(frozen=True)
class GridSpec:
    """Box ``[-L, L]^d`` with spatial step ``h`` and time axis ``[t0, t1]``."""

    d: int
    L: float
    h: float
    t0: float = 0.0
    t1: float = 1.0
    tau: float = 0.1

    def __post_init__(self):
        if not (1 <= self.d <= 3):
            raise GridError("dimension must be 1, 2 or 3")
        if self.h <= 0 or self.tau <= 0 or not self.t0 < self.t1:
            raise GridError("need h > 0, tau > 0 and t0 < t1")
        half = _as_int(self.L / self.h, "L/h")
        _as_int((self.t1 - self.t0) / self.tau, "(t1-t0)/tau")
        if 2 * half + 1 < 4:
            raise GridError("need at least 4 nodes per axis")

    @property
    def n(self) -> int:
        return 2 * int(round(self.L / self.h)) + 1

    @property
    def nt(self) -> int:
        return int(round((self.t1 - self.t0) / self.tau)) + 1

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def cell(self) -> float:
        return self.h ** self.d

    @property
    def lo(self) -> np.ndarray:
        return np.full(self.d, -self.L)

    @property
    def steps(self) -> np.ndarray:
        return np.full(self.d, self.h)

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    def times(self) -> np.ndarray:
        return self.t0 + self.tau * np.arange(self.nt)

    def mesh(self) -> np.ndarray:
        """Node coordinates, shape ``(n,)*d + (d,)``."""
        ax = self.axis()
        return np.stack(np.meshgrid(*([ax] * self.d), indexing="ij"), axis=-1)

    def with_time(self, t0, t1, tau=None):
        return replace(self, t0=t0, t1=t1, tau=self.tau if tau is None else tau)

    def refined(self):
        """One dyadic refinement in both space and time."""
        return replace(self, h=self.h / 2, tau=self.tau / 2)

    def time_index(self, t) -> int:
        return _as_int((t - self.t0) / self.tau, "time offset / tau")

    def interior_mask(self, margin: float) -> np.ndarray:
        """Nodes at sup-distance at least ``margin`` from the box boundary."""
        ax = np.abs(self.axis()) <= self.L - margin + 1e-12
        m = ax
        for _ in range(self.d - 1):
            m = np.multiply.outer(m, ax)
        return m


RANK_NAMES = {0: "scalar", 1: "vector", 2: "matrix"}


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Lattice samples of a tensor field.

    ``values`` has shape ``(nt,)? + (n,)*d + (d,)*rank``; the leading time
    axis is present iff ``timed``.
    """

    grid: GridSpec
    values: np.ndarray
    rank: int = 0
    timed: bool = False
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        expect = ((self.grid.nt,) if self.timed else ()) + self.grid.shape + (self.grid.d,) * self.rank
        if v.shape != expect:
            raise GridError(f"value shape {v.shape} does not match grid/rank {expect}")
        if not np.all(np.isfinite(v)):
            raise GridError("non-finite entries in GridFunction")
        v.setflags(write=False)

    @property
    def space_axes(self) -> tuple:
        off = 1 if self.timed else 0
        return tuple(range(off, off + self.grid.d))

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean / Hilbert-Schmidt magnitude."""
        if self.rank == 0:
            return np.abs(self.values)
        axes = tuple(range(self.values.ndim - self.rank, self.values.ndim))
        return np.sqrt(np.sum(self.values ** 2, axis=axes))

    def slice(self, k: int) -> "GridFunction":
        if not self.timed:
            return self
        return GridFunction(self.grid, self.values[k], self.rank, False, self.label)

    def with_values(self, values, rank=None, timed=None, label=None) -> "GridFunction":
        return GridFunction(
            self.grid,
            values,
            self.rank if rank is None else rank,
            self.timed if timed is None else timed,
            self.label if label is None else label,
        )

    def broadcast_time(self) -> "GridFunction":
        if self.timed:
            return self
        v = np.broadcast_to(self.values, (self.grid.nt,) + self.values.shape).copy()
        return self.with_values(v, timed=True)

    def sup(self) -> float:
        return float(np.max(self.magnitude()))

    def flat_channels(self) -> np.ndarray:
        """Spatial-trailing view ``(..., C)`` used by the interpolation kernel."""
        lead = self.values.ndim - self.rank
        return self.values.reshape(self.values.shape[:lead] + (-1,))


FAMILIES = ("constant", "gaussian-bump", "inverse-radial", "tabulated")


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Closed-form drift family with mollification scale ``eps``.

    * ``constant``: ``c``.
    * ``gaussian-bump``: ``amplitude * direction * exp(-|x-center|^2/(2 width^2))``.
    * ``inverse-radial``: ``sign * beta * x / (|x|^2 + eps^2)``; ``sign = -1``
      is the attracting (non-existence) case, singular at 0 for ``eps = 0``.
    * ``tabulated``: lattice field, multilinear in space, linear in time.

    Convolution mollification of ``constant``/``gaussian-bump`` needs a
    lattice; use :meth:`tabulate`.
    """

    family: str
    d: int
    params: dict = field(default_factory=dict)
    eps: float = 0.0
    table: Optional[GridFunction] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GridError(f"unknown drift family {self.family!r}")
        if self.eps < 0:
            raise GridError("mollification scale must be >= 0")
        if self.family == "tabulated" and self.table is None:
            raise GridError("tabulated drift needs a table")

    @classmethod
    def constant(cls, c):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls("constant", len(c), {"c": tuple(c.tolist())})

    @classmethod
    def bump(cls, d, amplitude=1.0, width=0.5, center=None, direction=None):
        center = tuple(np.zeros(d) if center is None else np.asarray(center, float))
        if direction is None:
            direction = np.eye(d)[0]
        direction = np.asarray(direction, float)
        direction = tuple(direction / np.linalg.norm(direction))
        return cls("gaussian-bump", d, {"amplitude": float(amplitude), "width": float(width),
                                        "center": center, "direction": direction})

    @classmethod
    def inverse_radial(cls, d, beta=1.0, eps=0.0, sign=-1):
        return cls("inverse-radial", d, {"beta": float(beta), "sign": int(np.sign(sign) or -1)}, eps=eps)

    @classmethod
    def from_table(cls, table: GridFunction, eps=0.0):
        if table.rank != 1:
            raise GridError("tabulated drift must be vector-valued")
        return cls("tabulated", table.grid.d, {}, eps=eps, table=table)

    @property
    def supercritical(self) -> bool:
        return self.family == "inverse-radial" and self.params["sign"] < 0 and self.params["beta"] > 0.5

    @property
    def smooth(self) -> bool:
        return self.family in ("constant", "gaussian-bump") or (self.family == "inverse-radial" and self.eps > 0)

    @property
    def time_constant(self) -> bool:
        return self.family != "tabulated" or not self.table.timed

    def with_eps(self, eps) -> "DriftSpec":
        return replace(self, eps=float(eps))

    def describe(self) -> dict:
        out = {"family": self.family, "d": self.d, "eps": self.eps}
        out.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in self.params.items()})
        if self.table is not None:
            out["table"] = self.table.label or "grid"
        return out

    def evaluate(self, t, x) -> np.ndarray:
        """Drift at time ``t`` and points ``x`` of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise GridError("point dimension mismatch")
        if self.family == "constant":
            return np.broadcast_to(np.asarray(self.params["c"]), x.shape).copy()
        if self.family == "gaussian-bump":
            if self.eps > 0:
                raise GridError("mollified bump must be tabulated on a grid first")
            p = self.params
            r2 = np.sum((x - np.asarray(p["center"])) ** 2, axis=-1)
            return p["amplitude"] * np.exp(-r2 / (2 * p["width"] ** 2))[..., None] * np.asarray(p["direction"])
        if self.family == "inverse-radial":
            r2 = np.sum(x * x, axis=-1) + self.eps ** 2
            if self.eps == 0 and np.any(r2 == 0):
                raise SingularityError("unmollified singularity")
            with np.errstate(divide="ignore", invalid="ignore"):
                out = self.params["sign"] * self.params["beta"] * x / r2[..., None]
            return out
        return self._eval_table(t, x)

    def _eval_table(self, t, x):
        tab = self.table
        g = tab.grid
        flat = x.reshape(-1, self.d)
        vals = tab.values
        if tab.timed:
            s = np.clip((t - g.t0) / g.tau, 0, g.nt - 1)
            k = min(int(np.floor(s)), g.nt - 2)
            w = s - k
            vals = (1 - w) * vals[k] + w * vals[k + 1] if w > 0 else vals[k]
        out = kernels.interp(vals, g.lo, g.steps, flat)
        return out.reshape(x.shape)

    def tabulate(self, grid: GridSpec, timed: bool = False) -> "DriftSpec":
        """Sample on ``grid`` (mollifying at scale ``eps``) and return a table drift."""
        if self.family == "inverse-radial":
            gf = sample_field(self, grid, timed=timed)
        elif self.family == "tabulated":
            gf = self.table
            if self.eps > 0:
                gf = mollify(gf, self.eps)
        else:
            gf = mollify(sample_field(self.with_eps(0.0), grid, timed=timed), self.eps)
        return DriftSpec.from_table(gf.with_values(gf.values, label=f"{self.family}@eps={self.eps:g}"))


def sample_field(spec, grid: GridSpec, timed: bool = False, rank: int = None, label: str = "") -> GridFunction:
    """Sample a DriftSpec or a rule ``f(t, x) -> array`` at the lattice nodes."""
    pts = grid.mesh()
    if isinstance(spec, DriftSpec):
        if spec.d != grid.d:
            raise GridError("drift/grid dimension mismatch")
        if spec.family == "tabulated":
            src = spec.table
            if timed:
                vals = np.stack([spec.evaluate(t, pts) for t in grid.times()])
            elif src.grid == grid and not src.timed:
                vals = src.values
            else:
                vals = spec.evaluate(grid.t0, pts)
            return GridFunction(grid, vals, 1, timed, label or src.label)
        vals = spec.evaluate(grid.t0, pts)
        gf = GridFunction(grid, vals, 1, False, label or spec.family)
        return gf.broadcast_time() if timed else gf
    rule: Callable = spec
    if timed:
        vals = np.stack([np.asarray(rule(t, pts), dtype=float) for t in grid.times()])
    else:
        vals = np.asarray(rule(grid.t0, pts), dtype=float)
    lead = (grid.nt,) if timed else ()
    if rank is None:
        rank = vals.ndim - len(lead) - grid.d
    vals = np.broadcast_to(vals, lead + grid.shape + (grid.d,) * rank).copy()
    return GridFunction(grid, vals, rank, timed, label)


def mollifier_weights(d: int, h: float, eps: float) -> np.ndarray:
    """Normalized lattice weights of ``(1 - |x/eps|^2)_+^2``."""
    k = int(np.floor(eps / h))
    if k == 0:
        return np.ones((1,) * d)
    rng = np.arange(-k, k + 1) * h
    mesh = np.meshgrid(*([rng] * d), indexing="ij")
    r2 = sum(m * m for m in mesh) / eps ** 2
    w = np.clip(1.0 - r2, 0.0, None) ** 2
    return w / w.sum()


def mollify(f: GridFunction, eps: float) -> GridFunction:
    """Discrete convolution with the normalized polynomial bump of radius eps."""
    if eps < 0:
        raise GridError("mollification scale must be >= 0")
    if eps == 0:
        return f
    g = f.grid
    if eps > g.L:
        raise GridError("mollifier exceeds domain")
    w = mollifier_weights(g.d, g.h, eps)
    shape = [1] * f.values.ndim
    for a in f.space_axes:
        shape[a] = w.shape[0]
    w = w.reshape(shape)
    out = ndimage.convolve(f.values, w, mode="constant", cval=0.0)
    return f.with_values(out, label=(f.label + f"*moll({eps:g})").strip())


def _second_diff(v, axis, h):
    out = np.empty_like(v)
    sl = lambda a, b: tuple(slice(a, b) if i == axis else slice(None) for i in range(v.ndim))
    idx = lambda i: tuple(i if j == axis else slice(None) for j in range(v.ndim))
    out[sl(1, -1)] = (v[sl(2, None)] - 2 * v[sl(1, -1)] + v[sl(None, -2)]) / h ** 2
    out[idx(0)] = (2 * v[idx(0)] - 5 * v[idx(1)] + 4 * v[idx(2)] - v[idx(3)]) / h ** 2
    out[idx(-1)] = (2 * v[idx(-1)] - 5 * v[idx(-2)] + 4 * v[idx(-3)] - v[idx(-4)]) / h ** 2
    return out


def finite_diff(f: GridFunction, order) -> GridFunction:
    """Centered second-order differences, one-sided second order at the edges.

    ``order`` is 1 (gradient, rank + 1), 2 (Hessian, rank + 2) or ``"time"``.
    Derivative indices are appended as trailing axes.
    """
    g = f.grid
    v = f.values
    if order == "time":
        if not f.timed:
            raise GridError("time derivative of a static field")
        return f.with_values(np.gradient(v, g.tau, axis=0, edge_order=2), label=f"d/dt {f.label}".strip())
    axes = f.space_axes
    if order == 1:
        parts = [np.gradient(v, g.h, axis=a, edge_order=2) for a in axes]
        return f.with_values(np.stack(parts, axis=-1), rank=f.rank + 1, label=f"grad {f.label}".strip())
    if order == 2:
        d = g.d
        out = np.empty(v.shape + (d, d))
        for i, a in enumerate(axes):
            out[..., i, i] = _second_diff(v, a, g.h)
            da = np.gradient(v, g.h, axis=a, edge_order=2)
            for j in range(i + 1, d):
                m = np.gradient(da, g.h, axis=axes[j], edge_order=2)
                out[..., i, j] = m
                out[..., j, i] = m
        return f.with_values(out, rank=f.rank + 2, label=f"hess {f.label}".strip())
    raise GridError(f"unsupported derivative order {order!r}")


def maximal_function(f: GridFunction, kmax: int = None) -> GridFunction:
    """Max over lattice balls ``B(x, k h)``, ``k = 0..kmax``, of the mean of ``|f|``."""
    g = f.grid
    if kmax is None:
        kmax = int(round(g.L / g.h))
    mag = f.magnitude()
    if f.timed:
        out = np.stack([kernels.maximal(m, kmax) for m in mag])
    else:
        out = kernels.maximal(mag, kmax)
    return GridFunction(g, out, 0, f.timed, f"M|{f.label}|")


def maximal_lipschitz_constant(u: GridFunction, n_pairs: int = 2000, seed: int = 0, kmax: int = None) -> float:
    """Smallest N with ``|u(x)-u(y)| <= N |x-y| (M|grad u|(x) + M|grad u|(y))``
    over randomly sampled node pairs of a static scalar field."""
    if u.rank != 0 or u.timed:
        raise GridError("expects a static scalar field")
    g = u.grid
    Mg = maximal_function(finite_diff(u, 1), kmax).values.reshape(-1)
    vals = u.values.reshape(-1)
    pts = g.mesh().reshape(-1, g.d)
    rng = np.random.default_rng(seed)
    i = rng.integers(0, vals.size, n_pairs)
    j = rng.integers(0, vals.size, n_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    num = np.abs(vals[i] - vals[j])
    den = np.linalg.norm(pts[i] - pts[j], axis=1) * (Mg[i] + Mg[j])
    ok = den > 0
    if np.any((num > 0) & ~ok):
        return float("inf")
    return float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0
