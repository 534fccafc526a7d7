"""Lorentz quasi-norms of step functions, mixed space-time norms and the
inequality checks built on them.

The norm convention is ``||f||_{L^{p,q}} = p^{1/q} || t mu(|f| >= t)^{1/p} ||_{L^q(dt/t)}``.
On a step function the layer integral is evaluated exactly, level by level.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from critlab.grid import GridError, GridFunction, GridSpec, DriftSpec, sample_field

INF = math.inf
CRIT_TOL = 1e-12


class LorentzError(ValueError):
    pass


class NonPartitionableError(LorentzError):
    pass


def _inv(x):
    return 0.0 if x == INF else 1.0 / x


def dual(p):
    if p == INF:
        return 1.0
    if p == 1:
        return INF
    return p / (p - 1.0)


@dataclass(frozen=True)
class LorentzExponents:
    """Spatial exponent p, time exponent q, outer Lorentz index r in {1, inf}."""

    p: float
    q: float
    r: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not (1 < self.p < INF and 1 < self.q < INF):
            raise LorentzError("need 1 < p, q < inf")
        if self.r not in (1, 1.0, INF):
            raise LorentzError("outer Lorentz index must be 1 or inf")

    @property
    def p_dual(self):
        return dual(self.p)

    @property
    def q_dual(self):
        return dual(self.q)

    @property
    def kappa(self):
        return 2.0 / self.q + self.d / self.p

    @property
    def criticality(self):
        k = self.kappa
        if abs(k - 1.0) <= CRIT_TOL:
            return "critical"
        return "subcritical" if k < 1 else "supercritical"

    def squared(self) -> "LorentzExponents":
        """Exponents (p/2, q/2) carried by the square of a drift."""
        return LorentzExponents(self.p / 2, self.q / 2, self.r, self.d)

    @classmethod
    def critical(cls, d, p, r=1.0):
        """Exponents with 2/q + d/p = 1."""
        q = 2.0 / (1.0 - d / p)
        return cls(p, q, r, d)

    @classmethod
    def khasminskii(cls, d, p, r=1.0):
        """Exponents with 2/q + d/p = 2."""
        q = 2.0 / (2.0 - d / p)
        return cls(p, q, r, d)

    def as_dict(self):
        return {"p": self.p, "q": self.q, "r": self.r, "d": self.d, "kappa": self.kappa}


@dataclass(frozen=True)
class StepFunction:
    """Nonincreasing right-continuous step function ``levels[k]`` on
    ``[edges[k], edges[k+1])``."""

    levels: np.ndarray
    edges: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.edges, t, side="right") - 1
        inside = (k >= 0) & (k < len(self.levels))
        out = np.zeros_like(t)
        out[inside] = self.levels[k[inside]]
        return out

    @property
    def measure(self):
        return float(self.edges[-1])

    def distribution(self, lam):
        """``mu(f* > lam)``."""
        return float(np.sum(np.diff(self.edges)[self.levels > lam]))


def _levels(values, weights):
    a = np.abs(np.asarray(values, dtype=float)).ravel()
    w = np.broadcast_to(np.asarray(weights, dtype=float), a.shape).ravel() if np.ndim(weights) else np.full(a.shape, float(weights))
    if a.size == 0:
        raise LorentzError("empty input")
    if not np.all(np.isfinite(a)):
        raise LorentzError("non-finite samples")
    if np.any(w <= 0):
        raise LorentzError("cell measures must be positive")
    order = np.argsort(-a, kind="stable")
    a, w = a[order], w[order]
    uniq, start = np.unique(-a, return_index=True)
    levels = -uniq
    mass = np.add.reduceat(w, start)
    return levels, mass


def decreasing_rearrangement(values, weights=1.0) -> StepFunction:
    levels, mass = _levels(values, weights)
    edges = np.concatenate([[0.0], np.cumsum(mass)])
    return StepFunction(levels, edges)


def lorentz_norm(f, p, q, weights=None) -> float:
    """Exact ``L^{p,q}`` quasi-norm of a step function.

    ``f`` is a static GridFunction (cell measure ``h^d``) or an array with
    explicit ``weights``.  ``p = inf`` is allowed with ``q = inf`` (sup norm).
    """
    if isinstance(f, GridFunction):
        if f.timed:
            raise LorentzError("lorentz_norm expects a spatial slice")
        values, weights = f.magnitude(), f.grid.cell
    else:
        values = f
        weights = 1.0 if weights is None else weights
    if not (p > 0 and q > 0):
        raise LorentzError("need p, q > 0")
    levels, mass = _levels(values, weights)
    M = np.cumsum(mass)
    pos = levels > 0
    levels, M = levels[pos], M[pos]
    if levels.size == 0:
        return 0.0
    if p == INF:
        if q != INF:
            raise LorentzError("L^{inf,q} with q < inf is infinite for nonzero f")
        return float(levels[0])
    if q == INF:
        return float(np.max(levels * M ** (1.0 / p)))
    nxt = np.concatenate([levels[1:], [0.0]])
    s = np.sum(M ** (q / p) * (levels ** q - nxt ** q))
    return float(((p / q) * s) ** (1.0 / q))


def lp_norm(values, p, weight) -> float:
    a = np.abs(np.asarray(values, dtype=float))
    if p == INF:
        return float(a.max()) if a.size else 0.0
    return float((np.sum(a ** p) * weight) ** (1.0 / p))


@dataclass
class NormReport:
    value: float
    exponents: dict
    interval: tuple
    resolution: dict
    refinement_trace: list = field(default_factory=list)
    label: str = ""

    def row(self):
        return {
            "label": self.label,
            "value": self.value,
            **{f"exp_{k}": v for k, v in self.exponents.items()},
            "S": self.interval[0],
            "T": self.interval[1],
            **self.resolution,
            "trace": list(self.refinement_trace),
        }


def slice_norms(f: GridFunction, p, s=None) -> np.ndarray:
    """Per-time-slice spatial ``L^p`` (or ``L^{p,s}``) norms of ``|f|``."""
    if not f.timed:
        raise LorentzError("mixed norm needs a time-dependent field")
    mag = f.magnitude()
    w = f.grid.cell
    if s is None or s == p:
        return np.array([lp_norm(m, p, w) for m in mag])
    return np.array([lorentz_norm(m, p, s, w) for m in mag])


def outer_norm(series, dt, q, r) -> float:
    """``L^{q,r}`` norm in time of a series of cell values, each cell of length dt."""
    return lorentz_norm(np.asarray(series, dtype=float), q, r, dt)


def _cells(grid: GridSpec, interval, sampling):
    S, T = interval
    if S < grid.t0 - 1e-12 or T > grid.t1 + 1e-12 or not S < T:
        raise LorentzError(f"interval {interval} outside grid time range [{grid.t0}, {grid.t1}]")
    i0, i1 = grid.time_index(S), grid.time_index(T)
    if sampling == "left":
        return np.arange(i0, i1)
    if sampling == "right":
        return np.arange(i0 + 1, i1 + 1)
    raise LorentzError("sampling must be 'left' or 'right'")


def mixed_lorentz_norm(f: GridFunction, exps: LorentzExponents, interval=None, sampling="left",
                       inner_index=None, label="") -> NormReport:
    """``|| t -> ||f(t)||_{L^p_x} ||_{L^{q,r}([S,T])}`` with time cells of length tau.

    ``sampling`` picks which node represents each cell; ``"right"`` is the
    natural choice for profiles singular at the left end.
    """
    g = f.grid
    interval = (g.t0, g.t1) if interval is None else tuple(interval)
    idx = _cells(g, interval, sampling)
    sn = slice_norms(f, exps.p, inner_index)[idx]
    val = outer_norm(sn, g.tau, exps.q, exps.r)
    return NormReport(val, exps.as_dict(), interval, {"h": g.h, "tau": g.tau}, [val], label)


def profile_norm(profile, S, T, q, r, n_cells=1024, sampling="right") -> float:
    """Outer ``L^{q,r}([S,T])`` norm of a scalar time profile sampled on n cells."""
    tau = (T - S) / n_cells
    k = np.arange(n_cells)
    if sampling == "right":
        ts = S + tau * (k + 1)
    elif sampling == "left":
        ts = S + tau * k
    else:
        ts = S + tau * (k + 0.5)
    vals = np.asarray([profile(t) for t in ts], dtype=float)
    return outer_norm(vals, tau, q, r)


def check_holder(f, g, p, q, p1, q1, p2, q2, weights=1.0, constant=1.0):
    """``||fg||_{L^{p,q}}`` against ``||f||_{L^{p1,q1}} ||g||_{L^{p2,q2}}``."""
    if abs(_inv(p) - _inv(p1) - _inv(p2)) > 1e-12 or abs(_inv(q) - _inv(q1) - _inv(q2)) > 1e-12:
        raise LorentzError("Holder exponent relation violated")
    fv = np.asarray(f, dtype=float)
    gv = np.asarray(g, dtype=float)
    lhs = lorentz_norm(fv * gv, p, q, weights)
    rhs = lorentz_norm(fv, p1, q1, weights) * lorentz_norm(gv, p2, q2, weights)
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else INF)
    return {"lhs": lhs, "rhs": rhs, "ratio": ratio, "violated": bool(ratio > constant)}


def mixed_norm_general(f: GridFunction, q, r, p, s, sampling="left") -> float:
    """``L^{q,r}_t(L^{p,s}_x)`` over the whole time axis of ``f``."""
    sn = slice_norms(f, p, s)
    idx = _cells(f.grid, (f.grid.t0, f.grid.t1), sampling)
    return outer_norm(sn[idx], f.grid.tau, q, r)


def check_oneil_mixed(f: GridFunction, g: GridFunction, fexp, gexp, method="direct",
                      f_sampling="left", g_sampling="left"):
    """Sup-norm of the space-time convolution ``f * g`` (zero-extended) against
    the product of mixed Lorentz norms.

    ``fexp``/``gexp`` are ``(q, r, p, s)``: outer ``L^{q,r}_t``, inner ``L^{p,s}_x``.
    ``f`` may be vector valued; ``g`` must be scalar.
    """
    q1, r1, p1, s1 = fexp
    q2, r2, p2, s2 = gexp
    for a, b in ((p1, p2), (q1, q2), (r1, r2), (s1, s2)):
        if abs(_inv(a) + _inv(b) - 1.0) > 1e-12:
            raise LorentzError("O'Neil exponent relations violated")
    if g.rank != 0:
        raise LorentzError("second factor must be scalar")
    if f.grid.h != g.grid.h or f.grid.tau != g.grid.tau or f.grid.d != g.grid.d:
        raise LorentzError("factors must share lattice steps")
    cell = f.grid.tau * f.grid.cell
    fv = f.values if f.rank else f.values[..., None]
    fv = fv.reshape(fv.shape[: 1 + f.grid.d] + (-1,))
    fi = f_sampling == "right"
    gi = g_sampling == "right"
    gv = g.values[1:] if gi else g.values[:-1]
    conv = [signal.convolve(fv[1:, ..., c] if fi else fv[:-1, ..., c], gv, method=method) * cell
            for c in range(fv.shape[-1])]
    mag = np.sqrt(sum(c * c for c in conv))
    lhs = float(mag.max())
    nf = mixed_norm_general(f, q1, r1, p1, s1, f_sampling)
    ng = mixed_norm_general(g, q2, r2, p2, s2, g_sampling)
    rhs = nf * ng
    return {"lhs": lhs, "f_norm": nf, "g_norm": ng, "rhs": rhs,
            "ratio": lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else INF)}


def quasi_triangle_constant(pairs, p, q, weights=1.0) -> float:
    """Empirical ``c`` in ``||f+g|| <= c (||f|| + ||g||)`` over sample pairs."""
    c = 0.0
    for f, g in pairs:
        den = lorentz_norm(f, p, q, weights) + lorentz_norm(g, p, q, weights)
        if den > 0:
            c = max(c, lorentz_norm(np.asarray(f) + np.asarray(g), p, q, weights) / den)
    return c


def disjoint_ratio(f, mask_a, p, q, weights=1.0) -> float:
    """``(||f 1_A|| + ||f 1_B||) / ||f 1_{A u B}||`` for the split given by mask_a."""
    f = np.asarray(f, dtype=float)
    w = np.broadcast_to(np.asarray(weights, dtype=float), f.shape)
    a = lorentz_norm(f[mask_a], p, q, w[mask_a]) if mask_a.any() else 0.0
    b = lorentz_norm(f[~mask_a], p, q, w[~mask_a]) if (~mask_a).any() else 0.0
    whole = lorentz_norm(f, p, q, w)
    return (a + b) / whole if whole > 0 else 1.0


def drift_slice_norms(b: DriftSpec, grid: GridSpec, p, times) -> np.ndarray:
    """Spatial ``L^p`` norm of ``|b(t, .)|`` on the lattice at each time."""
    pts = grid.mesh()
    if b.time_constant:
        v = lp_norm(np.linalg.norm(b.evaluate(times[0], pts), axis=-1), p, grid.cell)
        return np.full(len(times), v)
    return np.array([lp_norm(np.linalg.norm(b.evaluate(t, pts), axis=-1), p, grid.cell) for t in times])


def partition_time(b, exps: LorentzExponents, threshold, horizon, grid: GridSpec = None, n_cells=1024):
    """Greedy left-to-right partition of ``[S, T]`` into intervals on which the
    mixed ``L^{q,r}_t(L^p_x)`` norm does not exceed ``threshold``.

    Endpoints lie on a lattice of ``n_cells`` cells; ``b`` is a DriftSpec
    (needs ``grid`` for the spatial norm) or a callable slice-norm profile.
    Returns a list of ``(T_{k-1}, T_k)`` pairs.
    """
    if threshold <= 0:
        raise LorentzError("threshold must be positive")
    S, T = horizon
    dt = (T - S) / n_cells
    mids = S + dt * (np.arange(n_cells) + 0.5)
    if isinstance(b, DriftSpec):
        if grid is None:
            raise LorentzError("a spatial grid is needed to norm a DriftSpec")
        sn = drift_slice_norms(b, grid, exps.p, mids)
    else:
        sn = np.array([b(t) for t in mids], dtype=float)
    if not np.all(np.isfinite(sn)):
        raise NonPartitionableError("non-partitionable: infinite slice norm")
    tol = threshold * (1 + 1e-12)

    def norm(i, j):
        return outer_norm(sn[i:j], dt, exps.q, exps.r)

    out = []
    a = 0
    while a < n_cells:
        if norm(a, n_cells) <= tol:
            out.append((S + a * dt, T))
            break
        if norm(a, a + 1) > tol:
            raise NonPartitionableError(
                f"non-partitionable: a single cell at t={S + a * dt:g} already exceeds the threshold")
        lo, hi = a + 1, n_cells
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if norm(a, mid) <= tol:
                lo = mid
            else:
                hi = mid
        out.append((S + a * dt, S + lo * dt))
        a = lo
    return out
