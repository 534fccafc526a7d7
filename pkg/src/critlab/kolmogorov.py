"""Contraction fixed-point solver for the backward Kolmogorov equation

    u_t + (1/2) Delta u + b . grad u + f = 0,   u(T_k) = 0,

on an interval ``[T_{k-1}, T_k]``, with X^{q,p} norm accounting.

The backward problem is mapped to a forward one by ``s = T_k - t`` and each
fixed-point step is one forward Duhamel solve of
``w_s - (1/2) Delta w = f + b . grad v``.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from critlab.grid import DriftSpec, GridError, GridFunction, GridSpec, finite_diff, sample_field
from critlab.heat import _apply, discrete_kernel_1d, duhamel_solve, laplacian
from critlab.lorentz import LorentzExponents, mixed_lorentz_norm, quasi_triangle_constant

TOL = 1e-6
MAX_ITER = 200


class PdeError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace or []


def restrict(f: GridFunction, mask) -> GridFunction:
    """Zero ``f`` outside a spatial node mask."""
    if mask is None:
        return f
    m = mask.reshape(((1,) if f.timed else ()) + mask.shape + (1,) * f.rank)
    return f.with_values(f.values * m)


def xnorm_parts(u: GridFunction, exps: LorentzExponents, mask=None, derivs=None) -> dict:
    """The four mixed norms making up ``||u||_{X^{q,p}}`` (and their sum)."""
    ut, gu, hu = derivs if derivs is not None else (finite_diff(u, "time"), finite_diff(u, 1), finite_diff(u, 2))
    parts = {name: mixed_lorentz_norm(restrict(g, mask), exps).value
             for name, g in (("u", u), ("u_t", ut), ("grad_u", gu), ("hess_u", hu))}
    parts["total"] = parts["u"] + parts["u_t"] + parts["grad_u"] + parts["hess_u"]
    return parts


def xnorm(u, exps, mask=None) -> float:
    return xnorm_parts(u, exps, mask)["total"]


def b_dot_grad(b: np.ndarray, grad_u: np.ndarray) -> np.ndarray:
    """``(b . grad) u_i = sum_j b_j d_j u_i`` on trailing axes."""
    return np.einsum("...j,...ij->...i", b, grad_u)


@dataclass
class Calibration:
    c_heat: float
    c_embed: float
    c_quasi: float

    @property
    def c1(self):
        return self.c_heat * self.c_embed

    def contraction_threshold(self, T):
        return 1.0 / (2 * self.c_quasi * self.c1 * max(1.0, T))

    def zvonkin_threshold(self, T):
        # ||grad u|| <= C M ||b|| (||grad u|| + 1) <= 1/2  iff  C M ||b|| <= 1/3
        return 1.0 / (3 * self.c1 * max(1.0, T))

    def as_dict(self):
        return {"c_heat": self.c_heat, "c_embed": self.c_embed, "c_quasi": self.c_quasi, "c1": self.c1,
                "note": "measured on probe fields; not a paper constant"}


@lru_cache(maxsize=32)
def _calibrate(grid: GridSpec, exps: LorentzExponents) -> Calibration:
    pts = grid.mesh()
    r2 = np.sum(pts ** 2, axis=-1)
    widths = sorted({w for w in (2 * grid.h, 4 * grid.h, 8 * grid.h, grid.L / 4) if w < grid.L / 2})
    c_heat = c_emb = 0.0
    M = max(1.0, grid.t1 - grid.t0)
    for w in widths:
        g = np.exp(-r2 / (2 * w * w))
        src = GridFunction(grid, g, 0).broadcast_time()
        u = duhamel_solve(src).u
        xn = xnorm(u, exps)
        fn = mixed_lorentz_norm(src, exps).value
        c_heat = max(c_heat, xn / (M * fn))
        c_emb = max(c_emb, finite_diff(u, 1).sup() / xn)
    rng = np.random.default_rng(12345)
    pairs = [(rng.exponential(size=64), rng.exponential(size=64) * rng.uniform(0, 3)) for _ in range(50)]
    c_quasi = max(1.0, quasi_triangle_constant(pairs, exps.q, 1.0))
    return Calibration(c_heat, c_emb, c_quasi)


def calibrate(grid: GridSpec, exps: LorentzExponents) -> Calibration:
    """Measure the heat, embedding and quasi-norm constants on this lattice."""
    return _calibrate(grid, exps)


@dataclass(eq=False)
class PdeSolution:
    u: GridFunction
    u_t: GridFunction
    grad: GridFunction
    hess: GridFunction
    interval: tuple
    exps: LorentzExponents
    norm: dict
    trace: list = field(default_factory=list)
    condition: str = "backward"
    drift: Optional[GridFunction] = None
    source: Optional[GridFunction] = None
    calibration: Optional[Calibration] = None
    iterations: int = 0

    @property
    def grid(self):
        return self.u.grid

    @property
    def contraction_ratio(self) -> float:
        t = [x for x in self.trace if x > 0]
        if len(t) < 2:
            return 0.0
        return float(max(b / a for a, b in zip(t, t[1:])))

    @property
    def grad_sup(self) -> float:
        return self.grad.sup()

    @classmethod
    def from_field(cls, u: GridFunction, exps: LorentzExponents, drift=None, condition="backward"):
        """Wrap a given lattice field (synthetic fixtures, external solutions)."""
        if u.rank != 1 or not u.timed:
            raise GridError("solution field must be a time-dependent vector field")
        derivs = (finite_diff(u, "time"), finite_diff(u, 1), finite_diff(u, 2))
        return cls(u, *derivs, (u.grid.t0, u.grid.t1), exps, xnorm_parts(u, exps, derivs=derivs),
                   condition=condition, drift=drift)

    def summary(self) -> dict:
        return {
            "interval": list(self.interval),
            "exponents": self.exps.as_dict(),
            "xnorm": self.norm,
            "iterations": self.iterations,
            "trace": list(self.trace),
            "contraction_ratio": self.contraction_ratio,
            "grad_sup": self.grad_sup,
            "condition": self.condition,
            "calibration": self.calibration.as_dict() if self.calibration else None,
        }


def _as_field(x, grid: GridSpec, label):
    if isinstance(x, DriftSpec):
        return sample_field(x, grid, timed=True, label=label)
    if isinstance(x, GridFunction):
        if x.grid != grid:
            raise GridError(f"{label} lives on a different grid")
        return x.broadcast_time()
    raise GridError(f"{label} must be a DriftSpec or GridFunction")


def solve_backward_pde(b, f=None, grid: GridSpec = None, exps: LorentzExponents = None, tol=TOL,
                       max_iter=MAX_ITER, check_threshold=True) -> PdeSolution:
    """Fixed-point solve on ``[grid.t0, grid.t1]`` with ``u(grid.t1) = 0``.

    ``f`` defaults to ``b`` (the Zvonkin equation).  Raises PdeError if the
    drift norm exceeds the self-calibrated contraction threshold or if the
    iteration stops contracting.
    """
    bf = _as_field(b, grid, "drift")
    ff = bf if f is None else _as_field(f, grid, "source")
    if ff.rank != 1:
        raise GridError("source must be vector valued")
    T = grid.t1 - grid.t0
    cal = calibrate(grid.with_time(0.0, T), exps)
    bnorm = mixed_lorentz_norm(bf, exps).value
    thr = cal.contraction_threshold(T)
    if check_threshold and bnorm >= thr:
        raise PdeError(f"interval too long — call partition_time (||b|| = {bnorm:.4g} >= threshold {thr:.4g})")
    brev = bf.values[::-1]
    frev = ff.values[::-1]
    v = np.zeros_like(frev)
    trace = []
    bad = 0
    it = 0
    while True:
        it += 1
        vg = finite_diff(ff.with_values(v), 1).values
        src = ff.with_values(frev + b_dot_grad(brev, vg))
        w = duhamel_solve(src, margin=0.0).u.values
        dist = xnorm(ff.with_values(w - v), exps)
        v = w
        trace.append(dist)
        if len(trace) >= 2 and trace[-2] > 0 and dist / trace[-2] >= 1.0:
            bad += 1
            if bad >= 3:
                raise PdeError("non-contraction detected", trace)
        else:
            bad = 0
        if dist < tol:
            break
        if it >= max_iter:
            raise PdeError("fixed-point iteration did not reach tolerance", trace)
    u = ff.with_values(v[::-1].copy(), label="u")
    sol = PdeSolution.from_field(u, exps, drift=bf)
    sol.trace = trace
    sol.source = ff
    sol.calibration = cal
    sol.iterations = it
    return sol


def pde_residual(sol: PdeSolution, b=None, f=None, margin=None) -> float:
    """``||u_t + (1/2) Delta u + b . grad u + f||`` in ``L^{q,1}_t L^p_x`` over interior nodes."""
    g = sol.grid
    bf = sol.drift if b is None else _as_field(b, g, "drift")
    ff = (sol.source if sol.source is not None else bf) if f is None else _as_field(f, g, "source")
    if bf is None:
        raise GridError("residual needs a drift")
    if bf.grid != g or ff.grid != g:
        raise GridError("grid mismatch")
    r = sol.u_t.values + 0.5 * laplacian(sol.u) + b_dot_grad(bf.values, sol.grad.values) + ff.values
    margin = g.L / 4 if margin is None else margin
    return mixed_lorentz_norm(restrict(sol.u.with_values(r), g.interior_mask(margin)), sol.exps).value


def embedding_ratio(u: GridFunction, exps: LorentzExponents) -> dict:
    gu = finite_diff(u, 1)
    bracket = mixed_lorentz_norm(finite_diff(u, "time"), exps).value + mixed_lorentz_norm(finite_diff(u, 2), exps).value
    sup = gu.sup()
    return {"grad_sup": sup, "bracket": bracket, "ratio": sup / bracket if bracket > 0 else 0.0}


def gradient_sup_bound_check(sol) -> dict:
    """``||grad u||_inf`` against ``||u_t|| + ||grad^2 u||`` (critical exponents only)."""
    exps = sol.exps
    if exps.criticality != "critical":
        raise PdeError("gradient embedding is only claimed for 2/q + d/p = 1")
    rep = {"grad_sup": sol.grad.sup(),
           "bracket": sol.norm["u_t"] + sol.norm["hess_u"]}
    rep["ratio"] = rep["grad_sup"] / rep["bracket"] if rep["bracket"] > 0 else 0.0
    return rep


def stability_compare(b1, b2, f1, f2, grid: GridSpec, exps: LorentzExponents, tol=1e-9) -> dict:
    """Solve both problems and compare solution gaps with the data gap."""
    fields = [_as_field(x, grid, n) for x, n in ((b1, "b1"), (b2, "b2"), (f1, "f1"), (f2, "f2"))]
    T = grid.t1 - grid.t0
    cal = calibrate(grid.with_time(0.0, T), exps)
    thr = cal.contraction_threshold(T)
    for fl in fields:
        if mixed_lorentz_norm(fl, exps).value >= thr:
            raise PdeError("stability comparison needs data below the smallness threshold")
    s1 = solve_backward_pde(fields[0], fields[2], grid, exps, tol=tol)
    s2 = solve_backward_pde(fields[1], fields[3], grid, exps, tol=tol)
    du = s1.u.with_values(s1.u.values - s2.u.values)
    driver = (mixed_lorentz_norm(fields[0].with_values(fields[0].values - fields[1].values), exps).value
              + mixed_lorentz_norm(fields[2].with_values(fields[2].values - fields[3].values), exps).value)
    out = {"x_diff": xnorm(du, exps), "sup_diff": du.sup(), "grad_sup_diff": finite_diff(du, 1).sup(),
           "driver": driver, "threshold": thr}
    for k in ("x_diff", "sup_diff", "grad_sup_diff"):
        out[k + "_ratio"] = out[k] / driver if driver > 0 else 0.0
    return out


def _dense_operator(grid: GridSpec, op):
    """Assemble a linear spatial operator on scalar fields column by column."""
    N = int(np.prod(grid.shape))
    cols = []
    for i in range(N):
        e = np.zeros(N)
        e[i] = 1.0
        cols.append(op(e.reshape(grid.shape)).reshape(-1))
    return np.stack(cols, axis=1)


def direct_timestep_oracle(b, f, grid: GridSpec) -> np.ndarray:
    """Sequential exponential-Euler time stepping with densely assembled
    operators; solves the same discrete equations the fixed point targets."""
    bf = _as_field(b, grid, "drift").values[::-1]
    ff = (bf if f is None else _as_field(f, grid, "source").values[::-1])
    d = grid.d
    E = _dense_operator(grid, lambda v: _apply(v, tuple(range(d)), grid.tau, grid.h))
    G = [_dense_operator(grid, lambda v, a=a: np.gradient(v, grid.h, axis=a, edge_order=2)) for a in range(d)]
    N = E.shape[0]
    vs = np.zeros((grid.nt, N, d))
    for n in range(grid.nt - 1):
        bn = bf[n].reshape(N, d)
        rhs = vs[n] + grid.tau * (ff[n].reshape(N, d) + sum(bn[:, j:j + 1] * (G[j] @ vs[n]) for j in range(d)))
        vs[n + 1] = E @ rhs
    return vs[::-1].reshape((grid.nt,) + grid.shape + (d,))


def implicit_oracle(b, f, grid: GridSpec) -> np.ndarray:
    """Backward-Euler (fully implicit) scheme for the reversed-time problem
    with sparse centered differences and zero ghost nodes."""
    bf = _as_field(b, grid, "drift").values[::-1]
    ff = bf if f is None else _as_field(f, grid, "source").values[::-1]
    d, n, h, tau = grid.d, grid.n, grid.h, grid.tau
    I1 = sparse.identity(n, format="csr")
    D2 = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / h ** 2
    D1 = sparse.diags([-1.0, 1.0], [-1, 1], shape=(n, n)) / (2 * h)

    def kron_axis(A, a):
        mats = [A if i == a else I1 for i in range(d)]
        out = mats[0]
        for m in mats[1:]:
            out = sparse.kron(out, m, format="csr")
        return out

    lap = sum(kron_axis(D2, a) for a in range(d))
    grads = [kron_axis(D1, a) for a in range(d)]
    N = n ** d
    Id = sparse.identity(N, format="csr")
    vs = np.zeros((grid.nt, N, d))
    for k in range(grid.nt - 1):
        bn = bf[k + 1].reshape(N, d)
        A = Id - tau * (0.5 * lap + sum(sparse.diags(bn[:, j]) @ grads[j] for j in range(d)))
        rhs = vs[k] + tau * ff[k + 1].reshape(N, d)
        vs[k + 1] = np.asarray(splinalg.spsolve(A.tocsc(), rhs)).reshape(N, d)
    return vs[::-1].reshape((grid.nt,) + grid.shape + (d,))
