"""Glued stochastic flows over a time partition, flow stability under
mollification and difference-quotient regularity statistics.

Flows are simulated on shared Brownian increments, so ``phi(s, t, x)`` for
different ``s``, ``x`` and drifts are coupled path by path.  The default
route is Euler-Maruyama on the drift itself; the Zvonkin route conjugates
each piece and maps back with ``Phi^k``.
"""

from dataclasses import dataclass, field

import numpy as np

from critlab.grid import DriftSpec, GridError, GridSpec
from critlab.kolmogorov import PdeError, calibrate, solve_backward_pde
from critlab.lorentz import LorentzExponents, partition_time
from critlab import sde
from critlab.zvonkin import build_transform, invert_transform


@dataclass(eq=False)
class ComposedFlow:
    b: DriftSpec
    exps: LorentzExponents
    grid: GridSpec
    intervals: list
    threshold: float
    sols: list = field(default_factory=list)
    maps: list = field(default_factory=list)

    @property
    def horizon(self):
        return (self.intervals[0][0], self.intervals[-1][1])

    @property
    def junctions(self):
        return [a for a, _ in self.intervals[1:]]

    def drift_eval(self):
        if self.b.family == "gaussian-bump" and self.b.eps > 0:
            return self.b.tabulate(self.grid)
        return self.b

    def bounds_ok(self) -> bool:
        return all(fm.bounds()["ok"] for fm in self.maps)

    def simulate(self, x0, n, dt, seed, s=None, t=None, route="em", record=()):
        """``phi(s, t, x0)`` for ``n`` coupled paths (a PathEnsemble at time ``t``)."""
        s = self.horizon[0] if s is None else s
        t = self.horizon[1] if t is None else t
        if not (self.horizon[0] - 1e-12 <= s <= t <= self.horizon[1] + 1e-12):
            raise GridError("flow times outside the horizon")
        if route == "em":
            return sde.euler_maruyama(self.drift_eval(), n, dt, t, x0, seed, t0=s, record=record)
        if route != "zvonkin":
            raise GridError("route must be 'em' or 'zvonkin'")
        x = sde._init_points(x0, n)
        dead = np.zeros(n, dtype=bool)
        for (a, b_), fm in zip(self.intervals, self.maps):
            lo, hi = max(a, s), min(b_, t)
            if hi <= lo + 1e-15:
                continue
            y = fm(lo, x)
            if (lo, hi) != fm.interval:
                fm = type(fm)(fm.source, fm.phi, fm.jac, (lo, hi), fm.grad_sup, fm.u_sup, fm.tol, fm.maxit)
            Y = sde.simulate_conjugated(fm, n, dt, seed, y)
            dead |= Y.diverged
            x = np.array(Y.X_T)
            ok = ~dead
            if hi < b_ - 1e-15:
                x[ok], _ = invert_transform(fm, hi, x[ok])
        out = sde.PathEnsemble(n, dt, t, self.grid.d, int(seed), sde._init_points(x0, n), x, t0=s)
        out.diverged = dead
        return out

    def semigroup_check(self, x0, n, dt, seed, s, u, t) -> dict:
        """``phi(s, t, x) == phi(u, t, phi(s, u, x))`` at scheme level."""
        direct = self.simulate(x0, n, dt, seed, s, t)
        mid = self.simulate(x0, n, dt, seed, s, u)
        glued = self.simulate(mid.X_T, n, dt, seed, u, t)
        err = float(np.max(np.abs(direct.X_T - glued.X_T)))
        return {"s": s, "u": u, "t": t, "max_abs_diff": err, "exact": err == 0.0}


def build_flow(b: DriftSpec, exps: LorentzExponents, horizon, grid: GridSpec, threshold=None,
               with_maps=True) -> ComposedFlow:
    """Partition ``horizon`` so each piece is below ``threshold`` (default: the
    calibrated Zvonkin threshold), solve the per-piece backward PDE and build
    its FlowMap."""
    S, T = horizon
    g = grid.with_time(S, T)
    n_cells = g.nt - 1
    pieces_probe = T - S
    cal = calibrate(grid.with_time(0.0, pieces_probe), exps)
    thr = cal.zvonkin_threshold(pieces_probe) if threshold is None else threshold
    bb = b.tabulate(grid) if (b.family == "gaussian-bump" and b.eps > 0) else b
    intervals = partition_time(bb, exps, thr, (S, T), grid=g, n_cells=n_cells)
    flow = ComposedFlow(b, exps, grid, intervals, thr)
    if not with_maps:
        return flow
    for a, c in intervals:
        gi = grid.with_time(a, c)
        try:
            sol = solve_backward_pde(bb, None, gi, exps)
        except PdeError as e:
            raise PdeError(f"piece [{a:g}, {c:g}]: {e}", getattr(e, "trace", None))
        flow.sols.append(sol)
        flow.maps.append(build_transform(sol))
    return flow


def _sup_moment(ens_a, ens_b, r, steps):
    ok = ens_a.alive & ens_b.alive
    best = (0.0, 0.0, 0)
    for k in steps:
        dif = np.linalg.norm(ens_a.meta["recorded"][k][ok] - ens_b.meta["recorded"][k][ok], axis=-1) ** r
        m, se = sde.mean_se(dif)
        if m >= best[0]:
            best = (m, se, k)
    return best


def flow_stability(b: DriftSpec, eps_levels, x0, r, n, dt, T, seed, grid: GridSpec, n_times=16) -> dict:
    """``sup_t E|phi_n(0, t, x) - phi_ref(0, t, x)|^r`` over mollification
    levels on shared increments, with the ``2 int b_n dB - int b_n^2`` moment
    and the ``(2r - 1)``-moments of each flow."""
    eps_levels = list(eps_levels)
    if any(b_ >= a for a, b_ in zip(eps_levels, eps_levels[1:])):
        raise GridError("eps levels must decrease")
    if b.family != "inverse-radial" and min(eps_levels) < 2 * grid.h:
        raise GridError("mollification levels must be at least two lattice steps")
    ref_eps = 0.0 if b.family in ("constant", "gaussian-bump") else min(eps_levels) / 2
    steps = _nsteps_grid(dt, T, n_times)

    def drift(eps):
        return b.with_eps(eps).tabulate(grid) if b.family != "inverse-radial" else b.with_eps(eps)

    ref = sde.euler_maruyama(drift(ref_eps), n, dt, T, x0, seed, record=steps)
    bm = sde.simulate_brownian(min(n, 32768), dt, T, x0, seed + 7)
    rows = []
    moments = []
    for eps in eps_levels:
        bn = drift(eps)
        ens = sde.euler_maruyama(bn, n, dt, T, x0, seed, record=steps)
        m, se, k = _sup_moment(ens, ref, r, steps)
        mom = sde.exp_functional_moment(2.0, -1.0, bn, bm)
        moments.append(mom["mean"])
        hi_m, hi_se = sde.mean_se(np.linalg.norm(ens.X_T[ens.alive], axis=-1) ** (2 * r - 1))
        rows.append({"eps": eps, "r": r, "sup_diff": m, "se": se, "t_argmax": k * dt,
                     "dkdk_moment": mom["mean"], "dkdk_se": mom["se"], "heavy_tail": mom["heavy_tail"],
                     "moment_2r_minus_1": hi_m, "moment_2r_minus_1_se": hi_se})
    spread = (max(moments) - min(moments)) / max(min(moments), 1e-300)
    flagged = spread > 0.5 or any(r_["heavy_tail"] for r_ in rows)
    vals = [r_["sup_diff"] for r_ in rows]
    ses = [r_["se"] for r_ in rows]
    dec = all(bv + 2 * bs < av - 2 * as_ for av, bv, as_, bs in zip(vals, vals[1:], ses, ses[1:]))
    return {"reference_eps": ref_eps, "rows": rows, "strictly_decreasing": bool(dec),
            "outside_small_norm_regime": bool(flagged)}


def _nsteps_grid(dt, T, n_times):
    steps = sde._nsteps(dt, T)
    return tuple(sorted(set(np.linspace(0, steps, min(n_times, steps) + 1).round().astype(int).tolist())))


def weak_derivative_moments(flow_or_drift, r, h_levels, x0, n, dt, T, seed, grid: GridSpec = None, route="em") -> dict:
    """``E|D_h phi(0, T, x0)|^r`` with ``D_h`` the d x d matrix of symmetric
    difference quotients (Hilbert-Schmidt norm), coupled on shared increments."""
    if isinstance(flow_or_drift, ComposedFlow):
        flow = flow_or_drift
        sim = lambda x: flow.simulate(x, n, dt, seed, 0.0, T, route=route).X_T
        d = flow.grid.d
    else:
        b = flow_or_drift
        bb = b.tabulate(grid) if (b.family == "gaussian-bump" and b.eps > 0) else b
        sim = lambda x: sde.euler_maruyama(bb, n, dt, T, x, seed).X_T
        d = b.d
    x0 = np.asarray(x0, dtype=float)
    rows = []
    for h in h_levels:
        D = np.empty((n, d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            D[:, :, j] = (sim(x0 + e) - sim(x0 - e)) / (2 * h)
        vals = np.sum(D ** 2, axis=(1, 2)) ** (r / 2)
        m, se = sde.mean_se(vals)
        rows.append({"h": h, "r": r, "estimate": m, "se": se})
    out = {"rows": rows, "d": d}
    if len(rows) >= 2:
        a, b_ = rows[-2], rows[-1]
        out["h_stable"] = bool(abs(a["estimate"] - b_["estimate"]) <= 4 * np.hypot(a["se"], b_["se"]) + 1e-12)
    return out


def regularity_across_levels(b: DriftSpec, eps_levels, r, h, x0, n, dt, T, seed, grid: GridSpec) -> dict:
    """Difference-quotient moments at a fixed ``h`` across mollification levels."""
    rows = []
    for eps in eps_levels:
        rep = weak_derivative_moments(b.with_eps(eps), r, [h], x0, n, dt, T, seed, grid=grid)
        row = dict(rep["rows"][0])
        row["eps"] = eps
        rows.append(row)
    out = {"rows": rows}
    if len(rows) >= 2:
        a, b_ = rows[-2], rows[-1]
        out["n_stable"] = bool(abs(a["estimate"] - b_["estimate"]) <= 4 * np.hypot(a["se"], b_["se"]) + 1e-12)
    return out
