"""Brownian and Euler-Maruyama ensembles, Girsanov reweighting, Khasminskii
and exponential-moment estimators, the conjugated SDE and the
inverse-radial counterexample probe.

Randomness comes from counter-based Philox streams keyed by ``(seed, chunk)``
with the step index in the counter, so any increment can be regenerated on
demand and chunks can run in any order or in parallel with identical output.
Chunks always draw the full block of ``CHUNK`` paths.
"""

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from critlab.grid import DriftSpec, GridError, GridFunction
from critlab import kernels

CHUNK = 4096
DIVERGENCE = 1e6
LOGW_MAX = 700.0


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("LAB_THREADS", "1")))
    except ValueError:
        return 1


def standard_normals(seed, chunk, step, d):
    """The ``(CHUNK, d)`` block of standard normals for one chunk and step."""
    bg = np.random.Philox(key=np.array([seed, chunk], dtype=np.uint64),
                          counter=np.array([0, 0, step, 0], dtype=np.uint64))
    return np.random.Generator(bg).standard_normal((CHUNK, d))


def increments(seed, chunk, k, dt, d, substeps=1):
    """Brownian increment over coarse step ``k``: the sum of ``substeps`` fine
    draws of variance ``dt / substeps`` each."""
    if substeps == 1:
        return np.sqrt(dt) * standard_normals(seed, chunk, k, d)
    z = standard_normals(seed, chunk, k * substeps, d)
    for i in range(1, substeps):
        z = z + standard_normals(seed, chunk, k * substeps + i, d)
    return np.sqrt(dt / substeps) * z


def evaluator(obj, rank=1) -> Callable:
    """``(t, X) -> values`` for constants, DriftSpecs, GridFunctions or callables."""
    if obj is None:
        return None
    if callable(obj) and not isinstance(obj, (DriftSpec, GridFunction)):
        return obj
    if isinstance(obj, DriftSpec):
        return obj.evaluate
    if isinstance(obj, GridFunction):
        g = obj.grid
        vals = obj.values if obj.rank else obj.values[..., None]
        hh = np.full(g.d, g.h)

        def ev(t, X):
            if obj.timed:
                s = min(max((t - g.t0) / g.tau, 0.0), g.nt - 1)
                k = min(int(np.floor(s)), g.nt - 2)
                w = s - k
                sl = vals[k] if w == 0 else (1 - w) * vals[k] + w * vals[k + 1]
            else:
                sl = vals
            out = kernels.interp(sl, g.lo, hh, X)
            return out if obj.rank else out[:, 0]
        return ev
    c = np.asarray(obj, dtype=float)
    if c.ndim == 0:
        return lambda t, X: np.full(X.shape[0], float(c))
    return lambda t, X: np.broadcast_to(c, X.shape).copy()


@dataclass
class Sim:
    """Everything one chunk worker needs."""
    seed: int
    n: int
    d: int
    dt: float
    nsteps: int
    x0: np.ndarray
    k0: int = 0
    substeps: int = 1
    drift: Optional[Callable] = None
    sigma: Optional[Callable] = None
    dt_integrands: tuple = ()
    db_integrands: tuple = ()
    record: tuple = ()
    keep_paths: bool = False


def _chunk(sim: Sim, c: int) -> dict:
    lo = c * CHUNK
    m = min(CHUNK, sim.n - lo)
    X = np.array(sim.x0[lo:lo + m], dtype=float)
    dead = np.zeros(m, dtype=bool)
    I_dt = np.zeros((len(sim.dt_integrands), m))
    I_db = np.zeros((len(sim.db_integrands), m))
    rec = {}
    paths = np.empty((sim.nsteps + 1, m, sim.d)) if sim.keep_paths else None
    rec_set = set(sim.record)
    if 0 in rec_set:
        rec[0] = X.copy()
    if paths is not None:
        paths[0] = X
    for k in range(sim.nsteps):
        t = (sim.k0 + k) * sim.dt
        dB = increments(sim.seed, c, sim.k0 + k, sim.dt, sim.d, sim.substeps)[:m]
        for i, f in enumerate(sim.dt_integrands):
            I_dt[i] += f(t, X) * sim.dt
        for i, g in enumerate(sim.db_integrands):
            I_db[i] += np.sum(g(t, X) * dB, axis=-1)
        if sim.sigma is not None:
            S, bad = sim.sigma(t, X)
            step = np.einsum("mij,mj->mi", S, dB)
            dead |= bad
        else:
            step = dB
        if sim.drift is not None:
            step = step + sim.drift(t, X) * sim.dt
        Xn = X + step
        blow = ~np.all(np.isfinite(Xn), axis=-1) | (np.max(np.abs(np.nan_to_num(Xn, nan=np.inf)), axis=-1) > DIVERGENCE)
        dead |= blow
        X = np.where(dead[:, None], X, Xn)
        if k + 1 in rec_set:
            rec[k + 1] = X.copy()
        if paths is not None:
            paths[k + 1] = X
    return {"X": X, "dead": dead, "I_dt": I_dt, "I_db": I_db, "rec": rec, "paths": paths}


def run(sim: Sim) -> dict:
    nchunks = (sim.n + CHUNK - 1) // CHUNK
    workers = n_threads()
    if workers > 1 and nchunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda c: _chunk(sim, c), range(nchunks)))
    else:
        parts = [_chunk(sim, c) for c in range(nchunks)]
    out = {
        "X": np.concatenate([p["X"] for p in parts]),
        "dead": np.concatenate([p["dead"] for p in parts]),
        "I_dt": np.concatenate([p["I_dt"] for p in parts], axis=1),
        "I_db": np.concatenate([p["I_db"] for p in parts], axis=1),
        "rec": {k: np.concatenate([p["rec"][k] for p in parts]) for k in sim.record},
        "paths": np.concatenate([p["paths"] for p in parts], axis=1) if sim.keep_paths else None,
    }
    return out


def _init_points(init, n, d=None):
    a = np.asarray(init, dtype=float)
    if a.ndim == 1:
        return np.broadcast_to(a, (n, a.shape[0])).copy()
    if a.ndim == 2 and a.shape[0] == n:
        return a.copy()
    raise GridError("init must be a point (d,) or an array of n starting points")


def _nsteps(dt, T):
    if dt <= 0:
        raise GridError("dt must be positive")
    m = T / dt
    k = int(round(m))
    if abs(m - k) > 1e-9 * max(1.0, m):
        raise GridError("T must be an integer multiple of dt")
    return k


@dataclass(eq=False)
class PathEnsemble:
    n: int
    dt: float
    T: float
    d: int
    seed: int
    x0: np.ndarray
    X_T: np.ndarray
    t0: float = 0.0
    substeps: int = 1
    drift: object = None
    logw: Optional[np.ndarray] = None
    weight_drift: object = None
    diverged: np.ndarray = None
    paths: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def nsteps(self):
        return _nsteps(self.dt, self.T - self.t0)

    @property
    def k0(self):
        return _nsteps(self.dt, self.t0) if self.t0 else 0

    @property
    def times(self):
        return self.dt * (self.k0 + np.arange(self.nsteps + 1))

    @property
    def alive(self):
        return ~self.diverged

    @property
    def n_diverged(self):
        return int(self.diverged.sum())

    @property
    def weights(self):
        return None if self.logw is None else np.exp(self.logw)

    def sim(self, **kw) -> Sim:
        base = dict(seed=self.seed, n=self.n, d=self.d, dt=self.dt, nsteps=self.nsteps, x0=self.x0,
                    k0=self.k0, substeps=self.substeps, drift=evaluator(self.drift))
        base.update(kw)
        return Sim(**base)

    def header(self) -> dict:
        return {"n": self.n, "dt": self.dt, "T": self.T, "d": self.d, "seed": self.seed, "t0": self.t0,
                "substeps": self.substeps}

    def summary(self) -> dict:
        a = self.X_T[self.alive]
        out = dict(self.header())
        out.update({"mean": a.mean(axis=0).tolist(), "var": a.var(axis=0, ddof=1).tolist() if len(a) > 1 else None,
                    "diverged": self.n_diverged,
                    "drift": self.drift.describe() if isinstance(self.drift, DriftSpec) else None})
        if self.logw is not None:
            m, se = mean_se(self.weights[self.alive])
            out["mean_weight"] = m
            out["mean_weight_se"] = se
        return out


def mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def simulate_brownian(n, dt, T, init, seed, keep_paths=False, record=(), substeps=1) -> PathEnsemble:
    if n < 1:
        raise GridError("need n >= 1")
    x0 = _init_points(init, n)
    ens = PathEnsemble(n, dt, T, x0.shape[1], int(seed), x0, None, substeps=substeps)
    r = run(ens.sim(keep_paths=keep_paths, record=tuple(record)))
    ens.X_T, ens.diverged, ens.paths = r["X"], r["dead"], r["paths"]
    ens.meta["recorded"] = r["rec"]
    return ens


def euler_maruyama(b, n, dt, T, init, seed, keep_paths=False, record=(), substeps=1, t0=0.0) -> PathEnsemble:
    """``X_{k+1} = X_k + b(t_k, X_k) dt + dB_k``; diverged paths are frozen and flagged."""
    if n < 1:
        raise GridError("need n >= 1")
    x0 = _init_points(init, n)
    ens = PathEnsemble(n, dt, T, x0.shape[1], int(seed), x0, None, t0=t0, substeps=substeps, drift=b)
    r = run(ens.sim(keep_paths=keep_paths, record=tuple(record)))
    ens.X_T, ens.diverged, ens.paths = r["X"], r["dead"], r["paths"]
    ens.meta["recorded"] = r["rec"]
    if ens.n_diverged:
        warnings.warn(f"{ens.n_diverged} path(s) diverged and were excluded")
    return ens


def _need_driftless(paths):
    if paths.drift is not None:
        raise GridError("this estimator needs a driftless (Brownian) ensemble")


def girsanov_weights(paths: PathEnsemble, b) -> PathEnsemble:
    """Attach ``log alpha_T = sum b . dB - 1/2 sum |b|^2 dt`` (left point)."""
    _need_driftless(paths)
    ev = evaluator(b)
    r = run(paths.sim(db_integrands=(ev,), dt_integrands=(lambda t, X: np.sum(ev(t, X) ** 2, axis=-1),)))
    logw = r["I_db"][0] - 0.5 * r["I_dt"][0]
    over = ~np.isfinite(logw) | (logw > LOGW_MAX)
    if over.any():
        warnings.warn(f"{int(over.sum())} weight(s) overflowed and were flagged")
    return replace(paths, logw=np.where(over, 0.0, logw), weight_drift=b, diverged=paths.diverged | over,
                   meta=dict(paths.meta))


def functional_mean(ens: PathEnsemble, h) -> tuple:
    """(mean, SE) of ``h(X_T)``; weighted by the Girsanov factor when present."""
    a = ens.alive
    vals = h(ens.X_T[a])
    if ens.logw is not None:
        vals = vals * np.exp(ens.logw[a])
    return mean_se(vals)


def estimator_crosscheck(b, h, n, dt, T, init, seed) -> dict:
    """Weighted-Brownian and direct Euler-Maruyama estimators of ``E h(X_T)``
    on independent streams."""
    w = girsanov_weights(simulate_brownian(n, dt, T, init, seed), b)
    e = euler_maruyama(b, n, dt, T, init, seed + 1)
    m1, s1 = functional_mean(w, h)
    m2, s2 = functional_mean(e, h)
    mw, sw = mean_se(w.weights[w.alive])
    comb = float(np.hypot(s1, s2))
    return {"girsanov_mean": m1, "girsanov_se": s1, "em_mean": m2, "em_se": s2, "combined_se": comb,
            "z": abs(m1 - m2) / comb if comb > 0 else 0.0, "agree": bool(abs(m1 - m2) <= 4 * comb),
            "mean_weight": mw, "mean_weight_se": sw, "weight_ok": bool(abs(mw - 1) <= 4 * sw + 1e-15)}


def occupation_sup(f: GridFunction, a_idx, b_idx) -> float:
    """``sup_x sum_{a<=k<b} tau (T_{t_k - t_a} f(t_k))(x)``: the lattice value of
    ``sup_x E int f(s, x + B_{s - t_a}) ds`` over one interval."""
    from critlab.heat import _apply
    g = f.grid
    acc = np.zeros(g.shape)
    for k in range(a_idx, b_idx):
        acc += g.tau * _apply(f.values[k], tuple(range(g.d)), (k - a_idx) * g.tau, g.h)
    return float(acc.max())


def occupation_partition(f: GridFunction, alpha) -> list:
    """Greedy split of the grid interval into pieces with occupation sup <= alpha."""
    if not 0 < alpha < 1:
        raise GridError("alpha must lie in (0, 1)")
    g = f.grid
    pieces = []
    a = 0
    while a < g.nt - 1:
        b = a + 1
        if occupation_sup(f, a, b) > alpha:
            raise GridError("a single time step already exceeds alpha; refine tau")
        while b < g.nt - 1 and occupation_sup(f, a, b + 1) <= alpha:
            b += 1
        pieces.append((a, b))
        a = b
    return pieces


def khasminskii_estimate(f, paths: PathEnsemble, alpha=None, exps=None) -> dict:
    """Monte Carlo ``M = E int f(s, B_s) ds`` and ``E exp(int f)`` with the
    ``1/(1-M)`` bound; with ``alpha`` and a gridded ``f``, also the partitioned
    bound ``prod 1/(1-M_k) <= (1/(1-alpha))^{k+1}``."""
    _need_driftless(paths)
    ev = evaluator(f, rank=0)
    r = run(paths.sim(dt_integrands=(ev,)))
    I = r["I_dt"][0][paths.alive]
    if np.any(I < -1e-12):
        raise GridError("khasminskii_estimate needs f >= 0")
    M, Mse = mean_se(I)
    E, Ese = mean_se(np.exp(I))
    rep = {"M": M, "M_se": Mse, "E": E, "E_se": Ese}
    if M + 4 * Mse < 1:
        rep["bound"] = 1.0 / (1.0 - M)
        rep["bound_ok"] = bool(E <= rep["bound"] + 4 * Ese)
    else:
        rep["bound"] = None
        rep["bound_ok"] = None
    if exps is not None and isinstance(f, GridFunction):
        from critlab.lorentz import mixed_lorentz_norm
        rep["f_norm"] = mixed_lorentz_norm(f.broadcast_time(), exps).value
    if alpha is not None:
        if not isinstance(f, GridFunction):
            raise GridError("the partitioned bound needs a gridded f")
        fb = f.broadcast_time()
        pieces = occupation_partition(fb, alpha)
        Mk = [occupation_sup(fb, a, b) for a, b in pieces]
        prod = float(np.prod([1.0 / (1.0 - m) for m in Mk]))
        rep.update({"alpha": alpha, "pieces": [(float(fb.grid.times()[a]), float(fb.grid.times()[b])) for a, b in pieces],
                    "M_k": Mk, "telescoped_bound": prod,
                    "alpha_bound": (1.0 / (1.0 - alpha)) ** len(pieces),
                    "partition_ok": bool(E <= prod + 4 * Ese and prod <= (1.0 / (1.0 - alpha)) ** len(pieces) + 1e-12)})
    return rep


def _heavy_tail(vals) -> bool:
    v = np.sort(vals)[::-1]
    top = max(1, int(np.ceil(0.01 * v.size)))
    tot = v.sum()
    return bool(tot > 0 and v[:top].sum() > 0.5 * tot)


def exp_functional_moment(l1, l2, g, paths: PathEnsemble) -> dict:
    """``E exp[l1 int g dB + l2 int |g|^2 ds]`` with CI.

    Brownian ensembles evaluate along ``B``; drifted Euler-Maruyama ensembles
    use the driving increments; Girsanov-weighted ensembles use
    ``dB = dW - b dt`` along the Brownian paths ``W``, times the weight.
    """
    ev = evaluator(g)
    sq = lambda t, X: np.sum(ev(t, X) ** 2, axis=-1)
    weighted = paths.logw is not None
    if weighted:
        bw = evaluator(paths.weight_drift)
        cross = lambda t, X: np.sum(ev(t, X) * bw(t, X), axis=-1)
        r = run(paths.sim(db_integrands=(ev,), dt_integrands=(sq, cross)))
        stoch = r["I_db"][0] - r["I_dt"][1]
    else:
        r = run(paths.sim(db_integrands=(ev,), dt_integrands=(sq,)))
        stoch = r["I_db"][0]
    expo = l1 * stoch + l2 * r["I_dt"][0]
    if weighted:
        expo = expo + paths.logw
    vals = np.exp(expo[paths.alive])
    m, se = mean_se(vals)
    heavy = _heavy_tail(vals)
    if heavy:
        warnings.warn("heavy tail: top 1% of samples carries more than half of the mean")
    return {"mean": m, "se": se, "ci": (m - 4 * se, m + 4 * se), "heavy_tail": heavy, "l1": l1, "l2": l2,
            "finite": bool(np.isfinite(m))}


def _sigma_rule(fm):
    from critlab.zvonkin import InverseError, invert_transform

    hw = fm.usable_half_width

    def sigma(t, Y):
        bad = np.any(np.abs(Y) > hw, axis=-1)
        S = np.broadcast_to(np.eye(fm.d), (Y.shape[0], fm.d, fm.d)).copy()
        ok = ~bad
        if ok.any():
            try:
                x, _ = invert_transform(fm, t, Y[ok])
                S[ok] = fm.jacobian(t, x).reshape(-1, fm.d, fm.d)
            except InverseError as e:
                idx = np.flatnonzero(ok)[e.diagnostics.get("indices", [])]
                bad[idx] = True
                good = np.flatnonzero(ok & ~bad)
                if good.size:
                    x, _ = invert_transform(fm, t, Y[good])
                    S[good] = fm.jacobian(t, x).reshape(-1, fm.d, fm.d)
        return S, bad
    return sigma


def simulate_conjugated(fm, n, dt, seed, y0, keep_paths=False, record=(), substeps=1) -> PathEnsemble:
    """``Y_{k+1} = Y_k + sigma~(t_k, Y_k) dB_k`` on the FlowMap interval."""
    t0, t1 = fm.interval
    y = _init_points(y0, n)
    ens = PathEnsemble(n, dt, t1, y.shape[1], int(seed), y, None, t0=t0, substeps=substeps)
    r = run(ens.sim(sigma=_sigma_rule(fm), keep_paths=keep_paths, record=tuple(record)))
    ens.X_T, ens.diverged, ens.paths = r["X"], r["dead"], r["paths"]
    ens.meta["recorded"] = r["rec"]
    ens.meta["conjugated"] = True
    return ens


def conjugation_gap(fm, n, dt, seed, x0, substeps=1) -> dict:
    """Mean ``|Phi(t, X_t) - Y_t|`` on shared increments, with ``X`` the
    Euler-Maruyama path for the FlowMap's drift and ``Y`` started at ``Phi(t0, x0)``."""
    b = fm.source.drift
    if b is None:
        raise GridError("FlowMap source carries no drift")
    t0 = fm.interval[0]
    steps = _nsteps(dt, fm.interval[1] - t0)
    rec = tuple(range(steps + 1))
    X = euler_maruyama(b, n, dt, fm.interval[1], x0, seed, record=rec, substeps=substeps, t0=t0)
    y0 = fm(t0, np.asarray(x0, dtype=float))
    Y = simulate_conjugated(fm, n, dt, seed, y0, record=rec, substeps=substeps)
    ok = X.alive & Y.alive
    gaps = []
    k0 = X.k0
    for k in rec:
        t = (k0 + k) * dt
        xk = X.meta["recorded"][k][ok]
        gaps.append(float(np.mean(np.linalg.norm(fm(t, xk) - Y.meta["recorded"][k][ok], axis=-1))))
    return {"dt": dt, "mean_gap_T": gaps[-1], "max_mean_gap": max(gaps), "excluded": int((~ok).sum())}


def pathwise_uniqueness_stats(fm, y1, y2, r, n, dt, seed) -> dict:
    """Couple two conjugated runs on the same increments."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    sep = float(np.linalg.norm(y1 - y2))
    t0, t1 = fm.interval
    steps = _nsteps(dt, t1 - t0)
    k0 = _nsteps(dt, t0) if t0 else 0
    sigma = _sigma_rule(fm)
    coef = r * (r - 1) / 2.0
    nchunks = (n + CHUNK - 1) // CHUNK
    moments = np.zeros(steps + 1)
    superm = np.zeros(steps + 1)
    superm2 = np.zeros(steps + 1)
    eA = 0.0
    exact = True
    count = 0
    for c in range(nchunks):
        m = min(CHUNK, n - c * CHUNK)
        Y1 = np.broadcast_to(y1, (m, fm.d)).copy()
        Y2 = np.broadcast_to(y2, (m, fm.d)).copy()
        A = np.zeros(m)
        dead = np.zeros(m, dtype=bool)
        D = np.linalg.norm(Y1 - Y2, axis=-1)
        moments[0] += np.sum(D ** (r / 2))
        superm[0] += np.sum(D ** r)
        superm2[0] += np.sum(D ** (2 * r))
        for k in range(steps):
            t = (k0 + k) * dt
            dB = increments(seed, c, k0 + k, dt, fm.d)[:m]
            S1, b1 = sigma(t, Y1)
            S2, b2 = sigma(t, Y2)
            dead |= b1 | b2
            D = np.linalg.norm(Y1 - Y2, axis=-1)
            diff = np.sum((S1 - S2) ** 2, axis=(1, 2))
            with np.errstate(divide="ignore", invalid="ignore"):
                A += np.where(D > 0, coef * diff / D ** 2, 0.0) * dt
            Y1 = Y1 + np.einsum("mij,mj->mi", S1, dB)
            Y2 = Y2 + np.einsum("mij,mj->mi", S2, dB)
            D = np.linalg.norm(Y1 - Y2, axis=-1)
            moments[k + 1] += np.sum(np.where(dead, 0.0, D ** (r / 2)))
            z = np.where(dead, 0.0, np.exp(-A) * D ** r)
            superm[k + 1] += np.sum(z)
            superm2[k + 1] += np.sum(z ** 2)
        if sep == 0:
            exact &= bool(np.all(Y1 == Y2))
        eA += np.sum(np.exp(np.where(dead, 0.0, A)))
        count += m
    moments /= count
    superm /= count
    sm_se = np.sqrt(np.maximum(superm2 / count - superm ** 2, 0.0) / max(count - 1, 1))
    out = {"separation": sep, "r": r, "exact_coincidence": exact if sep == 0 else None,
           "E_exp_A_T": eA / count, "sup_moment": float(moments.max()),
           "supermartingale_ok": bool(np.all(superm <= sep ** r * (1 + 1e-9) + 4 * sm_se)) if sep > 0 else True}
    out["ratio"] = float(moments.max() / sep ** (r / 2)) if sep > 0 else 0.0
    return out


def holder_time_stats(ens: PathEnsemble, r, pairs) -> dict:
    """``E|Y_t - Y_s|^r / |t - s|^{r/2}`` for recorded step-index pairs ``(s, t)``."""
    rec = ens.meta.get("recorded", {})
    rows = []
    for s, t in pairs:
        if s not in rec or t not in rec:
            raise GridError("record the step indices before computing Holder statistics")
        inc = np.linalg.norm(rec[t] - rec[s], axis=-1)[ens.alive]
        m, se = mean_se(inc ** r)
        lag = (t - s) * ens.dt
        rows.append({"s": s * ens.dt + ens.t0, "t": t * ens.dt + ens.t0, "ratio": m / lag ** (r / 2),
                     "se": se / lag ** (r / 2)})
    return {"r": r, "rows": rows, "max_ratio": max(x["ratio"] for x in rows)}


def counterexample_probe(beta, eps_levels, n, dt, T, d=2, sign=-1, seed=0) -> dict:
    """``E int_0^T |b_eps(X_s)|^2 ds`` and the trapped fraction ``P(|X_T| < eps)``
    for ``b_eps = sign * beta x / (|x|^2 + eps^2)`` started at 0."""
    eps_levels = list(eps_levels)
    if any(b <= 0 for b in eps_levels) or any(b >= a for a, b in zip(eps_levels, eps_levels[1:])):
        raise GridError("eps levels must be positive and decreasing")
    rows = []
    for eps in eps_levels:
        spec = DriftSpec.inverse_radial(d, beta, eps, sign)
        sq = lambda t, X, s=spec: np.sum(s.evaluate(t, X) ** 2, axis=-1)
        ens = PathEnsemble(n, dt, T, d, int(seed), np.zeros((n, d)), None, drift=spec)
        res = run(ens.sim(dt_integrands=(sq,)))
        ok = ~res["dead"]
        m, se = mean_se(res["I_dt"][0][ok])
        tr, tse = mean_se((np.linalg.norm(res["X"][ok], axis=-1) < eps).astype(float))
        rows.append({"eps": eps, "functional": m, "se": se, "trapped": tr, "trapped_se": tse,
                     "diverged": int((~ok).sum())})
    f = [r_["functional"] for r_ in rows]
    s = [r_["se"] for r_ in rows]
    inc = all(b - 4 * sb > a + 4 * sa for a, b, sa, sb in zip(f, f[1:], s, s[1:]))
    growth = [b / a if a > 0 else float("inf") for a, b in zip(f, f[1:])]
    return {"beta": beta, "sign": sign, "d": d, "dt": dt, "T": T, "rows": rows,
            "strictly_increasing": bool(inc), "growth": growth}
