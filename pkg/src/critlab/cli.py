"""Experiment orchestration: ``lab run <config>``, ``lab list``, ``lab verify <manifest>``."""

import argparse
import copy
import hashlib
import json
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from critlab import io as lio
from critlab.grid import DriftSpec, GridFunction, GridSpec, sample_field
from critlab.lorentz import LorentzExponents

RECIPES = Path(__file__).with_name("recipes")

DEFAULTS = {
    "grid": {"d": 1, "L": 4.0, "h": 0.05, "T": 0.25, "tau": 0.025},
    "exponents": {"p": 3.0, "q": 3.0, "r": 1.0},
    "drift": {"family": "gaussian-bump", "amplitude": 1.0, "width": 0.3, "eps": 0.0},
    "mc": {"n": 8192, "dt": 0.01, "T": 1.0},
    "thresholds": {},
    "tolerances": {"pde": 1e-6, "newton": 1e-10, "mc_sigma": 4.0},
    "params": {},
    "output": {"dir": "out", "format": "json"},
}

DESCRIPTIONS = {
    "norms": "Lorentz-norm closed forms, mixed norms and the heat-kernel time weight",
    "pde": "fixed-point solve of the backward Kolmogorov equation with trace and residual",
    "zvonkin": "Zvonkin transform, Newton inverse and diffeomorphism certificate",
    "weak-existence": "Girsanov-weighted Brownian vs direct Euler-Maruyama estimators",
    "khasminskii": "exponential occupation moments against 1/(1-M) and the partitioned bound",
    "conjugation": "mean |Phi(t,X_t) - Y_t| under dt halving",
    "stability": "flow differences across mollification levels",
    "regularity": "difference-quotient moments of the flow across h and mollification levels",
    "counterexample": "quadratic drift functional for attracting vs repelling inverse-radial drift",
}


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    grid: dict = field(default_factory=dict)
    exponents: dict = field(default_factory=dict)
    drift: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if "experiment" not in raw:
            raise ConfigError("config needs an 'experiment'")
        if raw["experiment"] not in DESCRIPTIONS:
            raise ConfigError(f"unknown experiment {raw['experiment']!r}; see 'lab list'")
        if raw.get("seed") is None:
            raise ConfigError("seed is mandatory")
        unknown = set(raw) - {"experiment", "seed"} - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        full = _merge(DEFAULTS, {k: v for k, v in raw.items() if k in DEFAULTS})
        cfg = cls(raw["experiment"], int(raw["seed"]), **full)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(raw)

    def as_dict(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "grid": self.grid, "exponents": self.exponents,
                "drift": self.drift, "mc": self.mc, "thresholds": self.thresholds, "tolerances": self.tolerances,
                "params": self.params, "output": self.output}

    def inputs_hash(self) -> str:
        d = self.as_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(lio.plain(d), sort_keys=True).encode()).hexdigest()

    def exps(self) -> LorentzExponents:
        e = self.exponents
        return LorentzExponents(float(e["p"]), float(e["q"]), float(e.get("r", 1.0)), int(self.grid["d"]))

    def grid_spec(self) -> GridSpec:
        g = self.grid
        return GridSpec(int(g["d"]), float(g["L"]), float(g["h"]), 0.0, float(g["T"]), float(g["tau"]))

    def drift_spec(self, d=None) -> DriftSpec:
        dr = dict(self.drift)
        fam = dr.pop("family")
        eps = float(dr.pop("eps", 0.0))
        d = int(self.grid["d"]) if d is None else d
        if fam == "constant":
            c = dr.get("c", [0.0] * d)
            return DriftSpec.constant(c).with_eps(eps)
        if fam == "gaussian-bump":
            return DriftSpec.bump(d, dr.get("amplitude", 1.0), dr.get("width", 0.3), dr.get("center"),
                                  dr.get("direction")).with_eps(eps)
        if fam == "inverse-radial":
            return DriftSpec.inverse_radial(d, dr.get("beta", 1.0), eps, dr.get("sign", -1))
        raise ConfigError(f"drift family {fam!r} is not configurable")

    def validate(self):
        if self.output.get("format") not in ("json", "csv"):
            raise ConfigError("output.format must be json or csv")
        if self.experiment in ("pde", "zvonkin"):
            if self.exps().criticality != "critical":
                raise ConfigError(f"{self.experiment} needs critical exponents (2/q + d/p = 1)")
        if self.experiment == "khasminskii":
            if abs(self.exps().kappa - 2.0) > 1e-12:
                raise ConfigError("khasminskii needs exponents with 2/q + d/p = 2")


class Result:
    def __init__(self):
        self.tables = {}
        self.columns = {}
        self.checks = {}
        self.summary = {}

    def table(self, name, rows, columns=None):
        cols, rows = lio.canonical_rows(rows, columns)
        self.tables[name] = rows
        self.columns[name] = cols

    def check(self, name, ok):
        self.checks[name] = bool(ok)

    @property
    def passed(self):
        return all(self.checks.values())


# recipes ------------------------------------------------------------------

def _norms(cfg: ExperimentConfig, res: Result):
    from critlab.heat import gaussian_lp_norm, gaussian_lp_norm_numeric
    from critlab.lorentz import lorentz_norm, profile_norm

    P = cfg.params
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for p, q in P.get("pairs", [[2, 1], [3, 2], [4, 4], [1.5, 3]]):
        c = float(P.get("c", 1.5))
        A = float(P.get("measure", 0.75))
        val = lorentz_norm(np.array([c]), p, q, np.array([A]))
        exact = (p / q) ** (1 / q) * c * A ** (1 / p)
        rows.append({"fixture": "indicator", "p": p, "q": q, "value": val, "closed_form": exact,
                     "rel_err": abs(val / exact - 1)})
    for i in range(int(P.get("random_steps", 50))):
        m = int(rng.integers(1, 20))
        v = rng.exponential(size=m)
        w = rng.uniform(0.01, 2.0, size=m)
        p = float(rng.uniform(1.1, 6.0))
        val = lorentz_norm(v, p, p, w)
        exact = float(np.sum(w * v ** p) ** (1 / p))
        rows.append({"fixture": f"step-{i}", "p": p, "q": p, "value": val, "closed_form": exact,
                     "rel_err": abs(val / exact - 1)})
    res.table("lorentz", rows)
    res.check("lorentz_rel_err", max(r["rel_err"] for r in rows) < 1e-9)
    g = cfg.grid_spec()
    pd = float(P.get("p_dual", 2.0))
    grows = []
    for s in P.get("gaussian_s", [0.1, 0.5, 1.0]):
        num = gaussian_lp_norm_numeric(s, pd, g)
        exact = gaussian_lp_norm(s, pd, g.d)
        grows.append({"s": s, "p_dual": pd, "numeric": num, "closed_form": exact, "rel_err": abs(num / exact - 1)})
    res.table("gaussian", grows)
    res.check("gaussian_rel_err", max(r["rel_err"] for r in grows) < 1e-8)
    qd = float(P.get("q_dual", 3.0))
    trows = []
    for T in P.get("horizons", [0.5, 1.0, 2.0]):
        val = profile_norm(lambda s: s ** (-1 / qd), 0.0, T, qd, np.inf)
        trows.append({"T": T, "q_dual": qd, "value": val, "err": abs(val - 1)})
    res.table("time_weight", trows)
    res.check("time_weight", max(r["err"] for r in trows) < 1e-6)


def _pde(cfg, res):
    from critlab.kolmogorov import gradient_sup_bound_check, pde_residual, solve_backward_pde

    g = cfg.grid_spec()
    e = cfg.exps()
    b = cfg.drift_spec()
    bb = b.tabulate(g) if (b.family == "gaussian-bump" and b.eps > 0) else b
    src = cfg.params.get("source", "drift")
    f = None if src == "drift" else GridFunction(g, np.zeros(g.shape + (g.d,)), 1)
    sol = solve_backward_pde(bb, f, g, e, tol=float(cfg.tolerances["pde"]))
    res.table("trace", [{"iteration": i + 1, "distance": d} for i, d in enumerate(sol.trace)],
              ["iteration", "distance"])
    margin = float(cfg.params.get("margin", g.L / 4))
    resid = pde_residual(sol, margin=margin)
    emb = gradient_sup_bound_check(sol)
    res.summary.update({"solution": sol.summary(), "residual": resid, "embedding": emb,
                        "u_sup": sol.u.sup()})
    res.check("terminal_zero", np.all(sol.u.values[-1] == 0))
    res.check("contraction", sol.contraction_ratio < 1.0 / (2 * sol.calibration.c_quasi))
    res.check("finite_norms", all(np.isfinite(v) for v in sol.norm.values()))
    if b.family == "constant":
        T = g.t1
        exact = np.asarray(b.params["c"])[None, :] * (T - g.times())[:, None] if src == "drift" else 0 * g.times()[:, None]
        mask = g.interior_mask(margin)
        err = float(np.max(np.abs(sol.u.values[:, mask] - exact[:, None, :]))) if mask.any() else 0.0
        res.summary["constant_drift_sup_err"] = err
        res.check("constant_drift_exact", err <= 5 * (g.tau + g.h ** 2) * max(1.0, float(np.abs(b.params["c"]).max())))


def _zvonkin(cfg, res):
    from critlab.kolmogorov import solve_backward_pde
    from critlab.zvonkin import build_transform, check_diffeo, invert_transform

    g = cfg.grid_spec()
    e = cfg.exps()
    b = cfg.drift_spec()
    bb = b.tabulate(g) if (b.family == "gaussian-bump" and b.eps > 0) else b
    sol = solve_backward_pde(bb, None, g, e, tol=float(cfg.tolerances["pde"]))
    fm = build_transform(sol, tol=float(cfg.tolerances["newton"]))
    rng = np.random.default_rng(cfg.seed)
    hw = fm.usable_half_width
    rows = []
    for t in np.linspace(g.t0, g.t1, 5):
        y = rng.uniform(-hw, hw, size=(int(cfg.params.get("n_points", 1000)), g.d))
        x, it = invert_transform(fm, float(t), y)
        rows.append({"t": float(t), "roundtrip_max_err": float(np.max(np.linalg.norm(fm(float(t), x) - y, axis=-1))),
                     "max_newton_steps": int(it.max())})
    res.table("roundtrip", rows)
    cert = check_diffeo(fm, seed=cfg.seed)
    bnd = fm.bounds()
    res.summary.update({"certificate": cert, "grad_phi_sup": bnd["grad_phi_sup"],
                        "grad_phi_inv_sup": bnd["grad_phi_inv_sup"], "solution": sol.summary()})
    res.check("roundtrip", max(r["roundtrip_max_err"] for r in rows) < 1e-8)
    res.check("bounds", bnd["ok"])
    res.check("certificate", cert["passed"])


def _mc(cfg):
    m = cfg.mc
    return int(m["n"]), float(m["dt"]), float(m["T"])


def _x0(cfg):
    return np.asarray(cfg.params.get("x0", [0.0] * int(cfg.grid["d"])), dtype=float)


def _weak(cfg, res):
    from critlab.sde import estimator_crosscheck

    n, dt, T = _mc(cfg)
    b = cfg.drift_spec()
    out = estimator_crosscheck(b, lambda X: np.tanh(X[:, 0]), n, dt, T, _x0(cfg), cfg.seed)
    res.table("estimators", [out])
    res.check("estimators_agree", out["agree"])
    res.check("mean_weight", out["weight_ok"])


def _khas(cfg, res):
    from critlab.sde import khasminskii_estimate, simulate_brownian

    n, dt, T = _mc(cfg)
    P = cfg.params
    paths = simulate_brownian(n, dt, T, _x0(cfg), cfg.seed)
    rows = []
    c = float(P.get("c", 0.5 / T))
    rep = khasminskii_estimate(c, paths)
    s = float(cfg.tolerances["mc_sigma"])
    rows.append({"fixture": "constant", "M": rep["M"], "E": rep["E"], "E_se": rep["E_se"], "bound": rep["bound"],
                 "exact_E": float(np.exp(c * T))})
    res.check("constant_moment", abs(rep["E"] - np.exp(c * T)) <= s * rep["E_se"] + 1e-12)
    res.check("constant_bound", bool(rep["bound_ok"]))
    g = cfg.grid_spec().with_time(0.0, T, float(cfg.grid["tau"]))
    bump = DriftSpec.bump(g.d, float(P.get("bump_amplitude", 1.0)), float(P.get("bump_width", 0.3)))
    f = GridFunction(g, np.linalg.norm(sample_field(bump, g).values, axis=-1), 0).broadcast_time()
    rep2 = khasminskii_estimate(f, paths, alpha=float(P.get("alpha", 0.5)), exps=cfg.exps())
    rows.append({"fixture": "bump", "M": rep2["M"], "E": rep2["E"], "E_se": rep2["E_se"], "bound": rep2["bound"],
                 "exact_E": None})
    res.table("khasminskii", rows)
    res.table("pieces", [{"a": a, "b": b_, "M_k": m} for (a, b_), m in zip(rep2["pieces"], rep2["M_k"])],
              ["a", "b", "M_k"])
    res.summary.update({"bump": {k: v for k, v in rep2.items() if k not in ("pieces", "M_k")}})
    res.check("bump_bound", rep2["bound_ok"] in (True, None))
    res.check("partitioned_bound", rep2["partition_ok"])


def _conj(cfg, res):
    from critlab.kolmogorov import solve_backward_pde
    from critlab.sde import conjugation_gap
    from critlab.zvonkin import build_transform

    g = cfg.grid_spec()
    b = cfg.drift_spec()
    bb = b.tabulate(g) if (b.family == "gaussian-bump" and b.eps > 0) else b
    fm = build_transform(solve_backward_pde(bb, None, g, cfg.exps(), tol=float(cfg.tolerances["pde"])))
    n = int(cfg.mc["n"])
    rows = [conjugation_gap(fm, n, float(dt), cfg.seed, _x0(cfg)) for dt in cfg.params.get("dts", [0.0125, 0.00625, 0.003125])]
    for a, b_ in zip(rows, rows[1:]):
        b_["ratio"] = a["mean_gap_T"] / b_["mean_gap_T"]
    rows[0]["ratio"] = None
    res.table("gaps", rows, ["dt", "mean_gap_T", "max_mean_gap", "excluded", "ratio"])
    lo, hi = cfg.params.get("ratio_range", [1.2, 2.0])
    res.check("order_half", all(lo <= r["ratio"] <= hi for r in rows[1:]))


def _stab(cfg, res):
    from critlab.flow import flow_stability

    n, dt, T = _mc(cfg)
    g = cfg.grid_spec()
    rep = flow_stability(cfg.drift_spec(), cfg.params.get("eps_levels", [0.2, 0.1, 0.05]), _x0(cfg),
                         float(cfg.params.get("r", 1)), n, dt, T, cfg.seed, g)
    res.table("stability", rep["rows"])
    res.summary.update({"reference_eps": rep["reference_eps"], "outside_small_norm_regime": rep["outside_small_norm_regime"]})
    res.check("strictly_decreasing", rep["strictly_decreasing"])


def _reg(cfg, res):
    from critlab.flow import regularity_across_levels, weak_derivative_moments

    n, dt, T = _mc(cfg)
    g = cfg.grid_spec()
    r = float(cfg.params.get("r", 2))
    d = int(cfg.grid["d"])
    zero = weak_derivative_moments(DriftSpec.constant([0.0] * d), r, [0.1], _x0(cfg), n, dt, T, cfg.seed)
    res.summary["zero_drift_moment"] = zero["rows"][0]["estimate"]
    res.check("zero_drift_exact", abs(zero["rows"][0]["estimate"] - d ** (r / 2)) < 1e-9)
    b = cfg.drift_spec()
    hrep = weak_derivative_moments(b, r, cfg.params.get("h_levels", [0.1, 0.01, 0.001]), _x0(cfg), n, dt, T, cfg.seed,
                                   grid=g)
    res.table("h_sweep", hrep["rows"])
    res.check("h_stable", hrep["h_stable"])
    nrep = regularity_across_levels(b, cfg.params.get("eps_levels", [0.2, 0.1]), r,
                                    float(cfg.params.get("h", 0.01)), _x0(cfg), n, dt, T, cfg.seed, g)
    res.table("eps_sweep", nrep["rows"])
    res.check("n_stable", nrep["n_stable"])


def _counter(cfg, res):
    from critlab.sde import counterexample_probe

    n, dt, T = _mc(cfg)
    P = cfg.params
    beta = float(P.get("beta", 1.0))
    levels = P.get("eps_levels", [0.2, 0.1, 0.05])
    d = int(cfg.grid["d"])
    rows = []
    reps = {}
    for sign in (-1, 1):
        rep = counterexample_probe(beta, levels, n, dt, T, d=d, sign=sign, seed=cfg.seed)
        reps[sign] = rep
        for r_ in rep["rows"]:
            rows.append(dict(r_, sign=sign))
    res.table("probe", rows, ["sign", "eps", "functional", "se", "trapped", "trapped_se", "diverged"])
    res.summary.update({"inward_growth": reps[-1]["growth"], "outward_growth": reps[1]["growth"]})
    sep = separation(reps[-1], reps[1], float(cfg.tolerances["mc_sigma"]))
    res.summary["separation"] = sep
    res.check("inward_increasing", reps[-1]["strictly_increasing"])
    res.check("outward_level_stable", all(g < 2.0 for g in reps[1]["growth"]))
    res.check("regimes_separated", sep["separated"])


def separation(inward, outward, k=4.0) -> dict:
    """Non-overlapping CIs of the per-halving growth ratios (delta method) and
    of the functional at every level."""
    def ratios(rep):
        out = []
        for a, b in zip(rep["rows"], rep["rows"][1:]):
            r = b["functional"] / a["functional"]
            se = r * np.hypot(a["se"] / a["functional"], b["se"] / b["functional"])
            out.append((r, se))
        return out

    ri, ro = ratios(inward), ratios(outward)
    growth_sep = all(a - k * sa > b + k * sb for (a, sa), (b, sb) in zip(ri, ro))
    level_sep = all(a["functional"] - k * a["se"] > b["functional"] + k * b["se"]
                    for a, b in zip(inward["rows"], outward["rows"]))
    return {"inward_ratio": ri, "outward_ratio": ro, "growth_separated": bool(growth_sep),
            "levels_separated": bool(level_sep), "separated": bool(growth_sep and level_sep)}


RUNNERS = {"norms": _norms, "pde": _pde, "zvonkin": _zvonkin, "weak-existence": _weak, "khasminskii": _khas,
           "conjugation": _conj, "stability": _stab, "regularity": _reg, "counterexample": _counter}


def emit_report(res: Result, cfg: ExperimentConfig, outdir) -> dict:
    """Write ``report.json`` (and one CSV per table for csv output); returns
    ``{file name: sha256}``."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {outdir}: {e}")
    fmt = cfg.output["format"]
    report = {"experiment": cfg.experiment, "seed": cfg.seed, "checks": res.checks, "passed": res.passed,
              "summary": res.summary}
    files = []
    if fmt == "json":
        report["tables"] = {k: {"columns": res.columns[k], "rows": v} for k, v in res.tables.items()}
    else:
        report["tables"] = {k: f"{k}.csv" for k in res.tables}
        for k, rows in res.tables.items():
            lio.write_table_csv(outdir / f"{k}.csv", res.columns[k], rows)
            files.append(f"{k}.csv")
    (outdir / "report.json").write_text(lio.dumps(report))
    files.append("report.json")
    return {f: lio.sha256(outdir / f) for f in sorted(files)}


def run_experiment(cfg: ExperimentConfig, outdir=None) -> dict:
    """Run one recipe, write its reports and ``manifest.json``; returns the manifest."""
    outdir = Path(cfg.output["dir"] if outdir is None else outdir)
    t = time.perf_counter()
    res = Result()
    RUNNERS[cfg.experiment](cfg, res)
    hashes = emit_report(res, cfg, outdir)
    manifest = {"experiment": cfg.experiment, "config": cfg.as_dict(), "inputs_hash": cfg.inputs_hash(),
                "seed": cfg.seed, "outputs": hashes, "checks": res.checks, "passed": res.passed,
                "wall_time_s": time.perf_counter() - t}
    (outdir / "manifest.json").write_text(lio.dumps(manifest))
    return manifest


def _resolve(arg) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    shipped = RECIPES / f"{arg}.yaml"
    if shipped.exists():
        return shipped
    raise ConfigError(f"no config file or shipped recipe named {arg!r}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lab", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config (file path or shipped recipe name)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    sub.add_parser("list", help="list experiments and shipped recipes")
    v = sub.add_parser("verify", help="re-run a manifest and diff its outputs")
    v.add_argument("manifest")
    args = ap.parse_args(argv)
    try:
        if args.cmd == "list":
            for name, desc in DESCRIPTIONS.items():
                shipped = " [recipe]" if (RECIPES / f"{name}.yaml").exists() else ""
                print(f"{name:16s} {desc}{shipped}")
            return 0
        if args.cmd == "run":
            cfg = ExperimentConfig.load(_resolve(args.config))
            man = run_experiment(cfg, args.out)
            for k, ok in man["checks"].items():
                print(f"{'PASS' if ok else 'FAIL'} {k}")
            print(f"{cfg.experiment}: {'passed' if man['passed'] else 'FAILED'} "
                  f"({man['wall_time_s']:.1f}s) -> {args.out or cfg.output['dir']}")
            return 0 if man["passed"] else 1
        man = json.loads(Path(args.manifest).read_text())
        cfg = ExperimentConfig.from_dict(man["config"])
        with tempfile.TemporaryDirectory() as tmp:
            new = run_experiment(cfg, tmp)
        diff = {k: (man["outputs"].get(k), new["outputs"].get(k)) for k in set(man["outputs"]) | set(new["outputs"])
                if man["outputs"].get(k) != new["outputs"].get(k)}
        if man["inputs_hash"] != new["inputs_hash"]:
            diff["inputs_hash"] = (man["inputs_hash"], new["inputs_hash"])
        for k, (a, b) in sorted(diff.items()):
            print(f"DIFF {k}: {a} != {b}")
        print("verified: outputs identical" if not diff else f"verify failed: {len(diff)} difference(s)")
        return 0 if not diff and new["passed"] else 1
    except Exception as e:  # surfaced with module context, nonzero exit
        print(f"lab: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
