"""Heat semigroup on the lattice, Duhamel solver, and heat-kernel mixed norms.

The semigroup generated by ``(1/2) Delta_h`` (compact second differences) is
applied exactly: its one-dimensional kernel is ``exp(-t/h^2) I_k(t/h^2)``,
and the d-dimensional kernel is the tensor product.  Kernels are truncated at
``cutoff`` standard deviations.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, special

from critlab.grid import GridError, GridFunction, GridSpec, finite_diff
from critlab.lorentz import LorentzError, LorentzExponents, NormReport, lp_norm, outer_norm, slice_norms

CUTOFF = 6.0


@dataclass(frozen=True)
class KernelSpec:
    d: int
    convention: str = "semigroup"
    cutoff: float = CUTOFF

    def __post_init__(self):
        if self.convention not in ("semigroup", "prop27"):
            raise GridError("convention must be 'semigroup' or 'prop27'")

    def density(self, t, x):
        """Continuum kernel at time t and points ``x`` (shape ``(..., d)``)."""
        r2 = np.sum(np.asarray(x) ** 2, axis=-1)
        if self.convention == "semigroup":
            return (2 * np.pi * t) ** (-self.d / 2) * np.exp(-r2 / (2 * t))
        return t ** (-self.d / 2) * np.exp(-r2 / (4 * t))

    def gradient(self, t, x):
        x = np.asarray(x)
        k = self.density(t, x)[..., None]
        scale = 1.0 / t if self.convention == "semigroup" else 1.0 / (2 * t)
        return -x * scale * k


def discrete_kernel_1d(t, h, cutoff=CUTOFF):
    if t < 0:
        raise GridError("semigroup time must be >= 0")
    if t == 0:
        return np.ones(1)
    R = max(1, int(np.ceil(cutoff * np.sqrt(t) / h)) + 1)
    k = np.arange(-R, R + 1)
    return special.ive(np.abs(k), t / h ** 2)


def _apply(values, axes, t, h, cutoff=CUTOFF):
    if t == 0:
        return np.array(values, copy=True)
    w = discrete_kernel_1d(t, h, cutoff)
    out = values
    for a in axes:
        out = ndimage.convolve1d(out, w, axis=a, mode="constant", cval=0.0)
    return out


def semigroup_apply(f: GridFunction, t) -> GridFunction:
    """``T_t f``: lattice heat semigroup applied to a static field of any rank."""
    if f.timed:
        raise GridError("semigroup_apply expects a spatial slice")
    return f.with_values(_apply(f.values, f.space_axes, t, f.grid.h), label=f"T_{t:g} {f.label}".strip())


def kernel_mass(t, h, d, cutoff=CUTOFF):
    return float(discrete_kernel_1d(t, h, cutoff).sum() ** d)


@dataclass
class DuhamelResult:
    u: GridFunction
    residual_sup: float


def laplacian(u: GridFunction) -> np.ndarray:
    H = finite_diff(u, 2).values
    return np.trace(H, axis1=-2, axis2=-1)


def duhamel_solve(f: GridFunction, margin: float = None) -> DuhamelResult:
    """Solve ``u_t - (1/2) Delta u = f, u(t0) = 0`` by the left-endpoint
    Duhamel sum ``u(t_n) = sum_{m<n} tau T_{t_n - t_m} f(t_m)``.

    The residual sup is taken over nodes at least ``margin`` from the box edge
    (default: a quarter of the box) and interior time nodes.
    """
    if not f.timed:
        raise GridError("duhamel_solve expects a time-dependent source")
    g = f.grid
    axes = tuple(range(g.d))
    u = np.zeros_like(f.values)
    w = discrete_kernel_1d(g.tau, g.h)
    for n in range(g.nt - 1):
        v = u[n] + g.tau * f.values[n]
        for a in axes:
            v = ndimage.convolve1d(v, w, axis=a, mode="constant", cval=0.0)
        u[n + 1] = v
    sol = f.with_values(u, label="duhamel")
    return DuhamelResult(sol, heat_residual(sol, f, margin))


def heat_residual(u: GridFunction, f: GridFunction, margin=None) -> float:
    g = u.grid
    r = finite_diff(u, "time").values - 0.5 * laplacian(u) - f.values
    margin = g.L / 4 if margin is None else margin
    mask = g.interior_mask(margin)
    mag = np.abs(r) if u.rank == 0 else np.sqrt(np.sum(r ** 2, axis=tuple(range(r.ndim - u.rank, r.ndim))))
    inner = mag[1:-1][:, mask] if g.nt > 2 else mag[:, mask]
    return float(inner.max()) if inner.size else 0.0


def gaussian_lp_norm(s, p_dual, d) -> float:
    """``||exp(-|x|^2 / 2s)||_{L^{p'}(R^d)} = (2 pi s / p')^{d / (2 p')}``."""
    if s <= 0:
        raise GridError("need s > 0")
    if p_dual == np.inf:
        return 1.0
    if p_dual <= 1:
        raise GridError("need p' > 1")
    return float((2 * np.pi * s / p_dual) ** (d / (2 * p_dual)))


def gaussian_lp_norm_numeric(s, p_dual, grid: GridSpec) -> float:
    r2 = np.sum(grid.mesh() ** 2, axis=-1)
    return lp_norm(np.exp(-r2 / (2 * s)), p_dual, grid.cell)


def gradient_kernel_mixed_norm(p, q, T, grid: GridSpec, n_steps=64, convention="prop27"):
    """Mixed ``L^{q,inf}_t(L^p_x)`` norm of the heat-kernel gradient on ``(0, T]``.

    Requires ``2/q + d/p = d + 1``.  Time cells ``((k-1) tau, k tau]`` take the
    value at ``k tau`` so the singular end starts at ``t = tau``.  Returns the
    NormReport and the per-slice profile ``||grad P(t)||_p * t^{1/q}``.
    """
    d = grid.d
    if not (p > 1 and q > 1):
        raise LorentzError("need p, q > 1")
    if abs(2.0 / q + d / p - (d + 1)) > 1e-12:
        raise LorentzError("gradient kernel exponents need 2/q + d/p = d + 1")
    ks = KernelSpec(d, convention)
    tau = T / n_steps
    ts = tau * np.arange(1, n_steps + 1)
    pts = grid.mesh()
    sn = np.array([lp_norm(np.linalg.norm(ks.gradient(t, pts), axis=-1), p, grid.cell) for t in ts])
    val = outer_norm(sn, tau, q, np.inf)
    rep = NormReport(val, {"p": p, "q": q, "r": np.inf, "d": d}, (0.0, T), {"h": grid.h, "tau": tau}, [val],
                     f"grad-heat-kernel[{convention}]")
    return rep, ts, sn * ts ** (1.0 / q)


def prop22_chain(f: GridFunction, exps: LorentzExponents, starts):
    """Numerical replay of the chain bounding ``E int_0^T f(s, x + B_s) ds``.

    ``f`` is a nonnegative scalar time-dependent field; cells take their
    right-endpoint value.  Returns the four stages (each maximized over
    ``starts``) and the Gaussian-norm/time-weight diagnostics.
    """
    if abs(exps.kappa - 2.0) > 1e-12:
        raise LorentzError("chain needs 2/q + d/p = 2")
    g = f.grid
    d = g.d
    pd, qd = exps.p_dual, exps.q_dual
    idx = np.arange(1, g.nt)
    ts = g.times()[idx] - g.t0
    pts = g.mesh()
    sn = slice_norms(f, exps.p)[idx]
    s1 = 0.0
    for x in np.atleast_2d(starts):
        acc = 0.0
        for k, s in zip(idx, ts):
            kern = KernelSpec(d).density(s, pts - x)
            acc += g.tau * float(np.sum(kern * f.values[k]) * g.cell)
        s1 = max(s1, acc)
    gnum = np.array([gaussian_lp_norm_numeric(s, pd, g) for s in ts])
    gcl = np.array([gaussian_lp_norm(s, pd, d) for s in ts])
    pref = (2 * np.pi * ts) ** (-d / 2)
    s2 = float(np.sum(g.tau * pref * sn * gnum))
    K = (2 * np.pi) ** (-d / 2) * (2 * np.pi / pd) ** (d / (2 * pd))
    weight = ts ** (d / (2 * pd) - d / 2)
    s3 = float(np.sum(g.tau * K * sn * weight))
    fnorm = outer_norm(sn, g.tau, exps.q, 1.0)
    wnorm = outer_norm(weight, g.tau, qd, np.inf)
    s4 = K * fnorm * wnorm
    return {
        "expected_occupation": s1,
        "holder_bound": s2,
        "scaled_bound": s3,
        "lorentz_bound": s4,
        "gaussian_rel_err": float(np.max(np.abs(gnum / gcl - 1.0))),
        "time_weight_norm": wnorm,
        "f_norm": fnorm,
        "K": K,
    }


def maximal_regularity_ratio(f: GridFunction, exps: LorentzExponents) -> float:
    """``||grad^2 u|| / ||f||`` in ``L^{q,1}_t L^p_x`` for the Duhamel solution."""
    from critlab.lorentz import mixed_lorentz_norm

    u = duhamel_solve(f).u
    H = finite_diff(u, 2)
    return mixed_lorentz_norm(H, exps).value / mixed_lorentz_norm(f, exps).value
