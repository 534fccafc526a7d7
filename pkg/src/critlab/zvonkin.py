"""Zvonkin transform ``Phi(t, x) = x + u(t, x)``, its Newton inverse, the
conjugated diffusion coefficient and diffeomorphism certificates."""

from dataclasses import dataclass

import numpy as np

from critlab import kernels
from critlab.grid import GridError

NEWTON_TOL = 1e-10
NEWTON_MAXIT = 50
GRAD_LIMIT = 0.5


class ZvonkinError(RuntimeError):
    pass


class InverseError(ZvonkinError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


def _opnorms(J):
    s = np.linalg.svd(J, compute_uv=False)
    return s[..., 0], s[..., -1]


@dataclass(eq=False)
class FlowMap:
    source: object
    phi: np.ndarray
    jac: np.ndarray
    interval: tuple
    grad_sup: float
    u_sup: float
    tol: float = NEWTON_TOL
    maxit: int = NEWTON_MAXIT

    @property
    def grid(self):
        return self.source.grid

    @property
    def d(self):
        return self.grid.d

    @property
    def usable_half_width(self):
        """Queries ``y`` must satisfy ``max|y_i| <=`` this value."""
        return self.grid.L - self.u_sup - self.grid.h

    def _slice(self, t):
        g = self.grid
        if not (g.t0 - 1e-12 <= t <= g.t1 + 1e-12):
            raise GridError(f"t = {t} outside [{g.t0}, {g.t1}]")
        s = min(max((t - g.t0) / g.tau, 0.0), g.nt - 1)
        k = min(int(np.floor(s)), g.nt - 2)
        w = s - k
        u = self.source.u.values
        gu = self.source.grad.values
        if w == 0.0:
            return u[k], gu[k]
        if w == 1.0:
            return u[k + 1], gu[k + 1]
        return (1 - w) * u[k] + w * u[k + 1], (1 - w) * gu[k] + w * gu[k + 1]

    def _pts(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        return np.atleast_2d(x), single

    def __call__(self, t, x):
        X, single = self._pts(x)
        u, _ = self._slice(t)
        g = self.grid
        out = X + kernels.interp(u, g.lo, np.full(g.d, g.h), X)
        return out[0] if single else out

    def jacobian(self, t, x):
        X, single = self._pts(x)
        _, gu = self._slice(t)
        g = self.grid
        d = g.d
        J = kernels.interp(gu.reshape(g.shape + (d * d,)), g.lo, np.full(d, g.h), X).reshape(-1, d, d)
        J = J + np.eye(d)
        return J[0] if single else J

    def inverse(self, t, y):
        return invert_transform(self, t, y)

    def bounds(self) -> dict:
        """Per-time sup of the operator norms of ``grad Phi`` and its inverse."""
        sv = np.linalg.svd(self.jac, compute_uv=False)
        axes = tuple(range(1, sv.ndim - 1))
        fwd = sv[..., 0].max(axis=axes)
        inv = (1.0 / sv[..., -1]).max(axis=axes)
        return {"grad_phi_sup": fwd, "grad_phi_inv_sup": inv,
                "ok": bool(np.all((fwd >= 0.5) & (fwd <= 2) & (inv >= 0.5) & (inv <= 2)))}


def build_transform(sol, check=True, tol=NEWTON_TOL, maxit=NEWTON_MAXIT) -> FlowMap:
    """``FlowMap`` from a PdeSolution; requires ``||grad u||_inf <= 1/2``
    (Hilbert-Schmidt norm) unless ``check`` is False."""
    if sol.u.rank != 1 or sol.u.values.shape[-1] != sol.grid.d:
        raise GridError("Zvonkin transform needs a field with d components")
    gsup = sol.grad.sup()
    if check and gsup > GRAD_LIMIT + 1e-12:
        raise ZvonkinError(f"interval too long for Zvonkin (||grad u||_inf = {gsup:.4g} > 1/2)")
    g = sol.grid
    phi = g.mesh()[None] + sol.u.values
    jac = sol.grad.values + np.eye(g.d)
    return FlowMap(sol, phi, jac, (g.t0, g.t1), gsup, sol.u.sup(), tol, maxit)


def invert_transform(fm: FlowMap, t, y, strict=True):
    """Newton inverse ``x`` with ``|Phi(t, x) - y| < tol``, started at ``x = y``."""
    Y, single = fm._pts(y)
    g = fm.grid
    if strict and np.any(np.abs(Y) > fm.usable_half_width + 1e-12):
        raise InverseError("query outside the usable image box", {"half_width": fm.usable_half_width})
    u, gu = fm._slice(t)
    x, iters, ok = kernels.newton_invert(u, gu.reshape(g.shape + (g.d * g.d,)), g.lo, np.full(g.d, g.h), Y,
                                         fm.tol, fm.maxit)
    if not np.all(ok):
        bad = np.flatnonzero(~ok)
        res = np.linalg.norm(fm(t, x[bad]) - Y[bad], axis=-1)
        raise InverseError(f"Newton did not converge for {bad.size} point(s)",
                           {"indices": bad[:10].tolist(), "residuals": res[:10].tolist(), "maxit": fm.maxit})
    if single:
        return x[0], int(iters[0])
    return x, iters


def conjugated_sigma(fm: FlowMap, t, y):
    """``I + grad u(t, Phi^{-1}(t, y))``."""
    x, _ = invert_transform(fm, t, y)
    return fm.jacobian(t, x)


def check_diffeo(fm: FlowMap, n_samples=200, seed=0, delta=None) -> dict:
    """Hadamard-style certificate: singular values, properness on the boundary
    shell and the inverse-Jacobian identity at sampled points."""
    g = fm.grid
    d = g.d
    _, smin = _opnorms(fm.jac)
    worst_s = float(smin.min())
    lower = 1.0 - fm.grad_sup
    margin_i = min(worst_s - lower, lower - 0.5)
    pts = g.mesh()
    shell = ~g.interior_mask(g.h * 0.5)
    x_sh = pts[shell]
    margin_ii = float("inf")
    for k in range(g.nt):
        ph = fm.phi[k][shell]
        margin_ii = min(margin_ii, float(np.min(np.linalg.norm(ph, axis=-1)
                                                - (np.linalg.norm(x_sh, axis=-1) - fm.u_sup))))
    rng = np.random.default_rng(seed)
    hw = fm.usable_half_width
    delta = g.h / 20 if delta is None else delta
    jac_err = 0.0
    failures = 0
    hess_sup = fm.source.hess.sup() if fm.source.hess is not None else 0.0
    jac_tol = max(1e-6, 5 * g.h * hess_sup)
    for t in np.linspace(g.t0, g.t1, min(g.nt, 5)):
        y = rng.uniform(-hw + delta, hw - delta, size=(max(1, n_samples // 5), d))
        try:
            x, _ = invert_transform(fm, t, y)
            Jinv = np.linalg.inv(fm.jacobian(t, x))
            num = np.empty_like(Jinv)
            for j in range(d):
                e = np.zeros(d)
                e[j] = delta
                xp, _ = invert_transform(fm, t, y + e)
                xm, _ = invert_transform(fm, t, y - e)
                num[:, :, j] = (xp - xm) / (2 * delta)
            jac_err = max(jac_err, float(np.max(np.abs(num - Jinv))))
        except (InverseError, np.linalg.LinAlgError):
            failures += 1
            jac_err = float("inf")
    margin_iii = jac_tol - jac_err
    return {
        "min_singular_value": worst_s,
        "grad_u_sup": fm.grad_sup,
        "margin_singular": margin_i,
        "margin_proper": margin_ii,
        "inverse_jacobian_error": jac_err,
        "inverse_jacobian_tol": jac_tol,
        "margin_inverse_jacobian": margin_iii,
        "inverse_failures": failures,
        "passed": bool(margin_i >= -1e-12 and margin_ii >= -1e-12 and margin_iii >= 0 and failures == 0),
    }
