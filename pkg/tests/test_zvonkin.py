import numpy as np
import pytest

from critlab.grid import DriftSpec, GridFunction, GridSpec
from critlab.kolmogorov import PdeSolution, solve_backward_pde
from critlab.lorentz import LorentzExponents
from critlab.zvonkin import (InverseError, ZvonkinError, build_transform, check_diffeo, conjugated_sigma,
                             invert_transform)

G = GridSpec(2, 3.0, 0.05, 0.0, 0.2, 0.05)
E = LorentzExponents.critical(2, 4.0)


def synthetic(grad_target, grid=G):
    """u(t, x) = a (T - t + 1) (sin x2 e^{-|x|^2/4}, sin x1 e^{-|x|^2/4}) scaled so the
    lattice sup of the Hilbert-Schmidt gradient equals ``grad_target``."""
    X = grid.mesh()
    env = np.exp(-np.sum(X ** 2, axis=-1) / 4)
    base = np.stack([np.sin(X[..., 1]) * env, np.sin(X[..., 0]) * env], axis=-1)
    prof = (grid.t1 - grid.times() + 1.0)[:, None, None, None]
    u = GridFunction(grid, prof * base[None], rank=1, timed=True)
    s = PdeSolution.from_field(u, E).grad.sup()
    return PdeSolution.from_field(u.with_values(u.values * grad_target / s), E)


def zero_sol():
    return PdeSolution.from_field(GridFunction(G, np.zeros((G.nt,) + G.shape + (2,)), rank=1, timed=True), E)


def test_identity_map():
    fm = build_transform(zero_sol())
    assert np.array_equal(fm.phi[0], G.mesh())
    assert np.array_equal(fm.jac, np.broadcast_to(np.eye(2), fm.jac.shape))
    y = np.array([[0.3, -0.7], [1.2, 0.4]])
    x, it = invert_transform(fm, 0.1, y)
    assert np.array_equal(x, y) and np.all(it == 0)
    assert np.array_equal(conjugated_sigma(fm, 0.1, y), np.broadcast_to(np.eye(2), (2, 2, 2)))
    cert = check_diffeo(fm)
    assert cert["passed"] and cert["min_singular_value"] == 1.0 and cert["margin_singular"] == 0.0
    assert cert["margin_proper"] == 0.0 and cert["inverse_jacobian_error"] < 1e-9


def test_constant_drift_affine():
    beta = np.array([0.2, -0.1])
    g = GridSpec(2, 3.0, 0.1, 0.0, 0.2, 0.05)
    sol = solve_backward_pde(DriftSpec.constant(beta), None, g, E, tol=1e-12)
    u = g.mesh()[None] + beta * (g.t1 - g.times())[:, None, None, None]
    exact = PdeSolution.from_field(GridFunction(g, u - g.mesh()[None], rank=1, timed=True), E)
    fm = build_transform(exact)
    assert np.allclose(fm.jac, np.eye(2), atol=1e-12)
    y = np.array([[0.5, 0.1], [-0.4, 0.6]])
    x, it = invert_transform(fm, 0.0, y)
    assert np.allclose(x, y - beta * 0.2, atol=1e-12) and np.all(it == 1)
    assert np.allclose(conjugated_sigma(fm, 0.0, y), np.eye(2), atol=1e-12)
    inner = g.interior_mask(g.L / 2)
    assert np.abs(sol.u.values - exact.u.values)[:, inner].max() < 5 * (g.tau + g.h ** 2) * np.linalg.norm(beta)


def test_synthetic_04_round_trip():
    sol = synthetic(0.4)
    fm = build_transform(sol)
    b = fm.bounds()
    assert b["ok"] and np.all(b["grad_phi_sup"] <= 1.4 + 1e-12) and np.all(b["grad_phi_inv_sup"] <= 1 / 0.6 + 1e-12)
    rng = np.random.default_rng(1)
    hw = fm.usable_half_width
    for t in (0.0, 0.07, 0.2):
        y = rng.uniform(-hw, hw, size=(1000, 2))
        x, it = invert_transform(fm, t, y)
        assert np.abs(fm(t, x) - y).max() < 1e-10
        assert it.max() <= 50
        xb, _ = invert_transform(fm, t, fm(t, x))
        assert np.abs(xb - x).max() < 1e-9
    cert = check_diffeo(fm)
    assert cert["passed"] and cert["min_singular_value"] >= 0.5


def test_sigma_lattice_lookup():
    sol = synthetic(0.3)
    fm = build_transform(sol)
    i, j = 40, 70
    x = G.mesh()[i, j]
    y = fm.phi[1][i, j]
    s = conjugated_sigma(fm, G.times()[1], y)
    assert np.allclose(s, np.eye(2) + sol.grad.values[1, i, j], atol=1e-9)
    hs = np.linalg.norm(s)
    assert np.sqrt(2) * 0.5 <= hs <= np.sqrt(2) * 2


def test_gradient_violation_raises():
    with pytest.raises(ZvonkinError, match="interval too long for Zvonkin"):
        build_transform(synthetic(0.6))


def test_inflated_certificate_fails():
    fm = build_transform(synthetic(1.5), check=False)
    cert = check_diffeo(fm, n_samples=20)
    assert not cert["passed"] and cert["margin_singular"] < 0


def test_outside_usable_box():
    fm = build_transform(synthetic(0.2))
    with pytest.raises(InverseError):
        invert_transform(fm, 0.0, np.array([G.L, 0.0]))
