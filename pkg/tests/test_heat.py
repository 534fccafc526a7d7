import numpy as np
import pytest

from critlab.grid import GridError, GridFunction, GridSpec
from critlab.heat import (KernelSpec, discrete_kernel_1d, duhamel_solve, gaussian_lp_norm, gaussian_lp_norm_numeric,
                          gradient_kernel_mixed_norm, heat_residual, kernel_mass, maximal_regularity_ratio,
                          prop22_chain, semigroup_apply)
from critlab.lorentz import LorentzError, LorentzExponents, check_oneil_mixed


def gauss(g, var):
    r2 = np.sum(g.mesh() ** 2, axis=-1)
    return (2 * np.pi * var) ** (-g.d / 2) * np.exp(-r2 / (2 * var))


def test_kernel_mass_and_density():
    assert abs(kernel_mass(0.3, 0.05, 2) - 1) < 1e-8
    ks = KernelSpec(1)
    x = np.linspace(-10, 10, 20001)[:, None]
    assert np.sum(ks.density(0.7, x)) * 1e-3 == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(GridError):
        KernelSpec(1, "other")


def test_semigroup_identity_constant_gaussian():
    g = GridSpec(2, 4.0, 0.05)
    f = GridFunction(g, gauss(g, 0.1))
    assert np.array_equal(semigroup_apply(f, 0.0).values, f.values)
    out = semigroup_apply(f, 0.2).values
    assert np.abs(out - gauss(g, 0.3)).max() < 2e-3 * gauss(g, 0.3).max()
    one = semigroup_apply(GridFunction(g, np.ones(g.shape)), 0.2).values
    inner = g.interior_mask(6 * np.sqrt(0.2) + 0.1)
    assert np.allclose(one[inner], 1.0, atol=1e-8)


def test_gaussian_error_second_order():
    errs = []
    for h in (0.1, 0.05):
        g = GridSpec(1, 4.0, h)
        out = semigroup_apply(GridFunction(g, gauss(g, 0.1)), 0.2).values
        errs.append(np.abs(out - gauss(g, 0.3)).max())
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_semigroup_property():
    g = GridSpec(2, 4.0, 0.1)
    f = GridFunction(g, gauss(g, 0.2))
    a = semigroup_apply(semigroup_apply(f, 0.1), 0.15).values
    b = semigroup_apply(f, 0.25).values
    assert np.abs(a - b).max() < 1e-8


def test_duhamel_constant_zero_gaussian():
    g = GridSpec(1, 4.0, 0.05, 0.0, 0.5, 0.01)
    c = GridFunction(g, np.full(g.shape, 2.0)).broadcast_time()
    u = duhamel_solve(c).u
    inner = g.interior_mask(6 * np.sqrt(0.5) + 0.1)
    assert np.allclose(u.values[:, inner], 2.0 * g.times()[:, None], atol=1e-8)
    assert np.all(duhamel_solve(c.with_values(np.zeros_like(c.values))).u.values == 0)
    src = GridFunction(g, gauss(g, 0.05)).broadcast_time()
    res = duhamel_solve(src)
    assert np.all(res.u.values[0] == 0)
    T = g.t1
    s = np.linspace(0, T, 20001)[:-1] + T / 40000
    exact = np.mean([gauss(g, 0.05 + T - si) for si in s], axis=0) * T
    err = np.abs(res.u.values[-1] - exact).max()
    assert err < 2 * g.tau


def test_duhamel_residual_first_order():
    res = []
    for tau in (0.02, 0.01):
        g = GridSpec(1, 4.0, 0.05, 0.0, 0.4, tau)
        X = g.mesh()[..., 0]
        t = g.times()
        f = GridFunction(g, np.cos(3 * t)[:, None] * np.exp(-X ** 2)[None], timed=True)
        res.append(duhamel_solve(f).residual_sup)
    assert 1.6 < res[0] / res[1] < 2.4


def test_gaussian_lp_norm():
    assert gaussian_lp_norm(1.0, 2.0, 1) == pytest.approx(np.pi ** 0.25, rel=1e-14)
    for s in (0.25, 4.0):
        assert gaussian_lp_norm(s, 3.0, 2) / gaussian_lp_norm(1.0, 3.0, 2) == pytest.approx(s ** (2 / 6))
    assert gaussian_lp_norm(1.0, 1e12, 2) == pytest.approx(1.0, abs=1e-10)
    g = GridSpec(2, 6.0, 0.02)
    assert gaussian_lp_norm_numeric(0.5, 2.0, g) == pytest.approx(gaussian_lp_norm(0.5, 2.0, 2), rel=1e-8)


def test_gradient_kernel_profile():
    g = GridSpec(1, 8.0, 0.005)
    rep, ts, prof = gradient_kernel_mixed_norm(2.0, 4 / 3, 1.0, g)
    dyadic = [prof[k - 1] for k in (1, 2, 4, 8, 16, 32, 64)]
    assert max(dyadic) / min(dyadic) < 1.02
    assert np.isfinite(rep.value) and rep.value > 0
    with pytest.raises(LorentzError):
        gradient_kernel_mixed_norm(2.0, 2.0, 1.0, g)
    with pytest.raises(LorentzError):
        gradient_kernel_mixed_norm(1.0, 1.0, 1.0, g)


def test_gradient_kernel_left_endpoint_insensitive():
    g = GridSpec(1, 8.0, 0.0025)
    a = gradient_kernel_mixed_norm(2.0, 4 / 3, 1.0, g, n_steps=32)[0].value
    b = gradient_kernel_mixed_norm(2.0, 4 / 3, 1.0, g, n_steps=128)[0].value
    assert abs(a / b - 1) < 0.02


def test_oneil_heat_gradient_pairing():
    ratios = []
    for h, tau in ((0.1, 0.05), (0.05, 0.025)):
        g = GridSpec(1, 3.0, h, 0.0, 1.0, tau)
        t = g.times()[:, None]
        x = g.axis()[None, :]
        kern = -x / (2 * np.maximum(t, tau) ** 1.5) * np.exp(-x ** 2 / (4 * np.maximum(t, tau)))
        P = GridFunction(g, kern, timed=True)
        B = GridFunction(g, np.exp(-x ** 2) * np.ones_like(t) * np.exp(-t), timed=True)
        ratios.append(check_oneil_mixed(P, B, (4 / 3, np.inf, 2, 2), (4, 1, 2, 2), method="fft",
                                        f_sampling="right")["ratio"])
    assert all(np.isfinite(ratios)) and abs(ratios[1] / ratios[0] - 1) < 0.1


def test_prop22_chain():
    g = GridSpec(1, 5.0, 0.02, 0.0, 1.0, 1 / 64)
    e = LorentzExponents.khasminskii(1, 2.0)
    x = g.axis()
    f = GridFunction(g, np.exp(-x ** 2)).broadcast_time()
    rep = prop22_chain(f, e, [[0.0], [0.5]])
    assert rep["expected_occupation"] <= rep["holder_bound"] * (1 + 1e-9)
    assert rep["holder_bound"] == pytest.approx(rep["scaled_bound"], rel=1e-6)
    assert rep["scaled_bound"] <= rep["lorentz_bound"] * (1 + 1e-9)
    assert rep["gaussian_rel_err"] < 1e-8
    assert rep["time_weight_norm"] == pytest.approx(1.0, abs=1e-6)


def test_maximal_regularity_constant_across_T():
    vals = []
    for T in (0.5, 1.0, 2.0):
        g = GridSpec(1, 6.0, 0.05, 0.0, T, T / 40)
        x = g.axis()
        f = GridFunction(g, np.exp(-4 * x ** 2)).broadcast_time()
        vals.append(maximal_regularity_ratio(f, LorentzExponents(3.0, 3.0, 1.0, 1)))
    assert max(vals) / min(vals) < 1.5
