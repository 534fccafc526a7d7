import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critlab.grid import DriftSpec, GridFunction, GridSpec
from critlab.lorentz import (LorentzError, LorentzExponents, NonPartitionableError, check_holder, check_oneil_mixed,
                             decreasing_rearrangement, disjoint_ratio, dual, lorentz_norm, lp_norm,
                             mixed_lorentz_norm, partition_time, profile_norm, quasi_triangle_constant)


def test_exponents():
    e = LorentzExponents(4.0, 4.0, 1.0, 2)
    assert e.criticality == "critical"
    assert abs(1 / e.p + 1 / e.p_dual - 1) < 1e-15 and abs(1 / e.q + 1 / e.q_dual - 1) < 1e-15
    s = e.squared()
    assert abs(2 / s.q + 2 / s.p - 2 * e.kappa) < 1e-12
    assert LorentzExponents(8.0, 4.0, 1.0, 2).criticality == "subcritical"
    assert LorentzExponents(2.0, 2.0, 1.0, 2).criticality == "supercritical"
    assert LorentzExponents.khasminskii(1, 2.0).q == pytest.approx(4 / 3)
    with pytest.raises(LorentzError):
        LorentzExponents(1.0, 2.0)
    assert dual(2.0) == 2.0


def test_rearrangement():
    f = decreasing_rearrangement([3.0, 1.0, 2.0])
    assert list(f.levels) == [3.0, 2.0, 1.0]
    c = decreasing_rearrangement([2.0, 2.0], [0.5, 0.25])
    assert list(c.levels) == [2.0] and c.measure == 0.75
    two = decreasing_rearrangement([1.0, 5.0], [2.0, 0.5])
    assert np.allclose(two(np.array([0.1, 0.49, 0.6, 2.4])), [5, 5, 1, 1])
    for lam in (0.0, 0.5, 1.0, 3.0, 5.0):
        assert two.distribution(lam) == 2.0 * (1.0 > lam) + 0.5 * (5.0 > lam)
    with pytest.raises(LorentzError):
        decreasing_rearrangement([])


def test_indicator_norm():
    assert lorentz_norm(np.ones(4), 2, 1, 0.25) == pytest.approx(2.0, rel=1e-14)
    assert lorentz_norm(np.zeros(5), 2, 1, 1.0) == 0.0
    with pytest.raises(LorentzError):
        lorentz_norm(np.array([1.0, np.inf]), 2, 1)


def test_indicator_closed_form_grid():
    g = GridSpec(2, 1.0, 0.1)
    X = g.mesh()
    A = (np.abs(X[..., 0]) <= 0.5).astype(float) * 1.7
    meas = A.astype(bool).sum() * g.cell
    for p, q in [(2, 1), (3, 2), (4, np.inf), (1.5, 6)]:
        exact = 1.7 * meas ** (1 / p) * ((p / q) ** (1 / q) if q != np.inf else 1.0)
        assert lorentz_norm(GridFunction(g, A), p, q) == pytest.approx(exact, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(1.05, 8.0), st.integers(0, 2 ** 31))
def test_layer_cake_identity(values, p, seed):
    v = np.asarray(values)
    w = np.random.default_rng(seed).uniform(0.01, 2, size=v.size)
    expect = float(np.sum(w * v ** p) ** (1 / p))
    assert lorentz_norm(v, p, p, w) == pytest.approx(expect, rel=1e-9, abs=1e-300)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=20), st.floats(-4, 4), st.floats(1.1, 5), st.floats(0.5, 4))
def test_homogeneity_and_rearrangement_invariance(values, c, p, q):
    v = np.asarray(values)
    base = lorentz_norm(v, p, q)
    assert lorentz_norm(c * v, p, q) == pytest.approx(abs(c) * base, rel=1e-10, abs=1e-12)
    assert lorentz_norm(v[::-1].copy(), p, q) == pytest.approx(base, rel=1e-12, abs=1e-300)


def test_mixed_norm_constant_profile():
    g = GridSpec(1, 2.0, 0.01, 0.0, 1.0, 1 / 64)
    x = g.axis()
    prof = np.exp(-x ** 2)
    prof /= lp_norm(prof, 4.0, g.h)
    f = GridFunction(g, prof, 0).broadcast_time()
    e = LorentzExponents(4.0, 4.0, 1.0, 1)
    for T in (0.25, 0.5, 1.0):
        v = mixed_lorentz_norm(f, e, (0.0, T)).value
        assert v == pytest.approx(4 * T ** 0.25, rel=1e-12)
    z = GridFunction(g, np.zeros((g.nt, g.n)), timed=True)
    assert mixed_lorentz_norm(z, e).value == 0.0
    with pytest.raises(LorentzError):
        mixed_lorentz_norm(f, e, (0.0, 2.0))


@pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
def test_time_weight_unit_norm(T):
    qd = 3.0
    assert profile_norm(lambda s: s ** (-1 / qd), 0.0, T, qd, np.inf) == pytest.approx(1.0, abs=1e-12)


def test_holder_cases(rng):
    f = rng.exponential(size=50)
    w = np.full(50, 1 / 50)
    rep = check_holder(f, np.ones(50), 2, 1, 2, 1, np.inf, np.inf, w)
    assert rep["ratio"] <= 1 + 1e-9
    ind = np.r_[np.ones(10), np.zeros(40)]
    rep = check_holder(ind, ind, 2, 4 / 3, 4, 4, 4, 2, w)
    m = 10 / 50
    assert rep["lhs"] == pytest.approx((2 / (4 / 3)) ** (3 / 4) * m ** 0.5)
    assert rep["rhs"] == pytest.approx(m ** 0.25 * (4 / 2) ** 0.5 * m ** 0.25)
    worst = max(check_holder(rng.exponential(size=30), rng.exponential(size=30), 2, 1, 4, 2, 4, 2)["ratio"]
                for _ in range(100))
    assert np.isfinite(worst) and worst <= 1 + 1e-9
    with pytest.raises(LorentzError):
        check_holder(f, f, 2, 1, 3, 1, 3, 1)


def test_quasi_triangle_and_disjoint(rng):
    pairs = [(rng.exponential(size=40), rng.exponential(size=40)) for _ in range(100)]
    c1 = quasi_triangle_constant(pairs, 3.0, 1.0)
    c2 = quasi_triangle_constant(pairs, 3.0, 1.0)
    assert c1 == c2 and c1 <= 1 + 1e-12
    f = rng.exponential(size=100)
    rats = [disjoint_ratio(f, rng.random(100) < 0.5, 3.0, 1.0) for _ in range(50)]
    assert 1 / 4 <= min(rats) and max(rats) <= 4


def test_oneil_zero_and_gaussian():
    g = GridSpec(1, 2.0, 0.1, 0.0, 1.0, 0.1)
    x, t = g.axis(), g.times()
    F = GridFunction(g, np.exp(-x[None, :] ** 2 - t[:, None] ** 2) * np.ones((g.nt, 1)), timed=True)
    Z = GridFunction(g, np.zeros((g.nt, g.n)), timed=True)
    assert check_oneil_mixed(F, Z, (2, 1, 2, 2), (2, np.inf, 2, 2))["lhs"] == 0.0
    sp = GridSpec(1, 4.0, 0.02, 0.0, 2.0, 0.02)
    xs, ts = sp.axis(), sp.times()
    a = np.exp(-0.5 * (ts[:, None] - 1) ** 2 / 0.04) * np.exp(-0.5 * xs[None, :] ** 2 / 0.1)
    G1 = GridFunction(sp, a, timed=True)
    rep = check_oneil_mixed(G1, G1, (2, 1, 2, 2), (2, np.inf, 2, 2), method="fft")
    # peak of the self-convolution: int exp(-(s-1)^2/0.04) ds * int exp(-x^2/0.1) dx
    exact = np.sqrt(np.pi * 0.04) * np.sqrt(np.pi * 0.1)
    assert rep["lhs"] == pytest.approx(exact, rel=2e-2)
    assert np.isfinite(rep["ratio"])
    with pytest.raises(LorentzError):
        check_oneil_mixed(G1, G1, (2, 1, 2, 2), (3, np.inf, 2, 2))


def test_partition_examples():
    e = LorentzExponents(4.0, 4.0, 1.0, 1)
    assert partition_time(lambda t: 1.0, e, 5.0, (0.0, 1.0)) == [(0.0, 1.0)]
    parts = partition_time(lambda t: 1.0, e, 2.0, (0.0, 1.0))
    assert len(parts) == 16
    assert np.allclose([b - a for a, b in parts], 1 / 16)
    assert parts[0][0] == 0.0 and parts[-1][1] == 1.0
    assert all(p[1] == q[0] for p, q in zip(parts, parts[1:]))
    prof = lambda t: 1.0 + np.sin(3 * t) ** 2
    parts = partition_time(prof, e, 1.7, (0.0, 2.0))
    for a, b in parts:
        assert profile_norm(prof, a, b, 4.0, 1.0, n_cells=int(round((b - a) * 512)), sampling="mid") <= 1.7 * (1 + 1e-9)
    with pytest.raises(NonPartitionableError, match="non-partitionable"):
        partition_time(lambda t: np.inf, e, 1.0, (0.0, 1.0))
    with pytest.raises(NonPartitionableError):
        partition_time(lambda t: 1e6, e, 1.0, (0.0, 1.0))


def test_partition_drift_spec():
    g = GridSpec(2, 3.0, 0.1)
    e = LorentzExponents.critical(2, 4.0)
    b = DriftSpec.bump(2, 2.0, 0.4)
    parts = partition_time(b, e, 1.5, (0.0, 1.0), grid=g)
    assert len(parts) > 1
    gt = g.with_time(0.0, 1.0, 1 / 1024)
    f = GridFunction(gt, np.linalg.norm(b.evaluate(0, gt.mesh()), axis=-1)).broadcast_time()
    for a, c in parts:
        assert mixed_lorentz_norm(f, e, (a, c)).value <= 1.5 * (1 + 1e-9)


def test_halving_decreases_norm():
    e = LorentzExponents(3.0, 3.0, 1.0, 1)
    prof = lambda t: 1 + t
    assert profile_norm(prof, 0, 0.5, 3, 1) < profile_norm(prof, 0, 1, 3, 1)
