import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from critlab.grid import (DriftSpec, GridError, GridFunction, GridSpec, SingularityError, finite_diff,
                          maximal_function, maximal_lipschitz_constant, mollifier_weights, mollify, sample_field)


def test_gridspec_invariants():
    g = GridSpec(2, 1.0, 0.25, 0.0, 1.0, 0.25)
    assert g.n == 9 and g.nt == 5 and g.shape == (9, 9)
    assert g.mesh().shape == (9, 9, 2)
    for bad in [dict(d=4, L=1, h=0.25), dict(d=1, L=1, h=0.3), dict(d=1, L=1, h=0.25, tau=0.3),
                dict(d=1, L=1, h=1.0), dict(d=1, L=1, h=-1)]:
        with pytest.raises(GridError):
            GridSpec(**bad)


def test_gridfunction_checks_shape_and_finiteness():
    g = GridSpec(1, 1.0, 0.25)
    with pytest.raises(GridError):
        GridFunction(g, np.zeros(8))
    with pytest.raises(GridError):
        GridFunction(g, np.full(9, np.nan))
    f = GridFunction(g, np.ones(9))
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_matrix_magnitude_is_hilbert_schmidt():
    g = GridSpec(2, 1.0, 0.25)
    A = np.broadcast_to(np.array([[1.0, 2.0], [3.0, 4.0]]), g.shape + (2, 2))
    f = GridFunction(g, A, rank=2)
    assert np.allclose(f.magnitude(), np.sqrt(30.0))


def test_sample_constant_drift():
    g = GridSpec(2, 1.0, 0.25)
    f = sample_field(DriftSpec.constant([1.0, 0.0]), g)
    assert np.all(f.values[..., 0] == 1.0) and np.all(f.values[..., 1] == 0.0)


def test_inverse_radial_singularity_and_value():
    g = GridSpec(2, 1.0, 0.25)
    spec = DriftSpec.inverse_radial(2, beta=1.0, eps=0.0)
    assert spec.supercritical
    with pytest.raises(SingularityError, match="unmollified singularity"):
        sample_field(spec, g)
    assert np.allclose(spec.evaluate(0.0, np.array([[1.0, 0.0]])), [[-1.0, 0.0]])


def test_mollify_identity_constant_and_domain():
    g = GridSpec(2, 2.0, 0.1)
    f = GridFunction(g, np.full(g.shape, 3.0))
    assert mollify(f, 0.0) is f
    m = mollify(f, 0.35)
    inner = g.interior_mask(0.4)
    assert np.allclose(m.values[inner], 3.0)
    with pytest.raises(GridError, match="mollifier exceeds domain"):
        mollify(f, 2.5)


def test_mollify_ball_indicator_matches_brute_force():
    g = GridSpec(2, 1.0, 0.1)
    X = g.mesh()
    ind = (np.sum(X ** 2, axis=-1) <= 0.3 ** 2).astype(float)
    eps = 0.25
    out = mollify(GridFunction(g, ind), eps).values
    w = mollifier_weights(2, g.h, eps)
    k = w.shape[0] // 2
    brute = np.zeros_like(ind)
    n = g.n
    for i in range(n):
        for j in range(n):
            s = 0.0
            for a in range(-k, k + 1):
                for b in range(-k, k + 1):
                    if 0 <= i - a < n and 0 <= j - b < n:
                        s += w[a + k, b + k] * ind[i - a, j - b]
            brute[i, j] = s
    assert np.allclose(out, brute, atol=1e-14)
    assert out.min() >= 0 and out.max() <= 1 + 1e-14
    assert out.max() <= ind.max()


def test_mollify_linear_and_positive(rng):
    g = GridSpec(1, 2.0, 0.05)
    a, b = rng.random(g.shape), rng.random(g.shape)
    fa, fb = GridFunction(g, a), GridFunction(g, b)
    lhs = mollify(GridFunction(g, 2 * a - 3 * b), 0.3).values
    rhs = 2 * mollify(fa, 0.3).values - 3 * mollify(fb, 0.3).values
    assert np.allclose(lhs, rhs)
    assert mollify(fa, 0.3).values.min() >= 0


def test_finite_diff_polynomials_exact():
    g = GridSpec(2, 1.0, 0.1, 0.0, 1.0, 0.1)
    X = g.mesh()
    lin = finite_diff(GridFunction(g, X[..., 0]), 1).values
    assert np.allclose(lin, [1.0, 0.0], atol=1e-12)
    quad = GridFunction(g, 0.5 * np.sum(X ** 2, axis=-1) + X[..., 0] * X[..., 1])
    H = finite_diff(quad, 2).values
    assert np.allclose(H, [[1.0, 1.0], [1.0, 1.0]], atol=1e-10)


def test_finite_diff_time():
    g = GridSpec(1, 1.0, 0.1, 0.0, 1.0, 0.05)
    x = g.axis()
    t = g.times()
    f = GridFunction(g, t[:, None] * x[None, :], timed=True)
    assert np.allclose(finite_diff(f, "time").values, np.broadcast_to(x, (g.nt, g.n)), atol=1e-12)
    f2 = GridFunction(g, np.sin(t)[:, None] * x[None, :], timed=True)
    err = np.abs(finite_diff(f2, "time").values - np.cos(t)[:, None] * x[None, :]).max()
    assert err < 5 * g.tau ** 2


def test_maximal_constant_and_dominates(rng):
    g = GridSpec(2, 1.0, 0.1)
    c = maximal_function(GridFunction(g, np.full(g.shape, 2.5)))
    assert np.allclose(c.values, 2.5)
    f = GridFunction(g, rng.normal(size=g.shape))
    assert np.all(maximal_function(f).values >= np.abs(f.values) - 1e-15)


def test_maximal_single_node_brute_force():
    g = GridSpec(2, 0.5, 0.1)
    v = np.zeros(g.shape)
    v[5, 5] = 1.0
    M = maximal_function(GridFunction(g, v)).values
    n, K = g.n, 5
    brute = np.zeros_like(v)
    for i in range(n):
        for j in range(n):
            best = v[i, j]
            for k in range(1, K + 1):
                cnt = hit = 0
                for a in range(n):
                    for b in range(n):
                        if (a - i) ** 2 + (b - j) ** 2 <= k * k:
                            cnt += 1
                            hit += v[a, b]
                best = max(best, hit / cnt)
            brute[i, j] = best
    assert np.allclose(M, brute, atol=1e-15)


def test_maximal_lipschitz_constant_stabilizes():
    vals = []
    for h in (0.1, 0.05):
        g = GridSpec(2, 2.0, h)
        X = g.mesh()
        u = GridFunction(g, np.sin(X[..., 0]) * np.exp(-np.sum(X ** 2, axis=-1)))
        vals.append(maximal_lipschitz_constant(u, n_pairs=4000, seed=1, kmax=10))
    assert all(np.isfinite(vals))
    assert abs(vals[1] / vals[0] - 1) < 0.25


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(-3, 3))
def test_constant_fixed_by_mollification(eps, c):
    g = GridSpec(1, 2.0, 0.05)
    m = mollify(GridFunction(g, np.full(g.shape, c)), eps)
    assert np.allclose(m.values[g.interior_mask(eps + 0.05)], c, atol=1e-12)


def test_tabulated_drift_interpolation():
    g = GridSpec(2, 2.0, 0.1)
    b = DriftSpec.bump(2, 1.0, 0.5)
    tab = b.tabulate(g)
    pts = np.array([[0.05, 0.03], [1.0, -0.5]])
    assert np.allclose(tab.evaluate(0.0, pts), b.evaluate(0.0, pts), atol=0.1 ** 2 / 8 * 8)
    with pytest.raises(GridError):
        b.with_eps(0.2).evaluate(0.0, pts)
