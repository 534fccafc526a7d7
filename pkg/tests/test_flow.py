import numpy as np
import pytest

from critlab import sde
from critlab.flow import build_flow, flow_stability, regularity_across_levels, weak_derivative_moments
from critlab.grid import DriftSpec, GridError, GridSpec


@pytest.fixture(scope="module")
def bump_flow(grid2, crit2):
    return build_flow(DriftSpec.bump(2, 1.0, 0.4), crit2, (0.0, 0.5), grid2, threshold=2.0)


@pytest.fixture(scope="module")
def grid2():
    return GridSpec(2, 4.0, 0.1, 0.0, 0.25, 0.025)


@pytest.fixture(scope="module")
def crit2():
    from critlab.lorentz import LorentzExponents

    return LorentzExponents.critical(2, 4.0)


def test_zero_drift_flow(grid2, crit2):
    fl = build_flow(DriftSpec.constant([0.0, 0.0]), crit2, (0.0, 0.5), grid2)
    assert fl.intervals == [(0.0, 0.5)]
    assert np.all(fl.maps[0].phi == grid2.with_time(0.0, 0.5).mesh()[None])
    x0 = [0.2, -0.1]
    a = fl.simulate(x0, 500, 0.01, 3, 0.1, 0.4)
    b0 = sde.simulate_brownian(500, 0.01, 0.1, x0, 3, record=(10,))
    b1 = sde.simulate_brownian(500, 0.01, 0.4, x0, 3)
    assert np.allclose(a.X_T, np.asarray(x0) + b1.X_T - b0.X_T, atol=1e-13)
    z = fl.simulate(x0, 500, 0.01, 3, 0.0, 0.5, route="zvonkin")
    assert np.allclose(z.X_T, fl.simulate(x0, 500, 0.01, 3).X_T, atol=1e-13)


def test_constant_drift_flow(grid2, crit2):
    c = np.array([0.3, 0.1])
    fl = build_flow(DriftSpec.constant(c), crit2, (0.0, 0.5), grid2, with_maps=False)
    x0 = np.array([0.0, 0.5])
    a = fl.simulate(x0, 400, 0.01, 1, 0.2, 0.5)
    w0 = sde.simulate_brownian(400, 0.01, 0.2, [0.0, 0.0], 1)
    w1 = sde.simulate_brownian(400, 0.01, 0.5, [0.0, 0.0], 1)
    assert np.allclose(a.X_T, x0 + c * 0.3 + w1.X_T - w0.X_T, atol=1e-12)


def test_partition_and_bounds(bump_flow):
    iv = bump_flow.intervals
    assert len(iv) >= 2
    assert all(a[1] == b[0] for a, b in zip(iv, iv[1:]))
    assert iv[0][0] == 0.0 and iv[-1][1] == 0.5
    assert bump_flow.bounds_ok()


def test_semigroup_at_junctions(bump_flow):
    for u in bump_flow.junctions:
        rep = bump_flow.semigroup_check([0.3, -0.2], 300, 0.0125, 5, 0.0, u, 0.5)
        assert rep["exact"]
    rep = bump_flow.semigroup_check([0.3, -0.2], 300, 0.0125, 5, 0.1, 0.3, 0.4)
    assert rep["max_abs_diff"] == 0.0


def test_zvonkin_route_close_to_direct(bump_flow):
    x0 = [0.1, 0.0]
    em = bump_flow.simulate(x0, 1000, 0.005, 2)
    zv = bump_flow.simulate(x0, 1000, 0.005, 2, route="zvonkin")
    ok = em.alive & zv.alive
    assert np.mean(np.linalg.norm(em.X_T[ok] - zv.X_T[ok], axis=-1)) < 0.05


def test_flow_stability():
    g = GridSpec(1, 4.0, 0.0125)
    b = DriftSpec.bump(1, 1.0, 0.3)
    rep = flow_stability(b, [0.2, 0.1, 0.05], [0.0], 1, 4000, 0.01, 0.5, 3, g)
    assert rep["reference_eps"] == 0.0
    assert rep["strictly_decreasing"] and not rep["outside_small_norm_regime"]
    rep2 = flow_stability(b, [0.2, 0.1], [0.0], 2, 2000, 0.01, 0.5, 3, g)
    assert all(np.isfinite(r["moment_2r_minus_1"]) for r in rep2["rows"])
    with pytest.raises(GridError):
        flow_stability(b, [0.01], [0.0], 1, 10, 0.1, 0.5, 3, g)
    smooth = flow_stability(DriftSpec.constant([0.5]), [0.2, 0.1], [0.0], 1, 200, 0.05, 0.5, 3, g)
    assert all(r["sup_diff"] < 1e-12 for r in smooth["rows"])


def test_weak_derivative_zero_and_constant():
    g = GridSpec(2, 4.0, 0.1)
    for b in (DriftSpec.constant([0.0, 0.0]), DriftSpec.constant([0.4, -0.3])):
        rep = weak_derivative_moments(b, 2, [0.1, 0.01], [0.0, 0.0], 200, 0.02, 0.5, 1, grid=g)
        assert all(r["estimate"] == pytest.approx(2.0, abs=1e-9) for r in rep["rows"])
        assert rep["h_stable"]


def test_weak_derivative_bump_h_stable():
    g = GridSpec(1, 4.0, 0.0125)
    rep = weak_derivative_moments(DriftSpec.bump(1, 1.0, 0.4), 2, [1e-1, 1e-2, 1e-3], [0.0], 4000, 0.01, 0.5, 2,
                                  grid=g)
    assert rep["h_stable"] and all(np.isfinite(r["estimate"]) for r in rep["rows"])
    lv = regularity_across_levels(DriftSpec.bump(1, 1.0, 0.4), [0.1, 0.05], 2, 1e-2, [0.0], 4000, 0.01, 0.5, 2, g)
    assert lv["n_stable"]
