import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from etcoord.vehicle import (
    BezierTrajectory, PFConfig, TrajectoryBank, TrajectoryError, VehicleState, bernstein_eval,
    de_casteljau, elevate_degree, pf_error, pf_surrogate_step,
)

CUBIC = np.array([[0.0, 0.0, 30.0], [0.0, 50.0, 30.0], [14.265848, 100.0, 34.635255],
                  [14.265848, 150.0, 34.635255]])
coords = st.floats(-100, 100, allow_nan=False)


def test_endpoints():
    tr = BezierTrajectory(CUBIC, 21.1)
    np.testing.assert_array_equal(tr.position(0.0), CUBIC[0])
    np.testing.assert_allclose(tr.position(21.1), CUBIC[-1], atol=1e-12)
    # end tangents follow the first and last legs of the polygon
    np.testing.assert_allclose(tr.velocity(0.0), 3 * (CUBIC[1] - CUBIC[0]) / 21.1, atol=1e-12)
    np.testing.assert_allclose(tr.velocity(21.1), 3 * (CUBIC[3] - CUBIC[2]) / 21.1, atol=1e-12)


def test_linear_segment():
    tr = BezierTrajectory([[0, 0, 0], [2, 4, 6]], 2.0)
    np.testing.assert_allclose(tr.position(0.5), [0.5, 1.0, 1.5])
    np.testing.assert_allclose(tr.velocity(1.3), [1.0, 2.0, 3.0])


def test_validation_and_clamping():
    with pytest.raises(TrajectoryError):
        BezierTrajectory([[0, 0, 0]], 1.0)
    with pytest.raises(TrajectoryError):
        BezierTrajectory([[0, 0], [1, 1]], 1.0)
    with pytest.raises(TrajectoryError):
        BezierTrajectory(CUBIC, 0.0)
    tr = BezierTrajectory(CUBIC, 21.1)
    with pytest.warns(UserWarning):
        np.testing.assert_allclose(tr.position(25.0), CUBIC[-1], atol=1e-12)
    with pytest.warns(UserWarning):
        np.testing.assert_array_equal(tr.position(-1.0), CUBIC[0])


@settings(max_examples=60, deadline=None)
@given(deg=st.integers(1, 7), data=st.data(), s=st.floats(0.05, 0.95))
def test_velocity_matches_finite_difference(deg, data, s):
    P = data.draw(arrays(float, (deg + 1, 3), elements=coords))
    tr = BezierTrajectory(P, 10.0)
    g, h = 10.0 * s, 1e-5
    fd = (tr.position(g + h) - tr.position(g - h)) / (2 * h)
    scale = max(1.0, np.abs(P).max())
    np.testing.assert_allclose(tr.velocity(g), fd, atol=1e-6 * scale)


@settings(max_examples=60, deadline=None)
@given(deg=st.integers(1, 7), data=st.data(), s=st.floats(0, 1))
def test_casteljau_matches_bernstein(deg, data, s):
    P = data.draw(arrays(float, (deg + 1, 3), elements=coords))
    np.testing.assert_allclose(de_casteljau(P, s), bernstein_eval(P, s), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(deg=st.integers(1, 5), data=st.data(), s=st.floats(0, 1))
def test_curve_inside_convex_hull(deg, data, s):
    P = data.draw(arrays(float, (deg + 1, 3), elements=coords))
    x = de_casteljau(P, s)
    # feasibility of x = P^T w, w >= 0, sum w = 1
    A_eq = np.vstack([P.T, np.ones(deg + 1)])
    res = linprog(np.zeros(deg + 1), A_eq=A_eq, b_eq=np.append(x, 1.0), bounds=(0, None))
    assert res.status == 0


@given(s=st.floats(0, 1), times=st.integers(1, 4))
def test_degree_elevation_is_exact(s, times):
    E = elevate_degree(CUBIC, times)
    assert E.shape == (4 + times, 3)
    np.testing.assert_allclose(de_casteljau(E, s), de_casteljau(CUBIC, s), atol=1e-10)


def test_trajectory_bank_matches_single_curves():
    trs = [BezierTrajectory(CUBIC, 21.1), BezierTrajectory([[0, 0, 0], [3, 3, 3]], 21.1)]
    bank = TrajectoryBank(trs)
    g = np.array([4.0, 17.5])
    p, v = bank.evaluate(g)
    for i, tr in enumerate(trs):
        np.testing.assert_allclose(p[i], tr.position(g[i]), atol=1e-12)
        np.testing.assert_allclose(v[i], tr.velocity(g[i]), atol=1e-12)
    with pytest.raises(TrajectoryError):
        TrajectoryBank([BezierTrajectory(CUBIC, 21.1), BezierTrajectory(CUBIC, 20.0)])


def test_pf_error_examples():
    tr = BezierTrajectory([[0, 0, 0], [0, 10, 0]], 10.0)
    v = VehicleState(np.array([1.0, 3.0, -2.0]), np.zeros(3))
    np.testing.assert_allclose(pf_error(v, tr, 3.0), [1.0, 0.0, -2.0])
    np.testing.assert_allclose(pf_error(v, tr, 0.0), [1.0, 3.0, -2.0])


def test_surrogate_critically_damped_closed_form():
    # kp = kd = 4, straight line at unit pace: e(t) = e0 (1 + 2t) exp(-2t)
    tr = BezierTrajectory([[0, 0, 0], [0, 100, 0]], 100.0)
    cfg = PFConfig(4.0, 4.0, 1.0)
    e0 = np.array([1.0, 0.0, -0.5])
    v = VehicleState(e0.copy(), tr.velocity(0.0))
    dt, gamma = 1e-3, 0.0
    for k in range(3000):
        v = pf_surrogate_step(v, tr, gamma, 1.0, cfg, dt)
        gamma += dt
        t = (k + 1) * dt
        if (k + 1) % 500 == 0:
            np.testing.assert_allclose(pf_error(v, tr, gamma), e0 * (1 + 2 * t) * np.exp(-2 * t),
                                       atol=1e-10)


def test_surrogate_stays_on_line():
    tr = BezierTrajectory([[1, 2, 3], [4, 90, 3]], 21.1)
    v = VehicleState(tr.position(2.0), tr.velocity(2.0))
    cfg = PFConfig(1.0, 2.0, 4.0)
    gamma = 2.0
    for _ in range(1000):
        v = pf_surrogate_step(v, tr, gamma, 1.0, cfg, 1e-3)
        gamma += 1e-3
    assert np.linalg.norm(pf_error(v, tr, gamma)) < 1e-9


def test_surrogate_curved_lag_is_small():
    # no acceleration feedforward, so curvature leaves a small bounded lag
    tr = BezierTrajectory(CUBIC, 21.1)
    v = VehicleState(tr.position(0.0), tr.velocity(0.0))
    cfg = PFConfig(1.0, 2.0, 4.0)
    gamma, worst = 0.0, 0.0
    for _ in range(21000):
        v = pf_surrogate_step(v, tr, gamma, 1.0, cfg, 1e-3)
        gamma += 1e-3
        worst = max(worst, np.linalg.norm(pf_error(v, tr, gamma)))
    assert 1e-3 < worst < 0.2


def test_pf_config_validation():
    with pytest.raises(ValueError):
        PFConfig(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        pf_surrogate_step(VehicleState(np.zeros(3), np.zeros(3)),
                          BezierTrajectory(CUBIC, 21.1), 0.0, 1.0, PFConfig(1, 1, 1), 0.0)
