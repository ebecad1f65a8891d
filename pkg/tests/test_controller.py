import numpy as np
import pytest
from oracles import central_jacobian, static_feedforward_cramer
from scipy.optimize import fsolve
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tethered_follower import (
    CableAngleController,
    Gains,
    Setpoints,
    SingularConfiguration,
    control,
    feedforward,
    linearize_reduced,
)
from tethered_follower.controller import closed_loop_matrix, reduced_gravity, reduced_input
from tethered_follower.dynamics import cable_tension, state_derivative
from tethered_follower.sim import SimConfig, equilibrium_state, run_scenario

GRID = np.radians(np.linspace(5.0, 85.0, 20))


def test_feedforward_flight_values(params, setpoints):
    f, phi_b = feedforward(setpoints, params)
    assert f == pytest.approx(0.872, abs=5e-4)
    assert np.degrees(phi_b) == pytest.approx(8.14, abs=0.01)
    f_ref, phi_b_ref = static_feedforward_cramer(setpoints.phi_0_star, setpoints.phi_1_star, params)
    assert f == pytest.approx(f_ref, abs=1e-12)
    assert phi_b == pytest.approx(phi_b_ref, abs=1e-12)


def test_feedforward_matches_nonlinear_balance(params, setpoints):
    f, phi_b = feedforward(setpoints, params)
    sol = fsolve(
        lambda v: reduced_gravity(*setpoints.angles, params)
        - reduced_input(*setpoints.angles, v[0], v[1], params),
        [1.0, 0.0], xtol=1e-14,
    )
    np.testing.assert_allclose([f, phi_b], sol, atol=1e-9)


def test_feedforward_vertical_force_balance(params, setpoints, x_eq, u_eq):
    f, phi_b = feedforward(setpoints, params)
    t1 = cable_tension(x_eq, u_eq, params)
    assert f * np.cos(phi_b) == pytest.approx(params.m * params.g + t1 * np.cos(setpoints.phi_1_star),
                                              rel=1e-12)


@pytest.mark.parametrize("phi_1_deg", [5.0, 30.0, 60.0, 85.0])
def test_feedforward_payload_plumb(params, phi_1_deg):
    f, phi_b = feedforward(Setpoints.from_degrees(0.0, phi_1_deg), params)
    assert f == pytest.approx(params.m * params.g, rel=1e-12)
    assert phi_b == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("phi_0, phi_1", [(-40.0, 40.0), (-20.0, 60.0), (-70.0, 10.0)])
def test_feedforward_mirror(params, phi_0, phi_1):
    f, phi_b = feedforward(Setpoints.from_degrees(phi_0, phi_1), params)
    f_m, phi_b_m = feedforward(Setpoints.from_degrees(-phi_0, -phi_1), params)
    assert f_m == pytest.approx(f, rel=1e-12)
    assert phi_b_m == pytest.approx(-phi_b, abs=1e-12)


def test_feedforward_singular(params):
    with pytest.raises(SingularConfiguration):
        feedforward(Setpoints.from_degrees(30.0, 30.0), params)


def test_linearization_positive_definite_over_grid(params):
    for a in GRID:
        for b in GRID:
            sp = Setpoints(-a, b)
            lin = linearize_reduced(sp, feedforward(sp, params), params)
            np.linalg.cholesky(lin.H_r)
            np.linalg.cholesky(lin.P_r)


def test_input_matrix_determinant(params):
    for a in GRID[::3]:
        for b in GRID[::3]:
            sp = Setpoints(-a, b)
            f, phi_b = feedforward(sp, params)
            lin = linearize_reduced(sp, (f, phi_b), params)
            expected = f * params.l0 * params.l1 * np.sin(sp.phi_0_star - sp.phi_1_star)
            assert np.linalg.det(lin.B_r) == pytest.approx(expected, abs=1e-10)


def test_mass_block_determinant(params, setpoints, u_star):
    p = params
    lin = linearize_reduced(setpoints, u_star, p)
    s = np.sin(setpoints.phi_0_star - setpoints.phi_1_star)
    expected = (p.m**2 * s**2 + p.m * p.M) * (p.l0 * p.l1) ** 2
    assert np.linalg.det(lin.H_r) == pytest.approx(expected, rel=1e-12)


def test_linearization_matches_finite_differences(params, setpoints, u_star):
    f, phi_b = u_star
    lin = linearize_reduced(setpoints, u_star, params)

    def residual(phi):
        return reduced_gravity(phi[0], phi[1], params) - reduced_input(phi[0], phi[1], f, phi_b, params)

    P_fd = central_jacobian(residual, setpoints.angles, 1e-5)
    np.testing.assert_allclose(lin.P_r, P_fd, atol=1e-6)
    B_fd = central_jacobian(
        lambda v: reduced_input(*setpoints.angles, v[0], v[1], params), np.array(u_star), 1e-5
    )
    np.testing.assert_allclose(lin.B_r, B_fd, atol=1e-6)


def test_linearize_singular(params):
    sp = Setpoints.from_degrees(20.0, 20.0)
    with pytest.raises(SingularConfiguration):
        linearize_reduced(sp, (0.8, 0.0), params)


def test_gain_map_invertible_over_grid(params):
    for a in GRID:
        for b in GRID:
            sp = Setpoints(-a, b)
            lin = linearize_reduced(sp, feedforward(sp, params), params)
            assert np.isfinite(np.linalg.cond(lin.gain_map))
            assert abs(np.linalg.det(lin.gain_map)) > 1e-3


def test_equilibrium_consistency(params):
    for a in GRID[::4]:
        for b in GRID[::4]:
            sp = Setpoints(-a, b)
            f, phi_b = feedforward(sp, params)
            x = equilibrium_state(sp, params)
            np.testing.assert_allclose(state_derivative(x, [0.0, f], params), 0.0, atol=1e-10)


def test_control_at_setpoint_returns_feedforward(params, setpoints, u_star, x_eq):
    lin = linearize_reduced(setpoints, u_star, params)
    f, phi_b_cmd, integ = control(x_eq, setpoints, Gains(), lin, u_star, np.zeros(2), 0.005)
    assert f == pytest.approx(u_star[0], abs=1e-15)
    assert phi_b_cmd == pytest.approx(u_star[1], abs=1e-15)
    np.testing.assert_array_equal(integ, 0.0)


def test_control_sign_hand_computation(params, setpoints, u_star, x_eq):
    lin = linearize_reduced(setpoints, u_star, params)
    gains = Gains(Ki=np.zeros((2, 2)))
    x = x_eq.copy()
    x[2] += np.radians(2.0)
    f, phi_b_cmd, _ = control(x, setpoints, gains, lin, u_star, np.zeros(2), 0.005)
    # (H_r^-1 B_r) du = -Kp (d, 0): solve the 2x2 by Cramer's rule
    G = np.linalg.inv(lin.H_r) @ lin.B_r
    rhs = np.array([-4.0 * np.radians(2.0), 0.0])
    det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    du = np.array([rhs[0] * G[1, 1] - G[0, 1] * rhs[1], G[0, 0] * rhs[1] - rhs[0] * G[1, 0]]) / det
    assert f - u_star[0] == pytest.approx(du[0], rel=1e-10)
    assert phi_b_cmd - u_star[1] == pytest.approx(du[1], rel=1e-10)


def test_closed_loop_poles_stable(params, setpoints, u_star):
    lin = linearize_reduced(setpoints, u_star, params)
    gains = Gains()
    assert np.max(np.linalg.eigvals(closed_loop_matrix(lin, gains)).real) < 0
    assert np.max(np.linalg.eigvals(closed_loop_matrix(lin, gains, with_integral=True)).real) < 0


def test_closed_loop_matrix_matches_assembled_second_order_form(params, setpoints, u_star):
    lin = linearize_reduced(setpoints, u_star, params)
    gains = Gains()
    k_map = lin.B_r @ np.linalg.inv(lin.gain_map)  # equals H_r
    damping = k_map @ gains.Kd
    stiffness = lin.P_r + k_map @ gains.Kp
    a = np.block([[np.zeros((2, 2)), np.eye(2)],
                  [-np.linalg.solve(lin.H_r, stiffness), -np.linalg.solve(lin.H_r, damping)]])
    np.testing.assert_allclose(a, closed_loop_matrix(lin, gains), atol=1e-10)


def test_integrator_clamped(params, setpoints, u_star, x_eq):
    lin = linearize_reduced(setpoints, u_star, params)
    gains = Gains()
    x = x_eq.copy()
    x[2] += 0.3
    integ = np.zeros(2)
    for _ in range(5000):
        _, _, integ = control(x, setpoints, gains, lin, u_star, integ, 0.01)
    assert np.all(np.abs(integ) <= gains.integrator_limit + 1e-15)


def test_integrator_frozen_when_thrust_saturates(params, setpoints, u_star, x_eq):
    lin = linearize_reduced(setpoints, u_star, params)
    gains = Gains(f_min=u_star[0] - 1e-3, f_max=u_star[0] + 1e-3)
    x = x_eq.copy()
    x[[2, 4]] += np.radians([-20.0, 20.0])
    integ = np.array([0.01, -0.02])
    f, _, integ_new = control(x, setpoints, gains, lin, u_star, integ, 0.005)
    np.testing.assert_array_equal(integ_new, integ)
    assert f == gains.f_max or f == gains.f_min


def test_gains_validation():
    with pytest.raises(ValueError):
        Gains(Kp=np.diag([-1.0, 1.0]))
    with pytest.raises(ValueError):
        Gains(f_min=1.0, f_max=0.5)
    assert Gains(Kp=[2.0, 3.0]).Kp[1, 1] == 3.0


def test_truth_feedback_decays_below_one_degree(params, setpoints):
    # the filter needs R > 0, so keep the default noise but feed the controller the truth
    trace = run_scenario("truth_feedback", params, SimConfig(duration=12.0), setpoints=setpoints)
    late = trace.t >= 10.0
    err = np.degrees(np.abs(trace.x[late][:, [2, 4]] - setpoints.angles))
    assert err.max() < 1.0


def test_estimator_style_controller(params, setpoints, u_star, x_eq):
    ctl = CableAngleController(params=params, setpoints=setpoints)
    assert set(ctl.get_params()) == {"params", "setpoints", "gains", "dt"}
    ctl2 = clone(ctl).set_params(dt=0.01)
    assert ctl2.dt == 0.01
    with pytest.raises(NotFittedError):
        ctl.predict(x_eq)
    ctl.fit()
    out = ctl.predict(np.vstack([x_eq, x_eq]))
    np.testing.assert_allclose(out, [u_star, u_star], atol=1e-15)
