"""Linear analysis of the slung system and metrics over simulated traces."""

from dataclasses import dataclass, field

import numpy as np

from .controller import feedforward, linearize_reduced, reduced_gravity, reduced_input
from .dynamics import (
    DPHI_0,
    DPHI_1,
    PHI_0,
    PHI_1,
    STATE_NAMES,
    cable_tension,
    measurement,
    state_derivative,
)
from .errors import EmptyWindow, InvalidRange, NoConvergence
from .estimator import jacobian_fd

RANK_RTOL = 1e-8


def numerical_rank(mat, rtol=RANK_RTOL):
    """Number of singular values above ``rtol * sigma_max``."""
    sv = np.linalg.svd(np.atleast_2d(mat), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def observability_matrix(A, C):
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def controllability_matrix(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def linearize(x0, u0, p, step=1e-6):
    """Finite-difference ``(A, B, C)`` of the planar model at ``(x0, u0)``."""
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    A = jacobian_fd(lambda x: state_derivative(x, u0, p), x0, step)
    B = jacobian_fd(lambda u: state_derivative(x0, u, p), u0, step)
    C = jacobian_fd(lambda x: measurement(x, u0, p), x0, step)
    return A, B, C


def observability_rank(x0, u0, p, step=1e-6):
    """Rank of ``[C; CA; ...; CA^5]`` for the linearisation at ``(x0, u0)``.

    Returns
    -------
    rank : int
    matrix : ndarray, shape (24, 6)

    Raises
    ------
    SingularConfiguration
        If the measurement model is undefined at ``x0``.
    """
    A, _, C = linearize(x0, u0, p, step)
    mat = observability_matrix(A, C)
    return numerical_rank(mat), mat


def controllability_rank(x0, u0, p, step=1e-6):
    """Rank of ``[B, AB, ..., A^5 B]`` for the linearisation at ``(x0, u0)``."""
    A, B, _ = linearize(x0, u0, p, step)
    mat = controllability_matrix(A, B)
    return numerical_rank(mat), mat


def open_loop_matrix(sp, p):
    """``[[0, I], [-H_r^-1 P_r, 0]]`` for the unforced linearised system."""
    lin = linearize_reduced(sp, feedforward(sp, p), p)
    return np.block(
        [
            [np.zeros((2, 2)), np.eye(2)],
            [-np.linalg.solve(lin.H_r, lin.P_r), np.zeros((2, 2))],
        ]
    )


def open_loop_eigs(sp, p):
    """Eigenvalues of the unforced linearised reduced system.

    Raises
    ------
    SingularConfiguration
        At collinear setpoints.
    """
    return np.linalg.eigvals(open_loop_matrix(sp, p))


def static_tension(sp, p):
    """Follower-side cable tension (N) when resting at the setpoints."""
    f_star, phi_b_star = feedforward(sp, p)
    x = np.array([phi_b_star, 0.0, sp.phi_0_star, 0.0, sp.phi_1_star, 0.0])
    return cable_tension(x, np.array([0.0, f_star]), p)


def out_of_plane_omega(sp, T1, p):
    """Squared frequency (s^-2) of the small out-of-plane swing.

    Raises
    ------
    InvalidRange
        If the follower is not on the far side of the payload, i.e.
        ``m (l1 sin phi_1 - l0 sin phi_0) <= 0``.
    """
    phi_0, phi_1 = sp.phi_0_star, sp.phi_1_star
    denom = p.m * (-p.l0 * np.sin(phi_0) + p.l1 * np.sin(phi_1))
    if denom <= 0.0:
        raise InvalidRange(f"out-of-plane lever arm must be positive, got {denom:.4g}")
    return float(T1 * np.sin(phi_1) / denom)


def thrust_sensitivity(delta_f, sp, p, damping=0.5, max_iter=100, tol=1e-10):
    """Static cable-angle shift (deg) caused by a relative thrust error.

    Solves ``G_r(phi) = U_r(phi, (1 + delta_f) f*, phi_b*)`` by damped Newton
    iteration starting from the setpoints, with the roll held at the
    feedforward value.

    Returns
    -------
    (dphi_0, dphi_1) : tuple of float
        Deviations from the setpoints in degrees.

    Raises
    ------
    InvalidRange
        If ``|delta_f| >= 0.5``.
    NoConvergence
        If the residual is still above ``tol`` (N m) after ``max_iter``
        iterations.
    """
    if abs(delta_f) >= 0.5:
        raise InvalidRange(f"|delta_f| must be < 0.5, got {delta_f}")
    f_star, phi_b = feedforward(sp, p)
    f = (1.0 + delta_f) * f_star
    phi = sp.angles.copy()

    def residual(q):
        return reduced_gravity(q[0], q[1], p) - reduced_input(q[0], q[1], f, phi_b, p)

    for _ in range(max_iter):
        r = residual(phi)
        if np.max(np.abs(r)) < tol:
            break
        # G_r - U_r is separable, so its Jacobian is diagonal
        jac = np.diag(
            [
                (p.m + p.M) * p.g * p.l0 * np.cos(phi[0]) - f * p.l0 * np.cos(phi[0] - phi_b),
                -p.m * p.g * p.l1 * np.cos(phi[1]) + f * p.l1 * np.cos(phi_b - phi[1]),
            ]
        )
        phi = phi - damping * np.linalg.solve(jac, r)
    else:
        if np.max(np.abs(residual(phi))) >= tol:
            raise NoConvergence(f"thrust sensitivity solve did not converge for {delta_f}")
    d0, d1 = np.degrees(phi - sp.angles)
    return float(d0), float(d1)


ESTIMATION_WINDOW = (5.0, 55.0)
CONTROL_WINDOW = (20.0, 55.0)
CONTROL_CHANNELS = ("phi_0", "phi_1", "dphi_0", "dphi_1")


@dataclass
class MetricsReport:
    """Windowed error statistics of a trace, in degrees and deg/s.

    ``*_mean`` is the mean absolute error and ``*_sd`` the standard
    deviation of the absolute error, per channel. The oscillation amplitude
    is half the peak-to-peak excursion of each cable angle over the
    estimation window, which spans the whole flight minus takeoff and
    landing (an open-loop swing decays, so the control window would
    under-report it).
    """

    estimation_mean: dict = field(default_factory=dict)
    estimation_sd: dict = field(default_factory=dict)
    control_mean: dict = field(default_factory=dict)
    control_sd: dict = field(default_factory=dict)
    oscillation_amplitude: dict = field(default_factory=dict)
    estimation_window: tuple = ESTIMATION_WINDOW
    control_window: tuple = CONTROL_WINDOW

    def to_text(self):
        """Stable ``[metrics]`` text block, one ``key = value`` per line."""
        lines = ["[metrics]"]
        lines.append("estimation_window = %.6g %.6g" % self.estimation_window)
        lines.append("control_window = %.6g %.6g" % self.control_window)
        for prefix, table in (
            ("estimation_mean", self.estimation_mean),
            ("estimation_sd", self.estimation_sd),
            ("control_mean", self.control_mean),
            ("control_sd", self.control_sd),
            ("amplitude", self.oscillation_amplitude),
        ):
            for name, value in table.items():
                lines.append(f"{prefix}.{name} = {value:.6f}")
        return "\n".join(lines)


def _window(t, bounds):
    lo = max(bounds[0], t[0])
    hi = min(bounds[1], t[-1])
    mask = (t >= lo) & (t <= hi)
    if not np.any(mask):
        raise EmptyWindow(f"no samples in window [{bounds[0]}, {bounds[1]}] s")
    return mask


def trace_metrics(trace, sp, estimation_window=ESTIMATION_WINDOW,
                  control_window=CONTROL_WINDOW):
    """Summarise estimation and control errors of a trace.

    Raises
    ------
    EmptyWindow
        If the trace is empty or a window holds no samples.
    """
    if len(trace.t) == 0:
        raise EmptyWindow("trace is empty")
    t = np.asarray(trace.t)
    est_mask = _window(t, estimation_window)
    ctrl_mask = _window(t, control_window)

    est_err = np.degrees(np.abs(trace.x_hat[est_mask] - trace.x[est_mask]))
    report = MetricsReport(
        estimation_window=tuple(estimation_window), control_window=tuple(control_window)
    )
    for j, name in enumerate(STATE_NAMES):
        report.estimation_mean[name] = float(np.mean(est_err[:, j]))
        report.estimation_sd[name] = float(np.std(est_err[:, j]))

    x = trace.x[ctrl_mask]
    ctrl_err = np.column_stack(
        [
            x[:, PHI_0] - sp.phi_0_star,
            x[:, PHI_1] - sp.phi_1_star,
            x[:, DPHI_0],
            x[:, DPHI_1],
        ]
    )
    ctrl_abs = np.degrees(np.abs(ctrl_err))
    for j, name in enumerate(CONTROL_CHANNELS):
        report.control_mean[name] = float(np.mean(ctrl_abs[:, j]))
        report.control_sd[name] = float(np.std(ctrl_abs[:, j]))
    for j, name in ((PHI_0, "phi_0"), (PHI_1, "phi_1")):
        swing = np.degrees(trace.x[est_mask, j])
        report.oscillation_amplitude[name] = float(0.5 * (swing.max() - swing.min()))
    return report
