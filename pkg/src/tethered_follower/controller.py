"""Feedforward, linearisation and PID stabilisation of the cable angles.

The follower's roll loop is assumed much faster than the slung system, so
thrust ``f`` and roll angle ``phi_b`` act as the inputs of a reduced
two-degree-of-freedom model in ``(phi_0, phi_1)``::

    H_r(phi) ddphi + C_r(phi, dphi) + G_r(phi) = U_r(phi, f, phi_b)
    U_r = [f l0 sin(phi_0 - phi_b), f l1 sin(phi_b - phi_1)]
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_vector
from .dynamics import DPHI_0, DPHI_1, PHI_0, PHI_1, SINGULAR_EPS, SystemParams, manipulator_terms
from .errors import SingularConfiguration


@dataclass(frozen=True)
class Setpoints:
    """Desired constant cable angles (rad)."""

    phi_0_star: float = np.radians(-40.0)
    phi_1_star: float = np.radians(40.0)

    @classmethod
    def from_degrees(cls, phi_0_deg, phi_1_deg):
        return cls(np.radians(phi_0_deg), np.radians(phi_1_deg))

    @property
    def angles(self):
        return np.array([self.phi_0_star, self.phi_1_star])

    @property
    def in_normal_range(self):
        """``-phi_0*`` and ``phi_1*`` both strictly inside (0, pi/2)."""
        half = np.pi / 2
        return 0.0 < -self.phi_0_star < half and 0.0 < self.phi_1_star < half


def _diag2(value):
    return np.diag([float(value), float(value)])


@dataclass
class Gains:
    """PID gains acting on the cable-angle errors.

    ``Kp``, ``Kd`` and ``Ki`` have units s^-2, s^-1 and s^-3 respectively:
    they shape the closed-loop angular acceleration directly.
    """

    Kp: np.ndarray = field(default_factory=lambda: _diag2(4.0))
    Kd: np.ndarray = field(default_factory=lambda: _diag2(3.0))
    Ki: np.ndarray = field(default_factory=lambda: _diag2(0.5))
    integrator_limit: float = np.radians(10.0)  # rad s, per channel
    f_min: float = 0.0
    f_max: float = 2.0

    def __post_init__(self):
        for name in ("Kp", "Kd", "Ki"):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.ndim == 1:
                value = np.diag(value)
            value = check_matrix(value, (2, 2), name)
            setattr(self, name, value)
        if np.any(self.Kp < 0) or np.any(self.Kd < 0):
            raise ValueError("Kp and Kd entries must be non-negative")
        if self.f_min < 0 or self.f_max <= self.f_min:
            raise ValueError(f"invalid thrust limits [{self.f_min}, {self.f_max}]")
        if self.integrator_limit < 0:
            raise ValueError("integrator_limit must be non-negative")


class LinearizedReduced(NamedTuple):
    """Reduced model linearised about the setpoints.

    ``H_r ddDelta + P_r Delta = B_r Delta_u`` with ``Delta_u = (Delta_f, Delta_phi_b)``.
    """

    H_r: np.ndarray
    P_r: np.ndarray
    B_r: np.ndarray

    @property
    def gain_map(self):
        """``H_r^-1 B_r``, the map from input deviation to angular acceleration."""
        return np.linalg.solve(self.H_r, self.B_r)


def reduced_gravity(phi_0, phi_1, p):
    """``G_r``: last two rows of the gravity vector."""
    return np.array(
        [(p.m + p.M) * p.g * p.l0 * np.sin(phi_0), -p.m * p.g * p.l1 * np.sin(phi_1)]
    )


def reduced_input(phi_0, phi_1, f, phi_b, p):
    """``U_r``: generalised forces of the thrust on the two cable angles."""
    return np.array(
        [f * p.l0 * np.sin(phi_0 - phi_b), f * p.l1 * np.sin(phi_b - phi_1)]
    )


def feedforward(sp, p):
    """Thrust and roll angle holding the system still at the setpoints.

    Substituting ``(a, b) = (f cos phi_b, f sin phi_b)`` turns the static
    balance ``G_r = U_r`` into a 2x2 linear system.

    Returns
    -------
    f_star : float
        Collective thrust (N).
    phi_b_star : float
        Roll angle (rad).

    Raises
    ------
    SingularConfiguration
        If the setpoints make the cables collinear.
    """
    s0, c0 = np.sin(sp.phi_0_star), np.cos(sp.phi_0_star)
    s1, c1 = np.sin(sp.phi_1_star), np.cos(sp.phi_1_star)
    # determinant of the system below is sin(phi_1* - phi_0*)
    if abs(np.sin(sp.phi_0_star - sp.phi_1_star)) <= SINGULAR_EPS:
        raise SingularConfiguration("setpoints make the cables collinear")
    A = np.array([[s0, -c0], [-s1, c1]])
    rhs = np.array([(p.m + p.M) * p.g * s0, -p.m * p.g * s1])
    a, b = np.linalg.solve(A, rhs)
    f_star = float(np.hypot(a, b))
    phi_b_star = float(np.arctan2(b, a))
    return f_star, phi_b_star


def linearize_reduced(sp, u_star, p):
    """Linearise the reduced dynamics about ``(sp, u_star)``.

    Parameters
    ----------
    sp : Setpoints
    u_star : tuple of float
        Feedforward ``(f*, phi_b*)`` from :func:`feedforward`.
    p : SystemParams

    Returns
    -------
    LinearizedReduced

    Raises
    ------
    SingularConfiguration
        If ``det(B_r)`` (proportional to ``sin(phi_0* - phi_1*)``) vanishes.
    """
    f, phi_b = u_star
    phi_0, phi_1 = sp.phi_0_star, sp.phi_1_star
    terms = manipulator_terms(np.array([phi_b, phi_0, phi_1]), np.zeros(3), p)
    H_r = terms.H[1:, 1:].copy()
    # G_r - U_r is separable in phi_0, phi_1 so P_r is diagonal
    P_r = np.diag(
        [
            (p.m + p.M) * p.g * p.l0 * np.cos(phi_0) - f * p.l0 * np.cos(phi_0 - phi_b),
            -p.m * p.g * p.l1 * np.cos(phi_1) + f * p.l1 * np.cos(phi_b - phi_1),
        ]
    )
    B_r = np.array(
        [
            [p.l0 * np.sin(phi_0 - phi_b), -f * p.l0 * np.cos(phi_0 - phi_b)],
            [p.l1 * np.sin(phi_b - phi_1), f * p.l1 * np.cos(phi_b - phi_1)],
        ]
    )
    expected_det = f * p.l0 * p.l1 * np.sin(phi_0 - phi_1)
    if abs(expected_det) <= SINGULAR_EPS * f * p.l0 * p.l1:
        raise SingularConfiguration("reduced input matrix is singular at these setpoints")
    return LinearizedReduced(H_r, P_r, B_r)


def control(state, sp, gains, lin, u_star, integ, dt):
    """One tick of the cable-angle PID law.

    Parameters
    ----------
    state : array_like, shape (6,)
        Full state (true or estimated). Only the cable angles and their
        rates are used; the roll is left to the inner attitude loop.
    sp : Setpoints
    gains : Gains
    lin : LinearizedReduced
    u_star : tuple of float
        Feedforward ``(f*, phi_b*)``.
    integ : array_like, shape (2,)
        Accumulated angle error (rad s).
    dt : float
        Control period (s).

    Returns
    -------
    f : float
        Thrust command (N), clamped to ``[f_min, f_max]``.
    phi_b_cmd : float
        Roll command (rad) for the inner loop.
    integ : ndarray, shape (2,)
        Updated integrator. Frozen while the thrust saturates.
    """
    state = np.asarray(state, dtype=float)
    integ = np.asarray(integ, dtype=float)
    err = state[[PHI_0, PHI_1]] - sp.angles
    derr = state[[DPHI_0, DPHI_1]]
    gain_map = lin.gain_map
    f_star, phi_b_star = u_star

    def law(acc_integ):
        accel = -gains.Kp @ err - gains.Kd @ derr - gains.Ki @ acc_integ
        return np.linalg.solve(gain_map, accel)

    lim = gains.integrator_limit
    candidate = np.clip(integ + err * dt, -lim, lim)
    du = law(candidate)
    f_raw = f_star + du[0]
    if f_raw < gains.f_min or f_raw > gains.f_max:
        candidate = integ.copy()
        du = law(candidate)
        f_raw = f_star + du[0]
    f = float(np.clip(f_raw, gains.f_min, gains.f_max))
    return f, float(phi_b_star + du[1]), candidate


def closed_loop_matrix(lin, gains, with_integral=False):
    """State matrix of the linearised closed loop.

    Without the integral term the state is ``(Delta, dDelta)`` (4x4). With
    it, ``(int Delta, Delta, dDelta)`` (6x6).
    """
    a_open = -np.linalg.solve(lin.H_r, lin.P_r)
    z, eye = np.zeros((2, 2)), np.eye(2)
    if not with_integral:
        return np.block([[z, eye], [a_open - gains.Kp, -gains.Kd]])
    return np.block(
        [
            [z, eye, z],
            [z, z, eye],
            [-gains.Ki, a_open - gains.Kp, -gains.Kd],
        ]
    )


class CableAngleController(BaseEstimator):
    """Estimator-style wrapper around the feedforward + PID law.

    ``fit`` solves the feedforward and the linearisation; ``predict`` maps a
    sequence of states to ``(f, phi_b_cmd)`` commands, threading the
    integrator through the sequence.

    Parameters
    ----------
    params : SystemParams, optional
    setpoints : Setpoints, optional
    gains : Gains, optional
    dt : float
        Control period (s).
    """

    def __init__(self, params=None, setpoints=None, gains=None, dt=1.0 / 200.0):
        self.params = params
        self.setpoints = setpoints
        self.gains = gains
        self.dt = dt

    def fit(self, X=None, y=None):
        p = self.params if self.params is not None else SystemParams()
        sp = self.setpoints if self.setpoints is not None else Setpoints()
        self.params_ = p
        self.setpoints_ = sp
        self.gains_ = self.gains if self.gains is not None else Gains()
        self.u_star_ = feedforward(sp, p)
        self.linearization_ = linearize_reduced(sp, self.u_star_, p)
        self.integ_ = np.zeros(2)
        return self

    def reset(self):
        self.integ_ = np.zeros(2)
        return self

    def step(self, state):
        """Command for one state, advancing the internal integrator."""
        check_is_fitted(self, "u_star_")
        f, phi_b_cmd, self.integ_ = control(
            check_vector(state, 6, "state"),
            self.setpoints_,
            self.gains_,
            self.linearization_,
            self.u_star_,
            self.integ_,
            self.dt,
        )
        return f, phi_b_cmd

    def predict(self, X):
        """Commands for a sequence of states, shape ``(n, 2)``."""
        check_is_fitted(self, "u_star_")
        X = np.atleast_2d(X)
        X = check_matrix(X, (X.shape[0], 6), "X")
        return np.array([self.step(row) for row in X])
