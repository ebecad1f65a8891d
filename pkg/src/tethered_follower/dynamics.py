"""Planar leader-payload-follower dynamics.

The leader sits at the origin of a (quasi-)inertial frame. The payload hangs
from it on a cable of length ``l0`` at angle ``phi_0`` from vertical, and the
follower is tethered to the payload by a cable of length ``l1`` at angle
``phi_1``. The follower rolls by ``phi_b`` and produces collective thrust
``f`` along its body up axis.

State vector layout::

    x = [phi_b, dphi_b, phi_0, dphi_0, phi_1, dphi_1]

Input layout::

    u = [tau_b, f]

``tau_b`` is the roll acceleration command (rad/s^2): the roll row of the
mass matrix is normalised so that ``H[0, 0] == 1``. The physical torque is
``Ib * tau_b``.

Measurement layout::

    y = [phi_b, dphi_b, a_y, a_z]

where ``a_y`` and ``a_z`` are the body-frame specific forces seen by the
follower's accelerometer.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import check_positive, check_vector
from .errors import SingularConfiguration

# state indices
PHI_B, DPHI_B, PHI_0, DPHI_0, PHI_1, DPHI_1 = range(6)
ANGLES = (PHI_B, PHI_0, PHI_1)
RATES = (DPHI_B, DPHI_0, DPHI_1)
# input indices
TAU_B, THRUST = range(2)
# measurement indices
Y_PHI_B, Y_DPHI_B, Y_AY, Y_AZ = range(4)

STATE_NAMES = ("phi_b", "dphi_b", "phi_0", "dphi_0", "phi_1", "dphi_1")
MEASUREMENT_NAMES = ("phi_b", "dphi_b", "a_y", "a_z")

SINGULAR_EPS = 1e-3


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the two-robot slung-payload system.

    Parameters
    ----------
    m : float
        Follower mass (kg).
    M : float
        Payload mass (kg).
    l0, l1 : float
        Leader-side and follower-side cable lengths (m).
    Ib : float
        Follower roll inertia (kg m^2). Only scales the physical roll torque.
    g : float
        Gravitational acceleration (m/s^2).
    """

    m: float = 0.073
    M: float = 0.030
    l0: float = 0.94
    l1: float = 0.95
    Ib: float = 6.0e-5
    g: float = 9.81

    def __post_init__(self):
        for name in ("m", "M", "l0", "l1", "Ib", "g"):
            check_positive(getattr(self, name), name)


class ManipulatorTerms(NamedTuple):
    """Terms of ``H(phi) ddphi + C(phi, dphi) + G(phi) = B(phi) u``."""

    H: np.ndarray
    C: np.ndarray
    G: np.ndarray
    B: np.ndarray


def _gravity_vector(p, leader_accel):
    # a leader acceleration a_L shows up as a pseudo-force -m_i a_L on every
    # mass, i.e. as a change of the effective gravity field
    if leader_accel is None:
        return 0.0, -p.g
    a_y, a_z = leader_accel
    return -float(a_y), -p.g - float(a_z)


def manipulator_terms(phi, dphi, p, leader_accel=None):
    """Evaluate the mass matrix, Coriolis, gravity and input terms.

    Parameters
    ----------
    phi : array_like, shape (3,)
        Generalised coordinates ``[phi_b, phi_0, phi_1]`` (rad).
    dphi : array_like, shape (3,)
        Their rates (rad/s).
    p : SystemParams
    leader_accel : array_like, shape (2,), optional
        Leader acceleration ``(a_y, a_z)`` in m/s^2. When given, gravity is
        replaced by the effective field ``(-a_y, -g - a_z)``.

    Returns
    -------
    ManipulatorTerms
    """
    phi_b, phi_0, phi_1 = phi
    _, dphi_0, dphi_1 = dphi
    m, M, l0, l1 = p.m, p.M, p.l0, p.l1
    c01 = np.cos(phi_0 - phi_1)
    s01 = np.sin(phi_0 - phi_1)

    H = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, (m + M) * l0**2, -m * l0 * l1 * c01],
            [0.0, -m * l0 * l1 * c01, m * l1**2],
        ]
    )
    C = np.array(
        [
            0.0,
            -m * l0 * l1 * dphi_1**2 * s01,
            m * l0 * l1 * dphi_0**2 * s01,
        ]
    )
    g_y, g_z = _gravity_vector(p, leader_accel)
    # G_i = -g_eff . sum_j m_j dr_j/dphi_i
    G = np.array(
        [
            0.0,
            -(m + M) * l0 * (g_y * np.cos(phi_0) + g_z * np.sin(phi_0)),
            m * l1 * (g_y * np.cos(phi_1) + g_z * np.sin(phi_1)),
        ]
    )
    B = np.array(
        [
            [1.0, 0.0],
            [0.0, l0 * np.sin(phi_0 - phi_b)],
            [0.0, l1 * np.sin(phi_b - phi_1)],
        ]
    )
    return ManipulatorTerms(H, C, G, B)


def angular_accelerations(x, u, p, leader_accel=None, drag=0.0):
    """Solve the manipulator equation for ``[ddphi_b, ddphi_0, ddphi_1]``.

    Scalar closed form of ``H^-1 (B u - C - G)``; this is the hot path of
    the simulator and of the filter Jacobians.
    """
    phi_b, dphi_b, phi_0, dphi_0, phi_1, dphi_1 = (float(v) for v in x)
    tau_b, f = float(u[0]), float(u[1])
    m, M, l0, l1 = p.m, p.M, p.l0, p.l1
    g_y, g_z = _gravity_vector(p, leader_accel)
    s01 = math.sin(phi_0 - phi_1)
    c01 = math.cos(phi_0 - phi_1)
    mll = m * l0 * l1
    r0 = (
        f * l0 * math.sin(phi_0 - phi_b)
        + mll * dphi_1 * dphi_1 * s01
        + (m + M) * l0 * (g_y * math.cos(phi_0) + g_z * math.sin(phi_0))
        - drag * dphi_0
    )
    r1 = (
        f * l1 * math.sin(phi_b - phi_1)
        - mll * dphi_0 * dphi_0 * s01
        - m * l1 * (g_y * math.cos(phi_1) + g_z * math.sin(phi_1))
        - drag * dphi_1
    )
    h00 = (m + M) * l0 * l0
    h01 = -mll * c01
    h11 = m * l1 * l1
    det = h00 * h11 - h01 * h01
    return (
        tau_b,
        (h11 * r0 - h01 * r1) / det,
        (h00 * r1 - h01 * r0) / det,
    )


def state_derivative(x, u, p, leader_accel=None, drag=0.0):
    """First-order form ``dx/dt = f(x, u)`` of the planar dynamics.

    Parameters
    ----------
    x : array_like, shape (6,)
        State ``[phi_b, dphi_b, phi_0, dphi_0, phi_1, dphi_1]``.
    u : array_like, shape (2,)
        Input ``[tau_b, f]``.
    p : SystemParams
    leader_accel : array_like, shape (2,), optional
        Leader acceleration injected as a pseudo-force. ``None`` means zero.
    drag : float
        Linear damping coefficient (N m s) on the two cable angles.

    Returns
    -------
    ndarray, shape (6,)
    """
    dd_b, dd_0, dd_1 = angular_accelerations(x, u, p, leader_accel, drag)
    return np.array([x[DPHI_B], dd_b, x[DPHI_0], dd_0, x[DPHI_1], dd_1], dtype=float)


def _check_tension_defined(phi_0, phi_1):
    s01 = math.sin(phi_0 - phi_1)
    if abs(s01) <= SINGULAR_EPS:
        raise SingularConfiguration(
            f"cables collinear: |sin(phi_0 - phi_1)| = {abs(s01):.3g} <= {SINGULAR_EPS}"
        )
    return s01


def cable_tension(x, u, p, leader_accel=None, drag=0.0):
    """Tension (N) in the follower-side cable.

    Obtained from the torque balance of the payload about the leader, with
    the payload's angular acceleration taken from :func:`state_derivative`.

    Raises
    ------
    SingularConfiguration
        If ``|sin(phi_0 - phi_1)| <= 1e-3``.
    """
    phi_0 = float(x[PHI_0])
    s01 = _check_tension_defined(phi_0, float(x[PHI_1]))
    ddphi_0 = angular_accelerations(x, u, p, leader_accel, drag)[1]
    g_y, g_z = _gravity_vector(p, leader_accel)
    # gravity torque about the leader: M l0 (g_y cos phi_0 + g_z sin phi_0)
    return p.M * (p.l0 * ddphi_0 - g_y * math.cos(phi_0) - g_z * math.sin(phi_0)) / s01


def measurement(x, u, p, leader_accel=None, drag=0.0):
    """Noise-free IMU output ``[phi_b, dphi_b, a_y, a_z]``.

    Specific forces are the thrust plus the follower-side cable tension,
    divided by the follower mass and resolved in the body frame.
    """
    t1 = cable_tension(x, u, p, leader_accel, drag)
    rel = float(x[PHI_1]) - float(x[PHI_B])
    return np.array(
        [
            x[PHI_B],
            x[DPHI_B],
            -(t1 / p.m) * math.sin(rel),
            (t1 / p.m) * math.cos(rel) - float(u[THRUST]) / p.m,
        ],
        dtype=float,
    )


def positions(phi, p):
    """Payload and follower positions ``(r0, r1)`` in the leader frame.

    ``phi`` may be the 3-vector ``[phi_b, phi_0, phi_1]`` or just
    ``[phi_0, phi_1]``.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape not in ((2,), (3,)):
        raise ValueError(f"phi must hold 2 or 3 angles, got shape {phi.shape}")
    phi_0, phi_1 = phi[-2], phi[-1]
    r0 = np.array([p.l0 * np.sin(phi_0), -p.l0 * np.cos(phi_0)])
    r1 = r0 + np.array([-p.l1 * np.sin(phi_1), p.l1 * np.cos(phi_1)])
    return r0, r1


def velocities(x, p):
    """Payload and follower velocities ``(v0, v1)`` for state ``x``."""
    x = np.asarray(x, dtype=float)
    phi_0, dphi_0, phi_1, dphi_1 = x[PHI_0], x[DPHI_0], x[PHI_1], x[DPHI_1]
    v0 = p.l0 * dphi_0 * np.array([np.cos(phi_0), np.sin(phi_0)])
    v1 = v0 - p.l1 * dphi_1 * np.array([np.cos(phi_1), np.sin(phi_1)])
    return v0, v1


def kinetic_energy(x, p):
    x = np.asarray(x, dtype=float)
    v0, v1 = velocities(x, p)
    return 0.5 * (p.M * v0 @ v0 + p.m * v1 @ v1 + p.Ib * x[DPHI_B] ** 2)


def potential_energy(x, p):
    """Gravitational potential with the datum at the leader."""
    r0, r1 = positions(np.asarray(x, dtype=float)[[PHI_0, PHI_1]], p)
    return p.g * (p.M * r0[1] + p.m * r1[1])


def total_energy(x, p):
    """Kinetic plus potential energy (J)."""
    return kinetic_energy(x, p) + potential_energy(x, p)


def input_power(x, u, p):
    """Mechanical power delivered by the inputs (W).

    The roll channel contributes ``Ib * tau_b * dphi_b`` because ``tau_b``
    is an angular acceleration command.
    """
    x = np.asarray(x, dtype=float)
    tau_b, f = u
    phi_b, phi_0, phi_1 = x[PHI_B], x[PHI_0], x[PHI_1]
    return p.Ib * tau_b * x[DPHI_B] + f * (
        p.l0 * np.sin(phi_0 - phi_b) * x[DPHI_0]
        + p.l1 * np.sin(phi_b - phi_1) * x[DPHI_1]
    )


def as_state(x):
    return check_vector(x, 6, "state")
