"""Fixed-step simulation of the follower, its IMU and the closed loop.

Integration, sensing and control share one tick (``dt``, 200 Hz by
default). Inputs are held constant over a tick; ``substeps`` subdivides the
RK4 integration inside it without changing the control rate.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import check_nonnegative, check_positive, check_vector
from .controller import Gains, Setpoints, control, feedforward, linearize_reduced
from .dynamics import (
    DPHI_B,
    PHI_0,
    PHI_1,
    PHI_B,
    SystemParams,
    measurement,
    state_derivative,
)
from .errors import NonFinite, TetheredFollowerError
from .estimator import EstimatorConfig, predict, update

MODES = ("openloop", "truth_feedback", "estimated_feedback")

# inner roll loop: natural frequency 40 rad/s, damping 0.8
ROLL_KP = 1600.0
ROLL_KD = 64.0


@dataclass
class SimConfig:
    """Timing and initial-condition settings of a rollout.

    Parameters
    ----------
    dt : float
        Tick length (s).
    duration : float
        Simulated time (s).
    seed : int
        Seed of the noise generator.
    drag : float
        Linear damping on the cable angles (N m s).
    substeps : int
        RK4 substeps per tick.
    thrust_bias : float
        Applied thrust is ``(1 + thrust_bias)`` times the commanded thrust.
    initial_offset : tuple of float
        Offset of ``(phi_0, phi_1)`` from the setpoints at t = 0 (rad).
    estimate_offset : tuple of float
        Offset of the filter's initial ``(phi_0, phi_1)`` from the setpoints
        (rad). The filter never sees the true initial offset.
    """

    dt: float = 1.0 / 200.0
    duration: float = 60.0
    seed: int = 0
    drag: float = 0.0
    substeps: int = 1
    thrust_bias: float = 0.0
    initial_offset: tuple = (np.radians(10.0), np.radians(10.0))
    estimate_offset: tuple = (0.0, 0.0)

    def __post_init__(self):
        check_positive(self.dt, "dt")
        check_positive(self.duration, "duration")
        check_nonnegative(self.drag, "drag")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")
        self.substeps = int(self.substeps)
        self.initial_offset = tuple(float(v) for v in self.initial_offset)
        self.estimate_offset = tuple(float(v) for v in self.estimate_offset)

    @property
    def n_ticks(self):
        return int(round(self.duration / self.dt)) + 1


@dataclass
class NoiseConfig:
    """Standard deviations of the additive white noises.

    ``sigma_process`` is the per-tick standard deviation added to each state
    component after integration.
    """

    sigma_phi_b: float = np.radians(0.5)
    sigma_dphi_b: float = np.radians(0.3)
    sigma_acc: float = 0.05
    sigma_process: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        for name in ("sigma_phi_b", "sigma_dphi_b", "sigma_acc"):
            check_nonnegative(getattr(self, name), name)
        self.sigma_process = np.asarray(self.sigma_process, dtype=float)
        if self.sigma_process.shape != (6,) or np.any(self.sigma_process < 0):
            raise ValueError("sigma_process must be 6 non-negative values")

    @property
    def measurement_sigma(self):
        return np.array(
            [self.sigma_phi_b, self.sigma_dphi_b, self.sigma_acc, self.sigma_acc]
        )

    @classmethod
    def noiseless(cls):
        return cls(0.0, 0.0, 0.0)


@dataclass
class LeaderTrajectory:
    """Idealised leader motion, expressed as its acceleration.

    ``sinusoid`` moves the leader as ``amplitude * sin(2 pi t / period)``
    along ``axis``. ``waypoint-ramp`` moves it from 0 to ``amplitude`` over
    one period with a cosine-smoothed profile, holds for a period, returns,
    holds, and repeats.
    """

    kind: str = "fixed"
    amplitude: float = 0.1
    period: float = 10.0
    axis: str = "y"

    def __post_init__(self):
        if self.kind not in ("fixed", "sinusoid", "waypoint-ramp"):
            raise ValueError(f"unknown leader trajectory kind {self.kind!r}")
        if self.axis not in ("y", "z"):
            raise ValueError(f"axis must be 'y' or 'z', got {self.axis!r}")
        check_positive(self.period, "period")

    def position(self, t):
        return self._profile(t)[0]

    def acceleration(self, t):
        """Leader acceleration ``(a_y, a_z)`` at time ``t`` (m/s^2)."""
        acc = self._profile(t)[1]
        return (acc, 0.0) if self.axis == "y" else (0.0, acc)

    def _profile(self, t):
        if self.kind == "fixed":
            return 0.0, 0.0
        a, period = self.amplitude, self.period
        if self.kind == "sinusoid":
            w = 2.0 * np.pi / period
            return a * np.sin(w * t), -a * w * w * np.sin(w * t)
        phase, tau = divmod(t, period)
        phase = int(phase) % 4
        s = 0.5 * (1.0 - np.cos(np.pi * tau / period))
        acc = a * (np.pi / period) ** 2 * 0.5 * np.cos(np.pi * tau / period)
        if phase == 0:
            return a * s, acc
        if phase == 1:
            return a, 0.0
        if phase == 2:
            return a * (1.0 - s), -acc
        return 0.0, 0.0


@dataclass
class Trace:
    """Time series of one rollout, one row per tick."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    x_hat: np.ndarray
    sigma_diag: np.ndarray
    u: np.ndarray  # columns: f_cmd, phi_b_cmd, tau_b
    leader_accel: np.ndarray
    nis: Optional[np.ndarray] = None
    # [tau_b, f] the filter used at each tick (not part of the CSV schema)
    u_filter: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)

    def truncate(self, n):
        return Trace(
            self.t[:n], self.x[:n], self.y[:n], self.x_hat[:n], self.sigma_diag[:n],
            self.u[:n], self.leader_accel[:n],
            None if self.nis is None else self.nis[:n],
            None if self.u_filter is None else self.u_filter[:n],
        )


class SimulationAborted(TetheredFollowerError):
    """A rollout stopped early; ``trace`` holds every tick completed so far."""

    def __init__(self, message, trace, cause):
        super().__init__(message)
        self.trace = trace
        self.cause = cause


def step_rk4(x, u, dt, p, a_L=None, drag=0.0):
    """One classical Runge-Kutta step of the planar dynamics."""
    x = np.asarray(x, dtype=float)
    k1 = state_derivative(x, u, p, a_L, drag)
    k2 = state_derivative(x + 0.5 * dt * k1, u, p, a_L, drag)
    k3 = state_derivative(x + 0.5 * dt * k2, u, p, a_L, drag)
    k4 = state_derivative(x + dt * k3, u, p, a_L, drag)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise NonFinite(f"state left the reals: {x_next}")
    return x_next


def inner_roll_loop(phi_b, dphi_b, phi_b_cmd, kp=ROLL_KP, kd=ROLL_KD):
    """PD attitude loop standing in for the stock roll controller.

    Returns the roll acceleration command ``tau_b`` (rad/s^2).
    """
    return kp * (phi_b_cmd - phi_b) - kd * dphi_b


def sample_imu(x, u, p, n, rng, leader_accel=None, drag=0.0):
    """Noisy IMU sample: the true measurement plus white Gaussian noise."""
    y = measurement(x, u, p, leader_accel, drag)
    return y + n.measurement_sigma * rng.standard_normal(4)


def equilibrium_state(sp, p):
    """State at rest on the setpoints with the feedforward roll angle."""
    _, phi_b_star = feedforward(sp, p)
    return np.array([phi_b_star, 0.0, sp.phi_0_star, 0.0, sp.phi_1_star, 0.0])


def run_scenario(mode, p=None, sim_cfg=None, noise_cfg=None, leader=None,
                 est_cfg=None, gains=None, setpoints=None):
    """Roll out one closed-loop (or open-loop) flight.

    Parameters
    ----------
    mode : {"openloop", "truth_feedback", "estimated_feedback"}
        Which signal the cable-angle controller consumes. ``openloop``
        applies the feedforward only. The filter runs in every mode.
    p, sim_cfg, noise_cfg, leader, est_cfg, gains, setpoints
        Configuration objects; ``None`` selects the defaults.

    Returns
    -------
    Trace

    Raises
    ------
    SimulationAborted
        On a non-finite state or a singular cable configuration; the partial
        trace is attached.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    p = p or SystemParams()
    sim_cfg = sim_cfg or SimConfig()
    noise_cfg = noise_cfg or NoiseConfig()
    leader = leader or LeaderTrajectory()
    gains = gains or Gains()
    setpoints = setpoints or Setpoints()

    u_star = feedforward(setpoints, p)
    lin = linearize_reduced(setpoints, u_star, p)
    x_eq = equilibrium_state(setpoints, p)

    x = x_eq.copy()
    x[[PHI_0, PHI_1]] += sim_cfg.initial_offset
    if est_cfg is None:
        est_cfg = EstimatorConfig()
    if est_cfg.x0 is None:
        x0_hat = x_eq.copy()
        x0_hat[[PHI_0, PHI_1]] += sim_cfg.estimate_offset
        est_cfg = EstimatorConfig(
            lam=est_cfg.lam, Q=est_cfg.Q, R=est_cfg.R, x0=x0_hat, P0=est_cfg.P0,
            fd_step=est_cfg.fd_step,
        )
    est = est_cfg.initial_state()

    rng = np.random.default_rng(sim_cfg.seed)
    dt = sim_cfg.dt
    h = dt / sim_cfg.substeps
    n = sim_cfg.n_ticks

    ts = np.arange(n) * dt
    xs = np.full((n, 6), np.nan)
    ys = np.full((n, 4), np.nan)
    xhs = np.full((n, 6), np.nan)
    sds = np.full((n, 6), np.nan)
    us = np.full((n, 3), np.nan)
    aLs = np.full((n, 2), np.nan)
    nis = np.full(n, np.nan)
    ufs = np.full((n, 2), np.nan)

    integ = np.zeros(2)
    f_cmd, phi_b_cmd = u_star
    u_model = np.array([inner_roll_loop(x[PHI_B], x[DPHI_B], phi_b_cmd), f_cmd])
    completed = 0
    try:
        for k in range(n):
            a_L = leader.acceleration(ts[k])
            u_applied = np.array([u_model[0], (1.0 + sim_cfg.thrust_bias) * u_model[1]])
            # the IMU sees the input held over the tick that just ended
            y = sample_imu(x, u_applied, p, noise_cfg, rng, a_L, sim_cfg.drag)
            u_filter = u_model
            if k > 0:
                est = predict(est, u_filter, dt, p, est_cfg)
            est = update(est, y, u_filter, p, est_cfg)

            if mode == "openloop":
                f_cmd, phi_b_cmd = u_star
            else:
                feedback = x if mode == "truth_feedback" else est.x
                f_cmd, phi_b_cmd, integ = control(
                    feedback, setpoints, gains, lin, u_star, integ, dt
                )
            tau_b = inner_roll_loop(x[PHI_B], x[DPHI_B], phi_b_cmd)
            u_model = np.array([tau_b, f_cmd])

            xs[k], ys[k], xhs[k] = x, y, est.x
            sds[k] = np.sqrt(np.clip(np.diag(est.P), 0.0, None))
            us[k] = (f_cmd, phi_b_cmd, tau_b)
            aLs[k] = a_L
            nis[k] = est.nis
            ufs[k] = u_filter
            completed = k + 1

            if k == n - 1:
                break
            u_applied = np.array([tau_b, (1.0 + sim_cfg.thrust_bias) * f_cmd])
            for _ in range(sim_cfg.substeps):
                x = step_rk4(x, u_applied, h, p, a_L, sim_cfg.drag)
            if np.any(noise_cfg.sigma_process):
                x = x + noise_cfg.sigma_process * rng.standard_normal(6)
    except (NonFinite, TetheredFollowerError) as exc:
        trace = Trace(ts, xs, ys, xhs, sds, us, aLs, nis, ufs).truncate(completed)
        raise SimulationAborted(f"{mode} rollout aborted at tick {completed}: {exc}",
                                trace, exc) from exc
    return Trace(ts, xs, ys, xhs, sds, us, aLs, nis, ufs)


