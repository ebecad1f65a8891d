"""Simulation, IMU-only state estimation and cable-angle control for a
follower quadrotor tethered to a slung payload held by a quasi-static leader."""

from .controller import (
    CableAngleController,
    Gains,
    LinearizedReduced,
    Setpoints,
    control,
    feedforward,
    linearize_reduced,
)
from .dynamics import (
    ManipulatorTerms,
    SystemParams,
    cable_tension,
    manipulator_terms,
    measurement,
    positions,
    state_derivative,
    total_energy,
)
from .errors import (
    ConfigError,
    EmptyWindow,
    InvalidRange,
    NoConvergence,
    NonFinite,
    SingularConfiguration,
)
from .estimator import EstimatorConfig, EstimatorState, LambdaEKF, jacobian_fd, predict, update
from .sim import (
    LeaderTrajectory,
    NoiseConfig,
    SimConfig,
    SimulationAborted,
    Trace,
    inner_roll_loop,
    run_scenario,
    sample_imu,
    step_rk4,
)

__version__ = "0.1.0"
