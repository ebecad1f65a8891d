"""Run configuration files and the CSV trace format.

Configuration files are INI-style ``key = value`` sections::

    [params]     m, M, l0, l1, Ib, g
    [sim]        mode, dt, duration, seed, drag, substeps, thrust_bias,
                 initial_offset (2 values), estimate_offset (2 values)
    [noise]      sigma_phi_b, sigma_dphi_b, sigma_acc, sigma_process (6 values)
    [estimator]  lambda, q_diag (6 values), r_diag (4 values), p0_sigma (6 values),
                 fd_step
    [gains]      kp, kd, ki (2 values each), integrator_limit, f_min, f_max
    [setpoints]  phi_0, phi_1
    [leader]     kind, amplitude, period, axis

Angles are written in degrees (rates in deg/s, integrator limit in deg s)
and converted to radians on load. Covariance diagonals (``q_diag``,
``r_diag``) stay in SI units. Every key is optional; unknown sections or
keys are rejected.
"""

import configparser
import csv
import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .controller import Gains, Setpoints
from .dynamics import SystemParams
from .errors import ConfigError
from .estimator import DEFAULT_P0_DIAG, DEFAULT_Q_DIAG, EstimatorConfig, default_r
from .sim import MODES, LeaderTrajectory, NoiseConfig, SimConfig, Trace

PRESETS = ("openloop", "truth", "estimated", "two-robot")

CSV_COLUMNS = (
    "t",
    "phi_b", "dphi_b", "phi_0", "dphi_0", "phi_1", "dphi_1",
    "est_phi_b", "est_dphi_b", "est_phi_0", "est_dphi_0", "est_phi_1", "est_dphi_1",
    "y_phi_b", "y_dphi_b", "y_ay", "y_az",
    "f_cmd", "phi_b_cmd", "tau_b",
    "sigma_diag_0", "sigma_diag_1", "sigma_diag_2",
    "sigma_diag_3", "sigma_diag_4", "sigma_diag_5",
    "aL_y", "aL_z",
)

# key -> (kind, count, scale to SI)
DEG = np.pi / 180.0
SCHEMA = {
    "params": {
        "m": ("float", 1, 1.0), "M": ("float", 1, 1.0), "l0": ("float", 1, 1.0),
        "l1": ("float", 1, 1.0), "Ib": ("float", 1, 1.0), "g": ("float", 1, 1.0),
    },
    "sim": {
        "mode": ("str", 1, None), "dt": ("float", 1, 1.0), "duration": ("float", 1, 1.0),
        "seed": ("int", 1, None), "drag": ("float", 1, 1.0), "substeps": ("int", 1, None),
        "thrust_bias": ("float", 1, 1.0), "initial_offset": ("float", 2, DEG),
        "estimate_offset": ("float", 2, DEG),
    },
    "noise": {
        "sigma_phi_b": ("float", 1, DEG), "sigma_dphi_b": ("float", 1, DEG),
        "sigma_acc": ("float", 1, 1.0),
        "sigma_process": ("float", 6, np.array([DEG, DEG, DEG, DEG, DEG, DEG])),
    },
    "estimator": {
        "lambda": ("float", 1, 1.0), "q_diag": ("float", 6, 1.0), "r_diag": ("float", 4, 1.0),
        "p0_sigma": ("float", 6, DEG), "fd_step": ("float", 1, 1.0),
    },
    "gains": {
        "kp": ("float", 2, 1.0), "kd": ("float", 2, 1.0), "ki": ("float", 2, 1.0),
        "integrator_limit": ("float", 1, DEG), "f_min": ("float", 1, 1.0),
        "f_max": ("float", 1, 1.0),
    },
    "setpoints": {"phi_0": ("float", 1, DEG), "phi_1": ("float", 1, DEG)},
    "leader": {
        "kind": ("str", 1, None), "amplitude": ("float", 1, 1.0),
        "period": ("float", 1, 1.0), "axis": ("str", 1, None),
    },
}


@dataclass
class RunConfig:
    """Everything needed to run one scenario."""

    mode: str = "estimated_feedback"
    params: SystemParams = field(default_factory=SystemParams)
    sim: SimConfig = field(default_factory=SimConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    gains: Gains = field(default_factory=Gains)
    setpoints: Setpoints = field(default_factory=Setpoints)
    leader: LeaderTrajectory = field(default_factory=LeaderTrajectory)


def _parse_value(path, raw, kind, count, scale):
    tokens = raw.replace(",", " ").split()
    if len(tokens) != count:
        raise ConfigError(f"{path}: expected {count} value(s), got {len(tokens)}")
    try:
        if kind == "str":
            return tokens[0]
        if kind == "int":
            return int(tokens[0])
        values = np.array([float(tok) for tok in tokens])
    except ValueError:
        raise ConfigError(f"{path}: cannot parse {raw!r} as {kind}") from None
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{path}: values must be finite")
    values = values * scale
    return float(values[0]) if count == 1 else values


def _read_sections(text):
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), default_section="__none__"
    )
    parser.optionxform = str  # keep 'm' and 'M' distinct
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config: {exc}") from None
    parsed = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        values = {}
        for key, raw in parser.items(section):
            path = f"{section}.{key}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key")
            values[key] = _parse_value(path, raw, *SCHEMA[section][key])
        parsed[section] = values
    return parsed


def _build(section, factory, kwargs):
    try:
        return factory(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def parse_config(text):
    """Parse and validate configuration text into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        With a ``section.key`` path prefix describing the offending field.
    """
    raw = _read_sections(text)

    params = _build("params", SystemParams, raw.get("params", {}))

    sim_raw = dict(raw.get("sim", {}))
    mode = sim_raw.pop("mode", "estimated_feedback")
    if mode not in MODES:
        raise ConfigError(f"sim.mode: must be one of {', '.join(MODES)}, got {mode!r}")
    for key in ("initial_offset", "estimate_offset"):
        if key in sim_raw:
            sim_raw[key] = tuple(sim_raw[key])
    sim = _build("sim", SimConfig, sim_raw)

    noise = _build("noise", NoiseConfig, raw.get("noise", {}))

    est_raw = raw.get("estimator", {})
    est_kwargs = {
        "lam": est_raw.get("lambda", 0.8),
        "Q": np.diag(est_raw.get("q_diag", np.array(DEFAULT_Q_DIAG))),
        "fd_step": est_raw.get("fd_step", 1e-6),
    }
    if "r_diag" in est_raw:
        est_kwargs["R"] = np.diag(est_raw["r_diag"])
    else:
        est_kwargs["R"] = default_r(noise.sigma_phi_b, noise.sigma_dphi_b, noise.sigma_acc)
        if np.min(np.diag(est_kwargs["R"])) <= 0.0:
            raise ConfigError("estimator.r_diag: required when any measurement noise is zero")
    if "p0_sigma" in est_raw:
        est_kwargs["P0"] = np.diag(est_raw["p0_sigma"] ** 2)
    else:
        est_kwargs["P0"] = np.diag(DEFAULT_P0_DIAG)
    estimator = _build("estimator", EstimatorConfig, est_kwargs)

    gains_raw = raw.get("gains", {})
    gain_kwargs = {}
    for key in ("kp", "kd", "ki"):
        if key in gains_raw:
            gain_kwargs[key.capitalize()] = np.diag(gains_raw[key])
    for key in ("integrator_limit", "f_min", "f_max"):
        if key in gains_raw:
            gain_kwargs[key] = gains_raw[key]
    gains = _build("gains", Gains, gain_kwargs)

    sp_raw = raw.get("setpoints", {})
    default_sp = Setpoints()
    setpoints = _build("setpoints", Setpoints, {
        "phi_0_star": sp_raw.get("phi_0", default_sp.phi_0_star),
        "phi_1_star": sp_raw.get("phi_1", default_sp.phi_1_star),
    })
    leader = _build("leader", LeaderTrajectory, raw.get("leader", {}))
    return RunConfig(mode, params, sim, noise, estimator, gains, setpoints, leader)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def preset_text(name):
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("tethered_follower").joinpath("presets", f"{name}.ini").read_text(
        encoding="utf-8"
    )


def load_preset(name):
    return parse_config(preset_text(name))


def _fmt(value):
    return "%.9g" % value


def trace_to_csv(trace):
    """Serialise a trace with the fixed column order and 9 significant digits."""
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    rows = np.column_stack(
        [trace.t, trace.x, trace.x_hat, trace.y, trace.u, trace.sigma_diag, trace.leader_accel]
    )
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_trace(trace, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(trace_to_csv(trace))


class TraceFormatError(ValueError):
    """Malformed trace CSV; ``line`` is the 1-based offending line."""

    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_trace(source):
    """Parse a trace CSV from a path or an open text stream.

    Raises
    ------
    TraceFormatError
        For a wrong header, wrong column count or non-numeric cell.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_trace(fh)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise TraceFormatError("empty file", 1) from None
    if tuple(h.strip() for h in header) != CSV_COLUMNS:
        raise TraceFormatError("unexpected header", 1)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise TraceFormatError(
                f"expected {len(CSV_COLUMNS)} columns, got {len(row)}", lineno
            )
        try:
            rows.append([float(cell) for cell in row])
        except ValueError:
            raise TraceFormatError("non-numeric value", lineno) from None
    data = np.array(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
    return Trace(
        t=data[:, 0],
        x=data[:, 1:7],
        x_hat=data[:, 7:13],
        y=data[:, 13:17],
        u=data[:, 17:20],
        sigma_diag=data[:, 20:26],
        leader_accel=data[:, 26:28],
    )
