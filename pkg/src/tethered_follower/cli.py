"""Command-line front end: ``run``, ``analyze`` and ``linearize``.

Exit codes: 0 success, 2 configuration or input error, 3 simulation abort
or singular setpoints.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis
from .config import (
    PRESETS,
    TraceFormatError,
    load_config,
    load_preset,
    read_trace,
    trace_to_csv,
)
from .controller import Setpoints, feedforward, linearize_reduced
from .errors import ConfigError, EmptyWindow, SingularConfiguration
from .sim import SimulationAborted, equilibrium_state, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

MODE_ALIASES = {
    "openloop": "openloop",
    "truth": "truth_feedback",
    "truth_feedback": "truth_feedback",
    "estimated": "estimated_feedback",
    "estimated_feedback": "estimated_feedback",
}


def _resolve_config(config_path=None, preset=None):
    if config_path and preset:
        raise ConfigError("config: give either --config or --preset, not both")
    if preset:
        return load_preset(preset)
    if config_path:
        return load_config(config_path)
    raise ConfigError("config: one of --config or --preset is required")


def _simulate(cfg):
    return run_scenario(
        cfg.mode, cfg.params, cfg.sim, cfg.noise, cfg.leader, cfg.estimator,
        cfg.gains, cfg.setpoints,
    )


def _write_and_summarise(trace, out_path, setpoints):
    """Write the CSV and compute metrics from exactly what was written."""
    text = trace_to_csv(trace)
    out_path = Path(out_path)
    out_path.write_text(text, encoding="utf-8")
    with open(out_path, encoding="utf-8", newline="") as fh:
        stored = read_trace(fh)
    return analysis.trace_metrics(stored, setpoints)


def _run_one(cfg, out_path):
    """Run a scenario; returns (exit code, metrics text or error message)."""
    try:
        trace = _simulate(cfg)
    except SimulationAborted as exc:
        Path(out_path).write_text(trace_to_csv(exc.trace), encoding="utf-8")
        return EXIT_ABORT, f"simulation aborted: {exc}"
    try:
        report = _write_and_summarise(trace, out_path, cfg.setpoints)
    except EmptyWindow as exc:
        # the trace is written; it is just too short for the metric windows
        print(f"warning: no metrics: {exc}", file=sys.stderr)
        return EXIT_OK, "[metrics]"
    return EXIT_OK, report.to_text()


def _sweep_job(args):
    cfg, out_path = args
    return _run_one(cfg, out_path)


def sweep_seeds(base_seed, n):
    """Per-run seeds derived deterministically from ``base_seed``."""
    children = np.random.SeedSequence(base_seed).spawn(n)
    return [int(child.generate_state(1)[0]) for child in children]


def cmd_run(config_path=None, out_path="trace.csv", seed_override=None,
            mode_override=None, preset=None, sweep=None, stdout=None):
    """Run a scenario, write its CSV trace and print a metrics block."""
    stdout = stdout or sys.stdout
    try:
        cfg = _resolve_config(config_path, preset)
        if mode_override is not None:
            if mode_override not in MODE_ALIASES:
                raise ConfigError(
                    f"sim.mode: must be one of {', '.join(sorted(MODE_ALIASES))}"
                )
            cfg.mode = MODE_ALIASES[mode_override]
        if seed_override is not None:
            cfg.sim = replace(cfg.sim, seed=int(seed_override))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if not sweep:
        code, text = _run_one(cfg, out_path)
        print(text, file=stdout if code == EXIT_OK else sys.stderr)
        return code

    out = Path(out_path)
    jobs = []
    for i, seed in enumerate(sweep_seeds(cfg.sim.seed, sweep)):
        run_cfg = replace(cfg, sim=replace(cfg.sim, seed=seed))
        jobs.append((run_cfg, out.with_name(f"{out.stem}_{i:03d}{out.suffix or '.csv'}")))
    with ProcessPoolExecutor() as pool:
        results = list(pool.map(_sweep_job, jobs))
    worst = EXIT_OK
    for i, ((run_cfg, path), (code, text)) in enumerate(zip(jobs, results)):
        print(f"# run {i} seed {run_cfg.sim.seed} -> {path}", file=stdout)
        print(text, file=stdout if code == EXIT_OK else sys.stderr)
        worst = max(worst, code)
    return worst


def cmd_analyze(trace_path, setpoints=None, stdout=None):
    """Print the metrics block of a stored trace."""
    stdout = stdout or sys.stdout
    setpoints = setpoints or Setpoints()
    try:
        trace = read_trace(trace_path)
        report = analysis.trace_metrics(trace, setpoints)
    except TraceFormatError as exc:
        print(f"error: {trace_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read {trace_path}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyWindow as exc:
        print(f"error: {trace_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.to_text(), file=stdout)
    return EXIT_OK


def _matrix_text(mat):
    return "; ".join(" ".join("%.9g" % v for v in row) for row in np.atleast_2d(mat))


def cmd_linearize(config_path=None, preset=None, stdout=None):
    """Print the feedforward, linearised matrices, eigenvalues and ranks."""
    stdout = stdout or sys.stdout
    try:
        cfg = _resolve_config(config_path, preset)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    p, sp = cfg.params, cfg.setpoints
    try:
        f_star, phi_b_star = feedforward(sp, p)
        lin = linearize_reduced(sp, (f_star, phi_b_star), p)
        eigs = analysis.open_loop_eigs(sp, p)
        x0 = equilibrium_state(sp, p)
        u0 = np.array([0.0, f_star])
        obs_rank, _ = analysis.observability_rank(x0, u0, p)
        ctrl_rank, _ = analysis.controllability_rank(x0, u0, p)
    except SingularConfiguration as exc:
        print(f"error: singular setpoints: {exc}", file=sys.stderr)
        return EXIT_ABORT
    lines = [
        "[linearization]",
        f"f_star = {f_star:.12g}",
        f"phi_b_star_deg = {np.degrees(phi_b_star):.12g}",
        f"H_r = {_matrix_text(lin.H_r)}",
        f"P_r = {_matrix_text(lin.P_r)}",
        f"B_r = {_matrix_text(lin.B_r)}",
        "open_loop_eigs = "
        + " ".join(f"{e.real:.9g}{e.imag:+.9g}j" for e in sorted(eigs, key=lambda z: z.imag)),
        f"observability_rank = {obs_rank}",
        f"controllability_rank = {ctrl_rank}",
    ]
    print("\n".join(lines), file=stdout)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tethered-follower",
        description="Simulate, estimate and control a follower quadrotor tethered to a slung payload.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write a CSV trace")
    run.add_argument("--config", help="INI configuration file")
    run.add_argument("--preset", choices=PRESETS, help="built-in scenario")
    run.add_argument("--out", default="trace.csv", help="output CSV path")
    run.add_argument("--seed", type=int, help="override the noise seed")
    run.add_argument("--mode", choices=sorted(MODE_ALIASES), help="override the feedback mode")
    run.add_argument("--sweep", type=int, metavar="N",
                     help="run N seeds in parallel (files get a _NNN suffix)")

    ana = sub.add_parser("analyze", help="print metrics of a stored trace")
    ana.add_argument("trace", help="trace CSV written by 'run'")
    ana.add_argument("--setpoints", nargs=2, type=float, metavar=("PHI0", "PHI1"),
                     help="setpoints in degrees (default -40 40)")
    ana.add_argument("--config", help="take setpoints from this configuration")
    ana.add_argument("--preset", choices=PRESETS, help="take setpoints from a preset")

    lin = sub.add_parser("linearize", help="report feedforward, linear model and ranks")
    lin.add_argument("--config", help="INI configuration file")
    lin.add_argument("--preset", choices=PRESETS, help="built-in scenario")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        if args.sweep is not None and args.sweep < 1:
            parser.error("--sweep must be at least 1")
        return cmd_run(args.config, args.out, args.seed, args.mode, args.preset, args.sweep)
    if args.command == "analyze":
        setpoints = None
        if args.setpoints is not None:
            setpoints = Setpoints.from_degrees(*args.setpoints)
        elif args.config or args.preset:
            try:
                setpoints = _resolve_config(args.config, args.preset).setpoints
            except ConfigError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
        return cmd_analyze(args.trace, setpoints)
    return cmd_linearize(args.config, args.preset)


if __name__ == "__main__":
    sys.exit(main())
