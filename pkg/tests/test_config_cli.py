import io

import numpy as np
import pytest

from tethered_follower import ConfigError, SystemParams
from tethered_follower.analysis import trace_metrics
from tethered_follower.cli import (
    EXIT_ABORT,
    EXIT_CONFIG,
    EXIT_OK,
    cmd_analyze,
    cmd_linearize,
    cmd_run,
    main,
    sweep_seeds,
)
from tethered_follower.config import (
    CSV_COLUMNS,
    PRESETS,
    TraceFormatError,
    load_config,
    load_preset,
    parse_config,
    read_trace,
    trace_to_csv,
    write_trace,
)
from tethered_follower.sim import Trace, run_scenario

SHORT = """
[sim]
mode = truth_feedback
duration = 21
seed = 5
"""


def _metrics(text):
    out = {}
    for line in text.strip().splitlines()[1:]:
        key, value = line.split(" = ")
        out[key] = value
    return out


def _synthetic_trace(offset_deg=0.0, duration=60.0, dt=0.05):
    t = np.arange(0.0, duration + dt / 2, dt)
    n = len(t)
    x = np.zeros((n, 6))
    x[:, 2], x[:, 4] = np.radians(-40.0), np.radians(40.0)
    x_hat = x + np.radians(offset_deg)
    return Trace(t, x, np.zeros((n, 4)), x_hat, np.zeros((n, 6)), np.zeros((n, 3)), np.zeros((n, 2)))


# -- configuration ------------------------------------------------------------

def test_empty_config_gives_defaults():
    cfg = parse_config("")
    assert cfg.mode == "estimated_feedback"
    assert cfg.params == SystemParams()
    assert cfg.sim.dt == pytest.approx(1 / 200)


def test_degrees_are_converted():
    cfg = parse_config("[setpoints]\nphi_0 = -30\nphi_1 = 50\n[noise]\nsigma_phi_b = 1.0\n"
                       "[sim]\ninitial_offset = 5 -5\n[gains]\nintegrator_limit = 20\n")
    assert cfg.setpoints.phi_0_star == pytest.approx(np.radians(-30.0))
    assert cfg.setpoints.phi_1_star == pytest.approx(np.radians(50.0))
    assert cfg.noise.sigma_phi_b == pytest.approx(np.radians(1.0))
    assert cfg.sim.initial_offset == pytest.approx((np.radians(5.0), np.radians(-5.0)))
    assert cfg.gains.integrator_limit == pytest.approx(np.radians(20.0))


def test_case_sensitive_mass_keys():
    cfg = parse_config("[params]\nm = 0.1\nM = 0.02\n")
    assert (cfg.params.m, cfg.params.M) == (0.1, 0.02)


def test_measurement_covariance_follows_noise_levels():
    cfg = parse_config("[noise]\nsigma_acc = 0.2\n")
    assert cfg.estimator.R[2, 2] == pytest.approx(0.04)


@pytest.mark.parametrize("text, path", [
    ("[sim]\ndurration = 10\n", "sim.durration"),
    ("[physics]\nm = 1\n", "physics"),
    ("[sim]\nmode = autopilot\n", "sim.mode"),
    ("[sim]\ninitial_offset = 1\n", "sim.initial_offset"),
    ("[params]\nm = heavy\n", "params.m"),
    ("[sim]\ndt = -1\n", "sim"),
    ("[noise]\nsigma_acc = 0\n", "estimator.r_diag"),
])
def test_invalid_config_reports_field_path(text, path):
    with pytest.raises(ConfigError, match=f"^{path}"):
        parse_config(text)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_preset(name)
    assert cfg.sim.duration == 60
    assert np.degrees(cfg.setpoints.angles) == pytest.approx([-40.0, 40.0])


def test_unknown_preset():
    with pytest.raises(ConfigError):
        load_preset("three-robot")


# -- CSV ----------------------------------------------------------------------

def test_csv_header_and_round_trip():
    trace = _synthetic_trace(1.0, duration=1.0)
    text = trace_to_csv(trace)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_trace(io.StringIO(text))
    np.testing.assert_allclose(back.x_hat, trace.x_hat, rtol=1e-8)
    np.testing.assert_allclose(back.t, trace.t, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("mutate, line", [
    (lambda lines: ["t,x"] + lines[1:], 1),
    (lambda lines: lines[:3] + [lines[3] + ",1"] + lines[4:], 4),
    (lambda lines: lines[:2] + [lines[2].replace("0", "zero", 1)] + lines[3:], 3),
])
def test_malformed_csv_reports_line(mutate, line):
    lines = trace_to_csv(_synthetic_trace(duration=1.0)).splitlines()
    with pytest.raises(TraceFormatError) as info:
        read_trace(io.StringIO("\n".join(mutate(lines)) + "\n"))
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


# -- analyze ------------------------------------------------------------------

def test_analyze_zero_error_trace(tmp_path):
    path = tmp_path / "zero.csv"
    write_trace(_synthetic_trace(), path)
    out = io.StringIO()
    assert cmd_analyze(str(path), stdout=out) == EXIT_OK
    metrics = _metrics(out.getvalue())
    assert all(float(v) == 0.0 for k, v in metrics.items() if not k.endswith("window"))


def test_analyze_constant_offset(tmp_path):
    path = tmp_path / "offset.csv"
    write_trace(_synthetic_trace(2.5), path)
    out = io.StringIO()
    assert cmd_analyze(str(path), stdout=out) == EXIT_OK
    assert _metrics(out.getvalue())["estimation_mean.phi_1"] == "2.500000"


def test_analyze_malformed_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    lines = trace_to_csv(_synthetic_trace(duration=1.0)).splitlines()
    lines[5] = lines[5] + ",oops"
    path.write_text("\n".join(lines) + "\n")
    assert cmd_analyze(str(path)) == EXIT_CONFIG
    assert "line 6" in capsys.readouterr().err


def test_analyze_missing_file(tmp_path):
    assert cmd_analyze(str(tmp_path / "nope.csv")) == EXIT_CONFIG


# -- run ----------------------------------------------------------------------

def test_run_is_byte_identical_and_round_trips(tmp_path):
    cfg_path = tmp_path / "short.ini"
    cfg_path.write_text(SHORT)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    out_a, out_b = io.StringIO(), io.StringIO()
    assert cmd_run(str(cfg_path), str(a), stdout=out_a) == EXIT_OK
    assert cmd_run(str(cfg_path), str(b), stdout=out_b) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert out_a.getvalue() == out_b.getvalue()

    analysed = io.StringIO()
    assert cmd_analyze(str(a), stdout=analysed) == EXIT_OK
    assert analysed.getvalue() == out_a.getvalue()

    c = tmp_path / "c.csv"
    assert cmd_run(str(cfg_path), str(c), seed_override=6, stdout=io.StringIO()) == EXIT_OK
    assert c.read_bytes() != a.read_bytes()


def test_stored_metrics_match_in_process_to_print_precision(tmp_path):
    cfg_path = tmp_path / "short.ini"
    cfg_path.write_text(SHORT)
    out_csv = tmp_path / "run.csv"
    out = io.StringIO()
    assert cmd_run(str(cfg_path), str(out_csv), stdout=out) == EXIT_OK
    cfg = load_config(cfg_path)
    trace = run_scenario(cfg.mode, cfg.params, cfg.sim, cfg.noise, cfg.leader,
                         cfg.estimator, cfg.gains, cfg.setpoints)
    direct = _metrics(trace_metrics(trace, cfg.setpoints).to_text())
    stored = _metrics(out.getvalue())
    for key in direct:
        if key.endswith("window"):
            continue
        assert float(stored[key]) == pytest.approx(float(direct[key]), abs=2e-6)


def test_run_mode_override(tmp_path):
    cfg_path = tmp_path / "short.ini"
    cfg_path.write_text(SHORT.replace("duration = 21", "duration = 1"))
    out_csv = tmp_path / "run.csv"
    assert cmd_run(str(cfg_path), str(out_csv), mode_override="openloop",
                   stdout=io.StringIO()) == EXIT_OK
    trace = read_trace(str(out_csv))
    assert np.all(trace.u[:, 0] == trace.u[0, 0])
    assert cmd_run(str(cfg_path), str(out_csv), mode_override="hover") == EXIT_CONFIG


def test_run_bad_config_exit_code(tmp_path):
    cfg_path = tmp_path / "bad.ini"
    cfg_path.write_text("[sim]\nspeed = 3\n")
    assert cmd_run(str(cfg_path), str(tmp_path / "x.csv")) == EXIT_CONFIG
    assert cmd_run(str(tmp_path / "missing.ini"), str(tmp_path / "x.csv")) == EXIT_CONFIG


def test_run_abort_flushes_partial_trace(tmp_path):
    cfg_path = tmp_path / "abort.ini"
    cfg_path.write_text("[sim]\nmode = openloop\nduration = 20\nthrust_bias = 3\n")
    out_csv = tmp_path / "abort.csv"
    assert cmd_run(str(cfg_path), str(out_csv)) == EXIT_ABORT
    partial = read_trace(str(out_csv))
    assert 0 < len(partial.t) < 4001


def test_run_short_trace_still_written(tmp_path):
    cfg_path = tmp_path / "tiny.ini"
    cfg_path.write_text("[sim]\nduration = 0.5\n")
    out_csv = tmp_path / "tiny.csv"
    assert cmd_run(str(cfg_path), str(out_csv), stdout=io.StringIO()) == EXIT_OK
    assert len(read_trace(str(out_csv)).t) == 101


def test_sweep_writes_one_file_per_seed(tmp_path):
    cfg_path = tmp_path / "short.ini"
    cfg_path.write_text(SHORT.replace("duration = 21", "duration = 1"))
    out = io.StringIO()
    assert cmd_run(str(cfg_path), str(tmp_path / "s.csv"), sweep=3, stdout=out) == EXIT_OK
    files = sorted(p.name for p in tmp_path.glob("s_*.csv"))
    assert files == ["s_000.csv", "s_001.csv", "s_002.csv"]
    assert out.getvalue().count("# run") == 3
    assert len(set(sweep_seeds(5, 3))) == 3
    assert sweep_seeds(5, 3) == sweep_seeds(5, 3)


# -- linearize ----------------------------------------------------------------

def _linearize_block(text):
    return dict(line.split(" = ", 1) for line in text.strip().splitlines()[1:])


def test_linearize_nominal():
    out = io.StringIO()
    assert cmd_linearize(preset="estimated", stdout=out) == EXIT_OK
    block = _linearize_block(out.getvalue())
    assert float(block["f_star"]) == pytest.approx(0.872, abs=5e-4)
    assert float(block["phi_b_star_deg"]) == pytest.approx(8.14, abs=0.01)
    assert block["observability_rank"] == "6"
    assert block["controllability_rank"] == "6"
    assert len(block["open_loop_eigs"].split()) == 4


def test_linearize_singular_setpoints(tmp_path):
    cfg_path = tmp_path / "collinear.ini"
    cfg_path.write_text("[setpoints]\nphi_0 = 30\nphi_1 = 30\n")
    assert cmd_linearize(str(cfg_path)) == EXIT_ABORT


def test_linearize_plumb_payload(tmp_path):
    cfg_path = tmp_path / "plumb.ini"
    cfg_path.write_text("[setpoints]\nphi_0 = 0\nphi_1 = 40\n")
    out = io.StringIO()
    assert cmd_linearize(str(cfg_path), stdout=out) == EXIT_OK
    p = SystemParams()
    assert float(_linearize_block(out.getvalue())["f_star"]) == pytest.approx(p.m * p.g, rel=1e-9)


def test_main_dispatch(tmp_path, capsys):
    assert main(["linearize", "--preset", "truth"]) == EXIT_OK
    assert "[linearization]" in capsys.readouterr().out
    path = tmp_path / "zero.csv"
    write_trace(_synthetic_trace(), path)
    assert main(["analyze", str(path), "--setpoints", "-40", "40"]) == EXIT_OK
    with pytest.raises(SystemExit):
        main(["run", "--sweep", "0", "--preset", "truth"])
    assert main(["run", "--config", "a.ini", "--preset", "truth"]) == EXIT_CONFIG
