import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logvlasov import cli
from logvlasov.cli import (
    ConfigError,
    ExperimentConfig,
    format_config,
    load_config,
    main,
    parse_config,
    resolve,
    run,
    sweep,
)


def payload_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.name != "manifest.json"}


# ---------------------------------------------------------------- grammar

def test_grammar_parse():
    text = """
# a comment
scenario = nls
eps = 0.05
eps_list = [0.2, 0.1]
output_dir = "runs/a b"
preset = null
seed = 3
"""
    cfg = parse_config(text)
    assert cfg.scenario == "nls" and cfg.eps == 0.05 and cfg.eps_list == [0.2, 0.1]
    assert cfg.output_dir == "runs/a b" and cfg.preset is None and cfg.seed == 3


def test_grammar_int_to_float_and_json_form():
    cfg = parse_config("sigma0 = 2\n")
    assert isinstance(cfg.sigma0, float) and cfg.sigma0 == 2.0
    same = parse_config(json.dumps({"sigma0": 2}))
    assert same == cfg
    assert parse_config(cli.config_to_json(cfg)) == cfg


def test_grammar_errors_list_every_field():
    text = "sigma0 = abc def\nfoo = 1\nseed = 1.5\nno equals sign\nsigma0 = 2\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    msgs = info.value.problems
    assert any(m.startswith("sigma0") for m in msgs)
    assert any("line 4" in m for m in msgs)
    with pytest.raises(ConfigError) as info:
        parse_config("foo = 1\nseed = 1.5\nsigma0 = true\n")
    fields = {m.split(":")[0] for m in info.value.problems}
    assert fields == {"foo", "seed", "sigma0"}


floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=200, deadline=None)
@given(sigma0=floats, eps=st.one_of(st.none(), floats), seed=st.integers(0, 2**40),
       eps_list=st.one_of(st.none(), st.lists(floats, max_size=5)),
       out=st.text(min_size=1, max_size=20))
def test_config_round_trip_is_bit_identical(sigma0, eps, seed, eps_list, out):
    cfg = ExperimentConfig(sigma0=sigma0, eps=eps, seed=seed, eps_list=eps_list, output_dir=out)
    text = format_config(cfg)
    back = parse_config(text)
    assert back == cfg
    assert format_config(back) == text
    for a, b in zip([sigma0] + (eps_list or []), [back.sigma0] + (back.eps_list or [])):
        assert math.copysign(1, a) == math.copysign(1, b)


def test_load_config_file(tmp_path):
    cfg = ExperimentConfig(scenario="bound", t_end=0.5, output_dir=str(tmp_path / "o"))
    path = tmp_path / "exp.cfg"
    path.write_text(format_config(cfg))
    assert load_config(path) == cfg


# ------------------------------------------------------------- resolution

def test_resolve_fills_defaults():
    cfg = resolve(ExperimentConfig(scenario="nls"))
    assert cfg.preset == "theorem1" and cfg.eps == 0.1
    assert cfg.dt == pytest.approx(0.0125) and cfg.dx == pytest.approx(0.0125)
    cfg = resolve(ExperimentConfig(scenario="bound", amplitude=0.2))
    assert cfg.amplitude == 0.2 and cfg.background == 1.0 and cfg.n == 128
    assert resolve(cfg) == cfg


def test_resolve_lists_every_problem():
    bad = ExperimentConfig(scenario="gaussian", sigma0=-1.0, rho_star=0.0, tol=0.0, t_end=-1.0)
    with pytest.raises(ConfigError) as info:
        resolve(bad)
    fields = {m.split(":")[0] for m in info.value.problems}
    assert {"sigma0", "rho_star", "tol", "t_end"} <= fields


@pytest.mark.parametrize("changes,field", [
    ({"scenario": "nope"}, "scenario"),
    ({"scenario": "bound", "amplitude": 1.5}, "amplitude"),
    ({"scenario": "euler", "n": 100}, "n"),
    ({"scenario": "wigner_sweep", "eps_list": [0.1, 0.2, 0.05]}, "eps_list"),
    ({"scenario": "wigner_sweep", "source": "magic"}, "source"),
    ({"scenario": "nls", "dt": 0.3}, "dt"),
    ({"scenario": "euler", "preset": "theorem1"}, "preset"),
    ({"scenario": "gaussian", "lam": 0.0}, "lam"),
])
def test_resolve_rejects(changes, field):
    with pytest.raises(ConfigError) as info:
        resolve(ExperimentConfig(**changes))
    assert any(m.startswith(field) for m in info.value.problems)


# ------------------------------------------------------------------ runs

def test_gaussian_run(tmp_path):
    out = tmp_path / "g"
    rep = run(ExperimentConfig(scenario="gaussian", output_dir=str(out)))
    assert rep.exit_code == 0
    data = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=1)
    assert (out / "trajectory.csv").read_text().startswith("t,gamma,gamma_dot,energy_residual\n")
    assert data[-1, 0] == pytest.approx(10.0)
    assert np.max(np.abs(data[:, 3])) <= 1e-8
    assert {"config.cfg", "summary.json", "manifest.json"} <= {p.name for p in out.iterdir()}


def test_gaussian_blowup_report(tmp_path):
    out = tmp_path / "b"
    rep = run(ExperimentConfig(scenario="gaussian", lam=-1.0, output_dir=str(out)))
    assert rep.exit_code == 0 and rep.status == "blowup"
    report = json.loads((out / "blowup.json").read_text())
    assert report["status"] == "blowup"
    assert report["t_blow"] == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-6)


def test_manifest_contents(tmp_path):
    out = tmp_path / "m"
    cfg = ExperimentConfig(scenario="gaussian", t_end=1.0, output_dir=str(out))
    run(cfg)
    man = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert man["config_sha256"] == cli.config_hash(resolve(cfg))
    assert man["exit_code"] == 0 and man["wall_time_s"] >= 0
    assert set(man["versions"]) == {"logvlasov", "python", "numpy", "scipy"}
    assert "trajectory.csv" in man["files"]


@pytest.mark.parametrize("scenario,extra", [
    ("gaussian", {"t_end": 2.0}),
    ("nls", {"eps": 0.2, "t_end": 0.5}),
    ("euler", {"t_end": 0.5, "n": 32, "dt": 0.02}),
    ("bound", {"t_end": 0.5, "n": 32, "dt": 0.02}),
    ("da1_sweep", {"t_end": 0.2, "n": 32, "eps_list": [0.1, 0.05]}),
])
def test_runs_are_deterministic_and_reproducible(tmp_path, scenario, extra):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(ExperimentConfig(scenario=scenario, output_dir=str(a), **extra)).exit_code == 0
    assert run(ExperimentConfig(scenario=scenario, output_dir=str(b), **extra)).exit_code == 0
    pa, pb = payload_bytes(a), payload_bytes(b)
    pa.pop("config.cfg"), pb.pop("config.cfg")  # differ only by output_dir
    assert pa == pb
    # re-running from the resolved config reproduces every payload byte
    before = payload_bytes(a)
    assert run(load_config(a / "config.cfg")).exit_code == 0
    assert payload_bytes(a) == before


def test_wigner_single_eps(tmp_path):
    out = tmp_path / "w"
    rep = run(ExperimentConfig(scenario="wigner_sweep", eps=0.2, output_dir=str(out)))
    assert rep.exit_code == 0
    assert (out / "sweep.csv").read_text().splitlines()[0] == "eps,gap"
    assert resolve(ExperimentConfig(scenario="wigner_sweep", eps=0.2)).eps_list is None


def test_numerical_failure_exit_code(tmp_path):
    # an unstable step for the hyperbolic solver is a numerical failure, not a config error
    out = tmp_path / "f"
    rep = run(ExperimentConfig(scenario="euler", dt=0.5, n=64, output_dir=str(out)))
    assert rep.exit_code == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "failed" and "CFLError" in summary["error"]
    assert json.loads((out / "manifest.json").read_text())["exit_code"] == 3


def test_config_error_writes_nothing(tmp_path):
    out = tmp_path / "x"
    rep = run(ExperimentConfig(scenario="gaussian", sigma0=-1.0, output_dir=str(out)))
    assert rep.exit_code == 2 and rep.problems
    assert not out.exists()


# ---------------------------------------------------------------- sweeps

def test_sweep_dt_strang_order(tmp_path):
    cfg = ExperimentConfig(scenario="nls", eps=0.1, output_dir=str(tmp_path / "s"))
    table = sweep(cfg, "dt", [0.025, 0.0125, 0.00625])
    assert table.exit_code == 0
    assert table.slope == pytest.approx(2.0, abs=0.1)
    lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "dt,status,metric,slope,error"
    assert len(lines) == 4


def test_sweep_da1_slope_column(tmp_path):
    cfg = ExperimentConfig(scenario="da1_sweep", n=64, t_end=0.5, output_dir=str(tmp_path / "d"))
    table = sweep(cfg, "eps", [0.2, 0.1, 0.05, 0.025], workers=2)
    assert table.exit_code == 0
    assert table.slope >= 0.9
    header = (tmp_path / "d" / "sweep.csv").read_text().splitlines()[0].split(",")
    assert "slope" in header


def test_single_value_sweep_equals_run(tmp_path):
    base = ExperimentConfig(scenario="bound", t_end=0.3, n=32, dt=0.02, output_dir=str(tmp_path / "s"))
    sweep(base, "amplitude", [0.2])
    single = dataclasses.replace(base, amplitude=0.2, output_dir=str(tmp_path / "r"))
    run(single)
    a = payload_bytes(tmp_path / "s" / "row_000")
    b = payload_bytes(tmp_path / "r")
    a.pop("config.cfg"), b.pop("config.cfg")
    assert a == b


def test_sweep_partial_failure(tmp_path):
    cfg = ExperimentConfig(scenario="euler", n=64, t_end=0.2, output_dir=str(tmp_path / "p"))
    table = sweep(cfg, "dt", [0.01, 0.5])
    assert table.status == ["completed", "failed"]
    assert table.exit_code == 3
    assert table.slope is None
    lines = (tmp_path / "p" / "sweep.csv").read_text().splitlines()
    assert len(lines) == 3 and "CFLError" in lines[2]


def test_sweep_rejects_bad_axis(tmp_path):
    cfg = ExperimentConfig(scenario="euler", output_dir=str(tmp_path))
    with pytest.raises(ConfigError):
        sweep(cfg, "scenario", ["nls"])
    with pytest.raises(ConfigError):
        sweep(cfg, "n", [])


# -------------------------------------------------------------- argparse

def test_main_success_and_flags(tmp_path, capsys):
    out = tmp_path / "cli"
    code = main(["gaussian", "--t-end", "3", "--omega0", "1", "--output-dir", str(out)])
    assert code == 0
    cfg = load_config(out / "config.cfg")
    assert cfg.t_end == 3.0 and cfg.omega0 == 1.0
    assert "completed" in capsys.readouterr().out


def test_main_config_file_plus_override(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("t_end = 0.4\nn = 32\ndt = 0.02\n")
    out = tmp_path / "o"
    assert main(["bound", "--config", str(path), "--amplitude", "0.2", "--output-dir", str(out)]) == 0
    cfg = load_config(out / "config.cfg")
    assert (cfg.scenario, cfg.t_end, cfg.amplitude) == ("bound", 0.4, 0.2)


def test_main_config_error(tmp_path, capsys):
    code = main(["gaussian", "--sigma0", "-1", "--tol", "0", "--output-dir", str(tmp_path / "e")])
    assert code == 2
    err = capsys.readouterr().err
    assert "sigma0" in err and "tol" in err


def test_main_bad_config_file(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("sigma0 = oops now\nwat = 1\n")
    assert main(["gaussian", "--config", str(path)]) == 2
    err = capsys.readouterr().err
    assert "sigma0" in err and "wat" in err
    assert main(["gaussian", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_main_numerical_failure(tmp_path):
    assert main(["euler", "--dt", "0.5", "--output-dir", str(tmp_path / "n")]) == 3


def test_main_sweep(tmp_path, capsys):
    out = tmp_path / "sw"
    code = main(["sweep", "--scenario", "nls", "--axis", "dt", "--values", "0.05,0.025",
                 "--eps", "0.2", "--t-end", "0.5", "--output-dir", str(out)])
    assert code == 0
    assert "slope" in capsys.readouterr().out
    assert main(["sweep", "--scenario", "nls", "--axis", "dt", "--values", "[oops"]) == 2
