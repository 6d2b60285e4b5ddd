"""Command-line runner: experiment configs, scenarios, parameter sweeps.

Config grammar (one file per experiment)::

    # comment lines start with '#'; blank lines are ignored
    key = <value>

``<value>`` is a JSON literal (number, "string", [list], true/false, null); a
bare word such as ``gaussian`` is read as a string.  Keys are the
ExperimentConfig field names, each at most once.  A file whose first
non-blank character is '{' is read as a JSON object instead.  The writer
emits every field in declaration order with JSON-encoded values, so
write(parse(write(c))) reproduces the text byte for byte.

Every run writes, into ``output_dir``: the resolved ``config.cfg``, the CSV /
JSON payloads of the scenario, ``summary.json`` and ``manifest.json`` (hash,
versions, wall time).  Only the manifest depends on the clock.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import platform
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .density_bound import (
    GradientBlowupError,
    SpecificVolumeError,
    bound_monitor,
    evolve_lagrangian,
    riemann_transport_residual,
    to_lagrangian,
)
from .fitting import loglog_slope
from .gaussian_dynamics import BlowupError, GaussianParams, exact_blowup_time, integrate_gamma
from .hyperbolic_wkb import (
    CFLError,
    VacuumApproachError,
    convergence_da1,
    evolve,
    perturbation_data,
    skew_check,
    symmetrizer_check,
)
from .lognls_solver import (
    PropagationError,
    VacuumError,
    gaussian_ansatz_oracle,
    gaussian_grid,
    initial_gaussian_field,
    log_lipschitz_gap,
    propagate,
)
from .ode import IntegrationError
from .wigner import SupportError, WignerConsistencyError, bump_observable, convergence_sweep, pairing_gap

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SCENARIOS = ("gaussian", "nls", "wigner_sweep", "euler", "da1_sweep", "bound")
PRESETS = ("theorem1", "theorem2")
OBSERVABLES = ("bump", "moment")
SOURCES = ("oracle", "numeric")

NUMERICAL_ERRORS = (
    BlowupError, IntegrationError, PropagationError, VacuumError, WignerConsistencyError,
    SupportError, CFLError, VacuumApproachError, GradientBlowupError, SpecificVolumeError,
    FloatingPointError,
)


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists one message per offending field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "gaussian"
    preset: str | None = None
    output_dir: str = "runs/out"
    seed: int = 0
    # Gaussian data
    rho_star: float | None = None
    sigma0: float | None = None
    omega0: float | None = None
    p0: float | None = None
    lam: float | None = None
    # periodic perturbation data
    amplitude: float | None = None
    velocity: float | None = None
    mode: int | None = None
    background: float | None = None
    # numerics
    n: int | None = None
    dx: float | None = None
    dt: float | None = None
    tol: float | None = None
    t_end: float | None = None
    eps: float | None = None
    eps_list: list | None = None
    floor: float | None = None
    store_every: int | None = None
    source: str | None = None
    observable: str | None = None


_STR_FIELDS = {"scenario", "preset", "output_dir", "source", "observable"}
_INT_FIELDS = {"seed", "mode", "n", "store_every"}
_LIST_FIELDS = {"eps_list"}
FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))
NUMERIC_FIELDS = tuple(n for n in FIELD_NAMES if n not in _STR_FIELDS | _LIST_FIELDS)

_GAUSSIAN_DEFAULTS = {"rho_star": 1.0, "sigma0": 1.0, "omega0": 0.0, "p0": 0.0, "lam": 1.0}
_PERTURBATION_DEFAULTS = {"amplitude": 0.1, "velocity": 0.0, "mode": 1, "background": 1.0, "lam": 1.0}

_SCENARIO_DEFAULTS = {
    "gaussian": {"preset": "theorem1", "t_end": 10.0, "tol": 1e-10, "eps": 0.0},
    "nls": {"preset": "theorem1", "t_end": 1.0, "eps": 0.1, "tol": 1e-12, "floor": 1e-30},
    "wigner_sweep": {"preset": "theorem1", "t_end": 1.0, "eps_list": [0.2, 0.1, 0.05, 0.025],
                     "tol": 1e-12, "source": "oracle", "observable": "bump"},
    "euler": {"preset": "theorem2", "t_end": 2.0, "eps": 0.0, "n": 128, "dt": 0.01, "store_every": 10},
    "da1_sweep": {"preset": "theorem2", "t_end": 1.0, "eps_list": [0.1, 0.05, 0.025], "n": 128,
                  "store_every": 1},
    "bound": {"preset": "theorem2", "t_end": 2.0, "n": 128, "dt": 0.01, "store_every": 1},
}


# --------------------------------------------------------------- config I/O

def _coerce(name, value, problems):
    if value is None:
        return None
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            problems.append(f"{name}: expected a string, got {value!r}")
        return value
    if name in _LIST_FIELDS:
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            problems.append(f"{name}: expected a list of numbers, got {value!r}")
            return value
        return [float(v) for v in value]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{name}: expected a number, got {value!r}")
        return value
    if name in _INT_FIELDS:
        if isinstance(value, float) and not value.is_integer():
            problems.append(f"{name}: expected an integer, got {value!r}")
            return value
        return int(value)
    return float(value)


def config_from_mapping(data: dict) -> ExperimentConfig:
    problems = []
    unknown = sorted(set(data) - set(FIELD_NAMES))
    problems += [f"{k}: unknown field" for k in unknown]
    values = {k: _coerce(k, v, problems) for k, v in data.items() if k in FIELD_NAMES}
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**values)


_BARE = re.compile(r"^[A-Za-z_./~][A-Za-z0-9_.\-/~]*$")


def parse_value(text: str):
    """JSON literal, or a bare word read as a string."""
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if _BARE.match(text) and text not in ("true", "false", "null"):
            return text
        raise


def parse_config(text: str) -> ExperimentConfig:
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"json: {exc}"]) from None
        if not isinstance(data, dict):
            raise ConfigError(["json: top level must be an object"])
        return config_from_mapping(data)
    data, problems = {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        if key in data:
            problems.append(f"{key}: given more than once (line {lineno})")
            continue
        if key not in FIELD_NAMES:
            problems.append(f"{key}: unknown field (line {lineno})")
            continue
        try:
            data[key] = parse_value(raw)
        except json.JSONDecodeError:
            problems.append(f"{key}: cannot parse value {raw.strip()!r} (line {lineno})")
    values = {k: _coerce(k, v, problems) for k, v in data.items()}
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(**values)


def format_config(cfg: ExperimentConfig) -> str:
    lines = ["# logvlasov experiment config"]
    for name in FIELD_NAMES:
        lines.append(f"{name} = {json.dumps(getattr(cfg, name))}")
    return "\n".join(lines) + "\n"


def config_to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), indent=2) + "\n"


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(format_config(cfg).encode("utf-8")).hexdigest()


# -------------------------------------------------------------- resolution

def resolve(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill scenario and preset defaults, then validate every field.

    Raises ConfigError listing all problems found.
    """
    if cfg.scenario not in SCENARIOS:
        raise ConfigError([f"scenario: must be one of {', '.join(SCENARIOS)} (got {cfg.scenario!r})"])
    values = dataclasses.asdict(cfg)
    for key, val in _SCENARIO_DEFAULTS[cfg.scenario].items():
        if key == "eps_list" and values["eps"] is not None:
            continue  # a single eps row ignores the list
        if values[key] is None:
            values[key] = val
    preset = values["preset"]
    problems = []
    if preset not in PRESETS:
        problems.append(f"preset: must be one of {', '.join(PRESETS)} (got {preset!r})")
    else:
        defaults = _GAUSSIAN_DEFAULTS if preset == "theorem1" else _PERTURBATION_DEFAULTS
        for key, val in defaults.items():
            if values[key] is None:
                values[key] = val
    if cfg.scenario == "nls":
        eps = values["eps"]
        if values["dt"] is None and isinstance(eps, float) and eps > 0:
            # largest dt <= eps/8 that divides t_end
            t_end = values["t_end"]
            if isinstance(t_end, float) and t_end > 0:
                values["dt"] = t_end / math.ceil(t_end / (eps / 8) - 1e-9)
        if values["dx"] is None and isinstance(eps, float):
            values["dx"] = eps / 8
    out = ExperimentConfig(**values)
    problems += validate(out)
    if problems:
        raise ConfigError(problems)
    return out


def _positive(cfg, name, problems, allow_zero=False):
    v = getattr(cfg, name)
    if v is None:
        problems.append(f"{name}: required for scenario {cfg.scenario}")
    elif not math.isfinite(v) or (v < 0 if allow_zero else v <= 0):
        problems.append(f"{name}: must be {'>= 0' if allow_zero else '> 0'} (got {v!r})")


def validate(cfg: ExperimentConfig):
    problems = []
    if not isinstance(cfg.output_dir, str) or not cfg.output_dir:
        problems.append("output_dir: must be a non-empty path")
    if cfg.seed < 0:
        problems.append(f"seed: must be >= 0 (got {cfg.seed})")
    sc = cfg.scenario
    if cfg.preset == "theorem1":
        for key in ("rho_star", "sigma0"):
            _positive(cfg, key, problems)
        for key in ("omega0", "p0", "lam"):
            v = getattr(cfg, key)
            if not math.isfinite(v):
                problems.append(f"{key}: must be finite")
        if cfg.lam == 0:
            problems.append("lam: must be nonzero")
        if sc in ("euler", "da1_sweep", "bound"):
            problems.append(f"preset: scenario {sc} needs periodic data (theorem2)")
    elif cfg.preset == "theorem2":
        _positive(cfg, "background", problems)
        _positive(cfg, "amplitude", problems, allow_zero=True)
        _positive(cfg, "lam", problems)
        if cfg.mode is None or cfg.mode < 1:
            problems.append(f"mode: must be an integer >= 1 (got {cfg.mode!r})")
        if not math.isfinite(cfg.velocity):
            problems.append("velocity: must be finite")
        if (cfg.amplitude is not None and cfg.background is not None
                and cfg.amplitude >= cfg.background):
            problems.append(f"amplitude: must be < background={cfg.background} (non-vacuum data)")
        if sc in ("gaussian", "nls", "wigner_sweep"):
            problems.append(f"preset: scenario {sc} needs Gaussian data (theorem1)")
    _positive(cfg, "t_end", problems)
    if sc in ("gaussian", "nls", "wigner_sweep"):
        _positive(cfg, "tol", problems)
    if sc == "gaussian":
        _positive(cfg, "eps", problems, allow_zero=True)
    if sc == "nls":
        _positive(cfg, "eps", problems)
        _positive(cfg, "dt", problems)
        _positive(cfg, "dx", problems)
        _positive(cfg, "floor", problems, allow_zero=True)
        if not problems and abs(round(cfg.t_end / cfg.dt) * cfg.dt - cfg.t_end) > 1e-9 * cfg.t_end:
            problems.append(f"dt: t_end={cfg.t_end} is not an integer multiple of dt={cfg.dt}")
    if sc in ("wigner_sweep", "da1_sweep"):
        if cfg.eps is not None:
            _positive(cfg, "eps", problems)
        else:
            el = cfg.eps_list
            if not el:
                problems.append("eps_list: required (or set eps for a single row)")
            elif any(not (math.isfinite(e) and e > 0) for e in el):
                problems.append("eps_list: entries must be > 0")
            elif any(b >= a for a, b in zip(el, el[1:])):
                problems.append("eps_list: must be strictly decreasing")
            elif sc == "wigner_sweep" and len(el) < 3:
                problems.append("eps_list: needs at least 3 entries")
    if sc == "wigner_sweep":
        if cfg.source not in SOURCES:
            problems.append(f"source: must be one of {', '.join(SOURCES)} (got {cfg.source!r})")
        if cfg.observable not in OBSERVABLES:
            problems.append(f"observable: must be one of {', '.join(OBSERVABLES)} (got {cfg.observable!r})")
    if sc in ("euler", "da1_sweep", "bound"):
        if cfg.n is None and cfg.dx is None:
            problems.append("n: required (or give dx)")
        if cfg.n is not None and (cfg.n < 8 or cfg.n & (cfg.n - 1)):
            problems.append(f"n: must be a power of two >= 8 (got {cfg.n})")
        if cfg.dx is not None:
            _positive(cfg, "dx", problems)
        if cfg.dt is not None or sc != "da1_sweep":
            _positive(cfg, "dt", problems)
        if cfg.store_every is None or cfg.store_every < 1:
            problems.append(f"store_every: must be >= 1 (got {cfg.store_every!r})")
    if sc == "euler":
        _positive(cfg, "eps", problems, allow_zero=True)
    return problems


# ---------------------------------------------------------------- helpers

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(c) for c in row) + "\n")


def _csv_cell(c):
    if c is None:
        return ""
    if isinstance(c, str):
        if any(ch in c for ch in ',"\n'):
            return '"' + c.replace('"', '""') + '"'
        return c
    if isinstance(c, (bool, np.bool_)):
        return "true" if c else "false"
    return repr(float(c)) if isinstance(c, (float, np.floating)) else str(c)


def gaussian_params(cfg: ExperimentConfig) -> GaussianParams:
    return GaussianParams(cfg.rho_star, cfg.sigma0, cfg.omega0, cfg.p0, cfg.lam)


def periodic_init(cfg: ExperimentConfig):
    return perturbation_data(cfg.amplitude, cfg.velocity, cfg.mode, cfg.background)


def _periodic_n(cfg, length):
    if cfg.n is not None:
        return cfg.n
    n = 8
    while length / n > cfg.dx:
        n *= 2
    return n


def observable(name):
    """The two standard observables: a phase-space bump and its xi-moment."""
    if name == "bump":
        return bump_observable(0.5, 1.0, 0.8, 1.0)
    return bump_observable(0.0, 1.0, 0.0, 1.0, xi_moment=True)


# ------------------------------------------------------------- scenarios

def _run_gaussian(cfg, out: Path):
    params = gaussian_params(cfg)
    traj = integrate_gamma(params, cfg.eps, cfg.t_end, cfg.tol)
    traj.to_csv(out / "trajectory.csv")
    res = traj.energy_residuals()
    summary = {
        "status": traj.status,
        "steps": len(traj) - 1,
        "t_last": float(traj.t[-1]),
        "gamma_last": float(traj.gamma[-1]),
        "max_abs_energy_residual": float(np.max(np.abs(res))),
        "metric": float(np.max(np.abs(res))),
    }
    if traj.status == "blowup":
        report = traj.blowup_report()
        if params.lam < 0 and params.omega0 == 0 and cfg.eps == 0:
            report["t_blow_exact"] = exact_blowup_time(params)
        write_json(out / "blowup.json", report)
        summary["t_blow"] = traj.t_blow
    return summary


def _run_nls(cfg, out: Path):
    params = gaussian_params(cfg)
    grid = gaussian_grid(params, cfg.eps, cfg.t_end, dx_factor=cfg.dx / cfg.eps)
    u0 = initial_gaussian_field(params, cfg.eps, grid)
    u = propagate(u0, cfg.t_end, cfg.dt, cfg.floor, lam=params.lam)
    ref = gaussian_ansatz_oracle(params, cfg.eps, cfg.t_end, cfg.tol).values(grid.x, cfg.eps)
    u.to_csv(out / "field.csv")
    write_json(out / "field.json", u.metadata())
    err = u.relative_l2_error(ref)
    # seeded spot check of the log-Lipschitz inequality behind uniqueness
    rng = np.random.default_rng(cfg.seed)
    mod = 10.0 ** rng.uniform(-6, 6, (2, 10_000))
    arg = rng.uniform(0, 2 * np.pi, (2, 10_000))
    lhs, rhs = log_lipschitz_gap(mod[0] * np.exp(1j * arg[0]), mod[1] * np.exp(1j * arg[1]))
    return {
        "status": "completed",
        "nx": grid.n,
        "dx": grid.dx,
        "steps": int(round(cfg.t_end / cfg.dt)),
        "rel_l2_error": err,
        "mass_drift": abs(u.mass() - u0.mass()) / u0.mass(),
        "min_density": float(u.min_density.min()),
        "log_lipschitz_violations": int(np.count_nonzero(lhs > rhs)),
        "metric": err,
    }


def _run_wigner(cfg, out: Path):
    params = gaussian_params(cfg)
    phi = observable(cfg.observable)
    if cfg.eps is not None:
        gap = pairing_gap(cfg.eps, cfg.t_end, phi, cfg.source, params, tol=cfg.tol)
        write_csv(out / "sweep.csv", ["eps", "gap"], [(cfg.eps, gap)])
        return {"status": "completed", "gap": gap, "metric": gap}
    res = convergence_sweep(cfg.eps_list, cfg.t_end, phi, cfg.source, params, tol=cfg.tol)
    res.to_csv(out / "sweep.csv")
    gaps = np.asarray(res.gap)
    return {
        "status": "completed" if res.complete else "partial",
        "slope": res.slope,
        "monotone": bool(np.all(np.diff(gaps) < 0)),
        "errors": [e for e in res.errors if e],
        "metric": float(gaps[-1]),
    }


def _run_euler(cfg, out: Path):
    init = periodic_init(cfg)
    n = _periodic_n(cfg, init.length)
    traj = evolve(init, cfg.eps, cfg.t_end, cfg.dt, n=n, lam=cfg.lam, store_every=cfg.store_every)
    final = traj.final
    final.to_csv(out / "state.csv")
    write_json(out / "state.json", final.metadata())
    masses = traj.masses()
    write_csv(out / "history.csv", ["t", "mass", "min_rho"],
              zip(traj.times, masses, traj.rho.min(axis=1)))
    asym, min_eig = symmetrizer_check(final)
    rng = np.random.default_rng(cfg.seed)
    w = rng.normal(size=n) + 1j * rng.normal(size=n)
    drift = float(np.max(np.abs(masses - masses[0])) / masses[0])
    return {
        "status": "completed",
        "n": n,
        "mass_drift": drift,
        "min_rho": float(traj.rho.min()),
        "symmetrizer_asymmetry": asym,
        "symmetrizer_min_eig": min_eig,
        "skew_random": skew_check(final.grid, w) / float(np.sum(np.abs(w) ** 2) * final.grid.dx),
        "metric": drift,
    }


def _run_da1(cfg, out: Path):
    init = periodic_init(cfg)
    n = _periodic_n(cfg, init.length)
    eps_list = [cfg.eps] if cfg.eps is not None else cfg.eps_list
    table = convergence_da1(init, eps_list, cfg.t_end, n=n, dt=cfg.dt, lam=cfg.lam,
                            store_every=cfg.store_every)
    table.to_csv(out / "da1.csv")
    return {
        "status": "completed" if table.complete else "partial",
        "slope_a": table.slope_a,
        "slope_dphi": table.slope_v,
        "gap_a": table.gap_a,
        "gap_dphi": table.gap_v,
        "errors": [e for e in table.errors if e],
        "metric": float(table.gap_a[-1]),
    }


def _run_bound(cfg, out: Path):
    init = periodic_init(cfg)
    n = _periodic_n(cfg, init.length)
    grid = init.grid(n)
    rho, v = init.sample(grid)
    state = to_lagrangian(rho, v, grid)
    traj = evolve_lagrangian(state, cfg.t_end, cfg.dt, store_every=cfg.store_every, lam=cfg.lam)
    report = bound_monitor(traj, float(rho.min()))
    report.to_json(out / "bound_report.json")
    traj.final.to_csv(out / "lagrangian.csv")
    write_json(out / "lagrangian.json", traj.final.metadata())
    traj.to_csv(out / "trajectory.csv")
    write_csv(out / "history.csv", ["t", "sup_alpha_beta", "tau_growth", "min_rho"],
              zip(report.times, report.sup_history, report.tau_growth, report.min_rho))
    try:
        res = max(riemann_transport_residual(traj))
    except ValueError:
        res = None
    return {
        "status": "completed",
        "M": report.M,
        "sup_alpha_beta": report.sup_alpha_beta,
        "alpha_beta_ok": report.alpha_beta_ok,
        "tau_linear_ok": report.tau_linear_ok,
        "lower_bound_ok": report.lower_bound_ok,
        "C_fit": report.C_fit,
        "transport_residual": res,
        "metric": report.C_fit,
    }


_RUNNERS = {
    "gaussian": _run_gaussian,
    "nls": _run_nls,
    "wigner_sweep": _run_wigner,
    "euler": _run_euler,
    "da1_sweep": _run_da1,
    "bound": _run_bound,
}


@dataclass
class RunReport:
    exit_code: int
    status: str
    output_dir: str
    summary: dict
    problems: list


def _versions():
    return {"logvlasov": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def run(cfg: ExperimentConfig) -> RunReport:
    """Resolve, validate and execute one experiment, writing its artifacts."""
    try:
        cfg = resolve(cfg)
    except ConfigError as exc:
        return RunReport(EXIT_CONFIG, "config_error", cfg.output_dir, {}, exc.problems)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(format_config(cfg), encoding="utf-8", newline="\n")
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    problems = []
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            summary = _RUNNERS[cfg.scenario](cfg, out)
        code = EXIT_OK if summary["status"] in ("completed", "blowup") else EXIT_NUMERIC
    except NUMERICAL_ERRORS as exc:
        summary = {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}
        code = EXIT_NUMERIC
    except ValueError as exc:
        summary = {"status": "config_error", "error": str(exc)}
        problems = [str(exc)]
        code = EXIT_CONFIG
    summary["scenario"] = cfg.scenario
    write_json(out / "summary.json", summary)
    files = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    write_json(out / "manifest.json", {
        "config_sha256": config_hash(cfg),
        "scenario": cfg.scenario,
        "exit_code": code,
        "started_utc": started,
        "wall_time_s": time.perf_counter() - t0,
        "versions": _versions(),
        "files": files,
    })
    return RunReport(code, summary["status"], str(out), summary, problems)


# ------------------------------------------------------------------ sweeps

CONVERGENCE_AXES = ("eps", "dt", "dx")
CONVERGENCE_SCENARIOS = ("nls", "wigner_sweep", "da1_sweep")


@dataclass
class SweepTable:
    axis: str
    values: list
    status: list
    metric: list
    errors: list
    slope: float | None
    exit_code: int


def _sweep_row(args):
    cfg, k = args
    rep = run(cfg)
    err = "; ".join(rep.problems) or rep.summary.get("error")
    return k, rep.exit_code, rep.status, rep.summary.get("metric"), err


def sweep(cfg: ExperimentConfig, axis: str, values, workers: int = 1) -> SweepTable:
    """Run the scenario once per axis value (rows in ``output_dir/row_NNN``).

    Writes ``sweep.csv`` with columns axis, status, metric, slope, error.  The
    slope column is a log-log fit of metric against the axis and is filled
    only for convergence studies.
    """
    if axis not in NUMERIC_FIELDS:
        raise ConfigError([f"axis: {axis!r} is not a numeric config field"])
    values = list(values)
    if not values:
        raise ConfigError(["values: at least one value is required"])
    problems = []
    rows = []
    for k, val in enumerate(values):
        try:
            row = config_from_mapping({**dataclasses.asdict(cfg), axis: val,
                                       "output_dir": str(Path(cfg.output_dir) / f"row_{k:03d}")})
        except ConfigError as exc:
            problems += [f"values[{k}]: {p}" for p in exc.problems]
            continue
        rows.append((row, k))
    if problems:
        raise ConfigError(problems)
    if workers > 1 and len(rows) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_row, rows))
    else:
        results = [_sweep_row(r) for r in rows]
    results.sort()
    codes = [r[1] for r in results]
    status = [r[2] for r in results]
    metric = [r[3] for r in results]
    errors = [r[4] for r in results]
    slope = None
    if cfg.scenario in CONVERGENCE_SCENARIOS and axis in CONVERGENCE_AXES:
        ok = [(float(v), float(m)) for v, m, c in zip(values, metric, codes)
              if c == EXIT_OK and m is not None]
        slope = loglog_slope([v for v, _ in ok], [m for _, m in ok]) if len(ok) >= 2 else float("nan")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = [axis, "status", "metric"] + (["slope"] if slope is not None else []) + ["error"]
    table = []
    for v, s, m, e in zip(values, status, metric, errors):
        line = [v, s, m]
        if slope is not None:
            line.append(slope if math.isfinite(slope) else None)
        table.append(line + [e])
    write_csv(out / "sweep.csv", header, table)
    if any(c == EXIT_CONFIG for c in codes):
        code = EXIT_CONFIG
    elif any(c != EXIT_OK for c in codes):
        code = EXIT_NUMERIC
    else:
        code = EXIT_OK
    return SweepTable(axis, values, status, metric, errors, slope, code)


# ---------------------------------------------------------------- argparse

_SUBCOMMANDS = {"gaussian": "gaussian", "nls": "nls", "wigner": "wigner_sweep", "euler": "euler",
                "da1": "da1_sweep", "bound": "bound"}


def _add_field_flags(p):
    p.add_argument("--config", help="config file (key = value grammar, or JSON)")
    for name in FIELD_NAMES:
        if name == "scenario":
            continue
        p.add_argument("--" + name.replace("_", "-"), dest=name, metavar="VALUE",
                       help=f"override '{name}' (JSON literal or bare word)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="logvlasov",
        description="Semiclassical logarithmic NLS / isothermal Euler experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gaussian": "integrate the Gaussian width ODE",
        "nls": "split-step run against the Gaussian oracle",
        "wigner": "Wigner pairing-gap sweep over eps",
        "euler": "hyperbolic WKB / isothermal Euler run on periodic data",
        "da1": "O(eps) distance to the eps = 0 hyperbolic solution",
        "bound": "Riemann-invariant bounds and the density lower bound",
    }
    for cmd, text in helps.items():
        _add_field_flags(sub.add_parser(cmd, help=text))
    sp = sub.add_parser("sweep", help="run a scenario over a list of values of one field")
    sp.add_argument("--scenario", choices=SCENARIOS)
    sp.add_argument("--axis", required=True)
    sp.add_argument("--values", required=True, help="JSON list or comma-separated numbers")
    sp.add_argument("--workers", type=int, default=1)
    _add_field_flags(sp)
    return parser


def _config_from_args(args, scenario):
    problems = []
    base = {}
    if args.config:
        try:
            base = dataclasses.asdict(load_config(args.config))
        except ConfigError as exc:
            problems += exc.problems
        except OSError as exc:
            problems.append(f"config: {exc}")
    for name in FIELD_NAMES:
        raw = getattr(args, name, None) if name != "scenario" else None
        if raw is None:
            continue
        if name in _STR_FIELDS:
            base[name] = raw
            continue
        try:
            base[name] = parse_value(raw)
        except json.JSONDecodeError:
            problems.append(f"{name}: cannot parse value {raw!r}")
    if scenario is not None:
        base["scenario"] = scenario
    if problems:
        raise ConfigError(problems)
    return config_from_mapping(base)


def _parse_values(text):
    text = text.strip()
    if text.startswith("["):
        vals = json.loads(text)
    else:
        vals = [json.loads(v) for v in text.split(",") if v.strip()]
    return vals


def _report_problems(problems):
    print("configuration error:", file=sys.stderr)
    for p in problems:
        print(f"  {p}", file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            cfg = _config_from_args(args, args.scenario)
            try:
                values = _parse_values(args.values)
            except json.JSONDecodeError:
                raise ConfigError([f"values: cannot parse {args.values!r}"]) from None
            table = sweep(cfg, args.axis, values, workers=args.workers)
            print(f"sweep {cfg.scenario} over {args.axis}: {len(values)} rows -> {cfg.output_dir}")
            if table.slope is not None:
                print(f"fitted log-log slope: {table.slope:.4f}")
            return table.exit_code
        cfg = _config_from_args(args, _SUBCOMMANDS[args.command])
    except ConfigError as exc:
        _report_problems(exc.problems)
        return EXIT_CONFIG
    rep = run(cfg)
    if rep.exit_code == EXIT_CONFIG:
        _report_problems(rep.problems)
    else:
        print(f"{cfg.scenario}: {rep.status} -> {rep.output_dir}")
        if rep.exit_code == EXIT_NUMERIC and "error" in rep.summary:
            print(rep.summary["error"], file=sys.stderr)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
