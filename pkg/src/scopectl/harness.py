"""Command-line experiment runner.

Experiments are described by an INI-style config (``[section]`` headers and
``key = value`` lines). Angles must carry a ``deg`` or ``rad`` unit suffix.
See ``configs/`` for annotated examples and README.md for the full key list.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .controllers import (
    CONTROLLER_KINDS, DISPLAY_NAMES, PDGains, dumps_gains,
    make_controller, read_gains, ziegler_nichols_baseline,
)
from .fuzzy import FuzzyDefinitionError, default_definition, dumps_definition, read_definition
from .ga import GAConfig, GAResult, make_task, optimize, write_generation_log
from .integrator import TRACE_COLUMNS, DivergedError, SimConfig, simulate, write_trace_csv
from .metrics import (
    AXES, TransientMetrics, analyze, format_comparison, write_comparison_csv, write_metrics_csv,
)
from .plant import JointState, PlantError, PlantParams, plant_profile

log = logging.getLogger("scopectl")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DIVERGED = 4
EXIT_IO = 5
EXIT_PARTIAL = 6

EXIT_CODES_HELP = f"""exit status:
  {EXIT_OK}  success
  {EXIT_USAGE}  usage error (bad arguments, fewer than two controllers to compare)
  {EXIT_CONFIG}  config error (parse failure, bad field, missing referenced file)
  {EXIT_DIVERGED}  simulation diverged
  {EXIT_IO}  I/O error while reading or writing artifacts
  {EXIT_PARTIAL}  comparison finished with at least one failed controller
"""

ANGLE_UNITS = {"deg": math.pi / 180.0, "rad": 1.0}
RATE_UNITS = {"deg/s": math.pi / 180.0, "rad/s": 1.0}
ACCEL_UNITS = {"deg/s2": math.pi / 180.0, "rad/s2": 1.0}
SOURCES = {
    "pd": ("baseline", "inline", "file"),
    "ga-pd": ("tune", "baseline", "inline", "file"),
    "flc": ("default", "file"),
    "ga-flc": ("tune", "default", "file"),
}


class ConfigError(ValueError):
    pass


class UsageError(ValueError):
    pass


@dataclass
class ControllerSpec:
    kind: str
    source: str
    params: object = None  # PDGains / FLCDefinition, filled unless source == "tune"


@dataclass
class ExperimentConfig:
    path: Path
    plant: PlantParams
    sim: SimConfig
    controllers: list[ControllerSpec]
    ga: GAConfig = field(default_factory=GAConfig)
    fitness_step_size: float = 5e-3
    output_dir: Path = Path("out")
    seed: int = 42


# -- config parsing -------------------------------------------------------------

def _field(sec, key, conv, default=None, required=False):
    where = f"[{sec.name}] {key}"
    if key not in sec:
        if required:
            raise ConfigError(f"{where}: missing required field")
        return default
    raw = sec[key]
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where} = {raw!r}: {exc}") from None


def _vector(units):
    def conv(text):
        parts = text.rsplit(None, 1)
        if len(parts) != 2 or parts[1] not in units:
            raise ValueError(f"expected two numbers followed by a unit ({' | '.join(units)})")
        vals = [float(v) for v in parts[0].split(",")]
        if len(vals) != 2:
            raise ValueError("expected exactly two values")
        return tuple(v * units[parts[1]] for v in vals)
    return conv


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true/false")


def _floats2(text):
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != 2:
        raise ValueError("expected two comma-separated values")
    return vals


def _optional_float(text):
    return None if text.strip().lower() == "none" else float(text)


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    return v


def _parse_plant(cp) -> PlantParams:
    if not cp.has_section("plant"):
        return plant_profile("kao-14in-default")
    sec = cp["plant"]
    try:
        base = plant_profile(sec.get("profile", "kao-14in-default"))
        overrides = {}
        for key in ("a1", "a2", "a3", "g1_coeff", "g2_coeff"):
            v = _field(sec, key, float)
            if v is not None:
                overrides[key] = v
        if "gravity_enabled" in sec:
            overrides["gravity_enabled"] = _field(sec, "gravity_enabled", _bool)
        if "tau_d" in sec:
            overrides["tau_d"] = _field(sec, "tau_d", _floats2)
        return replace(base, **overrides)
    except PlantError as exc:
        raise ConfigError(f"[plant]: {exc}") from None


def _parse_sim(cp) -> SimConfig:
    if not cp.has_section("sim"):
        return SimConfig()
    sec = cp["sim"]
    d = SimConfig.__dataclass_fields__
    kw = dict(
        step_size=_field(sec, "step_size", float, d["step_size"].default),
        duration=_field(sec, "duration", float, d["duration"].default),
        theta_desired=_field(sec, "theta_desired", _vector(ANGLE_UNITS), d["theta_desired"].default),
        theta_dot_desired=_field(sec, "theta_dot_desired", _vector(RATE_UNITS), (0.0, 0.0)),
        theta_ddot_desired=_field(sec, "theta_ddot_desired", _vector(ACCEL_UNITS), (0.0, 0.0)),
    )
    q0 = _field(sec, "initial_theta", _vector(ANGLE_UNITS), (0.0, 0.0))
    w0 = _field(sec, "initial_theta_dot", _vector(RATE_UNITS), (0.0, 0.0))
    try:
        return SimConfig(initial_state=JointState(q0, w0), **kw)
    except (ValueError, PlantError) as exc:
        raise ConfigError(f"[sim]: {exc}") from None


def _parse_ga(cp) -> tuple[GAConfig, float]:
    if not cp.has_section("ga"):
        return GAConfig(), 5e-3
    sec = cp["ga"]
    known = {
        "population_size": int, "generations": int, "crossover_rate": float,
        "mutation_rate": float, "mutation_sigma": float, "tournament_size": int,
        "elite_count": int, "workers": int,
    }
    unknown = set(sec) - set(known) - {"fitness_step_size", "max_overshoot_pct"}
    if unknown:
        raise ConfigError(f"[ga]: unknown keys {sorted(unknown)}")
    kw = {k: _field(sec, k, conv) for k, conv in known.items() if k in sec}
    if "max_overshoot_pct" in sec:
        kw["max_overshoot_pct"] = _field(sec, "max_overshoot_pct", _optional_float)
    h_fit = _field(sec, "fitness_step_size", float, 5e-3)
    if not (math.isfinite(h_fit) and h_fit > 0):
        raise ConfigError("[ga] fitness_step_size: must be > 0")
    try:
        return GAConfig(**kw), h_fit
    except ValueError as exc:
        raise ConfigError(f"[ga]: {exc}") from None


def _parse_controller(sec, kind: str, base_dir: Path) -> ControllerSpec:
    where = f"[{sec.name}]"
    if kind not in SOURCES:
        raise ConfigError(f"{where} type: unknown controller {kind!r}; expected one of {', '.join(CONTROLLER_KINDS)}")
    source = sec.get("source")
    if source is None:
        raise ConfigError(f"{where} source: missing; expected one of {', '.join(SOURCES[kind])}")
    if source not in SOURCES[kind]:
        raise ConfigError(f"{where} source: {source!r} not valid for {kind}; expected one of {', '.join(SOURCES[kind])}")
    # exactly one parameter source: keys belonging to other sources are rejected
    owned = {"inline": {"kp", "kd"}, "file": {"file"}, "baseline": {"omega"}}
    for other, keys in owned.items():
        if other != source and keys & set(sec):
            raise ConfigError(f"{where}: keys {sorted(keys & set(sec))} conflict with source = {source}")
    spec = ControllerSpec(kind, source)
    is_pd = kind in ("pd", "ga-pd")
    if source == "baseline":
        omega = _field(sec, "omega", float, 5.0)
        try:
            spec.params = ziegler_nichols_baseline(None, omega)
        except ValueError as exc:
            raise ConfigError(f"{where} omega: {exc}") from None
    elif source == "inline":
        kp = _field(sec, "kp", _floats2, required=True)
        kd = _field(sec, "kd", _floats2, required=True)
        try:
            spec.params = PDGains(kp, kd)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    elif source == "default":
        spec.params = default_definition()
    elif source == "file":
        path = base_dir / _field(sec, "file", str, required=True)
        if not path.is_file():
            raise ConfigError(f"{where} file: {path} does not exist")
        try:
            spec.params = read_gains(path) if is_pd else read_definition(path)
        except (ValueError, FuzzyDefinitionError, configparser.Error) as exc:
            raise ConfigError(f"{where} file: {path}: {exc}") from None
    return spec


def _check_writable(path: Path):
    p = path.resolve()
    while not p.exists():
        p = p.parent
    if not (p.is_dir() and os.access(p, os.W_OK)):
        raise ConfigError(f"output directory {path} is not writable")


def load_config(path, mode: str) -> ExperimentConfig:
    """Parse an experiment config; ``mode`` is ``simulate``, ``tune`` or ``compare``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base_dir = path.parent

    exp = cp["experiment"] if cp.has_section("experiment") else {}
    output_dir = Path(exp.get("output", "out"))
    if not output_dir.is_absolute():
        output_dir = base_dir / output_dir
    seed = _field(cp["experiment"], "seed", _seed, 42) if exp else 42

    plant = _parse_plant(cp)
    sim = _parse_sim(cp)
    ga, h_fit = _parse_ga(cp)

    if mode == "compare":
        if not cp.has_section("compare"):
            raise ConfigError(f"{path}: compare needs a [compare] section")
        names = [n.strip() for n in cp["compare"].get("controllers", "").split(",") if n.strip()]
        if len(names) < 2:
            raise UsageError("compare needs at least two controllers in [compare] controllers")
        if len(set(names)) != len(names):
            raise ConfigError("[compare] controllers: duplicate entries")
        specs = []
        for name in names:
            sec_name = f"controller {name}"
            if name not in SOURCES:
                raise ConfigError(f"[compare] controllers: unknown controller {name!r}")
            if not cp.has_section(sec_name):
                raise ConfigError(f"{path}: missing section [{sec_name}]")
            specs.append(_parse_controller(cp[sec_name], name, base_dir))
        specs.sort(key=lambda s: CONTROLLER_KINDS.index(s.kind))
    else:
        if not cp.has_section("controller"):
            raise ConfigError(f"{path}: missing [controller] section")
        sec = cp["controller"]
        kind = _field(sec, "type", str, required=True)
        specs = [_parse_controller(sec, kind, base_dir)]
        if mode == "tune" and specs[0].source != "tune":
            raise ConfigError("[controller] source: the tune verb needs source = tune")

    _check_writable(output_dir)
    return ExperimentConfig(path, plant, sim, specs, replace(ga, seed=seed), h_fit, output_dir, seed)


# -- artifact writing ---------------------------------------------------------------

def _atomic(path: Path, write):
    """Run ``write(tmp_path)`` then move the file into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path: Path, text: str):
    def w(tmp):
        with open(tmp, "w", newline="\n") as fh:
            fh.write(text)
    _atomic(path, w)


def _params_text(kind: str, params) -> tuple[str, str]:
    if kind in ("pd", "ga-pd"):
        return "controller.gains", dumps_gains(params)
    return "controller.fuzzy", dumps_definition(params)


MANIFEST = {
    "trace.csv": {
        "columns": dict(zip(TRACE_COLUMNS, ["s", "rad", "rad", "rad/s", "rad/s", "N*m", "N*m", "rad", "rad"])),
        "description": "closed-loop step response, one row per integration step",
    },
    "metrics.csv": {"columns": {"axis": "", "rise_time": "s", "settling_time": "s", "overshoot_pct": "%"}},
    "generation_log.csv": {"columns": {"generation": "", "best_fitness": "", "mean_fitness": ""}},
}


def _summary(name: str, params, m: TransientMetrics | None, ga: GAResult | None) -> str:
    lines = [f"controller: {name}"]
    if isinstance(params, PDGains):
        lines.append(f"kp: {params.kp[0]!r}, {params.kp[1]!r}")
        lines.append(f"kd: {params.kd[0]!r}, {params.kd[1]!r}")
    if ga is not None:
        lines.append(f"ga generations: {len(ga.history) - 1}")
        lines.append(f"ga best fitness: {ga.best_fitness!r}")
    if m is None:
        lines.append("result: diverged")
    else:
        lines.append(f"fitness: {m.itae_value!r}")
        for j, axis in enumerate(AXES):
            parts = [
                f"rise {_fmt(m.rise_time[j])} s",
                f"settling {_fmt(m.settling_time[j])} s",
                f"overshoot {_fmt(m.overshoot_pct[j])} %",
            ]
            lines.append(f"{axis}: " + ", ".join(parts))
    return "\n".join(lines) + "\n"


def _fmt(v):
    return "never" if v is None else f"{v:.4f}"


@dataclass
class RunResult:
    name: str
    params: object
    trace: object = None
    metrics: TransientMetrics | None = None
    ga: GAResult | None = None
    error: str | None = None


def _resolve(spec: ControllerSpec, cfg: ExperimentConfig) -> RunResult:
    name = DISPLAY_NAMES[spec.kind]
    ga_result = None
    params = spec.params
    if spec.source == "tune":
        task = make_task(spec.kind)
        fit_cfg = replace(cfg.sim, step_size=cfg.fitness_step_size)
        log.info("tuning %s: population %d, generations %d, seed %d",
                 name, cfg.ga.population_size, cfg.ga.generations, cfg.ga.seed)

        def progress(gen, best, mean):
            log.info("%s generation %d: best %.6g mean %.6g", name, gen, best, mean)

        ga_result = optimize(task, cfg.plant, fit_cfg, cfg.ga, log=progress)
        params = ga_result.best_params
    res = RunResult(name, params, ga=ga_result)
    try:
        res.trace = simulate(cfg.plant, make_controller(spec.kind, params), cfg.sim)
    except DivergedError as exc:
        res.error = str(exc)
        return res
    res.metrics = analyze(res.trace, cfg.sim.reference)
    return res


def _write_run(res: RunResult, spec: ControllerSpec, out: Path):
    if res.trace is not None:
        _atomic(out / "trace.csv", lambda p: write_trace_csv(res.trace, p))
        _atomic(out / "metrics.csv", lambda p: write_metrics_csv(res.metrics, p))
    if res.ga is not None:
        _atomic(out / "generation_log.csv", lambda p: write_generation_log(res.ga, p))
    fname, text = _params_text(spec.kind, res.params)
    _write_text(out / fname, text)
    _write_text(out / "summary.txt", _summary(res.name, res.params, res.metrics, res.ga))
    files = {k: v for k, v in MANIFEST.items() if (out / k).exists()}
    _write_text(out / "manifest.json", json.dumps(files, indent=2, sort_keys=True) + "\n")


def run_experiment(config_path, mode: str = "simulate", out: Path | None = None, seed: int | None = None) -> int:
    cfg = load_config(config_path, mode)
    if out is not None:
        cfg.output_dir = Path(out)
    if seed is not None:
        cfg.ga = replace(cfg.ga, seed=seed)
    spec = cfg.controllers[0]
    res = _resolve(spec, cfg)
    if res.error is not None:
        log.error("%s: %s", res.name, res.error)
        return EXIT_DIVERGED
    _write_run(res, spec, cfg.output_dir)
    log.info("wrote artifacts to %s", cfg.output_dir)
    return EXIT_OK


def run_comparison(config_path, out: Path | None = None, seed: int | None = None) -> int:
    cfg = load_config(config_path, "compare")
    if out is not None:
        cfg.output_dir = Path(out)
    if seed is not None:
        cfg.ga = replace(cfg.ga, seed=seed)
    results: dict[str, TransientMetrics | None] = {}
    failed = False
    for spec in cfg.controllers:
        res = _resolve(spec, cfg)
        if res.error is not None:
            log.error("%s: %s", res.name, res.error)
            failed = True
        _write_run(res, spec, cfg.output_dir / spec.kind)
        results[res.name] = res.metrics
    _atomic(cfg.output_dir / "comparison.csv", lambda p: write_comparison_csv(results, p))
    table = format_comparison(results)
    _write_text(cfg.output_dir / "comparison.txt", table)
    log.info("\n%s", table)
    return EXIT_PARTIAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scopectl",
        description="Telescope mount control experiments: PD, fuzzy, GA-PD and GA-FLC.",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", type=Path, help="experiment config file")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--seed", type=_seed, help="GA seed, unsigned 64-bit (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("simulate", parents=[common], help="run one controller on the step experiment")
    sub.add_parser("tune", parents=[common], help="GA-tune a controller, then simulate it")
    sub.add_parser("compare", parents=[common], help="run several controllers and tabulate metrics")
    sub.add_parser("version", help="print the version")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.verb == "version":
        print(f"scopectl {__version__}")
        return EXIT_OK
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        if args.verb == "compare":
            return run_comparison(args.config, args.out, args.seed)
        return run_experiment(args.config, args.verb, args.out, args.seed)
    except UsageError as exc:
        log.error("usage: %s", exc)
        return EXIT_USAGE
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("i/o: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
