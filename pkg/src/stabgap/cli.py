"""TOML-driven experiment runner and the command line entry point.

Reports are deterministic: no timestamps, no absolute paths, insertion-order
keys.  The same config and seed produce byte-identical JSON no matter how
many workers run the sweeps or where the output lands.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .analysis import (
    EquivalenceVerdict,
    GapCurve,
    VerdictThresholds,
    equivalence_report,
    gap_curve,
)
from .core import (
    CompactCloud,
    ContractViolation,
    Method,
    Problem,
    StabgapError,
    ball_cloud,
    explicit_cloud,
    grid_cloud,
)
from .estimators import PairWitness, StabilityEstimate, geometric_ladder
from .problems import (
    exact_step,
    explicit_euler_riccati,
    ftcs_heat,
    lax_friedrichs_advection,
    linear_euler,
    list_catalog,
    sqrt_drift_euler,
    advection_problem,
    exponential_problem,
    heat_problem,
    riccati_problem,
    sqrt_drift_problem,
)

SCHEMA_VERSION = 1
ENV_SEED = "STABGAP_SEED"
ENV_WORKERS = "STABGAP_WORKERS"

OUTPUT_FORMATS = ("json", "csv-bundle", "both")


class ConfigError(StabgapError):
    """Base class for configuration problems."""


class ConfigFileMissing(ConfigError):
    """The config path does not point at a readable file."""


class ConfigParseError(ConfigError):
    """The config file is not valid TOML."""


class ConfigValidationError(ConfigError):
    """The config parses but a section, key, or value is wrong."""


# every recognised key with its type; bool is excluded from the numeric
# kinds explicitly because isinstance(True, int) holds in Python
_NUMBER = (int, float)
_SCHEMA: dict[str, dict[str, tuple]] = {
    "problem": {
        "name": (str,),
        "cap": _NUMBER,
        "cap_slope": _NUMBER,
        "size": (int,),
        "rate": _NUMBER,
        "speed": _NUMBER,
    },
    "method": {"name": (str,)},
    "sampling": {
        "kind": (str,),
        "bounds": (list,),
        "counts": (list, int),
        "center": (list,),
        "radius": _NUMBER,
        "count": (int,),
        "points": (list,),
        "seed": (int,),
    },
    "ladders": {
        "T": _NUMBER,
        "dt0": _NUMBER,
        "dt_depth": (int,),
        "rho0": _NUMBER,
        "rho_depth": (int,),
    },
    "tolerances": {
        "rho_prime": _NUMBER,
        "rho": _NUMBER,
        "theta": _NUMBER,
        "t_samples": (int,),
        "growth_threshold": _NUMBER,
        "growth_rung_tolerance": _NUMBER,
        "consistency_tol": _NUMBER,
        "consistency_order_min": _NUMBER,
        "convergence_tol": _NUMBER,
        "explosion_threshold": _NUMBER,
        "floor_ratio": _NUMBER,
        "gap_ratio_tol": _NUMBER,
        "gap_q_min": _NUMBER,
        "gap_residual_max": _NUMBER,
        "gap_fit_tail": (int,),
        "bound_slack": _NUMBER,
    },
    "output": {"directory": (str,), "format": (str,)},
}

_PROBLEM_OVERRIDES = {
    "riccati": {"cap", "cap_slope"},
    "exponential": {"cap", "cap_slope", "rate"},
    "sqrt-drift": {"cap", "cap_slope"},
    "heat": {"cap", "cap_slope", "size"},
    "advection": {"cap", "cap_slope", "size", "speed"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated experiment description."""

    problem: str
    method: str
    overrides: dict
    sampling: dict | None  # None means the catalog default cloud
    seed: int | None       # None means the catalog default seed
    horizon: float
    dt0: float
    dt_depth: int
    rho0: float
    rho_depth: int
    rho_prime: float
    rho: float
    theta: float | None
    t_samples: int
    thresholds: VerdictThresholds
    out_dir: str
    out_format: str

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=int(seed))

    def echo(self) -> dict:
        """Config as it entered the run, for embedding in reports."""
        tol = dataclasses.asdict(self.thresholds)
        return {
            "problem": {"name": self.problem, **self.overrides},
            "method": {"name": self.method},
            "sampling": self.sampling if self.sampling is not None else "catalog-default",
            "seed": self.seed,
            "ladders": {
                "T": self.horizon,
                "dt0": self.dt0,
                "dt_depth": self.dt_depth,
                "rho0": self.rho0,
                "rho_depth": self.rho_depth,
            },
            "tolerances": {
                "rho_prime": self.rho_prime,
                "rho": self.rho,
                "theta": self.theta,
                "t_samples": self.t_samples,
                **tol,
            },
            "output": {"directory": self.out_dir, "format": self.out_format},
        }


def _check_section(raw: dict) -> None:
    for section, body in raw.items():
        if section not in _SCHEMA:
            raise ConfigValidationError(
                f"unknown section [{section}]; expected one of {sorted(_SCHEMA)}")
        if not isinstance(body, dict):
            raise ConfigValidationError(f"section [{section}] must be a table")
        for key, value in body.items():
            kinds = _SCHEMA[section].get(key)
            if kinds is None:
                raise ConfigValidationError(
                    f"unknown key {section}.{key}; expected one of "
                    f"{sorted(_SCHEMA[section])}")
            if isinstance(value, bool) or not isinstance(value, kinds):
                names = "/".join(k.__name__ for k in kinds)
                raise ConfigValidationError(
                    f"{section}.{key} must have type {names}, got {value!r}")


def _positive(value: float, key: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ConfigValidationError(f"{key} must be positive and finite, got {value!r}")
    return value


def _nonneg_int(value: int, key: str) -> int:
    if value < 0:
        raise ConfigValidationError(f"{key} must be nonnegative, got {value!r}")
    return int(value)


def load_config(path) -> ExperimentConfig:
    """Read, parse, and validate a TOML experiment config."""
    fp = Path(path)
    if not fp.is_file():
        raise ConfigFileMissing(f"config file not found: {fp}")
    try:
        raw = tomllib.loads(fp.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"config parse failure in {fp}: {exc}") from exc
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed TOML table into an ExperimentConfig."""
    _check_section(raw)
    catalog = list_catalog()

    problem_tbl = raw.get("problem", {})
    name = problem_tbl.get("name")
    if name is None:
        raise ConfigValidationError("problem.name is required")
    entry = None
    for e in catalog.entries:
        if e.name == name:
            entry = e
    if entry is None:
        raise ConfigValidationError(
            f"problem.name {name!r} is not in the catalog; choices: {catalog.names()}")

    overrides = {k: v for k, v in problem_tbl.items() if k != "name"}
    allowed = _PROBLEM_OVERRIDES[name]
    for key in overrides:
        if key not in allowed:
            raise ConfigValidationError(
                f"problem.{key} does not apply to {name!r}; allowed: {sorted(allowed)}")
    if "cap" in overrides:
        _positive(overrides["cap"], "problem.cap")
    if "size" in overrides and overrides["size"] < 2:
        raise ConfigValidationError(
            f"problem.size must be at least 2, got {overrides['size']!r}")

    method_tbl = raw.get("method", {})
    method_name = method_tbl.get("name", entry.methods[0].name)
    if method_name not in [m.name for m in entry.methods]:
        raise ConfigValidationError(
            f"method.name {method_name!r} is not available for {name!r}; "
            f"choices: {[m.name for m in entry.methods]}")

    sampling_tbl = raw.get("sampling")
    seed: int | None = None
    sampling: dict | None = None
    if sampling_tbl:
        sampling_tbl = dict(sampling_tbl)
        seed = sampling_tbl.pop("seed", None)
        if seed is not None:
            seed = _nonneg_int(seed, "sampling.seed")
        if sampling_tbl:
            kind = sampling_tbl.get("kind")
            if kind is None:
                raise ConfigValidationError("sampling.kind is required when sampling is given")
            if kind not in ("grid-in-box", "ball", "explicit-list"):
                raise ConfigValidationError(
                    f"sampling.kind must be grid-in-box, ball, or explicit-list, got {kind!r}")
            required = {
                "grid-in-box": ("bounds", "counts"),
                "ball": ("center", "radius", "count"),
                "explicit-list": ("points",),
            }[kind]
            for key in required:
                if key not in sampling_tbl:
                    raise ConfigValidationError(f"sampling.{key} is required for kind {kind!r}")
            extra = set(sampling_tbl) - set(required) - {"kind"}
            if extra:
                raise ConfigValidationError(
                    f"sampling.{sorted(extra)[0]} does not apply to kind {kind!r}")
            if kind == "ball":
                _positive(sampling_tbl["radius"], "sampling.radius")
                if sampling_tbl["count"] < 1:
                    raise ConfigValidationError("sampling.count must be positive")
            sampling = sampling_tbl

    ladders = raw.get("ladders", {})
    horizon = _positive(ladders.get("T", entry.default_horizon), "ladders.T")
    dt0 = _positive(ladders.get("dt0", entry.default_dt0), "ladders.dt0")
    dt_depth = _nonneg_int(ladders.get("dt_depth", 6), "ladders.dt_depth")
    rho0 = _positive(ladders.get("rho0", 0.5), "ladders.rho0")
    rho_depth = _nonneg_int(ladders.get("rho_depth", 7), "ladders.rho_depth")
    if dt0 > horizon:
        raise ConfigValidationError(
            f"ladders.dt0 = {dt0!r} exceeds the horizon ladders.T = {horizon!r}")

    tol = dict(raw.get("tolerances", {}))
    rho_prime = _positive(tol.pop("rho_prime", 0.25), "tolerances.rho_prime")
    rho = _positive(tol.pop("rho", 0.25), "tolerances.rho")
    theta = tol.pop("theta", None)
    if theta is not None:
        theta = float(theta)
        if theta < 0.0 or not np.isfinite(theta):
            raise ConfigValidationError(
                f"tolerances.theta must be finite and nonnegative, got {theta!r}")
    t_samples = tol.pop("t_samples", 17)
    if t_samples < 2:
        raise ConfigValidationError(
            f"tolerances.t_samples must be at least 2, got {t_samples!r}")
    defaults = VerdictThresholds()
    numbers = {}
    for f in dataclasses.fields(VerdictThresholds):
        value = tol.pop(f.name, getattr(defaults, f.name))
        if f.name == "gap_fit_tail":
            numbers[f.name] = _nonneg_int(value, f"tolerances.{f.name}")
        else:
            numbers[f.name] = _positive(value, f"tolerances.{f.name}")
    thresholds = VerdictThresholds(**numbers)

    output = raw.get("output", {})
    out_dir = output.get("directory", "out")
    out_format = output.get("format", "json")
    if out_format not in OUTPUT_FORMATS:
        raise ConfigValidationError(
            f"output.format must be one of {OUTPUT_FORMATS}, got {out_format!r}")

    return ExperimentConfig(
        problem=name,
        method=method_name,
        overrides=overrides,
        sampling=sampling,
        seed=seed,
        horizon=horizon,
        dt0=dt0,
        dt_depth=dt_depth,
        rho0=rho0,
        rho_depth=rho_depth,
        rho_prime=rho_prime,
        rho=rho,
        theta=theta,
        t_samples=int(t_samples),
        thresholds=thresholds,
        out_dir=str(out_dir),
        out_format=out_format,
    )


def build_experiment(cfg: ExperimentConfig) -> tuple[Problem, Method, CompactCloud]:
    """Construct the problem, method, and cloud an experiment runs on."""
    ov = cfg.overrides
    if cfg.problem == "riccati":
        problem = riccati_problem(ov.get("cap", 2.0), ov.get("cap_slope", 0.0))
    elif cfg.problem == "exponential":
        problem = exponential_problem(ov.get("rate", 1.0), ov.get("cap", 3.0),
                                      ov.get("cap_slope", 0.0))
    elif cfg.problem == "sqrt-drift":
        problem = sqrt_drift_problem(ov.get("cap", 4.0), ov.get("cap_slope", 0.0))
    elif cfg.problem == "heat":
        problem = heat_problem(ov.get("size", 32), ov.get("cap", 2.0),
                               ov.get("cap_slope", 0.0))
    elif cfg.problem == "advection":
        problem = advection_problem(ov.get("size", 33), ov.get("speed", 1.0),
                                    ov.get("cap", 2.0), ov.get("cap_slope", 0.0))
    else:
        raise ContractViolation(f"unknown problem {cfg.problem!r}")

    if cfg.method == "explicit-euler-riccati":
        method = explicit_euler_riccati()
    elif cfg.method == "exact-step":
        method = exact_step(problem,
                            linear=cfg.problem in ("exponential", "heat", "advection"))
    elif cfg.method == "linear-euler":
        method = linear_euler(ov.get("rate", 1.0))
    elif cfg.method == "ftcs-heat":
        method = ftcs_heat(problem.dim)
    elif cfg.method == "lax-friedrichs-advection":
        method = lax_friedrichs_advection(problem.dim, ov.get("speed", 1.0))
    elif cfg.method == "sqrt-drift-euler":
        method = sqrt_drift_euler()
    else:
        raise ContractViolation(f"unknown method {cfg.method!r}")

    cloud = _build_cloud(cfg, problem)
    if cloud.dim != problem.dim:
        raise ConfigValidationError(
            f"sampling cloud dim {cloud.dim} does not match problem dim {problem.dim}")
    return problem, method, cloud


def _build_cloud(cfg: ExperimentConfig, problem: Problem) -> CompactCloud:
    if cfg.sampling is None:
        entry = list_catalog().get(cfg.problem)
        cloud = entry.default_cloud
        if cfg.seed is not None and cloud.generator == "ball":
            return ball_cloud(seed=cfg.seed, **cloud.params)
        return cloud
    kind = cfg.sampling["kind"]
    try:
        if kind == "grid-in-box":
            return grid_cloud(cfg.sampling["bounds"], cfg.sampling["counts"])
        if kind == "ball":
            return ball_cloud(cfg.sampling["center"], cfg.sampling["radius"],
                              cfg.sampling["count"],
                              seed=cfg.seed if cfg.seed is not None else 42)
        return explicit_cloud(cfg.sampling["points"])
    except (ContractViolation, TypeError, ValueError) as exc:
        raise ConfigValidationError(f"sampling is not buildable: {exc}") from exc


# ---------------------------------------------------------------------------
# report document


def _witness_dict(w: PairWitness) -> dict:
    return {
        "u_index": int(w.u_index),
        "v_index": int(w.v_index),
        "n": int(w.n),
        "dt": float(w.dt),
        "dt_index": int(w.dt_index),
        "separation": float(w.separation),
        "ratio": float(w.ratio),
        "u": [float(x) for x in w.u],
        "v": [float(x) for x in w.v],
    }


def _estimate_dict(est: StabilityEstimate | None, verdict: str, growth: float) -> dict | None:
    if est is None:
        return None
    return {
        "kind": est.kind,
        "constant": float(est.constant),
        "threshold": None if est.threshold is None else float(est.threshold),
        "verdict": verdict,
        "growth": float(growth),
        "horizon": float(est.horizon),
        "pairs_evaluated": int(est.pairs_evaluated),
        "skipped_pairs": int(est.skipped_pairs),
        "distinct_pairs": int(est.distinct_pairs),
        "inconclusive": bool(est.inconclusive),
        "witness": _witness_dict(est.witness),
        "rungs": [
            {"dt": float(r.dt), "constant": float(r.constant),
             "growth": float(r.growth), "evaluations": int(r.evaluations)}
            for r in est.rungs
        ],
    }


def build_document(cfg: ExperimentConfig, cloud: CompactCloud,
                   dt_ladder: Sequence[float], rho_ladder: Sequence[float],
                   verdict: EquivalenceVerdict) -> dict:
    """Assemble the deterministic report document."""
    consistency = None
    if verdict.consistency is not None:
        consistency = {
            "samples": [
                {"dt": float(s.dt), "defect": float(s.defect), "t": float(s.t),
                 "u_index": int(s.u_index), "evaluations": int(s.evaluations)}
                for s in verdict.consistency.samples
            ],
            "fit_order": float(verdict.consistency.fit_order),
            "tolerance": float(verdict.consistency.tolerance),
            "verdict": verdict.consistency.verdict,
        }
    convergence = None
    if verdict.convergence is not None:
        convergence = {
            "samples": [
                {"dt": float(s.dt), "sup_error": float(s.sup_error),
                 "theta": float(s.theta), "t": float(s.t), "n": int(s.n),
                 "u_index": int(s.u_index), "evaluations": int(s.evaluations)}
                for s in verdict.convergence.samples
            ],
            "fit_order": float(verdict.convergence.fit_order),
            "tolerance": float(verdict.convergence.tolerance),
            "floor_detected": bool(verdict.convergence.floor_detected),
            "verdict": verdict.convergence.verdict,
        }
    gap = {
        "rungs": [
            {"rho": float(r.rho), "constant": float(r.constant),
             "distinct_pairs": int(r.distinct_pairs), "valid": bool(r.valid),
             "inconclusive": bool(r.inconclusive)}
            for r in verdict.gap.rungs
        ],
        "fit": None if verdict.gap.fit is None else {
            "plateau": float(verdict.gap.fit.plateau),
            "amplitude": float(verdict.gap.fit.amplitude),
            "exponent": float(verdict.gap.fit.exponent),
            "residual": float(verdict.gap.fit.residual),
            "rungs_used": int(verdict.gap.fit.rungs_used),
        },
        "ratio_test": None if verdict.gap.ratio_test is None else float(verdict.gap.ratio_test),
        "verdict": verdict.gap.verdict,
    }
    modulus = None
    if verdict.modulus is not None:
        modulus = {
            "samples": [[float(d), float(w)] for d, w in verdict.modulus.samples],
            "t_samples": int(verdict.modulus.t_samples),
        }
    checks = {
        "partition_identity": {
            "r": float(verdict.partition.r),
            "full_constant": verdict.partition.full_constant,
            "local_constant": verdict.partition.local_constant,
            "distant_constant": verdict.partition.distant_constant,
            "equal": bool(verdict.partition.equal),
            "vacuous": bool(verdict.partition.vacuous),
        },
        "convergence_bound": {
            "status": verdict.bound_check.status,
            "local_constant": verdict.bound_check.local_constant,
            "slack": float(verdict.bound_check.slack),
            "rungs": [
                {"dt": float(r.dt), "sup_error": float(r.sup_error),
                 "defect": float(r.defect), "bound": float(r.bound),
                 "holds": bool(r.holds)}
                for r in verdict.bound_check.rungs
            ],
            "evidence": verdict.bound_check.evidence,
        },
        "distant_necessity": {
            "status": verdict.necessity.status,
            "distant_verdict": verdict.necessity.distant_verdict,
            "convergence_verdict": verdict.necessity.convergence_verdict,
            "evidence": verdict.necessity.evidence,
        },
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.echo(),
        "cloud": {
            "generator": cloud.generator,
            "count": len(cloud),
            "dim": cloud.dim,
            "seed": int(cloud.seed),
            "fingerprint": cloud.fingerprint(),
        },
        "ladders": {
            "dt": [float(x) for x in dt_ladder],
            "rho": [float(x) for x in rho_ladder],
        },
        "estimates": {
            "local": _estimate_dict(verdict.local, verdict.local_verdict,
                                    verdict.local_growth),
            "distant": _estimate_dict(verdict.distant, verdict.distant_verdict,
                                      verdict.distant_growth),
            "full": _estimate_dict(verdict.full, verdict.full_verdict,
                                   verdict.full_growth),
        },
        "verdicts": {
            "local": verdict.local_verdict,
            "distant": verdict.distant_verdict,
            "full": verdict.full_verdict,
            "consistency": consistency["verdict"] if consistency else "inconclusive",
            "convergence": convergence["verdict"] if convergence else "inconclusive",
            "gap": verdict.gap.verdict,
            "gap_forced_instability": bool(verdict.gap_forced_instability),
        },
        "consistency": consistency,
        "convergence": convergence,
        "gap_curve": gap,
        "continuity_modulus": modulus,
        "checks": checks,
        "implications": [
            {"name": imp.name, "status": imp.status, "evidence": imp.evidence}
            for imp in verdict.implications
        ],
        "warnings": list(verdict.warnings),
    }


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Run the full pipeline described by a config; returns the document."""
    problem, method, cloud = build_experiment(cfg)
    dt_ladder = geometric_ladder(cfg.dt0, cfg.dt_depth)
    rho_ladder = geometric_ladder(cfg.rho0, cfg.rho_depth)
    verdict = equivalence_report(
        problem, method, cfg.horizon, cloud, dt_ladder, rho_ladder,
        rho_prime=cfg.rho_prime, rho=cfg.rho,
        thresholds=cfg.thresholds, theta=cfg.theta,
        t_samples=cfg.t_samples, workers=workers,
    )
    return build_document(cfg, cloud, dt_ladder, rho_ladder, verdict)


# ---------------------------------------------------------------------------
# emitters


def _format_float(x: float) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: tuple[str, str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for a, b in rows:
            writer.writerow([_format_float(a), _format_float(b)])


def _ladder_rows(ladder, samples, key):
    values = {float(s["dt"]): float(s[key]) for s in samples}
    return [(dt, values.get(float(dt), float("nan"))) for dt in ladder]


def emit(doc: dict, directory, form: str | None = None) -> list[Path]:
    """Write the report files; returns the written paths."""
    if form is None:
        form = doc["config"]["output"]["format"]
    if form not in OUTPUT_FORMATS:
        raise ContractViolation(f"unknown output format {form!r}")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if form in ("json", "both"):
        path = out / "report.json"
        path.write_bytes((json.dumps(doc, indent=2) + "\n").encode("utf-8"))
        written.append(path)
    if form in ("csv-bundle", "both"):
        gap_path = out / "gap_curve.csv"
        _write_csv(gap_path, ("rho", "L2estimate"),
                   [(r["rho"], r["constant"]) for r in doc["gap_curve"]["rungs"]])
        written.append(gap_path)
        conv_path = out / "convergence.csv"
        samples = doc["convergence"]["samples"] if doc["convergence"] else []
        _write_csv(conv_path, ("dt", "sup_error"),
                   _ladder_rows(doc["ladders"]["dt"], samples, "sup_error"))
        written.append(conv_path)
        cons_path = out / "consistency.csv"
        samples = doc["consistency"]["samples"] if doc["consistency"] else []
        _write_csv(cons_path, ("dt", "defect"),
                   _ladder_rows(doc["ladders"]["dt"], samples, "defect"))
        written.append(cons_path)
    return written


# ---------------------------------------------------------------------------
# commands


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, but 2 is reserved for violated
    # implications; route usage problems to the operational exit code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resolve_workers(flag: int | None) -> int:
    if flag is not None:
        value = flag
    elif ENV_WORKERS in os.environ:
        try:
            value = int(os.environ[ENV_WORKERS])
        except ValueError as exc:
            raise ConfigValidationError(
                f"{ENV_WORKERS} must be an integer, got {os.environ[ENV_WORKERS]!r}"
            ) from exc
    else:
        value = 1
    if value < 1:
        raise ConfigValidationError(f"workers must be at least 1, got {value!r}")
    return value


def _resolve_seed(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    if ENV_SEED in os.environ:
        try:
            return int(os.environ[ENV_SEED])
        except ValueError as exc:
            raise ConfigValidationError(
                f"{ENV_SEED} must be an integer, got {os.environ[ENV_SEED]!r}"
            ) from exc
    return None


def _cmd_list() -> int:
    catalog = list_catalog()
    for entry in catalog.entries:
        methods = ", ".join(m.name for m in entry.methods)
        print(f"{entry.name}: dim={entry.problem.dim} norm={entry.problem.norm.kind} "
              f"T={entry.default_horizon:g} dt0={entry.default_dt0:g}")
        print(f"  methods: {methods}")
        print(f"  cloud: {entry.default_cloud.generator} x{len(entry.default_cloud)}")
        if entry.notes:
            print(f"  notes: {entry.notes}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args.seed)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    workers = _resolve_workers(args.workers)
    doc = run_experiment(cfg, workers=workers)
    out_dir = args.out if args.out is not None else cfg.out_dir
    form = args.format if args.format is not None else cfg.out_format
    written = emit(doc, out_dir, form)

    verdicts = doc["verdicts"]
    print(f"problem={doc['config']['problem']['name']} "
          f"method={doc['config']['method']['name']}")
    print(f"local={verdicts['local']} distant={verdicts['distant']} "
          f"full={verdicts['full']}")
    print(f"consistency={verdicts['consistency']} "
          f"convergence={verdicts['convergence']} gap={verdicts['gap']}")
    for imp in doc["implications"]:
        print(f"implication: {imp['name']}: {imp['status']}")
    for warning in doc["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    for path in written:
        print(f"wrote {path}")
    violated = any(imp["status"] == "violated" for imp in doc["implications"])
    return 2 if violated else 0


def _cmd_gap(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(args.seed)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    workers = _resolve_workers(args.workers)
    problem, method, cloud = build_experiment(cfg)
    dt_ladder = geometric_ladder(cfg.dt0, cfg.dt_depth)
    rho_ladder = geometric_ladder(cfg.rho0, cfg.rho_depth)
    curve = gap_curve(method, problem.regular, cfg.horizon, cloud,
                      rho_ladder, dt_ladder, problem.norm,
                      thresholds=cfg.thresholds, workers=workers)
    for rung in curve.rungs:
        print(f"rho={rung.rho:.10g} constant={rung.constant:.10g} "
              f"pairs={rung.distinct_pairs}")
    if curve.fit is not None:
        print(f"fit: plateau={curve.fit.plateau:.10g} "
              f"amplitude={curve.fit.amplitude:.10g} "
              f"exponent={curve.fit.exponent:.10g} residual={curve.fit.residual:.3g}")
    if curve.ratio_test is not None:
        print(f"ratio test: {curve.ratio_test:.10g}")
    print(f"gap verdict: {curve.verdict}")
    out_dir = Path(args.out if args.out is not None else cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "gap_curve.csv"
    _write_csv(path, ("rho", "L2estimate"),
               [(r.rho, r.constant) for r in curve.rungs])
    print(f"wrote {path}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = _Parser(prog="stabgap",
                     description="stability, consistency, and convergence "
                                 "estimation for one-step methods")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="show built-in problems and methods")

    run_parser = sub.add_parser("run", help="run the full pipeline from a config")
    run_parser.add_argument("--config", required=True, help="TOML config path")
    run_parser.add_argument("--out", default=None, help="output directory override")
    run_parser.add_argument("--format", default=None, choices=list(OUTPUT_FORMATS))
    run_parser.add_argument("--seed", type=int, default=None)
    run_parser.add_argument("--workers", type=int, default=None)

    gap_parser = sub.add_parser("gap", help="compute the gap curve only")
    gap_parser.add_argument("--config", required=True, help="TOML config path")
    gap_parser.add_argument("--out", default=None, help="output directory override")
    gap_parser.add_argument("--seed", type=int, default=None)
    gap_parser.add_argument("--workers", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            return _cmd_list()
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_gap(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StabgapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
