"""Stability, consistency, and convergence estimation for one-step methods
approximating nonlinear semigroups, including the close-pair versus
distant-pair stability gap curve that separates the two regimes.
"""

from .core import (
    BlowupDetected,
    CompactCloud,
    ContractViolation,
    DomainExit,
    DomainFamily,
    EmptySample,
    Method,
    NormSpec,
    Problem,
    RegularFamily,
    RegularityViolation,
    StabgapError,
    ball_cloud,
    explicit_cloud,
    grid_cloud,
    make_state,
    norm,
    norm_batch,
    regularity_probe,
    semigroup_law_residual,
    sublevel_family,
)
from .problems import (
    CatalogEntry,
    ProblemCatalog,
    advection_problem,
    apply_step,
    exact_step,
    explicit_euler_riccati,
    exponential_problem,
    ftcs_heat,
    heat_exact,
    heat_problem,
    lax_friedrichs_advection,
    linear_euler,
    list_catalog,
    riccati_exact,
    riccati_problem,
    sqrt_drift_euler,
    sqrt_drift_exact,
    sqrt_drift_problem,
)
from .estimators import (
    ConsistencyReport,
    ContinuityModulus,
    ConvergenceReport,
    DefectSample,
    ErrorSample,
    PairWitness,
    RungStats,
    StabilityEstimate,
    consistency_defect,
    consistency_report,
    continuity_modulus,
    convergence_error,
    convergence_report,
    deterministic_map,
    estimate_distant_stability,
    estimate_local_stability,
    estimate_stability,
    geometric_ladder,
    iterate,
    linear_power_norm,
    trajectory_cloud,
)
from .analysis import (
    BoundCheckReport,
    EquivalenceVerdict,
    GapCurve,
    GapFit,
    GapRung,
    Implication,
    NecessityReport,
    PartitionReport,
    VerdictThresholds,
    check_convergence_bound,
    check_distant_necessity,
    check_partition_identity,
    classify_stability,
    equivalence_report,
    fit_gap_model,
    gap_curve,
)
from .cli import (
    ConfigError,
    ConfigFileMissing,
    ConfigParseError,
    ConfigValidationError,
    ExperimentConfig,
    build_experiment,
    emit,
    load_config,
    parse_config,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "BlowupDetected",
    "BoundCheckReport",
    "CatalogEntry",
    "CompactCloud",
    "ConfigError",
    "ConfigFileMissing",
    "ConfigParseError",
    "ConfigValidationError",
    "ConsistencyReport",
    "ContinuityModulus",
    "ContractViolation",
    "ConvergenceReport",
    "DefectSample",
    "DomainExit",
    "DomainFamily",
    "EmptySample",
    "EquivalenceVerdict",
    "ErrorSample",
    "ExperimentConfig",
    "GapCurve",
    "GapFit",
    "GapRung",
    "Implication",
    "Method",
    "NecessityReport",
    "NormSpec",
    "PairWitness",
    "PartitionReport",
    "Problem",
    "ProblemCatalog",
    "RegularFamily",
    "RegularityViolation",
    "RungStats",
    "StabgapError",
    "StabilityEstimate",
    "VerdictThresholds",
    "advection_problem",
    "apply_step",
    "ball_cloud",
    "build_experiment",
    "check_convergence_bound",
    "check_distant_necessity",
    "check_partition_identity",
    "classify_stability",
    "consistency_defect",
    "consistency_report",
    "continuity_modulus",
    "convergence_error",
    "convergence_report",
    "deterministic_map",
    "emit",
    "equivalence_report",
    "estimate_distant_stability",
    "estimate_local_stability",
    "estimate_stability",
    "exact_step",
    "explicit_cloud",
    "explicit_euler_riccati",
    "exponential_problem",
    "fit_gap_model",
    "ftcs_heat",
    "gap_curve",
    "geometric_ladder",
    "grid_cloud",
    "heat_exact",
    "heat_problem",
    "iterate",
    "lax_friedrichs_advection",
    "linear_euler",
    "linear_power_norm",
    "list_catalog",
    "load_config",
    "make_state",
    "norm",
    "norm_batch",
    "parse_config",
    "regularity_probe",
    "riccati_exact",
    "riccati_problem",
    "run_experiment",
    "semigroup_law_residual",
    "sqrt_drift_euler",
    "sqrt_drift_exact",
    "sqrt_drift_problem",
    "trajectory_cloud",
]
