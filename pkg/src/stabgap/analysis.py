"""Verdict layer: stability classification, the gap curve, and implications.

Estimates are finite-sample maxima, so every verdict here is a trend
reading, not a proof.  The vocabulary is fixed: stability verdicts are
stable / unstable / inconclusive, trend verdicts are consistent /
inconsistent / inconclusive and convergent / divergent / inconclusive, and
implication statuses are holds / violated / hypothesis-not-met /
inconclusive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .core import (
    CompactCloud,
    ContractViolation,
    EmptySample,
    Method,
    NormSpec,
    Problem,
    RegularFamily,
    norm_batch,
)
from .estimators import (
    ConsistencyReport,
    ContinuityModulus,
    ConvergenceReport,
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
)


@dataclass(frozen=True)
class VerdictThresholds:
    """Shared decision constants for all verdicts.

    growth_threshold: per-step growth beyond 1 + this marks instability.
    growth_rung_tolerance: rungs whose constant is within this relative
        margin of the ladder maximum count as achieving it; the growth
        factor is read at the finest achieving rung, where horizon-limited
        growth of a stable flow has washed out but CFL-type blow-up has not.
    """

    growth_threshold: float = 0.05
    growth_rung_tolerance: float = 0.25
    consistency_tol: float = 0.05
    consistency_order_min: float = 0.1
    convergence_tol: float = 0.05
    explosion_threshold: float = 1e3
    floor_ratio: float = 0.8
    gap_ratio_tol: float = 0.1
    gap_q_min: float = 0.2
    gap_residual_max: float = 0.1
    gap_fit_tail: int = 6
    bound_slack: float = 2.0


DEFAULT_THRESHOLDS = VerdictThresholds()


def classify_stability(
    estimate: StabilityEstimate,
    thresholds: VerdictThresholds = DEFAULT_THRESHOLDS,
) -> tuple[str, float]:
    """Stability verdict plus the growth factor it was read from.

    An estimate resting on too few distinct pairs is inconclusive.  Among
    ladder rungs whose constant achieves the maximum (within the rung
    tolerance), the finest rung's fitted per-step growth factor decides:
    at or beyond 1 + growth_threshold the configuration is unstable.
    """
    finite_rungs = [r for r in estimate.rungs if np.isfinite(r.constant)]
    if estimate.inconclusive or not finite_rungs:
        return "inconclusive", float("nan")
    top = max(r.constant for r in finite_rungs)
    cutoff = top / (1.0 + thresholds.growth_rung_tolerance)
    achieving = [r for r in finite_rungs if r.constant >= cutoff]
    growth = achieving[-1].growth
    verdict = "unstable" if growth >= 1.0 + thresholds.growth_threshold else "stable"
    return verdict, float(growth)


# ---------------------------------------------------------------------------
# gap curve


@dataclass(frozen=True)
class GapRung:
    """One distant-stability estimate along the separation ladder."""

    rho: float
    constant: float
    distinct_pairs: int
    valid: bool
    inconclusive: bool


@dataclass(frozen=True)
class GapFit:
    """Profiled least-squares fit of ``plateau + amplitude * rho**-exponent``."""

    plateau: float
    amplitude: float
    exponent: float
    residual: float
    rungs_used: int


@dataclass(frozen=True)
class GapCurve:
    """Distant-stability constants as the separation threshold shrinks.

    bounded: the last ratio-test ratios stay within 1 + gap_ratio_tol.
    unbounded: the fitted exponent clears gap_q_min with an acceptable
    residual.  Fewer than four usable rungs, or neither pattern, is
    inconclusive.
    """

    rungs: tuple[GapRung, ...]
    fit: GapFit | None
    ratio_test: float | None
    verdict: str
    horizon: float
    cloud_fingerprint: str


def fit_gap_model(
    rhos: Sequence[float],
    values: Sequence[float],
    tail: int = 6,
) -> GapFit:
    """Fit ``value = plateau + amplitude * rho**-exponent`` in log space.

    The plateau is profiled out by a bounded scalar minimisation; for each
    candidate plateau the remaining model is linear in log-log coordinates.
    Only the last ``tail`` points (smallest rho) enter the fit.  A flat
    curve short-circuits to exponent zero instead of fitting noise.
    """
    pairs = [(float(r), float(v)) for r, v in zip(rhos, values)
             if np.isfinite(r) and np.isfinite(v) and r > 0.0]
    if len(pairs) < 3:
        raise ContractViolation("gap fit needs at least three valid rungs")
    pairs = pairs[-int(tail):] if tail and tail > 0 else pairs
    if len(pairs) < 3:
        raise ContractViolation("gap fit needs at least three rungs after the tail cut")
    log_rho = np.log([p[0] for p in pairs])
    vals = np.array([p[1] for p in pairs])
    top = float(np.max(np.abs(vals)))
    if top == 0.0 or (np.max(vals) - np.min(vals)) <= 1e-9 * max(top, 1.0):
        return GapFit(float(np.mean(vals)), 0.0, 0.0, 0.0, len(pairs))

    def linear_fit(plateau: float):
        ys = np.log(vals - plateau)
        slope, intercept = np.polyfit(log_rho, ys, 1)
        sse = float(np.sum((ys - (slope * log_rho + intercept)) ** 2))
        return sse, slope, intercept

    ceiling = float(np.min(vals))
    hi = ceiling - 1e-12 * max(1.0, abs(ceiling))
    candidates = [0.0] if hi <= 0.0 else [0.0, hi]
    if hi > 0.0:
        res = minimize_scalar(
            lambda a: linear_fit(a)[0],
            bounds=(0.0, hi),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, hi)},
        )
        candidates.append(float(res.x))
    best = min(candidates, key=lambda a: linear_fit(a)[0])
    sse, slope, intercept = linear_fit(best)
    return GapFit(
        plateau=float(best),
        amplitude=float(np.exp(intercept)),
        exponent=float(-slope),
        residual=float(np.sqrt(sse / len(pairs))),
        rungs_used=len(pairs),
    )


def gap_curve(
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    rho_ladder: Sequence[float],
    dt_ladder: Sequence[float],
    nrm: NormSpec,
    thresholds: VerdictThresholds = DEFAULT_THRESHOLDS,
    workers: int = 1,
) -> GapCurve:
    """Distant-stability constant per separation rung, with a trend verdict.

    Each rung is one estimate_distant_stability call, so rung values agree
    bit for bit with standalone estimates.  Rungs whose estimate is empty
    or pair-starved are dropped from the ratio test and fit.
    """
    ladder = [float(r) for r in rho_ladder]
    if not ladder:
        raise ContractViolation("rho ladder must be nonempty")
    for a, b in zip(ladder, ladder[1:]):
        if b >= a:
            raise ContractViolation("rho ladder must be strictly decreasing")

    def rung(rho: float) -> GapRung:
        try:
            est = estimate_distant_stability(m, guard, horizon, K, rho,
                                             dt_ladder, nrm, workers=1)
        except EmptySample:
            return GapRung(rho, float("nan"), 0, False, True)
        return GapRung(rho, est.constant, est.distinct_pairs, True, est.inconclusive)

    rungs = tuple(deterministic_map(rung, ladder, workers))
    usable = [r for r in rungs if r.valid and not r.inconclusive]

    fit: GapFit | None = None
    ratio_test: float | None = None
    verdict = "inconclusive"
    if len(usable) >= 4:
        ratios = [b.constant / a.constant for a, b in zip(usable, usable[1:])
                  if a.constant > 0.0]
        if len(ratios) >= 3:
            ratio_test = float(max(ratios[-3:]))
        fit = fit_gap_model([r.rho for r in usable], [r.constant for r in usable],
                            tail=thresholds.gap_fit_tail)
        if ratio_test is not None and ratio_test <= 1.0 + thresholds.gap_ratio_tol:
            verdict = "bounded"
        elif (fit.exponent >= thresholds.gap_q_min
              and fit.residual <= thresholds.gap_residual_max):
            verdict = "unbounded"
    return GapCurve(rungs, fit, ratio_test, verdict, float(horizon), K.fingerprint())


# ---------------------------------------------------------------------------
# structural checks


@dataclass(frozen=True)
class PartitionReport:
    """Exact split of the full constant into local and distant parts at r."""

    r: float
    full_constant: float | None
    local_constant: float | None
    distant_constant: float | None
    equal: bool
    vacuous: bool

    @property
    def passed(self) -> bool:
        return self.vacuous or self.equal


def check_partition_identity(
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    r: float,
    dt_ladder: Sequence[float],
    nrm: NormSpec,
    workers: int = 1,
) -> PartitionReport:
    """Full constant equals max(local at r, distant at r), exactly.

    The gates at threshold r split the pair set (with overlap exactly at
    separation r), and all three sweeps share per-pair arithmetic, so the
    identity holds in float equality, not approximately.
    """
    if r <= 0.0 or not np.isfinite(r):
        raise ContractViolation(f"threshold r must be positive and finite, got {r!r}")

    def attempt(kind: str) -> float | None:
        try:
            if kind == "full":
                return estimate_stability(m, guard, horizon, K, dt_ladder, nrm,
                                          workers).constant
            if kind == "local":
                return estimate_local_stability(m, guard, horizon, K, r, dt_ladder,
                                                nrm, workers).constant
            return estimate_distant_stability(m, guard, horizon, K, r, dt_ladder,
                                              nrm, workers).constant
        except EmptySample:
            return None

    full = attempt("full")
    local = attempt("local")
    distant = attempt("distant")
    if full is None:
        return PartitionReport(r, None, local, distant, local is None and distant is None,
                               True)
    parts = [v for v in (local, distant) if v is not None]
    equal = bool(parts) and full == max(parts)
    return PartitionReport(r, full, local, distant, equal, False)


@dataclass(frozen=True)
class BoundRung:
    """One dt rung of the error-versus-defect bound."""

    dt: float
    sup_error: float
    defect: float
    bound: float
    holds: bool


@dataclass(frozen=True)
class BoundCheckReport:
    """Aligned-time error telescope against slack * L' * T * defect.

    Errors are taken at t = n dt only, where no continuity correction
    enters.  The local constant is a sampled lower bound of the true one;
    the slack factor absorbs that and the finite cloud.
    """

    status: str  # holds / violated / hypothesis-not-met
    local_constant: float | None
    slack: float
    rungs: tuple[BoundRung, ...]
    evidence: str


def check_convergence_bound(
    p: Problem,
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    dt_ladder: Sequence[float],
    local_estimate: StabilityEstimate | None,
    consistency: ConsistencyReport | None = None,
    thresholds: VerdictThresholds = DEFAULT_THRESHOLDS,
    workers: int = 1,
) -> BoundCheckReport:
    """Check sup-over-aligned-t errors against slack * L' * horizon * defect.

    Gated on the hypotheses: the local estimate must classify stable and
    the consistency trend must be consistent; otherwise the status is
    hypothesis-not-met and no rung is asserted.
    """
    if local_estimate is None:
        raise ContractViolation("prerequisite local stability estimate missing")
    if consistency is None:
        consistency = consistency_report(
            p, m, guard, horizon, K, dt_ladder,
            tolerance=thresholds.consistency_tol,
            order_min=thresholds.consistency_order_min,
            workers=workers,
        )
    local_verdict, _ = classify_stability(local_estimate, thresholds)
    if local_verdict != "stable":
        return BoundCheckReport(
            "hypothesis-not-met", None, thresholds.bound_slack, (),
            f"local stability verdict is {local_verdict!r}")
    if consistency.verdict != "consistent":
        return BoundCheckReport(
            "hypothesis-not-met", float(local_estimate.constant), thresholds.bound_slack,
            (), f"consistency verdict is {consistency.verdict!r}")

    constant = float(local_estimate.constant)
    # the defect-free degenerate case (exact stepping) pins the bound at
    # zero while errors carry roundoff; a scale-relative epsilon keeps the
    # comparison meaningful there
    atol = 1e-12 * (1.0 + float(np.max(norm_batch(p.norm, K.points))))

    def rung(dt: float) -> BoundRung | None:
        try:
            defect = consistency_defect(p, m, guard, horizon, K, dt)
            steps = int(np.floor(horizon / dt + 1e-9))
            aligned = [k * dt for k in range(steps + 1)]
            err = convergence_error(p, m, guard, horizon, K, dt,
                                    theta=0.0, t_grid=aligned)
        except EmptySample:
            return None
        bound = thresholds.bound_slack * constant * horizon * defect.defect
        return BoundRung(float(dt), err.sup_error, defect.defect, bound,
                         bool(err.sup_error <= bound + atol))

    maybe = deterministic_map(rung, list(dt_ladder), workers)
    rungs = tuple(r for r in maybe if r is not None)
    if not rungs:
        raise EmptySample("no rung of the bound check had an admissible sample")
    ok = all(r.holds for r in rungs)
    worst = max(rungs, key=lambda r: r.sup_error - r.bound)
    evidence = (
        f"all {len(rungs)} rungs satisfied the bound"
        if ok else
        f"dt={worst.dt:g}: error {worst.sup_error:.6g} exceeds bound {worst.bound:.6g}"
    )
    return BoundCheckReport("holds" if ok else "violated",
                            constant, thresholds.bound_slack, rungs, evidence)


@dataclass(frozen=True)
class NecessityReport:
    """Distant instability must rule out convergence (contrapositive check)."""

    status: str  # holds / violated / hypothesis-not-met
    distant_verdict: str
    convergence_verdict: str
    evidence: str


def _necessity_status(distant_verdict: str, convergence_verdict: str) -> NecessityReport:
    if distant_verdict != "unstable":
        return NecessityReport(
            "hypothesis-not-met", distant_verdict, convergence_verdict,
            "nothing to check: the distant verdict is not unstable")
    if convergence_verdict == "convergent":
        return NecessityReport(
            "violated", distant_verdict, convergence_verdict,
            "convergent despite distant instability")
    return NecessityReport(
        "holds", distant_verdict, convergence_verdict,
        f"distant instability with convergence verdict {convergence_verdict!r}")


def check_distant_necessity(
    p: Problem,
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    rho: float,
    dt_ladder: Sequence[float],
    thresholds: VerdictThresholds = DEFAULT_THRESHOLDS,
    workers: int = 1,
) -> NecessityReport:
    """Estimate distant stability and convergence, then check necessity."""
    try:
        distant = estimate_distant_stability(m, guard, horizon, K, rho,
                                             dt_ladder, p.norm, workers)
        distant_verdict, _ = classify_stability(distant, thresholds)
    except EmptySample:
        distant_verdict = "inconclusive"
    try:
        conv = convergence_report(
            p, m, guard, horizon, K, dt_ladder,
            tolerance=thresholds.convergence_tol,
            explosion_threshold=thresholds.explosion_threshold,
            floor_ratio=thresholds.floor_ratio,
            workers=workers,
        )
        convergence_verdict = conv.verdict
    except EmptySample:
        convergence_verdict = "inconclusive"
    return _necessity_status(distant_verdict, convergence_verdict)


# ---------------------------------------------------------------------------
# the implication table


IMPLICATION_FORWARD = "local stability + consistency implies convergence"
IMPLICATION_NECESSITY = "convergence implies distant stability"
IMPLICATION_GAP = "distant stability + bounded gap implies local stability"
IMPLICATION_EQUIVALENCE = "stability is equivalent to convergence"

IMPLICATION_NAMES = (
    IMPLICATION_FORWARD,
    IMPLICATION_NECESSITY,
    IMPLICATION_GAP,
    IMPLICATION_EQUIVALENCE,
)


@dataclass(frozen=True)
class Implication:
    name: str
    status: str  # holds / violated / hypothesis-not-met / inconclusive
    evidence: str


def _implication(name: str, hypothesis: bool | None, conclusion: bool | None,
                 evidence: str) -> Implication:
    if hypothesis is None:
        return Implication(name, "inconclusive", evidence)
    if not hypothesis:
        return Implication(name, "hypothesis-not-met", evidence)
    if conclusion is None:
        return Implication(name, "inconclusive", evidence)
    return Implication(name, "holds" if conclusion else "violated", evidence)


def _as_bool(verdict: str, positive: str, negative: str) -> bool | None:
    if verdict == positive:
        return True
    if verdict == negative:
        return False
    return None


def _join(*parts: bool | None) -> bool | None:
    # three-valued AND: a definite False wins over unknowns
    if any(p is False for p in parts):
        return False
    if any(p is None for p in parts):
        return None
    return True


@dataclass(frozen=True)
class EquivalenceVerdict:
    """Everything the pipeline measured for one problem-method pair."""

    problem: str
    method: str
    consistency: ConsistencyReport | None
    convergence: ConvergenceReport | None
    local: StabilityEstimate | None
    distant: StabilityEstimate | None
    full: StabilityEstimate | None
    local_verdict: str
    distant_verdict: str
    full_verdict: str
    local_growth: float
    distant_growth: float
    full_growth: float
    gap: GapCurve
    modulus: ContinuityModulus | None
    partition: PartitionReport
    bound_check: BoundCheckReport
    necessity: NecessityReport
    implications: tuple[Implication, ...]
    gap_forced_instability: bool
    warnings: tuple[str, ...]


def equivalence_report(
    p: Problem,
    m: Method,
    horizon: float,
    K: CompactCloud,
    dt_ladder: Sequence[float],
    rho_ladder: Sequence[float],
    rho_prime: float = 0.25,
    rho: float = 0.25,
    guard: RegularFamily | None = None,
    thresholds: VerdictThresholds = DEFAULT_THRESHOLDS,
    theta: float | None = None,
    t_grid: Sequence[float] | None = None,
    t_samples: int = 17,
    workers: int = 1,
) -> EquivalenceVerdict:
    """Run the full pipeline for one problem-method pair.

    An unbounded gap verdict forces the local and full stability verdicts
    to unstable: close-pair ratios grow without bound as the separation
    threshold shrinks, which no fixed finite cloud can witness directly.
    """
    if K is None:
        raise ContractViolation("a sampling cloud is required")
    if guard is None:
        guard = p.regular
    warnings: list[str] = []

    consistency: ConsistencyReport | None
    try:
        consistency = consistency_report(
            p, m, guard, horizon, K, dt_ladder,
            tolerance=thresholds.consistency_tol,
            order_min=thresholds.consistency_order_min,
            workers=workers,
        )
    except EmptySample as exc:
        consistency = None
        warnings.append(f"consistency: {exc}")

    convergence: ConvergenceReport | None
    try:
        convergence = convergence_report(
            p, m, guard, horizon, K, dt_ladder,
            theta=theta, t_grid=t_grid,
            tolerance=thresholds.convergence_tol,
            explosion_threshold=thresholds.explosion_threshold,
            floor_ratio=thresholds.floor_ratio,
            workers=workers,
        )
    except EmptySample as exc:
        convergence = None
        warnings.append(f"convergence: {exc}")

    def attempt_stability(kind: str) -> StabilityEstimate | None:
        try:
            if kind == "local":
                return estimate_local_stability(m, guard, horizon, K, rho_prime,
                                                dt_ladder, p.norm, workers)
            if kind == "distant":
                return estimate_distant_stability(m, guard, horizon, K, rho,
                                                  dt_ladder, p.norm, workers)
            return estimate_stability(m, guard, horizon, K, dt_ladder, p.norm, workers)
        except EmptySample as exc:
            warnings.append(f"{kind} stability: {exc}")
            return None

    local = attempt_stability("local")
    distant = attempt_stability("distant")
    full = attempt_stability("full")

    def verdict_of(est: StabilityEstimate | None) -> tuple[str, float]:
        if est is None:
            return "inconclusive", float("nan")
        return classify_stability(est, thresholds)

    local_verdict, local_growth = verdict_of(local)
    distant_verdict, distant_growth = verdict_of(distant)
    full_verdict, full_growth = verdict_of(full)

    gap = gap_curve(m, guard, horizon, K, rho_ladder, dt_ladder, p.norm,
                    thresholds, workers)
    forced = False
    if gap.verdict == "unbounded":
        if local_verdict != "unstable" or full_verdict != "unstable":
            forced = True
            warnings.append(
                "unbounded gap forces the local and full verdicts to unstable; "
                "a fixed cloud cannot witness close-pair blow-up directly")
        local_verdict = "unstable"
        full_verdict = "unstable"

    modulus: ContinuityModulus | None
    try:
        modulus = continuity_modulus(p, guard, horizon, K, t_samples=t_samples)
    except EmptySample as exc:
        modulus = None
        warnings.append(f"continuity modulus: {exc}")

    partition = check_partition_identity(m, guard, horizon, K, rho, dt_ladder,
                                         p.norm, workers)

    if local is None:
        bound = BoundCheckReport("hypothesis-not-met", None, thresholds.bound_slack,
                                 (), "local stability estimate is empty")
    elif consistency is None:
        bound = BoundCheckReport("hypothesis-not-met", float(local.constant),
                                 thresholds.bound_slack, (),
                                 "consistency report is empty")
    else:
        try:
            bound = check_convergence_bound(p, m, guard, horizon, K, dt_ladder,
                                            local, consistency, thresholds, workers)
        except EmptySample as exc:
            bound = BoundCheckReport("hypothesis-not-met", float(local.constant),
                                     thresholds.bound_slack, (), str(exc))

    necessity = _necessity_status(
        distant_verdict,
        convergence.verdict if convergence is not None else "inconclusive")

    consistency_verdict = consistency.verdict if consistency is not None else "inconclusive"
    convergence_verdict = convergence.verdict if convergence is not None else "inconclusive"

    is_consistent = _as_bool(consistency_verdict, "consistent", "inconsistent")
    is_convergent = _as_bool(convergence_verdict, "convergent", "divergent")
    local_stable = _as_bool(local_verdict, "stable", "unstable")
    distant_stable = _as_bool(distant_verdict, "stable", "unstable")
    full_stable = _as_bool(full_verdict, "stable", "unstable")
    gap_bounded = _as_bool(gap.verdict, "bounded", "unbounded")

    matches: bool | None
    if full_stable is None or is_convergent is None:
        matches = None
    else:
        matches = full_stable == is_convergent

    implications = (
        _implication(
            IMPLICATION_FORWARD,
            _join(local_stable, is_consistent),
            is_convergent,
            f"local={local_verdict}, consistency={consistency_verdict}, "
            f"convergence={convergence_verdict}",
        ),
        _implication(
            IMPLICATION_NECESSITY,
            is_convergent,
            distant_stable,
            f"convergence={convergence_verdict}, distant={distant_verdict}",
        ),
        _implication(
            IMPLICATION_GAP,
            _join(distant_stable, gap_bounded),
            local_stable,
            f"distant={distant_verdict}, gap={gap.verdict}, local={local_verdict}",
        ),
        _implication(
            IMPLICATION_EQUIVALENCE,
            _join(is_consistent, gap_bounded),
            matches,
            f"consistency={consistency_verdict}, gap={gap.verdict}, "
            f"full={full_verdict}, convergence={convergence_verdict}",
        ),
    )

    return EquivalenceVerdict(
        problem=p.name,
        method=m.name,
        consistency=consistency,
        convergence=convergence,
        local=local,
        distant=distant,
        full=full,
        local_verdict=local_verdict,
        distant_verdict=distant_verdict,
        full_verdict=full_verdict,
        local_growth=local_growth,
        distant_growth=distant_growth,
        full_growth=full_growth,
        gap=gap,
        modulus=modulus,
        partition=partition,
        bound_check=bound,
        necessity=necessity,
        implications=implications,
        gap_forced_instability=forced,
        warnings=tuple(warnings),
    )
