"""Sampled estimators: stability constants, defects, errors, operator norms.

All sweeps share three conventions.  Measurements go through norm_batch so
scalar replay and vectorised sweeps agree bit for bit.  Ladders are walked
in declared order and reduced with strictly-greater comparisons, so the
reported witness is the lexicographically first (dt index, step count, pair
index) achiever of the maximum.  Parallel execution distributes whole
ladder rungs through an order-preserving map, which keeps every float
operation identical to the serial schedule.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    BlowupDetected,
    CompactCloud,
    ContractViolation,
    DomainExit,
    EmptySample,
    Method,
    NormSpec,
    Problem,
    RegularFamily,
    explicit_cloud,
    norm_batch,
)

# Estimates resting on fewer distinct admissible pairs than this are flagged
# inconclusive rather than reported as constants.
MIN_DISTINCT_PAIRS = 10

# Absolute slop added to time comparisons; bare floor(T/dt) miscounts steps
# when T/dt lands one ulp below an integer.
TIME_ATOL = 1e-9


def ladder_steps(horizon: float, dt: float) -> int:
    """Largest n with n * dt <= horizon, robust to T/dt landing near an integer."""
    if dt <= 0.0 or not np.isfinite(dt):
        raise ContractViolation(f"dt must be positive and finite, got {dt!r}")
    if horizon < 0.0 or not np.isfinite(horizon):
        raise ContractViolation(f"horizon must be finite and nonnegative, got {horizon!r}")
    return int(math.floor(horizon / dt + TIME_ATOL))


def geometric_ladder(base: float, depth: int) -> tuple[float, ...]:
    """``base * 2**-k`` for k = 0..depth."""
    if base <= 0.0 or not np.isfinite(base):
        raise ContractViolation(f"ladder base must be positive and finite, got {base!r}")
    if not isinstance(depth, int) or depth < 0:
        raise ContractViolation(f"ladder depth must be a nonnegative integer, got {depth!r}")
    return tuple(base * 2.0 ** -k for k in range(depth + 1))


def _validate_ladder(ladder: Sequence[float], what: str) -> tuple[float, ...]:
    vals = tuple(float(x) for x in ladder)
    if not vals:
        raise ContractViolation(f"{what} must be nonempty")
    for v in vals:
        if v <= 0.0 or not np.isfinite(v):
            raise ContractViolation(f"{what} entries must be positive and finite, got {v!r}")
    for a, b in zip(vals, vals[1:]):
        if b >= a:
            raise ContractViolation(f"{what} must be strictly decreasing")
    return vals


def deterministic_map(fn: Callable, items: Iterable, workers: int = 1) -> list:
    """Order-preserving map; thread workers only change wall time, not results."""
    items = list(items)
    if workers is None:
        workers = 1
    if not isinstance(workers, int) or workers < 1:
        raise ContractViolation(f"workers must be a positive integer, got {workers!r}")
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def iterate(
    m: Method,
    dt: float,
    n: int,
    u: np.ndarray,
    guard: RegularFamily | None = None,
    horizon: float | None = None,
) -> np.ndarray:
    """Apply C_dt n times under the descending-slice guard.

    With a guard, the start must lie in X'_{n dt} and the iterate after
    step p must lie in X'_{(n-p) dt}: the index counts remaining time, so a
    surviving run ends inside X'_0.
    """
    if not isinstance(n, int) or n < 0:
        raise ContractViolation(f"step count must be a nonnegative integer, got {n!r}")
    if dt < 0.0 or not np.isfinite(dt):
        raise ContractViolation(f"dt must be finite and nonnegative, got {dt!r}")
    if horizon is not None and n * dt > horizon * (1.0 + 1e-12) + TIME_ATOL:
        raise ContractViolation(f"n * dt = {n * dt!r} exceeds the horizon {horizon!r}")
    state = np.asarray(u, dtype=float)
    if guard is not None and not guard.contains(n * dt, state):
        raise DomainExit("initial state", 0, n * dt)
    for p in range(1, n + 1):
        state = np.asarray(m.step(dt, state), dtype=float)
        if not np.all(np.isfinite(state)):
            raise BlowupDetected(p, dt)
        remaining = (n - p) * dt
        if guard is not None and not guard.contains(remaining, state):
            raise DomainExit(f"iterate of {m.name}", p, remaining)
    return state


def trajectory_cloud(
    p: Problem,
    K: CompactCloud,
    horizon: float,
    t_grid: Sequence[float] | None = None,
) -> tuple[CompactCloud, int]:
    """Flow images ``{E(t)u : t in grid, u in K and X'_t}`` plus skip count.

    Points outside the regular family at their time slice are skipped, not
    errors; if everything is skipped the sample is empty.
    """
    if t_grid is None:
        t_grid = np.linspace(0.0, horizon, 9)
    rows: list[np.ndarray] = []
    skipped = 0
    for t in t_grid:
        t = float(t)
        if t < 0.0:
            raise ContractViolation(f"trajectory times must be nonnegative, got {t!r}")
        admissible = p.regular.mask(t, K.points)
        skipped += int(np.count_nonzero(~admissible))
        if np.any(admissible):
            rows.append(np.asarray(p.exact(t, K.points[admissible]), dtype=float))
    if not rows:
        raise EmptySample("no cloud point was admissible at any trajectory time")
    return explicit_cloud(np.concatenate(rows, axis=0)), skipped


# ---------------------------------------------------------------------------
# stability sweeps


@dataclass(frozen=True)
class PairWitness:
    """The pair, step count, and rung achieving a reported constant."""

    u_index: int
    v_index: int
    n: int
    dt: float
    dt_index: int
    u: np.ndarray
    v: np.ndarray
    separation: float
    ratio: float


@dataclass(frozen=True)
class RungStats:
    """Per-rung maximum ratio and its fitted per-step growth factor."""

    dt: float
    constant: float
    growth: float
    evaluations: int


@dataclass(frozen=True)
class StabilityEstimate:
    """Sampled n-step separation-ratio maximum over a dt ladder.

    ``constant`` is a max over finitely many admissible pairs, hence a
    lower bound for the true supremum.  ``inconclusive`` flags estimates
    resting on fewer than MIN_DISTINCT_PAIRS distinct pairs.
    """

    kind: str
    constant: float
    threshold: float | None
    witness: PairWitness
    rungs: tuple[RungStats, ...]
    pairs_evaluated: int
    skipped_pairs: int
    distinct_pairs: int
    horizon: float
    inconclusive: bool


def _step_rows(m: Method, dt: float, states: np.ndarray,
               alive: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Advance a row stack one step, marking failed rows dead instead of raising.

    Dead rows are zeroed so later steps cannot trip float warnings or
    domain checks; their images are masked out of every reduction.
    """
    try:
        out = np.asarray(m.step(dt, states), dtype=float)
    except (DomainExit, BlowupDetected):
        out = np.zeros_like(states)
        ok = alive.copy()
        for i in range(states.shape[0]):
            if not ok[i]:
                continue
            try:
                row = np.asarray(m.step(dt, states[i]), dtype=float)
            except (DomainExit, BlowupDetected):
                ok[i] = False
                continue
            if np.all(np.isfinite(row)):
                out[i] = row
            else:
                ok[i] = False
        return out, ok
    ok = alive & np.all(np.isfinite(out), axis=-1)
    return np.where(ok[:, None], out, 0.0), ok


def _growth_factor(profile: Sequence[float]) -> float:
    """exp of the least-squares slope of log max-ratio against step count."""
    ns = [i for i, r in enumerate(profile) if np.isfinite(r) and r > 0.0]
    if len(ns) < 2:
        return 1.0
    xs = np.array(ns, dtype=float)
    ys = np.log([profile[i] for i in ns])
    slope = np.polyfit(xs, ys, 1)[0]
    return float(np.exp(slope))


def _rung_sweep(args) -> dict:
    (dt, m, guard, horizon, pts, iu, jv, gate, d0, nrm) = args
    count = pts.shape[0]
    n_max = ladder_steps(horizon, dt)
    states = pts.copy()
    alive = np.ones(count, dtype=bool)
    profile: list[float] = []
    distinct = np.zeros(iu.shape[0], dtype=bool)
    evaluations = 0
    skipped = 0
    best = -np.inf
    best_n = -1
    best_pair = -1
    for n in range(n_max + 1):
        if n > 0:
            states, alive = _step_rows(m, dt, states, alive)
        admissible = guard.mask(n * dt, pts)
        ok = gate & admissible[iu] & admissible[jv] & alive[iu] & alive[jv]
        skipped += int(np.count_nonzero(gate & ~ok))
        if not np.any(ok):
            profile.append(np.nan)
            continue
        ratios = norm_batch(nrm, states[iu[ok]] - states[jv[ok]]) / d0[ok]
        evaluations += int(np.count_nonzero(ok))
        distinct |= ok
        local_best = float(np.max(ratios))
        profile.append(local_best)
        if local_best > best:
            best = local_best
            best_n = n
            # np.argmax takes the first maximum; flatnonzero is ascending,
            # so ties resolve to the lexicographically smallest pair.
            best_pair = int(np.flatnonzero(ok)[int(np.argmax(ratios))])
    return {
        "dt": dt,
        "best": best,
        "best_n": best_n,
        "best_pair": best_pair,
        "profile": profile,
        "distinct": distinct,
        "evaluations": evaluations,
        "skipped": skipped,
    }


def _stability_sweep(
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    dt_ladder: Sequence[float],
    nrm: NormSpec,
    kind: str,
    lower: float | None,
    upper: float | None,
    workers: int = 1,
) -> StabilityEstimate:
    ladder = _validate_ladder(dt_ladder, "dt ladder")
    if horizon <= 0.0 or not np.isfinite(horizon):
        raise ContractViolation(f"horizon must be positive and finite, got {horizon!r}")
    pts = K.points
    if pts.shape[0] < 2:
        raise EmptySample("stability needs at least two cloud points")
    iu, jv = np.triu_indices(pts.shape[0], k=1)
    d0 = norm_batch(nrm, pts[iu] - pts[jv])
    gate = d0 > 0.0
    if lower is not None:
        gate &= d0 >= lower
    if upper is not None:
        gate &= d0 <= upper
    if not np.any(gate):
        raise EmptySample(f"no cloud pair satisfies the {kind} separation gate")

    tasks = [(dt, m, guard, horizon, pts, iu, jv, gate, d0, nrm) for dt in ladder]
    results = deterministic_map(_rung_sweep, tasks, workers)

    best = -np.inf
    best_rung: dict | None = None
    best_index = -1
    rungs: list[RungStats] = []
    distinct = np.zeros(iu.shape[0], dtype=bool)
    evaluations = 0
    skipped = 0
    for index, res in enumerate(results):
        evaluations += res["evaluations"]
        skipped += res["skipped"]
        distinct |= res["distinct"]
        rung_constant = res["best"] if res["best"] > -np.inf else np.nan
        rungs.append(RungStats(res["dt"], float(rung_constant),
                               _growth_factor(res["profile"]), res["evaluations"]))
        if res["best"] > best:
            best = res["best"]
            best_rung = res
            best_index = index

    if evaluations == 0 or best_rung is None:
        raise EmptySample(f"every gated pair was filtered out of the {kind} sweep")

    pair = best_rung["best_pair"]
    ui, vi = int(iu[pair]), int(jv[pair])
    witness = PairWitness(
        u_index=ui,
        v_index=vi,
        n=int(best_rung["best_n"]),
        dt=float(best_rung["dt"]),
        dt_index=best_index,
        u=pts[ui].copy(),
        v=pts[vi].copy(),
        separation=float(d0[pair]),
        ratio=float(best),
    )
    n_distinct = int(np.count_nonzero(distinct))
    threshold = upper if kind == "local" else (lower if kind == "distant" else None)
    return StabilityEstimate(
        kind=kind,
        constant=float(best),
        threshold=threshold,
        witness=witness,
        rungs=tuple(rungs),
        pairs_evaluated=evaluations,
        skipped_pairs=skipped,
        distinct_pairs=n_distinct,
        horizon=float(horizon),
        inconclusive=n_distinct < MIN_DISTINCT_PAIRS,
    )


def estimate_local_stability(
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    rho_prime: float,
    dt_ladder: Sequence[float],
    nrm: NormSpec,
    workers: int = 1,
) -> StabilityEstimate:
    """Max n-step ratio over cloud pairs with 0 < separation <= rho_prime."""
    if rho_prime <= 0.0 or not np.isfinite(rho_prime):
        raise ContractViolation(f"rho_prime must be positive and finite, got {rho_prime!r}")
    return _stability_sweep(m, guard, horizon, K, dt_ladder, nrm,
                            "local", None, rho_prime, workers)


def estimate_distant_stability(
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    rho: float,
    dt_ladder: Sequence[float],
    nrm: NormSpec,
    workers: int = 1,
) -> StabilityEstimate:
    """Max n-step ratio over cloud pairs with separation >= rho."""
    if rho <= 0.0 or not np.isfinite(rho):
        raise ContractViolation(f"rho must be positive and finite, got {rho!r}")
    return _stability_sweep(m, guard, horizon, K, dt_ladder, nrm,
                            "distant", rho, None, workers)


def estimate_stability(
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    dt_ladder: Sequence[float],
    nrm: NormSpec,
    workers: int = 1,
) -> StabilityEstimate:
    """Max n-step ratio over all distinct cloud pairs."""
    return _stability_sweep(m, guard, horizon, K, dt_ladder, nrm,
                            "full", None, None, workers)


# ---------------------------------------------------------------------------
# consistency


@dataclass(frozen=True)
class DefectSample:
    """Worst one-step defect at a single dt, with its witness."""

    dt: float
    defect: float
    t: float
    u_index: int
    evaluations: int


def consistency_defect(
    p: Problem,
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    dt: float,
    t_grid: Sequence[float] | None = None,
) -> DefectSample:
    """Worst ``norm(C_dt E(t)u - E(dt) E(t)u) / dt`` over times and the cloud.

    The default t grid is the dt-multiples inside [0, horizon], so defects
    are probed exactly at the trajectory points a step telescope visits.
    Admissibility (u in the guard at t + dt) gates the starting points.
    """
    if dt <= 0.0 or not np.isfinite(dt):
        raise ContractViolation(f"dt must be positive and finite, got {dt!r}")
    if t_grid is None:
        t_grid = [k * dt for k in range(ladder_steps(horizon, dt) + 1)]
    pts = K.points
    best = -np.inf
    best_t = float("nan")
    best_u = -1
    evaluations = 0
    for t in t_grid:
        t = float(t)
        if t < 0.0:
            raise ContractViolation(f"defect times must be nonnegative, got {t!r}")
        admissible = guard.mask(t + dt, pts) & p.domain.mask(t, pts)
        if not np.any(admissible):
            continue
        moved = np.asarray(p.exact(t, pts[admissible]), dtype=float)
        # the one-step flow from E(t)u needs its own domain check; nesting
        # covers it mathematically but not through the float margin
        settled = p.domain.mask(dt, moved)
        if not np.any(settled):
            continue
        moved = moved[settled]
        stepped = np.asarray(m.step(dt, moved), dtype=float)
        flowed = np.asarray(p.exact(dt, moved), dtype=float)
        vals = norm_batch(p.norm, stepped - flowed) / dt
        finite = np.isfinite(vals)
        evaluations += int(np.count_nonzero(finite))
        if not np.any(finite):
            continue
        vals = np.where(finite, vals, -np.inf)
        local = float(np.max(vals))
        if local > best:
            best = local
            best_t = t
            origins = np.flatnonzero(admissible)[np.flatnonzero(settled)]
            best_u = int(origins[int(np.argmax(vals))])
    if evaluations == 0:
        raise EmptySample("no admissible defect sample at this dt")
    return DefectSample(float(dt), best, best_t, best_u, evaluations)


@dataclass(frozen=True)
class ConsistencyReport:
    """Defect ladder plus trend verdict.

    consistent: the finest defect is at or below tolerance, and defects
    either decrease strictly along the ladder or sit below tolerance
    throughout (the exact-step degenerate case).  inconsistent: the finest
    defect stays above tolerance with no first-order decay in the log-log
    fit.  Anything else is inconclusive.
    """

    samples: tuple[DefectSample, ...]
    ladder: tuple[float, ...]
    fit_order: float
    tolerance: float
    order_min: float
    verdict: str


def _loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x over positive pairs."""
    pairs = [(x, y) for x, y in zip(xs, ys) if x > 0.0 and y > 0.0
             and np.isfinite(x) and np.isfinite(y)]
    if len(pairs) < 2:
        return 0.0
    lx = np.log([p[0] for p in pairs])
    ly = np.log([p[1] for p in pairs])
    return float(np.polyfit(lx, ly, 1)[0])


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def consistency_report(
    p: Problem,
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    dt_ladder: Sequence[float],
    tolerance: float = 0.05,
    order_min: float = 0.1,
    workers: int = 1,
) -> ConsistencyReport:
    """Defect ladder with a trend verdict; see ConsistencyReport."""
    ladder = _validate_ladder(dt_ladder, "dt ladder")

    def rung(dt: float) -> DefectSample | None:
        try:
            return consistency_defect(p, m, guard, horizon, K, dt)
        except EmptySample:
            return None

    maybe = deterministic_map(rung, ladder, workers)
    samples = tuple(s for s in maybe if s is not None)
    if not samples:
        raise EmptySample("no defect rung had an admissible sample")
    defects = [s.defect for s in samples]
    fit_order = _loglog_slope([s.dt for s in samples], defects)
    if len(samples) < 2:
        verdict = "inconclusive"
    elif defects[-1] <= tolerance and (
        _strictly_decreasing(defects) or max(defects) <= tolerance
    ):
        verdict = "consistent"
    elif defects[-1] > tolerance and fit_order <= order_min:
        verdict = "inconsistent"
    else:
        verdict = "inconclusive"
    return ConsistencyReport(samples, ladder, fit_order, tolerance, order_min, verdict)


# ---------------------------------------------------------------------------
# convergence


@dataclass(frozen=True)
class ErrorSample:
    """Sup error at a single dt over coupled (t, n) slots, with witness."""

    dt: float
    sup_error: float
    theta: float
    t: float
    n: int
    u_index: int
    evaluations: int


def convergence_error(
    p: Problem,
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    dt: float,
    theta: float | None = None,
    t_grid: Sequence[float] | None = None,
) -> ErrorSample:
    """``sup norm(E(t)u - C_dt^n u)`` over the coupling ``|t - n dt| <= theta``.

    theta defaults to dt/2, which couples exactly one step count to each
    time.  Points must be admissible at both time slices t and n dt; a
    non-finite iterate makes the error infinite rather than hiding the
    blow-up.
    """
    if dt <= 0.0 or not np.isfinite(dt):
        raise ContractViolation(f"dt must be positive and finite, got {dt!r}")
    if theta is None:
        theta = 0.5 * dt
    if theta < 0.0 or not np.isfinite(theta):
        raise ContractViolation(f"theta must be finite and nonnegative, got {theta!r}")
    if t_grid is None:
        t_grid = np.linspace(0.0, horizon, 9)
    times = [float(t) for t in t_grid]
    for t in times:
        if t < 0.0:
            raise ContractViolation(f"comparison times must be nonnegative, got {t!r}")
    n_cap = ladder_steps(horizon, dt)
    slack = theta + TIME_ATOL * max(1.0, horizon)

    slots: list[tuple[float, int]] = []
    for t in times:
        lo = max(0, int(math.ceil((t - slack) / dt)))
        hi = min(n_cap, int(math.floor((t + slack) / dt)))
        for n in range(lo, hi + 1):
            slots.append((t, n))
    if not slots:
        raise EmptySample("the time coupling admits no (t, n) slot")

    pts = K.points
    needed = sorted({n for _, n in slots})
    iterates: dict[int, np.ndarray] = {}
    states = pts.copy()
    alive = np.ones(pts.shape[0], dtype=bool)
    step_at = 0
    for n in needed:
        while step_at < n:
            states, alive = _step_rows(m, dt, states, alive)
            step_at += 1
        iterates[n] = (states.copy(), alive.copy())

    best = -np.inf
    best_t = float("nan")
    best_n = -1
    best_u = -1
    evaluations = 0
    for t, n in slots:
        admissible = guard.mask(t, pts) & guard.mask(n * dt, pts) & p.domain.mask(t, pts)
        if not np.any(admissible):
            continue
        reference = np.asarray(p.exact(t, pts[admissible]), dtype=float)
        approx, ok_rows = iterates[n]
        errs = norm_batch(p.norm, reference - approx[admissible])
        errs = np.where(ok_rows[admissible], errs, np.inf)
        evaluations += int(np.count_nonzero(admissible))
        local = float(np.max(errs))
        if local > best:
            best = local
            best_t = t
            best_n = n
            best_u = int(np.flatnonzero(admissible)[int(np.argmax(errs))])
    if evaluations == 0:
        raise EmptySample("no admissible convergence sample at this dt")
    return ErrorSample(float(dt), best, float(theta), best_t, best_n, best_u, evaluations)


@dataclass(frozen=True)
class ConvergenceReport:
    """Error ladder plus trend verdict.

    convergent: the finest error is at or below tolerance and errors either
    decrease strictly or sit below tolerance throughout.  divergent: any
    rung reaches the explosion threshold, or the final error both exceeds
    tolerance and fails to improve on the coarsest rung.  Anything else is
    inconclusive.  ``floor_detected`` flags a decreasing ladder that has
    stopped improving, the signature of an unresolved spatial floor.
    """

    samples: tuple[ErrorSample, ...]
    ladder: tuple[float, ...]
    fit_order: float
    tolerance: float
    explosion_threshold: float
    floor_ratio: float
    floor_detected: bool
    verdict: str


def convergence_report(
    p: Problem,
    m: Method,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    dt_ladder: Sequence[float],
    theta: float | None = None,
    t_grid: Sequence[float] | None = None,
    tolerance: float = 0.05,
    explosion_threshold: float = 1e3,
    floor_ratio: float = 0.8,
    workers: int = 1,
) -> ConvergenceReport:
    """Error ladder with a trend verdict; see ConvergenceReport."""
    ladder = _validate_ladder(dt_ladder, "dt ladder")

    def rung(dt: float) -> ErrorSample | None:
        try:
            return convergence_error(p, m, guard, horizon, K, dt, theta, t_grid)
        except EmptySample:
            return None

    maybe = deterministic_map(rung, ladder, workers)
    samples = tuple(s for s in maybe if s is not None)
    if not samples:
        raise EmptySample("no convergence rung had an admissible sample")
    errors = [s.sup_error for s in samples]
    fit_order = _loglog_slope([s.dt for s in samples], errors)
    exploded = any(not np.isfinite(e) or e >= explosion_threshold for e in errors)
    floor = (
        len(errors) >= 3
        and errors[-2] > 0.0
        and np.isfinite(errors[-1])
        and errors[-1] / errors[-2] >= floor_ratio
    )
    if exploded:
        verdict = "divergent"
    elif len(samples) < 2:
        verdict = "inconclusive"
    elif errors[-1] <= tolerance and (
        _strictly_decreasing(errors) or max(errors) <= tolerance
    ):
        verdict = "convergent"
    elif errors[-1] > tolerance and errors[-1] >= errors[0]:
        verdict = "divergent"
    else:
        verdict = "inconclusive"
    return ConvergenceReport(samples, ladder, fit_order, tolerance,
                             explosion_threshold, floor_ratio, bool(floor), verdict)


# ---------------------------------------------------------------------------
# continuity modulus


@dataclass(frozen=True)
class ContinuityModulus:
    """Empirical modulus ``omega(delta) = sup norm(E(t)u - E(s)u)``.

    Samples are (delta, omega) pairs in increasing delta order; monotone by
    construction and omega(0) = 0.
    """

    samples: tuple[tuple[float, float], ...]
    horizon: float
    t_samples: int

    def at(self, delta: float) -> float:
        """omega at the largest sampled delta not exceeding ``delta``."""
        value = 0.0
        for d, w in self.samples:
            if d <= delta + TIME_ATOL:
                value = w
        return value


def continuity_modulus(
    p: Problem,
    guard: RegularFamily,
    horizon: float,
    K: CompactCloud,
    deltas: Sequence[float] | None = None,
    t_samples: int = 17,
) -> ContinuityModulus:
    """Sampled time-continuity modulus of the flow over the cloud.

    The default deltas are multiples of the grid spacing up to the horizon,
    so every requested delta is actually resolved by pairs on the grid.
    """
    if horizon <= 0.0 or not np.isfinite(horizon):
        raise ContractViolation(f"horizon must be positive and finite, got {horizon!r}")
    if t_samples < 2:
        raise ContractViolation("need at least two time samples")
    grid = np.linspace(0.0, horizon, int(t_samples))
    spacing = grid[1] - grid[0]
    if deltas is None:
        deltas = [0.0]
        width = spacing
        while width < horizon * (1.0 - 1e-12):
            deltas.append(float(width))
            width *= 2.0
        deltas.append(float(horizon))
    deltas = sorted(float(d) for d in deltas)
    if any(d < 0.0 for d in deltas):
        raise ContractViolation("deltas must be nonnegative")

    pts = K.points
    masks = [guard.mask(float(t), pts) & p.domain.mask(float(t), pts) for t in grid]
    images: list[np.ndarray] = []
    for t, mask in zip(grid, masks):
        img = np.zeros_like(pts)
        if np.any(mask):
            img[mask] = np.asarray(p.exact(float(t), pts[mask]), dtype=float)
        images.append(img)

    count = len(grid)
    gaps = np.zeros((count, count))
    evaluated = False
    for i in range(count):
        for j in range(i + 1, count):
            both = masks[i] & masks[j]
            if not np.any(both):
                continue
            gaps[i, j] = float(np.max(norm_batch(p.norm, images[i][both] - images[j][both])))
            evaluated = True
    if not evaluated:
        raise EmptySample("no admissible pair of time slices for the modulus")

    samples = []
    for delta in deltas:
        allowed = np.abs(grid[:, None] - grid[None, :]) <= delta + TIME_ATOL
        samples.append((delta, float(np.max(np.where(allowed, gaps, 0.0)))))
    return ContinuityModulus(tuple(samples), float(horizon), int(t_samples))


# ---------------------------------------------------------------------------
# operator norms for linear methods


def _power_iteration_norm(matrix: np.ndarray, tol: float, max_iter: int) -> float:
    gram = matrix.T @ matrix
    dim = gram.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(dim)
    v /= np.sqrt(np.sum(v * v))
    previous = -1.0
    sigma = 0.0
    for _ in range(max_iter):
        w = gram @ v
        scale = float(np.sqrt(np.sum(w * w)))
        if scale == 0.0:
            return 0.0
        v = w / scale
        sigma = math.sqrt(scale)
        if abs(sigma - previous) <= tol * max(sigma, 1e-300):
            return sigma
        previous = sigma
    return sigma


def linear_power_norm(
    m: Method,
    dt: float,
    n: int,
    nrm: NormSpec,
    tol: float = 1e-10,
    max_iter: int = 100000,
) -> float:
    """Operator norm of C_dt^n for a linear method.

    The matrix is assembled by pushing the canonical basis through n steps.
    sup and l1 norms are exact (max absolute row and column sums); the
    euclidean and weighted-l2 norms use power iteration on the Gram matrix
    to relative tolerance ``tol``.  A uniform weight cancels in the ratio,
    so weighted-l2 shares the euclidean path.
    """
    if not m.linear:
        raise ContractViolation(f"method {m.name!r} is not declared linear")
    if dt < 0.0 or not np.isfinite(dt):
        raise ContractViolation(f"dt must be finite and nonnegative, got {dt!r}")
    if not isinstance(n, int) or n < 0:
        raise ContractViolation(f"step count must be a nonnegative integer, got {n!r}")
    if nrm.dim != m.dim:
        raise ContractViolation(f"norm dim {nrm.dim} does not match method dim {m.dim}")
    basis = np.eye(m.dim)
    for _ in range(n):
        basis = np.asarray(m.step(dt, basis), dtype=float)
    if not np.all(np.isfinite(basis)):
        raise BlowupDetected(n, dt)
    # basis rows are the images of e_j, so the operator matrix is the transpose
    matrix = basis.T
    if nrm.kind == "sup":
        return float(np.max(np.sum(np.abs(matrix), axis=1)))
    if nrm.kind == "l1":
        return float(np.max(np.sum(np.abs(matrix), axis=0)))
    return _power_iteration_norm(matrix, tol, max_iter)
