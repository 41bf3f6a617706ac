"""Core types for semigroup approximation experiments.

States are plain 1-D float64 arrays.  Every flow and method callable in this
package accepts ``(..., dim)`` stacks and operates on the last axis, so a
single state and a batch of states go through identical arithmetic; that is
what makes witness replay reproduce sweep results.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

NORM_KINDS = ("sup", "euclidean", "l1", "weighted-l2")

CLOUD_GENERATORS = ("grid-in-box", "ball", "explicit-list")


class StabgapError(Exception):
    """Base class for all package errors."""


class ContractViolation(StabgapError):
    """An argument or call sequence violates a documented precondition."""


class DomainExit(StabgapError):
    """An evaluation left the admissible set of a flow or guard family."""

    def __init__(self, stage: str, step: int = 0, t: float = 0.0):
        super().__init__(f"{stage} left the admissible set at step {step}, t={t!r}")
        self.stage = stage
        self.step = step
        self.t = t


class BlowupDetected(StabgapError):
    """A step or flow evaluation produced a non-finite coordinate."""

    def __init__(self, step: int, dt: float):
        super().__init__(f"non-finite state after step {step} with dt={dt!r}")
        self.step = step
        self.dt = dt


class EmptySample(StabgapError):
    """No admissible point or pair survived the domain filters."""


@dataclass(frozen=True)
class NormSpec:
    """Which norm magnitudes and separations are measured in.

    ``weight`` only matters for kind ``"weighted-l2"``, where
    ``norm(u) = sqrt(weight * sum(u**2))``.  ``dim`` pins the expected state
    dimension; mismatches are contract violations rather than silent
    broadcasting.
    """

    kind: str = "euclidean"
    dim: int = 1
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in NORM_KINDS:
            raise ContractViolation(
                f"unknown norm kind {self.kind!r}; expected one of {NORM_KINDS}"
            )
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ContractViolation(f"norm dim must be a positive integer, got {self.dim!r}")
        if not np.isfinite(self.weight) or self.weight <= 0.0:
            raise ContractViolation(f"norm weight must be positive and finite, got {self.weight!r}")


def norm_batch(spec: NormSpec, states: np.ndarray) -> np.ndarray:
    """Row-wise norms of a ``(..., dim)`` stack under ``spec``."""
    arr = np.asarray(states, dtype=float)
    if arr.shape[-1] != spec.dim:
        raise ContractViolation(
            f"norm dimension mismatch: spec dim {spec.dim}, state dim {arr.shape[-1]}"
        )
    if spec.kind == "sup":
        return np.max(np.abs(arr), axis=-1)
    if spec.kind == "l1":
        return np.sum(np.abs(arr), axis=-1)
    if spec.kind == "euclidean":
        return np.sqrt(np.sum(arr * arr, axis=-1))
    return np.sqrt(spec.weight * np.sum(arr * arr, axis=-1))


def norm(spec: NormSpec, u: np.ndarray) -> float:
    """Norm of a single state; shares the batch code path bit for bit."""
    arr = np.asarray(u, dtype=float)
    if arr.ndim != 1:
        raise ContractViolation(f"norm expects a 1-D state, got shape {arr.shape}")
    return float(norm_batch(spec, arr[None, :])[0])


def make_state(coords) -> np.ndarray:
    """Validate a coordinate sequence into a read-only float64 state."""
    arr = np.array(coords, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ContractViolation("state dimension must be at least 1")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("state coordinates must all be finite")
    arr.setflags(write=False)
    return arr


def _finite_rows(states: np.ndarray) -> np.ndarray:
    return np.all(np.isfinite(states), axis=-1)


@dataclass(frozen=True)
class DomainFamily:
    """Nested admissible sets X_t given by a per-time membership predicate.

    ``membership(t, u)`` decides a single state; ``membership_batch(t, U)``
    is the optional vectorised form over a ``(P, dim)`` stack.  Nesting
    (X_{t+s} contained in X_t) is a property of the flow being modelled and
    is probed on sampled lattices by the tests, not enforced here.
    """

    membership: Callable[[float, np.ndarray], bool]
    membership_batch: Callable[[float, np.ndarray], np.ndarray] | None = None
    description: str = ""

    def contains(self, t: float, u: np.ndarray) -> bool:
        return bool(self.membership(t, np.asarray(u, dtype=float)))

    def mask(self, t: float, states: np.ndarray) -> np.ndarray:
        arr = np.asarray(states, dtype=float)
        if self.membership_batch is not None:
            return np.asarray(self.membership_batch(t, arr), dtype=bool)
        return np.array([bool(self.membership(t, row)) for row in arr], dtype=bool)


@dataclass(frozen=True)
class RegularFamily:
    """Forward-invariant working sets X'_t, a pointwise subset of the domain.

    Invariance under the flow and under a method is what regularity_probe
    samples for; the dataclass itself only carries the membership test.
    """

    membership: Callable[[float, np.ndarray], bool]
    membership_batch: Callable[[float, np.ndarray], np.ndarray] | None = None
    description: str = ""

    def contains(self, t: float, u: np.ndarray) -> bool:
        return bool(self.membership(t, np.asarray(u, dtype=float)))

    def mask(self, t: float, states: np.ndarray) -> np.ndarray:
        arr = np.asarray(states, dtype=float)
        if self.membership_batch is not None:
            return np.asarray(self.membership_batch(t, arr), dtype=bool)
        return np.array([bool(self.membership(t, row)) for row in arr], dtype=bool)


def sublevel_family(
    domain: DomainFamily,
    norm_spec: NormSpec,
    cap: float,
    cap_slope: float = 0.0,
) -> RegularFamily:
    """Regular family ``{u in X_t : norm(u) <= cap + cap_slope * t}``.

    The cap keeps pair sweeps on bounded sets.  Forward invariance under a
    particular flow or method is a claim to probe, not a construction
    guarantee.
    """
    if not np.isfinite(cap) or cap <= 0.0:
        raise ContractViolation(f"cap must be positive and finite, got {cap!r}")

    def member(t: float, u: np.ndarray) -> bool:
        return domain.contains(t, u) and norm(norm_spec, u) <= cap + cap_slope * t

    def member_batch(t: float, states: np.ndarray) -> np.ndarray:
        inside = domain.mask(t, states)
        return inside & (norm_batch(norm_spec, states) <= cap + cap_slope * t)

    caption = f"norm <= {cap:g}" if cap_slope == 0.0 else f"norm <= {cap:g} + {cap_slope:g} t"
    return RegularFamily(member, member_batch, f"{{u in domain : {caption}}}")


@dataclass(frozen=True)
class Problem:
    """A reference semigroup E(t) on nested domains.

    ``exact(t, U)`` maps ``(..., dim)`` stacks through E(t); it must return
    the input unchanged at t = 0.  ``domain`` tells which states E(t)
    accepts, ``regular`` is the default working family for estimators and
    ``norm`` the default measurement norm.
    """

    name: str
    dim: int
    exact: Callable[[float, np.ndarray], np.ndarray]
    domain: DomainFamily
    regular: RegularFamily
    norm: NormSpec

    def __post_init__(self) -> None:
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ContractViolation(f"problem dim must be a positive integer, got {self.dim!r}")
        if self.norm.dim != self.dim:
            raise ContractViolation(
                f"problem dim {self.dim} does not match norm dim {self.norm.dim}"
            )

    def evolve(self, t: float, u: np.ndarray) -> np.ndarray:
        """Apply E(t) to one state with domain and finiteness checks."""
        if t < 0.0 or not np.isfinite(t):
            raise ContractViolation(f"time must be finite and nonnegative, got {t!r}")
        state = np.asarray(u, dtype=float)
        if not self.domain.contains(t, state):
            raise DomainExit(f"exact flow of {self.name}", 0, t)
        out = np.asarray(self.exact(t, state), dtype=float)
        if not np.all(np.isfinite(out)):
            raise BlowupDetected(0, t)
        return out


@dataclass(frozen=True)
class Method:
    """A one-step method C_dt with C_0 = id.

    ``step(dt, U)`` maps ``(..., dim)`` stacks.  ``linear`` marks methods
    whose step is linear in the state for every dt, which unlocks the
    operator-norm estimator.
    """

    name: str
    dim: int
    step: Callable[[float, np.ndarray], np.ndarray]
    linear: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ContractViolation(f"method dim must be a positive integer, got {self.dim!r}")

    def apply(self, dt: float, u: np.ndarray) -> np.ndarray:
        """One guarded application: validates dt and a finite result."""
        if dt < 0.0 or not np.isfinite(dt):
            raise ContractViolation(f"dt must be finite and nonnegative, got {dt!r}")
        state = np.asarray(u, dtype=float)
        if state.shape[-1] != self.dim:
            raise ContractViolation(
                f"state dim {state.shape[-1]} does not match method dim {self.dim}"
            )
        out = np.asarray(self.step(dt, state), dtype=float)
        if not np.all(np.isfinite(out)):
            raise BlowupDetected(1, dt)
        return out


@dataclass(frozen=True)
class CompactCloud:
    """A finite point set standing in for a compact subset K.

    ``points`` has shape ``(count, dim)``.  Clouds are regeneration stable:
    rebuilding from the same generator parameters and seed reproduces the
    point list bit for bit.
    """

    points: np.ndarray
    generator: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.generator not in CLOUD_GENERATORS:
            raise ContractViolation(
                f"unknown cloud generator {self.generator!r}; expected one of {CLOUD_GENERATORS}"
            )
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ContractViolation("cloud points must form a nonempty (count, dim) array")
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("cloud points must all be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def fingerprint(self) -> str:
        """Short stable digest of the point list, used to tag reports."""
        return hashlib.sha256(self.points.tobytes()).hexdigest()[:12]

    def regenerate(self) -> "CompactCloud":
        """Rebuild from the stored generator parameters and seed."""
        if self.generator == "grid-in-box":
            return grid_cloud(**self.params)
        if self.generator == "ball":
            return ball_cloud(seed=self.seed, **self.params)
        return CompactCloud(self.points.copy(), "explicit-list", dict(self.params), self.seed)


def grid_cloud(bounds: Sequence[Sequence[float]], counts) -> CompactCloud:
    """Regular product grid over a box; a 1-D box is just a linspace."""
    boxes = [(float(lo), float(hi)) for lo, hi in bounds]
    if not boxes:
        raise ContractViolation("grid cloud needs at least one axis")
    for lo, hi in boxes:
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ContractViolation(f"grid bounds must satisfy lo < hi, got ({lo!r}, {hi!r})")
    if np.isscalar(counts):
        counts = [int(counts)] * len(boxes)
    counts = [int(c) for c in counts]
    if len(counts) != len(boxes):
        raise ContractViolation("grid counts must match the number of axes")
    if any(c < 1 for c in counts):
        raise ContractViolation("grid counts must be positive")
    axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(boxes, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    return CompactCloud(pts, "grid-in-box", {"bounds": boxes, "counts": counts})


def ball_cloud(center, radius: float, count: int, seed: int = 0) -> CompactCloud:
    """Seeded uniform sample from a closed euclidean ball."""
    c = np.asarray(center, dtype=float).reshape(-1)
    if not np.all(np.isfinite(c)):
        raise ContractViolation("ball center must be finite")
    if not np.isfinite(radius) or radius <= 0.0:
        raise ContractViolation(f"ball radius must be positive, got {radius!r}")
    if int(count) < 1:
        raise ContractViolation(f"ball count must be positive, got {count!r}")
    dim = c.size
    rng = np.random.default_rng(int(seed))
    dirs = rng.standard_normal((int(count), dim))
    lengths = np.sqrt(np.sum(dirs * dirs, axis=1))
    lengths[lengths == 0.0] = 1.0
    radii = radius * rng.random(int(count)) ** (1.0 / dim)
    pts = c + dirs / lengths[:, None] * radii[:, None]
    return CompactCloud(
        pts, "ball", {"center": c.tolist(), "radius": float(radius), "count": int(count)},
        int(seed),
    )


def explicit_cloud(points) -> CompactCloud:
    """Cloud from an explicit point list."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return CompactCloud(pts, "explicit-list")


def semigroup_law_residual(p: Problem, t: float, s: float, u: np.ndarray) -> float:
    """``norm(E(t+s)u - E(t)E(s)u)`` with stage-labelled domain checks.

    The state must lie in X_{t+s}; nesting then covers the staged
    evaluations mathematically, and any float-margin escape surfaces as a
    DomainExit naming the stage that failed.
    """
    if t < 0.0 or s < 0.0:
        raise ContractViolation(f"times must be nonnegative, got t={t!r}, s={s!r}")
    state = np.asarray(u, dtype=float)
    if not p.domain.contains(t + s, state):
        raise DomainExit("composed flow E(t+s)", 0, t + s)
    combined = p.exact(t + s, state)
    if not p.domain.contains(s, state):
        raise DomainExit("inner flow E(s)", 0, s)
    middle = p.exact(s, state)
    if not p.domain.contains(t, middle):
        raise DomainExit("outer flow E(t)", 0, t)
    staged = p.exact(t, middle)
    return norm(p.norm, np.asarray(combined, float) - np.asarray(staged, float))


@dataclass(frozen=True)
class RegularityViolation:
    """One probe failure: which direction, at which times, for which point."""

    kind: str  # "flow", "step", or "evaluation"
    t: float
    s_or_dt: float
    point_index: int
    detail: str = ""


def regularity_probe(
    p: Problem,
    m: Method | None,
    horizon: float,
    sample: CompactCloud,
    dt_ladder: Sequence[float] = (),
    t_samples: int = 5,
) -> list[RegularityViolation]:
    """Sample forward invariance of ``p.regular`` under the flow and method.

    Flow direction: u in X'_{t+s} should give E(t)u in X'_s.
    Step direction: u in X'_{t+dt} should give C_dt u in X'_t.
    Returns violation records; an empty list means the probe found nothing.
    Evaluation failures count as violations, since a regular set must stay
    inside the flow's domain.
    """
    if horizon <= 0.0 or not np.isfinite(horizon):
        raise ContractViolation(f"horizon must be positive and finite, got {horizon!r}")
    if t_samples < 2:
        raise ContractViolation("need at least two time samples")
    grid = np.linspace(0.0, horizon, int(t_samples))
    pts = sample.points
    out: list[RegularityViolation] = []

    for t in grid:
        for s in grid:
            admissible = p.regular.mask(t + s, pts)
            for idx in np.flatnonzero(admissible):
                u = pts[idx]
                if not p.domain.contains(t, u):
                    out.append(RegularityViolation(
                        "evaluation", float(t), float(s), int(idx),
                        "regular point left the flow domain"))
                    continue
                image = np.asarray(p.exact(t, u), dtype=float)
                if not np.all(np.isfinite(image)):
                    out.append(RegularityViolation(
                        "evaluation", float(t), float(s), int(idx), "flow image not finite"))
                    continue
                if not p.regular.contains(s, image):
                    out.append(RegularityViolation(
                        "flow", float(t), float(s), int(idx),
                        "flow image escaped the regular family"))

    if m is not None:
        for dt in dt_ladder:
            for t in grid:
                admissible = p.regular.mask(t + dt, pts)
                for idx in np.flatnonzero(admissible):
                    image = np.asarray(m.step(float(dt), pts[idx]), dtype=float)
                    if not np.all(np.isfinite(image)):
                        out.append(RegularityViolation(
                            "evaluation", float(t), float(dt), int(idx),
                            "step image not finite"))
                        continue
                    if not p.regular.contains(t, image):
                        out.append(RegularityViolation(
                            "step", float(t), float(dt), int(idx),
                            "step image escaped the regular family"))
    return out
