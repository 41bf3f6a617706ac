"""Built-in reference flows, one-step methods, and the problem catalog."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dst

from .core import (
    CompactCloud,
    ContractViolation,
    DomainExit,
    DomainFamily,
    Method,
    NormSpec,
    Problem,
    ball_cloud,
    grid_cloud,
    sublevel_family,
)

# Relative margin kept between a state and the blow-up threshold 1/t; bare
# float comparison against 1/t admits states one ulp away from the pole.
RICCATI_MARGIN_SCALE = 1e-6


def _riccati_threshold(t: float) -> float:
    inv = 1.0 / t
    return inv - RICCATI_MARGIN_SCALE * (1.0 + abs(inv))


def riccati_exact(t: float, u: np.ndarray) -> np.ndarray:
    """Flow of u' = u**2: E(t)u = u / (1 - u t), defined while u < 1/t."""
    arr = np.asarray(u, dtype=float)
    if t == 0.0:
        return arr.copy()
    if t < 0.0:
        raise ContractViolation(f"time must be nonnegative, got {t!r}")
    if np.any(arr >= _riccati_threshold(t)):
        raise DomainExit("riccati flow at or beyond blow-up", 0, t)
    return arr / (1.0 - arr * t)


def heat_exact(t: float, u: np.ndarray) -> np.ndarray:
    """Dirichlet heat semigroup on the interior grid points of [0, 1].

    The state holds values at x_i = i/(n+1), i = 1..n; sine modes decay by
    exp(-(pi k)**2 t).  DST-I diagonalises the continuous operator, so this
    is the exact PDE flow sampled on the grid, not a lattice surrogate.
    """
    arr = np.asarray(u, dtype=float)
    if t == 0.0:
        return arr.copy()
    if t < 0.0:
        raise ContractViolation(f"time must be nonnegative, got {t!r}")
    n = arr.shape[-1]
    k = np.arange(1, n + 1)
    coeff = dst(arr, type=1, axis=-1) * np.exp(-((np.pi * k) ** 2) * t)
    return dst(coeff, type=1, axis=-1) / (2.0 * (n + 1))


def sqrt_drift_exact(t: float, u: np.ndarray) -> np.ndarray:
    """Growing-branch flow of u' = sqrt(|u|), odd-mirrored to u < 0.

    E(t)u = (sqrt(u) + t/2)**2 for u >= 0.  The square-root envelope leaves
    0 immediately, which is what makes close-pair separation ratios blow up
    as pairs approach the origin.
    """
    arr = np.asarray(u, dtype=float)
    if t == 0.0:
        return arr.copy()
    if t < 0.0:
        raise ContractViolation(f"time must be nonnegative, got {t!r}")
    root = np.sqrt(np.abs(arr)) + 0.5 * t
    return np.where(arr >= 0.0, root * root, -(root * root))


def make_exponential_exact(rate: float):
    """Scalar linear flow u' = rate * u."""

    def exponential_exact(t: float, u: np.ndarray) -> np.ndarray:
        arr = np.asarray(u, dtype=float)
        if t == 0.0:
            return arr.copy()
        if t < 0.0:
            raise ContractViolation(f"time must be nonnegative, got {t!r}")
        return arr * math.exp(rate * t)

    return exponential_exact


def make_advection_exact(n: int, speed: float):
    """Periodic transport u_t + speed * u_x = 0 on an n-point grid of [0, 1).

    Fourier modes pick up the phase exp(-2 pi i k speed t); the flow is an
    exact spectral shift, so non-grid-multiple times interpolate
    trigonometrically.
    """
    wavenumbers = np.fft.fftfreq(n, d=1.0 / n)

    def advection_exact(t: float, u: np.ndarray) -> np.ndarray:
        arr = np.asarray(u, dtype=float)
        if t == 0.0:
            return arr.copy()
        if t < 0.0:
            raise ContractViolation(f"time must be nonnegative, got {t!r}")
        phase = np.exp(-2j * np.pi * wavenumbers * speed * t)
        return np.real(np.fft.ifft(np.fft.fft(arr, axis=-1) * phase, axis=-1))

    return advection_exact


def _finite_domain(description: str) -> DomainFamily:
    def member(t: float, u: np.ndarray) -> bool:
        return bool(np.all(np.isfinite(u)))

    def member_batch(t: float, states: np.ndarray) -> np.ndarray:
        return np.all(np.isfinite(states), axis=-1)

    return DomainFamily(member, member_batch, description)


def _riccati_domain() -> DomainFamily:
    def member(t: float, u: np.ndarray) -> bool:
        if not np.all(np.isfinite(u)):
            return False
        if t == 0.0:
            return True
        return bool(np.all(u < _riccati_threshold(t)))

    def member_batch(t: float, states: np.ndarray) -> np.ndarray:
        finite = np.all(np.isfinite(states), axis=-1)
        if t == 0.0:
            return finite
        return finite & np.all(states < _riccati_threshold(t), axis=-1)

    return DomainFamily(member, member_batch, "X_t = {u : u < 1/t - margin}")


def riccati_problem(cap: float = 2.0, cap_slope: float = 0.0,
                    norm_spec: NormSpec | None = None) -> Problem:
    """Scalar Riccati flow with shrinking admissible sets."""
    nrm = norm_spec if norm_spec is not None else NormSpec("euclidean", 1)
    domain = _riccati_domain()
    return Problem("riccati", 1, riccati_exact, domain,
                   sublevel_family(domain, nrm, cap, cap_slope), nrm)


def heat_problem(n: int = 32, cap: float = 2.0, cap_slope: float = 0.0,
                 norm_spec: NormSpec | None = None) -> Problem:
    """Dirichlet heat flow on n interior grid points."""
    if n < 1:
        raise ContractViolation(f"heat grid size must be positive, got {n!r}")
    nrm = norm_spec if norm_spec is not None else NormSpec("weighted-l2", n, 1.0 / (n + 1))
    domain = _finite_domain("all finite states")
    return Problem("heat", n, heat_exact, domain,
                   sublevel_family(domain, nrm, cap, cap_slope), nrm)


def sqrt_drift_problem(cap: float = 4.0, cap_slope: float = 0.0,
                       norm_spec: NormSpec | None = None) -> Problem:
    """Scalar sqrt-drift flow; its right side is not Lipschitz at 0."""
    nrm = norm_spec if norm_spec is not None else NormSpec("euclidean", 1)
    domain = _finite_domain("all finite states")
    return Problem("sqrt-drift", 1, sqrt_drift_exact, domain,
                   sublevel_family(domain, nrm, cap, cap_slope), nrm)


def exponential_problem(rate: float = 1.0, cap: float = 3.0, cap_slope: float = 0.0,
                        norm_spec: NormSpec | None = None) -> Problem:
    """Scalar linear flow, the fully classical baseline."""
    nrm = norm_spec if norm_spec is not None else NormSpec("euclidean", 1)
    domain = _finite_domain("all finite states")
    return Problem("exponential", 1, make_exponential_exact(rate), domain,
                   sublevel_family(domain, nrm, cap, cap_slope), nrm)


def advection_problem(n: int = 33, speed: float = 1.0, cap: float = 2.0,
                      cap_slope: float = 0.0,
                      norm_spec: NormSpec | None = None) -> Problem:
    """Periodic advection on an n-point grid.

    The default grid size is odd on purpose: an even grid has an unpaired
    Nyquist bin whose translate hides in a sine that samples to zero, so the
    projected flow stops being a semigroup at non-grid times.  Odd grids
    have no such bin and the spectral flow composes exactly.
    """
    if n < 2:
        raise ContractViolation(f"advection grid size must be at least 2, got {n!r}")
    nrm = norm_spec if norm_spec is not None else NormSpec("weighted-l2", n, 1.0 / n)
    domain = _finite_domain("all finite states")
    return Problem("advection", n, make_advection_exact(n, speed), domain,
                   sublevel_family(domain, nrm, cap, cap_slope), nrm)


def explicit_euler_riccati() -> Method:
    """Forward Euler for u' = u**2: one step is u + dt * u**2."""

    def step(dt: float, u: np.ndarray) -> np.ndarray:
        arr = np.asarray(u, dtype=float)
        return arr + dt * (arr * arr)

    return Method("explicit-euler-riccati", 1, step)


def linear_euler(rate: float = 1.0) -> Method:
    """Forward Euler for u' = rate * u: multiplication by 1 + rate * dt."""

    def step(dt: float, u: np.ndarray) -> np.ndarray:
        return (1.0 + rate * dt) * np.asarray(u, dtype=float)

    name = "linear-euler" if rate == 1.0 else f"linear-euler(rate={rate:g})"
    return Method(name, 1, step, linear=True)


def ftcs_heat(n: int = 32) -> Method:
    """Forward-time centred-space step for the Dirichlet heat problem.

    The mesh ratio dt / dx**2 with dx = 1/(n+1) controls stability: above
    1/2 the highest lattice mode is amplified every step.
    """
    if n < 1:
        raise ContractViolation(f"heat grid size must be positive, got {n!r}")
    dx = 1.0 / (n + 1)

    def step(dt: float, u: np.ndarray) -> np.ndarray:
        arr = np.asarray(u, dtype=float)
        mu = dt / (dx * dx)
        up = np.zeros_like(arr)
        up[..., :-1] = arr[..., 1:]
        down = np.zeros_like(arr)
        down[..., 1:] = arr[..., :-1]
        return arr + mu * (up - 2.0 * arr + down)

    return Method("ftcs-heat", n, step, linear=True)


def lax_friedrichs_advection(n: int = 33, speed: float = 1.0) -> Method:
    """Lax-Friedrichs step for periodic advection.

    The neighbour average only makes sense for dt > 0; at dt = 0 the step
    must be the identity, so that case is special-cased rather than letting
    the average masquerade as a zero-length step.
    """
    if n < 2:
        raise ContractViolation(f"advection grid size must be at least 2, got {n!r}")
    dx = 1.0 / n

    def step(dt: float, u: np.ndarray) -> np.ndarray:
        arr = np.asarray(u, dtype=float)
        if dt == 0.0:
            return arr.copy()
        left = np.roll(arr, 1, axis=-1)
        right = np.roll(arr, -1, axis=-1)
        return 0.5 * (right + left) - (speed * dt / (2.0 * dx)) * (right - left)

    return Method("lax-friedrichs-advection", n, step, linear=True)


def sqrt_drift_euler() -> Method:
    """Forward Euler for u' = sqrt(|u|); it never leaves 0."""

    def step(dt: float, u: np.ndarray) -> np.ndarray:
        arr = np.asarray(u, dtype=float)
        return arr + dt * np.sqrt(np.abs(arr))

    return Method("sqrt-drift-euler", 1, step)


def exact_step(p: Problem, linear: bool = False) -> Method:
    """The method that advances by the reference flow itself.

    Zero-defect by construction (the same callable computes both sides of
    the defect), so it isolates stability behaviour from consistency.
    """
    return Method("exact-step", p.dim, p.exact, linear=linear)


def apply_step(m: Method, dt: float, u: np.ndarray) -> np.ndarray:
    """Guarded single application of a method step."""
    return m.apply(dt, u)


@dataclass(frozen=True)
class CatalogEntry:
    """One built-in problem with its methods and experiment defaults."""

    name: str
    problem: Problem
    methods: tuple[Method, ...]
    default_cloud: CompactCloud
    default_horizon: float
    default_dt0: float
    notes: str = ""

    def method(self, name: str) -> Method:
        for m in self.methods:
            if m.name == name:
                return m
        raise ContractViolation(
            f"unknown method {name!r} for problem {self.name!r}; "
            f"choices: {[m.name for m in self.methods]}"
        )


@dataclass(frozen=True)
class ProblemCatalog:
    """Immutable table of built-in experiments."""

    entries: tuple[CatalogEntry, ...]

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def get(self, name: str) -> CatalogEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise ContractViolation(
            f"unknown problem {name!r}; choices: {self.names()}"
        )


def list_catalog() -> ProblemCatalog:
    """Built-in (problem, methods, defaults) table; construction is pure."""
    riccati = riccati_problem()
    heat = heat_problem()
    sqrt_flow = sqrt_drift_problem()
    exponential = exponential_problem()
    advection = advection_problem()
    heat_dx = 1.0 / (heat.dim + 1)

    entries = (
        CatalogEntry(
            name="riccati",
            problem=riccati,
            methods=(explicit_euler_riccati(), exact_step(riccati)),
            default_cloud=grid_cloud([(-1.0, 0.5)], [40]),
            default_horizon=1.0,
            default_dt0=0.1,
            notes="nonlinear blow-up flow on shrinking domains",
        ),
        CatalogEntry(
            name="exponential",
            problem=exponential,
            methods=(linear_euler(1.0), exact_step(exponential, linear=True)),
            default_cloud=grid_cloud([(-1.0, 1.0)], [21]),
            default_horizon=1.0,
            default_dt0=0.1,
            notes="scalar linear baseline",
        ),
        CatalogEntry(
            name="sqrt-drift",
            problem=sqrt_flow,
            # 257 = 256 + 1 grid points make the spacing 1/256, so the
            # rho ladder 0.5 * 2**-k stays resolved down to depth 7.
            methods=(exact_step(sqrt_flow), sqrt_drift_euler()),
            default_cloud=grid_cloud([(0.0, 1.0)], [257]),
            default_horizon=1.0,
            default_dt0=0.1,
            notes="non-Lipschitz drift; separation ratios blow up near 0",
        ),
        CatalogEntry(
            name="heat",
            problem=heat,
            methods=(ftcs_heat(heat.dim), exact_step(heat, linear=True)),
            default_cloud=ball_cloud(np.zeros(heat.dim), 1.0, 24, seed=42),
            default_horizon=0.1,
            default_dt0=0.4 * heat_dx * heat_dx,
            notes="FTCS mesh ratio defaults to 0.4, below the 1/2 barrier",
        ),
        CatalogEntry(
            name="advection",
            problem=advection,
            methods=(lax_friedrichs_advection(advection.dim),
                     exact_step(advection, linear=True)),
            default_cloud=ball_cloud(np.zeros(advection.dim), 1.0, 24, seed=43),
            default_horizon=0.5,
            default_dt0=0.02,
            notes="Lax-Friedrichs on a fixed grid; dissipation scales like dx**2/dt",
        ),
    )
    return ProblemCatalog(entries)
