import math

import numpy as np
import pytest

from stabgap import (
    ContractViolation,
    DomainExit,
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
    semigroup_law_residual,
    sqrt_drift_euler,
    sqrt_drift_exact,
    sqrt_drift_problem,
)

# closed-form reference values, computed by hand from the defining formulas
RICCATI_AT = 0.8333333333333334          # 0.5 / (1 - 0.5 * 0.8)
SQRT_FROM_ZERO = 0.25                    # (0 + 1/2)**2 at t = 1
SQRT_QUARTER = 0.5625                    # (sqrt(0.25) + 0.25)**2
HEAT_MODE1_DECAY = 0.37270783885343794   # exp(-pi**2 * 0.1)
HEAT_MODE3_DECAY = 0.00013877675973472548  # exp(-9 * pi**2 * 0.1)
FTCS_WORST_G_04 = 0.9963775380584677     # max_k |1 - 1.6 sin^2(k pi/66)|
FTCS_WORST_G_06 = 1.3945663070877012     # max_k |1 - 2.4 sin^2(k pi/66)|
EULER_RICCATI_STEPS = (0.5625, 0.6416015625, 0.7445147037506104,
                       0.8830902397758251)  # u=0.5, dt=0.25, iterated by hand


# ---------------------------------------------------------------------------
# flows


def test_riccati_exact_closed_form():
    out = riccati_exact(0.8, np.array([0.5]))
    assert out[0] == RICCATI_AT


def test_riccati_identity_at_zero_is_exact_copy():
    u = np.array([-0.7, 0.3])
    out = riccati_exact(0.0, u)
    np.testing.assert_array_equal(out, u)
    assert out is not u


def test_riccati_blowup_raises():
    with pytest.raises(DomainExit):
        riccati_exact(0.5, np.array([2.0]))
    # one margin-width short of the pole is already rejected
    with pytest.raises(DomainExit):
        riccati_exact(1.0, np.array([1.0 - 1e-9]))


def test_riccati_batch_matches_scalar():
    us = np.linspace(-1.0, 0.45, 13)[:, None]
    batch = riccati_exact(0.9, us)
    for i, u in enumerate(us):
        assert riccati_exact(0.9, u)[0] == batch[i, 0]


def test_riccati_semigroup_property():
    p = riccati_problem()
    for u in (-0.8, -0.1, 0.2, 0.45):
        r = semigroup_law_residual(p, 0.3, 0.5, np.array([u]))
        assert r <= 1e-12


def test_sqrt_drift_closed_form():
    assert sqrt_drift_exact(1.0, np.array([0.0]))[0] == SQRT_FROM_ZERO
    assert sqrt_drift_exact(0.5, np.array([0.25]))[0] == SQRT_QUARTER
    assert sqrt_drift_exact(0.5, np.array([-0.25]))[0] == -SQRT_QUARTER


def test_sqrt_drift_leaves_zero_immediately():
    out = sqrt_drift_exact(1e-6, np.array([0.0]))
    assert out[0] > 0.0


def test_sqrt_drift_odd_symmetry():
    us = np.linspace(0.0, 2.0, 9)
    plus = sqrt_drift_exact(0.7, us)
    minus = sqrt_drift_exact(0.7, -us)
    # mirrored branch: E(t)(-u) = -E(t)(u) holds for u > 0 by construction
    np.testing.assert_allclose(minus[1:], -plus[1:], rtol=0, atol=0)


def test_sqrt_drift_semigroup_property():
    p = sqrt_drift_problem()
    worst = 0.0
    for t in np.linspace(0.0, 1.0, 6):
        for s in np.linspace(0.0, 1.0, 6):
            for u in np.linspace(-2.0, 2.0, 9):
                worst = max(worst, semigroup_law_residual(p, float(t), float(s),
                                                          np.array([u])))
    assert worst <= 1e-12


def _sine_mode(n: int, k: int) -> np.ndarray:
    xs = np.arange(1, n + 1) / (n + 1)
    return np.array([math.sin(k * math.pi * x) for x in xs])


def test_heat_exact_decays_each_mode():
    mode1 = _sine_mode(32, 1)
    mode3 = _sine_mode(32, 3)
    np.testing.assert_allclose(heat_exact(0.1, mode1), HEAT_MODE1_DECAY * mode1,
                               rtol=1e-12, atol=1e-15)
    # mode3 has near-zero entries at its interior nodes, so an absolute
    # floor above transform roundoff is needed there
    np.testing.assert_allclose(heat_exact(0.1, mode3), HEAT_MODE3_DECAY * mode3,
                               rtol=1e-9, atol=1e-13)


def test_heat_exact_superposition():
    mode1 = _sine_mode(32, 1)
    mode5 = _sine_mode(32, 5)
    mixed = 0.3 * mode1 - 1.2 * mode5
    expected = (0.3 * heat_exact(0.04, mode1) - 1.2 * heat_exact(0.04, mode5))
    np.testing.assert_allclose(heat_exact(0.04, mixed), expected,
                               rtol=1e-12, atol=1e-14)


def test_heat_exact_identity_and_contraction():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(32)
    np.testing.assert_array_equal(heat_exact(0.0, u), u)
    assert np.linalg.norm(heat_exact(0.05, u)) < np.linalg.norm(u)


def test_heat_semigroup_property():
    p = heat_problem()
    rng = np.random.default_rng(5)
    u = rng.standard_normal(32) * 0.2
    r = semigroup_law_residual(p, 0.03, 0.07, u)
    assert r <= 1e-12


def test_exponential_flow():
    p = exponential_problem(rate=1.0)
    out = p.exact(0.5, np.array([2.0]))
    assert out[0] == pytest.approx(2.0 * math.exp(0.5), rel=1e-15)


def test_advection_shifts_grid_functions():
    p = advection_problem(n=32, speed=1.0)
    rng = np.random.default_rng(8)
    u = rng.standard_normal(32)
    # moving for exactly j cells is a cyclic shift of the samples
    for j in (1, 5, 16):
        shifted = p.exact(j / 32.0, u)
        np.testing.assert_allclose(shifted, np.roll(u, j), rtol=0, atol=1e-12)


def test_advection_default_grid_preserves_energy():
    p = advection_problem()
    rng = np.random.default_rng(9)
    u = rng.standard_normal(p.dim)
    out = p.exact(0.37, u)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(u), rel=1e-12)


def test_advection_semigroup_property_on_odd_grid():
    p = advection_problem()
    rng = np.random.default_rng(10)
    u = rng.standard_normal(p.dim)
    r = semigroup_law_residual(p, 0.13, 0.24, u)
    assert r <= 1e-12


def test_advection_even_grid_loses_only_the_nyquist_mode():
    # on an even grid the translated Nyquist mode hides in a sine that
    # samples to zero, so energy preservation needs that bin empty
    p = advection_problem(n=32)
    rng = np.random.default_rng(9)
    coeffs = np.fft.fft(rng.standard_normal(32))
    coeffs[16] = 0.0
    u = np.real(np.fft.ifft(coeffs))
    out = p.exact(0.37, u)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(u), rel=1e-12)


def test_flows_reject_negative_time():
    for flow, u in [
        (riccati_exact, np.array([0.1])),
        (sqrt_drift_exact, np.array([0.1])),
        (heat_exact, np.zeros(8)),
    ]:
        with pytest.raises(ContractViolation):
            flow(-0.1, u)


# ---------------------------------------------------------------------------
# methods


def test_explicit_euler_riccati_hand_iteration():
    m = explicit_euler_riccati()
    u = np.array([0.5])
    for expected in EULER_RICCATI_STEPS:
        u = m.step(0.25, u)
        assert u[0] == expected


def test_all_methods_are_identity_at_zero_dt():
    catalog = list_catalog()
    rng = np.random.default_rng(12)
    for entry in catalog.entries:
        u = rng.standard_normal(entry.problem.dim) * 0.3
        for m in entry.methods:
            out = m.step(0.0, u)
            np.testing.assert_array_equal(out, u)


def test_linear_euler_is_scalar_multiplication():
    m = linear_euler(2.0)
    out = m.step(0.25, np.array([-3.0]))
    assert out[0] == -3.0 * 1.5
    assert m.linear


def test_ftcs_amplifies_each_lattice_mode():
    n, mu = 32, 0.6
    dx = 1.0 / (n + 1)
    m = ftcs_heat(n)
    for k in (1, 16, 32):
        mode = _sine_mode(n, k)
        g = 1.0 - 4.0 * mu * math.sin(k * math.pi * dx / 2.0) ** 2
        out = m.step(mu * dx * dx, mode)
        np.testing.assert_allclose(out, g * mode, rtol=1e-10, atol=1e-12)


def test_ftcs_worst_mode_oracle_values():
    n = 32
    dx = 1.0 / (n + 1)
    for mu, expected in [(0.4, FTCS_WORST_G_04), (0.6, FTCS_WORST_G_06)]:
        gs = [1.0 - 4.0 * mu * math.sin(k * math.pi * dx / 2.0) ** 2
              for k in range(1, n + 1)]
        assert max(abs(g) for g in gs) == pytest.approx(expected, rel=1e-12)


def test_lax_friedrichs_hand_step():
    m = lax_friedrichs_advection(n=4, speed=1.0)
    u = [1.0, 2.0, 3.0, 4.0]
    dt, dx = 0.1, 0.25
    expected = []
    for i in range(4):
        left, right = u[(i - 1) % 4], u[(i + 1) % 4]
        expected.append(0.5 * (right + left) - dt / (2 * dx) * (right - left))
    out = m.step(dt, np.array(u))
    np.testing.assert_allclose(out, expected, rtol=0, atol=0)


def test_lax_friedrichs_zero_dt_is_identity_not_average():
    m = lax_friedrichs_advection(n=4)
    u = np.array([1.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(m.step(0.0, u), u)


def test_sqrt_drift_euler_never_leaves_zero():
    m = sqrt_drift_euler()
    u = np.array([0.0])
    for _ in range(50):
        u = m.step(0.1, u)
    assert u[0] == 0.0


def test_exact_step_has_zero_defect_by_construction():
    p = riccati_problem()
    m = exact_step(p)
    u = np.array([0.3])
    np.testing.assert_array_equal(m.step(0.25, u), p.exact(0.25, u))


def test_apply_step_dispatches_with_guards():
    m = explicit_euler_riccati()
    out = apply_step(m, 0.25, np.array([0.5]))
    assert out[0] == EULER_RICCATI_STEPS[0]
    with pytest.raises(ContractViolation):
        apply_step(m, -1.0, np.array([0.5]))


# ---------------------------------------------------------------------------
# catalog


def test_catalog_names_unique_and_complete():
    catalog = list_catalog()
    names = catalog.names()
    assert len(names) == len(set(names))
    assert {"riccati", "exponential", "sqrt-drift", "heat", "advection"} <= set(names)
    for entry in catalog.entries:
        method_names = [m.name for m in entry.methods]
        assert len(method_names) == len(set(method_names))
        assert entry.default_cloud.dim == entry.problem.dim
        assert entry.default_horizon > 0
        assert 0 < entry.default_dt0 <= entry.default_horizon


def test_catalog_lookup_errors_list_choices():
    catalog = list_catalog()
    with pytest.raises(ContractViolation, match="riccati"):
        catalog.get("unknown-problem")
    with pytest.raises(ContractViolation, match="exact-step"):
        catalog.get("riccati").method("unknown-method")


def test_catalog_default_clouds_are_admissible_at_time_zero():
    catalog = list_catalog()
    for entry in catalog.entries:
        mask = entry.problem.regular.mask(0.0, entry.default_cloud.points)
        assert np.all(mask), entry.name


def test_catalog_construction_is_pure():
    a = list_catalog()
    b = list_catalog()
    for ea, eb in zip(a.entries, b.entries):
        np.testing.assert_array_equal(ea.default_cloud.points, eb.default_cloud.points)
