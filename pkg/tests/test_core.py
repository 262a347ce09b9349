import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from quasicontrol import (ControlSchedule, Trajectory, build_control_mask, build_grid, check_comparison,
                          concatenate, constant_law, full_mask, get_law, kirchhoff, kirchhoff_inverse,
                          rational_bump, solve_adjoint_discrete, solve_forward, solve_linearized,
                          sup_norm, time_ladder, two_plus_sine)
from quasicontrol.errors import (DimensionError, GeometryError, InvalidParameterError, ResolutionError,
                                 SolverDivergenceError)
from quasicontrol.grid import c2_proxy, gradient, smoothstep
from quasicontrol.laws import derivative_secant, kirchhoff_secant
from quasicontrol.solvers import kirchhoff_steps, newton_step, propagate


# -- grid and mask ---------------------------------------------------------

def test_grid_unit_three_nodes():
    g = build_grid(1.0, 3)
    assert g.h == 0.25
    np.testing.assert_allclose(g.x, [0.25, 0.5, 0.75])


def test_grid_length_two():
    g = build_grid(2.0, 7)
    assert g.h == 0.25
    assert g.x[0] == 0.25 and g.x[-1] == 1.75


@pytest.mark.parametrize("L,n", [(1.0, 2), (0.0, 10), (-1.0, 10)])
def test_grid_rejects_bad_parameters(L, n):
    with pytest.raises(InvalidParameterError):
        build_grid(L, n)


def test_mask_plateau_band_and_outside():
    g = build_grid(1.0, 19)  # nodes at 0.05, 0.1, ..., 0.95
    m = build_control_mask(g, (0.2, 0.8), (0.4, 0.6))
    rho = dict(zip(np.round(g.x, 12), m.rho))
    assert rho[0.5] == 1.0
    assert rho[0.1] == 0.0
    assert rho[0.3] == pytest.approx(0.5, abs=1e-15)


def test_mask_requires_nested_intervals():
    g = build_grid(1.0, 99)
    with pytest.raises(GeometryError):
        build_control_mask(g, (0.4, 0.6), (0.3, 0.7))


def test_mask_requires_resolution():
    g = build_grid(1.0, 5)
    with pytest.raises(ResolutionError):
        build_control_mask(g, (0.2, 0.8), (0.45, 0.55))


@given(st.floats(-2.0, 3.0))
def test_smoothstep_bounded_and_monotone(t):
    s = smoothstep(t)
    assert 0.0 <= s <= 1.0
    assert smoothstep(t + 1e-3) >= s


def test_gradient_exact_on_quadratics():
    g = build_grid(1.0, 20)
    y = g.x * (1.0 - g.x)
    np.testing.assert_allclose(gradient(y, g), 1.0 - 2.0 * g.x_full, atol=1e-12)


def test_c2_proxy_of_quadratic():
    g = build_grid(1.0, 49)
    y = g.x * (1.0 - g.x)
    assert c2_proxy(y, g) == pytest.approx(2.0, rel=1e-10)


# -- laws --------------------------------------------------------------------

def test_kirchhoff_two_plus_sine_values():
    law = two_plus_sine()
    assert kirchhoff(law, 0.0) == 0.0
    # frozen from oracles.primitive_by_quadrature
    assert kirchhoff(law, 1.0) == pytest.approx(2.4596976941318607, abs=1e-13)


def test_kirchhoff_rational_bump_value():
    assert kirchhoff(rational_bump(), 1.0) == pytest.approx(1.7853981633974483, abs=1e-13)


def test_identity_law_inverse():
    assert kirchhoff_inverse(constant_law(1.0), 0.7) == pytest.approx(0.7, abs=1e-15)


@pytest.mark.parametrize("name", ["two-plus-sine", "rational-bump", "constant(2.5)"])
@given(r=st.floats(-20.0, 20.0))
@settings(max_examples=40, deadline=None)
def test_kirchhoff_round_trip(name, r):
    law = get_law(name)
    assert kirchhoff_inverse(law, kirchhoff(law, r)) == pytest.approx(r, abs=1e-12 * (1 + abs(r)))


@pytest.mark.parametrize("name", ["two-plus-sine", "rational-bump"])
def test_closed_form_primitive_matches_quadrature(name):
    law = get_law(name)
    for r in (-3.0, -0.4, 0.9, 5.0):
        assert kirchhoff(law, r) == pytest.approx(oracles.primitive_by_quadrature(law.a, r), abs=1e-12)


def test_laws_respect_bounds():
    r = np.linspace(-50, 50, 20001)
    for law in (two_plus_sine(), rational_bump(), constant_law(3.0)):
        assert np.all(law(r) >= law.a0 - 1e-14)
        assert np.max(np.abs(law.derivative(r))) <= law.M + 1e-12


def test_secant_limits():
    law = two_plus_sine()
    base = np.array([0.0, 1.0, -2.0])
    np.testing.assert_allclose(kirchhoff_secant(law, base, 0.0), law(base), atol=1e-15)
    np.testing.assert_allclose(derivative_secant(law, base, 0.0), law.derivative(base), atol=1e-14)
    # small and large increments agree with plain differences
    for incr in (1e-3, 0.5, 2.0):
        ref = (kirchhoff(law, base + incr) - kirchhoff(law, base)) / incr
        np.testing.assert_allclose(kirchhoff_secant(law, base, incr), ref, rtol=1e-9)


def test_unknown_law_rejected():
    with pytest.raises(InvalidParameterError):
        get_law("cubic")


# -- fields ------------------------------------------------------------------

def test_time_ladder_and_index():
    t = time_ladder(0.0, 1.0, 0.1)
    assert t.size == 11 and t[-1] == pytest.approx(1.0)
    g = build_grid(1.0, 5)
    tr = Trajectory(t, np.zeros((11, 5)), g)
    assert tr.index(0.3) == 3
    with pytest.raises(InvalidParameterError):
        tr.index(0.35)


def test_non_uniform_ladder_rejected():
    g = build_grid(1.0, 3)
    with pytest.raises(InvalidParameterError):
        Trajectory(np.array([0.0, 0.1, 0.3]), np.zeros((3, 3)), g)


def test_csv_round_trip(tmp_path):
    g = build_grid(2.0, 6)
    rng = np.random.default_rng(1)
    t = time_ladder(0.5, 0.8, 0.1)
    tr = Trajectory(t, rng.standard_normal((t.size, 6)), g)
    tr.to_csv(tmp_path / "y.csv")
    back = Trajectory.from_csv(tmp_path / "y.csv")
    np.testing.assert_array_equal(back.values, tr.values)
    np.testing.assert_array_equal(back.times, tr.times)
    assert back.grid == g
    v = ControlSchedule(t, rng.standard_normal((t.size, 6)), g)
    v.to_csv(tmp_path / "v.csv")
    np.testing.assert_array_equal(ControlSchedule.from_csv(tmp_path / "v.csv").values, v.values)
    np.testing.assert_array_equal(ControlSchedule.from_json(v.to_json()).values, v.values)


def test_concatenate_later_piece_wins():
    g = build_grid(1.0, 3)
    a = ControlSchedule(time_ladder(0, 1, 0.5), np.zeros((3, 3)), g)
    b = ControlSchedule(time_ladder(1, 2, 0.5), np.ones((3, 3)), g)
    c = concatenate([a, b])
    assert c.times.size == 5
    np.testing.assert_array_equal(c.values[2], np.ones(3))


# -- forward solver ----------------------------------------------------------

def test_heat_decay_matches_analytic_mode():
    g = build_grid(1.0, 50)
    y = solve_forward(constant_law(1.0), g, np.sin(math.pi * g.x), None, full_mask(g), dt=1e-4, T=0.1)
    err = sup_norm(y.final - oracles.heat_mode(g.x, 0.1))
    assert err <= 5 * g.h**2


@pytest.mark.parametrize("name", ["two-plus-sine", "rational-bump", "constant(1)"])
def test_zero_is_fixed_point(name):
    g = build_grid(1.0, 20)
    y = solve_forward(get_law(name), g, np.zeros(g.n), None, full_mask(g), dt=0.01, T=0.2)
    assert np.all(y.values == 0.0)


def test_nonlinear_self_convergence_reference():
    law = two_plus_sine()
    g, gf = build_grid(1.0, 24), build_grid(1.0, 99)
    y = solve_forward(law, g, g.x * (1 - g.x), None, full_mask(g), dt=0.01, T=0.5)
    yf = solve_forward(law, gf, gf.x * (1 - gf.x), None, full_mask(gf), dt=0.0025, T=0.5)
    assert sup_norm(y.final - yf.final[3::4]) <= 1e-3


def test_newton_divergence_reported():
    law = two_plus_sine()
    g = build_grid(1.0, 10)
    with pytest.raises(SolverDivergenceError) as exc:
        newton_step(law, g, np.sin(math.pi * g.x), 0.1, np.zeros(g.n), max_iter=0, step_index=4)
    assert exc.value.step == 4 and exc.value.residual > 0


def test_non_finite_initial_state_rejected():
    g = build_grid(1.0, 10)
    with pytest.raises(InvalidParameterError):
        solve_forward(two_plus_sine(), g, np.full(g.n, np.nan), None, full_mask(g), dt=0.1, T=0.1)


def test_forward_dimension_check():
    g = build_grid(1.0, 10)
    with pytest.raises(DimensionError):
        solve_forward(constant_law(1.0), g, np.zeros(9), None, full_mask(g), dt=0.1, T=0.1)


# -- linearized solver and adjoint ------------------------------------------

def test_frozen_unit_coefficient_equals_heat_solver():
    g = build_grid(1.0, 40)
    z0 = np.sin(math.pi * g.x)
    lin = solve_linearized(g, 1.0, 0.0, z0, dt=1e-3, T=0.1)
    y = solve_forward(constant_law(1.0), g, z0, None, full_mask(g), dt=1e-3, T=0.1)
    assert sup_norm(lin.trajectory.values - y.values) <= 1e-12


def test_zero_datum_stays_zero_with_nonlinear_coefficients():
    law = two_plus_sine()
    g = build_grid(1.0, 30)
    y = solve_forward(law, g, g.x * (1 - g.x), None, full_mask(g), dt=0.01, T=0.2)
    lin = solve_linearized(g, law(y.values), 0.0, np.zeros(g.n), dt=0.01, T=0.2)
    assert np.all(lin.trajectory.values == 0.0)


def test_mass_changes_only_through_boundary_flux():
    g = build_grid(1.0, 60)
    dt = 1e-3
    z0 = np.exp(-((g.x - 0.5) / 0.1) ** 2)
    lin = solve_linearized(g, 1.0, 0.3, z0, dt=dt, T=0.05)
    Z = lin.trajectory.values
    worst = 0.0
    for k in range(Z.shape[0] - 1):
        zn = g.pad(Z[k + 1])
        # boundary fluxes of (alpha z_x - g z) at the new level; z vanishes on the boundary
        flux = (zn[-1] - zn[-2]) / g.h - (zn[1] - zn[0]) / g.h
        flux -= 0.3 * (0.5 * (zn[-1] + zn[-2]) - 0.5 * (zn[1] + zn[0]))
        change = g.h * (Z[k + 1].sum() - Z[k].sum())
        worst = max(worst, abs(change - dt * flux))
    assert worst <= 1e-10


def test_adjoint_of_pure_diffusion_decays_like_mode():
    g = build_grid(1.0, 50)
    T, dt = 0.1, 1e-4
    K = int(round(T / dt))
    steps = kirchhoff_steps(g, np.ones((K + 1, g.n)), dt)
    p = solve_adjoint_discrete(steps, np.sin(math.pi * g.x), g, time_ladder(0, T, dt))
    assert sup_norm(p.initial - oracles.heat_mode(g.x, T)) <= 5 * g.h**2
    assert p.direction == "backward"


def test_adjoint_of_zero_is_zero():
    g = build_grid(1.0, 10)
    steps = kirchhoff_steps(g, np.ones((6, g.n)), 0.1)
    assert np.all(solve_adjoint_discrete(steps, np.zeros(g.n), g).values == 0.0)


def test_transpose_duality_against_dense_oracle():
    rng = np.random.default_rng(7)
    g = build_grid(1.0, 15)
    dt, K = 0.01, 12
    coeff = 1.0 + rng.uniform(0, 1, (K + 1, g.n))
    steps = kirchhoff_steps(g, coeff, dt)
    z0, pT = rng.standard_normal(g.n), rng.standard_normal(g.n)
    f = rng.standard_normal((K + 1, g.n))
    z = propagate(steps, z0, f, dt)
    p = solve_adjoint_discrete(steps, pT, g).values
    lhs = g.h * (z[-1] @ pT - z0 @ p[0])
    rhs = dt * sum(g.h * f[k] @ p[k] for k in range(K))
    lo, ro = oracles.dense_duality(oracles.dense_heat_steps(g.n, g.h, dt, K, coeff), z0, f, pT, dt, g.h)
    assert lhs == pytest.approx(lo, rel=1e-10)
    assert rhs == pytest.approx(ro, rel=1e-10)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))


# -- comparison --------------------------------------------------------------

def test_comparison_nonnegative_control_dominates_free_run():
    law = two_plus_sine()
    g = build_grid(1.0, 40)
    m = build_control_mask(g, (0.2, 0.8), (0.4, 0.6))
    y0 = 0.3 * np.sin(math.pi * g.x)
    y = solve_forward(law, g, y0, np.full(g.n, 0.7), m, dt=0.01, T=0.3)
    z = solve_forward(law, g, y0, None, m, dt=0.01, T=0.3)
    assert check_comparison(y, z).holds
    rep = check_comparison(y, y)
    assert rep.holds and rep.worst_violation == 0.0
    assert not check_comparison(z, y).holds


@given(seed=st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_comparison_random_ordered_controls(seed):
    rng = np.random.default_rng(seed)
    law = rational_bump()
    g = build_grid(1.0, 25)
    m = full_mask(g)
    y0 = rng.uniform(-0.5, 0.5, g.n)
    v2 = rng.uniform(-2, 2, (11, g.n))
    v1 = v2 + rng.uniform(0, 1, (11, g.n))
    t = time_ladder(0, 0.1, 0.01)
    hi = solve_forward(law, g, y0, ControlSchedule(t, v1, g), m)
    lo = solve_forward(law, g, y0, ControlSchedule(t, v2, g), m)
    assert check_comparison(hi, lo).worst_violation <= 1e-9


def test_comparison_rejects_mismatched_shapes():
    with pytest.raises(DimensionError):
        check_comparison(np.zeros((3, 5)), np.zeros((4, 5)))
