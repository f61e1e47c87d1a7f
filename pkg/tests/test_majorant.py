import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import solve_corpus_member
from ricciflat import geometry as geo
from ricciflat.errors import InvalidInputError
from ricciflat.geometry import HermitianJetMatrix, InitialData
from ricciflat.jets import context
from ricciflat.majorant import (
    MajorantParams,
    cauchy_estimate_check,
    check_domination,
    estimate_params,
    majorant_sequence,
    nonlinearity_bounds,
    polydisc_grid,
    radius_estimate,
)
from ricciflat.solver import SolverConfig, solve


def simple_params(A=1.0, R=0.5, M=4.0):
    return MajorantParams(R=R, A=A, sigma=1.0, M_const=M)


# -- parameter estimation -----------------------------------------------------------


def test_estimate_params_linear_metric_lower_bound():
    # for h = 1 + x the first series coefficient is (1+x)^{-3}/2, so the
    # sampled bound is at least its base value 1/2
    ctx = context(1, 12)
    init = InitialData(n=1, h=HermitianJetMatrix([[1 + ctx.x(0)]]))
    sol = solve(init, SolverConfig(c=1.0, t_order=3, space_degree=12))
    params = estimate_params(sol, 0.2)
    assert params.A >= 0.5
    assert params.sigma == 1.0
    assert params.M_const == 4.0
    assert not params.A_clamped


def test_estimate_params_flat_clamps_to_floor(flat_solutions):
    params = estimate_params(flat_solutions[1], 0.2)
    assert params.A == pytest.approx(1e-8)
    assert params.A_clamped


def test_resonance_gap_is_one():
    # the linearized symbol is the constant -1, so |m - (-1)| = m + 1 >= m
    for m in range(1, 20):
        assert abs(m - (-1)) >= 1 * m
    params = simple_params()
    assert params.sigma == 1.0


def test_operator_bound_convention_scales_with_c():
    init = geo.perturbed_flat(1, 0.1, 0, 2, 12)
    sol = solve(init, SolverConfig(c=2.0, t_order=3, space_degree=12))
    assert estimate_params(sol, 0.2).M_const == pytest.approx(2.0)


def test_estimate_params_rejects_bad_radius(flat_solutions):
    with pytest.raises(InvalidInputError):
        estimate_params(flat_solutions[1], 1.5)


# -- coefficient recursion -----------------------------------------------------------


def test_first_coefficient_is_exactly_A():
    params = simple_params(A=0.37)
    C = majorant_sequence(params, {}, 6)
    assert C[1] == 0.37
    assert all(c == 0.0 for c in C[2:])


def test_zero_bounds_give_zero_tail():
    params = simple_params(A=2.0)
    C = majorant_sequence(params, {(0, 5, 0, 0, 0): 0.0}, 5)
    assert C[1] == 2.0
    assert C[2:] == [0.0, 0.0, 0.0, 0.0]


def test_single_quadratic_bound_hand_value():
    # one pure-potential quadratic term: C_2 = a A^2 (weight already 2, so
    # the radius power is R^0) and C_3 = 2 a^2 A^3 from the two compositions
    a = 0.25
    params = simple_params(A=3.0, R=0.5)
    C = majorant_sequence(params, {(0, 2, 0, 0, 0): a}, 3)
    assert C[2] == pytest.approx(a * 3.0 ** 2)
    assert C[3] == pytest.approx(2 * a * 3.0 * C[2])


def test_single_integral_term_hand_value():
    # one linear integral-argument term (p=0, q=0, |beta|=1, weight 2):
    # C_m = A_b * 4 e^2 M * C_{m-1}
    ab = 0.5
    params = simple_params(A=1.5, R=0.5, M=4.0)
    factor = ab * 4 * math.e ** 2 * 4.0
    C = majorant_sequence(params, {(0, 0, 0, 0, 1): ab}, 4)
    assert C[2] == pytest.approx(factor * C[1])
    assert C[3] == pytest.approx(factor * C[2])


def test_pure_t_term_contributes_once():
    # a weight-2 pure t^2 term adds a constant only at order 2
    params = simple_params(A=0.0 + 1e-8, R=0.5)
    C = majorant_sequence(params, {(2, 0, 0, 0, 0): 1.0}, 4)
    assert C[2] == pytest.approx(0.5 ** 0 * 1.0, rel=1e-12)
    assert C[3] == pytest.approx(0.0, abs=1e-20)


def test_gradient_argument_uses_2e_factor():
    # s=0, alpha_total=2 quadratic gradient term: C_2 = a (2e)^2 A^2
    a = 0.1
    params = simple_params(A=2.0, R=0.5)
    C = majorant_sequence(params, {(0, 0, 0, 2, 0): a}, 2)
    assert C[2] == pytest.approx(a * (2 * math.e) ** 2 * 4.0)


@given(st.floats(1.0, 3.0), st.floats(0.01, 0.3))
@settings(max_examples=20, deadline=None)
def test_monotonicity_in_bounds(factor, a):
    params = simple_params(A=1.0, R=0.4)
    base = {(0, 2, 0, 0, 0): a, (0, 0, 0, 0, 1): 0.05, (2, 0, 0, 0, 0): 0.2}
    bigger = dict(base)
    bigger[(0, 2, 0, 0, 0)] = a * factor
    C1 = majorant_sequence(params, base, 6)
    C2 = majorant_sequence(params, bigger, 6)
    assert all(c2 >= c1 - 1e-15 for c1, c2 in zip(C1, C2))
    assert all(c >= 0.0 for c in C1)


def test_nonlinearity_bounds_exponential_tail():
    # the e^{-Z} factor contributes exactly 1/q! times the determinant bound;
    # with the flat determinant the (0, q, 0) entries are 1/q! inflated by
    # the documented sampling margin
    sol = solve(geo.flat(1, 10), SolverConfig(c=1.0, t_order=3, space_degree=10))
    params = estimate_params(sol, 0.2)
    bounds = nonlinearity_bounds(sol, params, 5)
    got = bounds[(0, 2, 0, 0, 0)]
    assert got == pytest.approx(params.sup_inflation / 2.0)
    assert bounds[(0, 3, 0, 0, 0)] == pytest.approx(params.sup_inflation / 6.0)


def test_nonlinearity_bounds_weight_filter():
    sol = solve(geo.flat(1, 10), SolverConfig(c=1.0, t_order=3, space_degree=10))
    params = estimate_params(sol, 0.2)
    bounds = nonlinearity_bounds(sol, params, 5)
    for (p, q, s, at, bt) in bounds:
        assert p + q + s + at + 2 * bt >= 2
        assert p + q + s + at + bt <= 5


# -- domination ----------------------------------------------------------------------


def test_domination_on_flat_includes_margin(flat_solutions):
    sol = flat_solutions[1]
    params = estimate_params(sol, 0.2)
    rep = check_domination(sol, params)
    assert rep.passed
    for row in rep.rows:
        if row.status == "pass":
            assert row.margin >= 0


def test_domination_on_perturbed_member():
    sol = solve_corpus_member(1, 0)
    params = estimate_params(sol, 0.2)
    rep = check_domination(sol, params)
    assert rep.passed
    assert rep.C[1] == params.A
    orders = {r.m for r in rep.rows}
    assert orders == set(range(1, sol.t_order + 1))


def test_domination_first_order_tight_by_construction():
    sol = solve_corpus_member(1, 1)
    params = estimate_params(sol, 0.2)
    rep = check_domination(sol, params)
    first = [r for r in rep.rows if r.m == 1 and r.inequality == "value"]
    assert all(r.observed <= params.A for r in first)


# -- radius heuristics -----------------------------------------------------------------


def test_radius_estimate_geometric_sequence():
    R, r, q = 0.5, 0.25, 0.7
    A = q  # makes the m-th root exact at every order
    C = [0.0] + [A * q ** (m - 1) * (R - r) ** (2 * m - 2) for m in range(1, 9)]
    est, note = radius_estimate(C, R, r)
    assert est == pytest.approx(1.0 / q, rel=1e-9)


def test_radius_estimate_offset_geometric_within_ten_percent():
    R, r, q = 0.5, 0.25, 0.8
    A = 0.6 * q
    C = [0.0] + [A * q ** (m - 1) * (R - r) ** (2 * m - 2) for m in range(1, 13)]
    est, _ = radius_estimate(C, R, r)
    assert abs(est - 1.0 / q) <= 0.1 / q


def test_radius_estimate_entire_cases():
    est, note = radius_estimate([0.0, 1.0, 0.0, 0.0, 0.0], 0.5, 0.25)
    assert est is None and "entire" in note
    with pytest.raises(InvalidInputError):
        radius_estimate([0.0, 1.0, 0.5], 0.5, 0.25)


def test_flat_pipeline_reports_entire(flat_solutions):
    sol = flat_solutions[1]
    params = estimate_params(sol, 0.2)
    rep = check_domination(sol, params)
    assert rep.radius_estimate is None
    assert "entire" in rep.radius_note


# -- derivative growth lemma ------------------------------------------------------------


def test_cauchy_estimate_constant_case():
    rows = cauchy_estimate_check(0, 1.0, 0.3)
    assert all(r.status == "pass" for r in rows)
    assert all(r.observed == 0.0 for r in rows)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_cauchy_estimate_pole_family(p):
    rows = cauchy_estimate_check(p, 2.0, 0.3)
    assert all(r.status == "pass" for r in rows)
    # observed is within the analytic prediction Cp/(R-r)^{p+1} (+ tail slop)
    for r in rows:
        predicted = 2.0 * p / (0.3 - r.radius) ** (p + 1)
        assert r.observed <= predicted * 1.05


def test_cauchy_estimate_scaling_ratio_invariance():
    a = cauchy_estimate_check(2, 1.0, 0.3)
    b = cauchy_estimate_check(2, 2.0, 0.3)
    for ra, rb in zip(a, b):
        assert rb.observed == pytest.approx(2 * ra.observed, rel=1e-12)
        assert rb.bound == pytest.approx(2 * ra.bound, rel=1e-12)


def test_grid_is_deterministic():
    a = polydisc_grid(2, 0.2, 64)
    b = polydisc_grid(2, 0.2, 64)
    assert np.array_equal(a, b)
    assert np.max(np.abs(a)) <= 0.2 + 1e-15
