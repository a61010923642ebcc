import math

import numpy as np
import pytest
from scipy.optimize import brentq

from levy_refract.control import (
    ControlProblem,
    f_of_b,
    f_prime_of_b,
    generator_check,
    hjb_residual,
    sensitivity_sweep,
    solve_bstar,
    unrestricted_barrier,
    unrestricted_limit,
    value_derivatives,
    value_optimal,
    value_refraction,
)
from levy_refract.fluctuation import Geometry, dividends_npv, injection_npv


def test_problem_validation(ref_model):
    with pytest.raises(ValueError):
        ControlProblem(model=ref_model, delta=1.0, q=0.05, beta=1.0)
    with pytest.raises(ValueError):
        ControlProblem(model=ref_model, delta=1.0, q=0.0, beta=2.0)
    with pytest.raises(ValueError):
        ControlProblem(model=ref_model, delta=0.0, q=0.05, beta=2.0)


def test_f_at_zero_is_one_minus_beta(ref_problem, ref_solution):
    assert f_of_b(ref_problem, ref_solution.family, 0.0) == 1.0 - ref_problem.beta


def test_f_prime_matches_finite_difference(ref_problem, ref_solution):
    fam = ref_solution.family
    h = 1e-6
    for b in (0.2, 0.8, 1.5, 2.5, 4.0):
        fd = (f_of_b(ref_problem, fam, b + h) - f_of_b(ref_problem, fam, b - h)) / (2 * h)
        assert f_prime_of_b(ref_problem, fam, b) == pytest.approx(fd, rel=1e-6)
        assert f_prime_of_b(ref_problem, fam, b) > 0.0


def test_bstar_matches_bisection_oracle(ref_problem, ref_solution):
    fam = ref_solution.family
    oracle = brentq(lambda b: f_of_b(ref_problem, fam, b), 1e-9, 50.0, xtol=1e-12)
    assert ref_solution.b_star == pytest.approx(oracle, abs=1e-8)
    assert abs(ref_solution.f_residual) < 1e-10
    assert ref_solution.b_star > 0.0


def test_bstar_shrinks_as_injection_cost_drops(ref_model):
    # b* decreases to 0 as beta decreases to 1, at the linear rate (beta-1)/Phi
    b_prev = math.inf
    for beta in (2.0, 1.1, 1.01, 1.0001):
        prob = ControlProblem(model=ref_model, delta=1.0, q=0.05, beta=beta)
        res = solve_bstar(prob)
        assert res.b_star < b_prev
        b_prev = res.b_star
    assert b_prev < 2e-3
    tiny = solve_bstar(ControlProblem(model=ref_model, delta=1.0, q=0.05, beta=1 + 1e-6))
    assert tiny.b_star < 2e-5


def test_large_rate_ceiling_approaches_reflection_barrier(ref_model):
    prob = ControlProblem(model=ref_model, delta=1e4, q=0.05, beta=2.0)
    res = solve_bstar(prob)
    barrier = unrestricted_barrier(prob)
    assert abs(res.b_star - barrier) < 1e-3


def test_value_refraction_is_dividends_minus_cost(ref_problem, ref_solution):
    fam = ref_solution.family
    rng = np.random.default_rng(17)
    for _ in range(10):
        b = float(rng.uniform(0.3, 3.0))
        x = float(rng.uniform(0.0, 4.0))
        geom = Geometry(b=b, delta=ref_problem.delta, q=ref_problem.q)
        v = value_refraction(ref_problem, fam, b, x)
        combo = dividends_npv(fam, geom, x, "infinite") - ref_problem.beta * injection_npv(
            fam, geom, x, "infinite"
        )
        assert v == pytest.approx(combo, abs=1e-9)


def test_slope_at_zero_equals_injection_cost(ref_problem, ref_solution):
    vp0 = value_derivatives(ref_problem, ref_solution, 0.0, "right")[0]
    assert vp0 == pytest.approx(ref_problem.beta, abs=1e-9)
    h = 1e-6
    fd = (
        value_optimal(ref_problem, ref_solution, h)
        - value_optimal(ref_problem, ref_solution, 0.0)
    ) / h
    assert fd == pytest.approx(ref_problem.beta, abs=1e-5)


def test_extension_below_zero_is_linear(ref_problem, ref_solution):
    v0 = value_optimal(ref_problem, ref_solution, 0.0)
    assert value_optimal(ref_problem, ref_solution, -0.4) == pytest.approx(
        v0 - 0.4 * ref_problem.beta
    )
    fam = ref_solution.family
    vb0 = value_refraction(ref_problem, fam, 1.0, 0.0)
    assert value_refraction(ref_problem, fam, 1.0, -0.2) == pytest.approx(
        vb0 - 0.2 * ref_problem.beta
    )


def test_two_forms_of_the_optimal_value_agree(ref_problem, ref_solution):
    fam = ref_solution.family
    bs = ref_solution.b_star
    for x in np.linspace(0.0, bs + 3.0, 20):
        vo = value_optimal(ref_problem, ref_solution, float(x))
        vr = value_refraction(ref_problem, fam, bs, float(x))
        assert vo == pytest.approx(vr, abs=1e-9)


def test_value_at_threshold_and_far_field(ref_problem, ref_solution):
    bs = ref_solution.b_star
    Phi = ref_solution.family.Phi
    assert value_optimal(ref_problem, ref_solution, bs) == pytest.approx(
        ref_problem.delta / ref_problem.q - 1.0 / Phi, rel=1e-12
    )
    far = bs + 200.0 / Phi
    assert value_optimal(ref_problem, ref_solution, far) == pytest.approx(
        ref_problem.delta / ref_problem.q, abs=1e-8
    )


def test_smooth_fit_gaps(ref_solution):
    # C^1 always; C^2 here because sigma > 0
    assert ref_solution.smooth_fit_gap < 1e-8
    assert ref_solution.second_order_gap < 1e-6


def test_slope_envelope(ref_problem, ref_solution):
    bs = ref_solution.b_star
    for x in np.linspace(1e-9, bs, 100):
        vp = value_derivatives(ref_problem, ref_solution, float(x))[0]
        assert 1.0 - 1e-9 <= vp <= ref_problem.beta + 1e-9
    for x in np.linspace(bs, bs + 8.0, 100):
        vp = value_derivatives(ref_problem, ref_solution, float(x), "right")[0]
        assert vp <= 1.0 + 1e-12


def test_concavity_below_threshold(ref_problem, ref_solution):
    bs = ref_solution.b_star
    for x in np.linspace(0.01, bs - 0.01, 20):
        assert value_derivatives(ref_problem, ref_solution, float(x))[1] < 0.0


def test_derivatives_match_finite_differences(ref_problem, ref_solution):
    for x in (0.4, 1.0, ref_solution.b_star + 0.7):
        v = lambda y: value_optimal(ref_problem, ref_solution, y)
        h = 1e-6
        fd1 = (v(x + h) - v(x - h)) / (2 * h)
        h2 = 1e-4  # second differences lose ~8 digits to cancellation at 1e-6
        fd2 = (v(x + h2) - 2 * v(x) + v(x - h2)) / h2**2
        vp, vpp = value_derivatives(ref_problem, ref_solution, x)
        assert vp == pytest.approx(fd1, rel=1e-6)
        assert vpp == pytest.approx(fd2, rel=1e-4)


def test_optimal_dominates_suboptimal(ref_problem, ref_solution):
    fam = ref_solution.family
    bs = ref_solution.b_star
    xs = np.linspace(0.0, bs + 2.0, 50)
    for off in (-1.0, -0.5, 0.5, 1.0):
        b = bs + off
        for x in xs:
            gap = value_optimal(ref_problem, ref_solution, float(x)) - value_refraction(
                ref_problem, fam, b, float(x)
            )
            assert gap >= -1e-9


def test_value_bounded_below(ref_problem, ref_solution):
    bs = ref_solution.b_star
    Phi = ref_solution.family.Phi
    floor = min(
        ref_problem.delta / ref_problem.q - 1.0 / Phi,
        value_optimal(ref_problem, ref_solution, 0.0),
    )
    for x in np.linspace(0.0, bs + 10.0, 80):
        assert value_optimal(ref_problem, ref_solution, float(x)) >= floor - 1e-9


def test_hjb_residual_signs(ref_problem, ref_solution):
    bs = ref_solution.b_star
    for x in (0.3, 0.9, bs - 1e-4):
        assert hjb_residual(ref_problem, ref_solution, x) <= 1e-5
    for x in (bs + 1e-4, 2.5, 4.0):
        assert abs(hjb_residual(ref_problem, ref_solution, x)) < 1e-5


def test_generator_identities(ref_problem, ref_solution):
    bs = ref_solution.b_star
    # martingale property below the threshold, compensated drift above
    for x in (0.4, 1.1, bs - 0.05):
        assert abs(generator_check(ref_problem, ref_solution, x)) < 1e-5
    for x in (bs + 0.05, 2.5, 5.0):
        assert abs(generator_check(ref_problem, ref_solution, x)) < 1e-5


def test_unrestricted_limit_values(ref_model):
    prob = ControlProblem(model=ref_model, delta=1e4, q=0.05, beta=2.0)
    res = solve_bstar(prob)
    barrier = unrestricted_barrier(prob)
    for x in (0.0, res.b_star / 2, res.b_star):
        gap = abs(value_optimal(prob, res, x) - unrestricted_limit(prob, barrier, x))
        assert gap < 1e-2
    # integral term vanishes at the barrier
    fam = prob.family()
    psi0 = float(np.real(fam.psi_prime("Y", 0.0)))
    assert unrestricted_limit(prob, barrier, barrier) == pytest.approx(
        -psi0 / prob.q, rel=1e-12
    )


def test_limit_distance_decreases_in_delta(ref_model):
    prob_inf = ControlProblem(model=ref_model, delta=1e4, q=0.05, beta=2.0)
    barrier = unrestricted_barrier(prob_inf)
    gaps = []
    for d in (10.0, 100.0, 1000.0):
        prob = ControlProblem(model=ref_model, delta=d, q=0.05, beta=2.0)
        res = solve_bstar(prob)
        gaps.append(abs(value_optimal(prob, res, 0.0) - unrestricted_limit(prob, barrier, 0.0)))
    assert gaps[0] > gaps[1] > gaps[2]


def test_sensitivity_sweeps(ref_model):
    xg = np.linspace(0.0, 4.0, 9)
    rows = sensitivity_sweep(ref_model, "beta", [1.01, 1.1, 2, 5, 10, 20], xg,
                             q=0.05, beta=2.0, delta=1.0)
    assert len(rows) == 6
    assert all(r["monotone_ok"] for r in rows)
    rows = sensitivity_sweep(ref_model, "delta", [0.1, 0.2, 0.5, 1, 2, 5, 10], xg,
                             q=0.05, beta=2.0, delta=1.0)
    assert len(rows) == 7
    assert all(r["monotone_ok"] for r in rows)


def test_degenerate_sweep_matches_direct_solve(ref_model, ref_problem, ref_solution):
    xg = [0.0, 1.0]
    rows = sensitivity_sweep(ref_model, "delta", [1.0], xg, q=0.05, beta=2.0, delta=1.0)
    assert len(rows) == 1
    assert rows[0]["b_star"] == pytest.approx(ref_solution.b_star, abs=1e-10)
    assert rows[0]["v"][1] == pytest.approx(
        value_optimal(ref_problem, ref_solution, 1.0), abs=1e-10
    )


def test_sweep_serialization(tmp_path, ref_model):
    import csv
    import json

    from levy_refract.control import sweep_to_csv, sweep_to_json

    rows = sensitivity_sweep(ref_model, "beta", [1.5, 3.0], [0.0, 1.0, 2.0],
                             q=0.05, beta=2.0, delta=1.0)
    cpath = tmp_path / "sweep.csv"
    sweep_to_csv(rows, cpath)
    recs = list(csv.DictReader(cpath.open()))
    assert list(recs[0]) == ["param", "b_star", "x", "v", "v_prime"]
    assert len(recs) == 6
    jpath = tmp_path / "sweep.json"
    sweep_to_json(rows, jpath)
    doc = json.loads(jpath.read_text())
    assert doc["schema_version"] == 1
    assert len(doc["rows"]) == 2
