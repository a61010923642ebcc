import math

import numpy as np
import pytest

from levy_refract.errors import LevyRefractError, RepeatedRoots
from levy_refract.model import LevyModelSpec, PhaseTypeJump, validate_model
from levy_refract.spectral import characteristic_roots, psi_derivative

from conftest import exponential_model, random_model


def quadratic_roots(q):
    """Closed-form roots of psi(s) = q for the single-exponential model:
    s(s+1)/(s+2) = q  <=>  s^2 + (1-q)s - 2q = 0."""
    disc = math.sqrt((1.0 - q) ** 2 + 8.0 * q)
    return ((q - 1.0 + disc) / 2.0, (q - 1.0 - disc) / 2.0)


def test_exponential_model_roots_match_closed_form(exp_model):
    rs = characteristic_roots(exp_model, 0.0, "Y", 0.1)
    pos, neg = quadratic_roots(0.1)
    assert rs.positive_root == pytest.approx(pos, abs=1e-12)
    assert len(rs.negative_roots) == 1
    assert rs.negative_roots[0].real == pytest.approx(neg, abs=1e-12)
    assert rs.negative_roots[0].imag == 0.0


def test_exponential_model_q_zero(exp_model):
    # psi'(0+) = 1 - 1/2 > 0, so the supremum root collapses to 0
    rs = characteristic_roots(exp_model, 0.0, "Y", 0.0)
    assert rs.positive_root == 0.0
    assert rs.degenerate
    assert not rs.has_zero_pole
    assert rs.negative_roots[0].real == pytest.approx(-1.0, abs=1e-12)


def test_q_zero_with_upward_drift_keeps_positive_root():
    # c_Y=0.3 < kappa E[Z]=0.5: Y drifts up, psi_Y'(0+) < 0, varphi(0) > 0
    m = exponential_model(c_Y=0.3)
    rs = characteristic_roots(m, 0.0, "Y", 0.0)
    assert rs.positive_root == pytest.approx(4.0 / 3.0, abs=1e-12)
    assert rs.has_zero_pole
    assert not rs.degenerate
    # m+1 simple poles in total: the positive root and the one at zero
    assert len(rs.all_poles()) == m.jump.m + 1


def test_reference_model_root_counts(ref_model):
    for proc in ("Y", "X"):
        rs = characteristic_roots(ref_model, 1.0, proc, 0.05)
        # m+1 = 7 negative-real-part roots for sigma > 0
        assert len(rs.negative_roots) == 7
        assert rs.positive_root > 0


def test_residuals_below_tolerance(ref_model):
    from levy_refract.model import laplace_exponent

    for proc, delta in (("Y", 1.0), ("X", 1.0)):
        rs = characteristic_roots(ref_model, delta, proc, 0.05)
        for r in rs.all_poles():
            assert abs(laplace_exponent(ref_model, delta, proc, r) - 0.05) < 1e-9


def test_negative_roots_conjugate_paired(ref_model):
    rs = characteristic_roots(ref_model, 1.0, "X", 0.05)
    nonreal = [r for r in rs.negative_roots if r.imag != 0.0]
    while nonreal:
        z = nonreal.pop()
        assert z.conjugate() in nonreal
        nonreal.remove(z.conjugate())


def test_positive_root_monotone_in_q(ref_model):
    prev = 0.0
    for q in np.linspace(0.01, 1.0, 12):
        rs = characteristic_roots(ref_model, 1.0, "X", float(q))
        assert rs.positive_root > prev
        prev = rs.positive_root


def test_varphi_dominates_Phi_for_positive_delta(ref_model):
    for q in (0.02, 0.05, 0.3):
        ry = characteristic_roots(ref_model, 1.0, "Y", q)
        rx = characteristic_roots(ref_model, 1.0, "X", q)
        assert ry.positive_root > rx.positive_root > 0


def test_psi_derivative_hand_value(exp_model):
    # d/ds s(s+1)/(s+2) at 0 is 1/2
    assert psi_derivative(exp_model, 0.0, "Y", 0.0) == pytest.approx(0.5, rel=1e-12)


def test_psi_derivative_matches_finite_difference(ref_model):
    from levy_refract.model import laplace_exponent

    rng = np.random.default_rng(11)
    h = 1e-5
    for _ in range(10):
        s = complex(rng.uniform(-0.5, 2.0), rng.uniform(-1.0, 1.0))
        exact = psi_derivative(ref_model, 1.0, "X", s)
        fd = (
            laplace_exponent(ref_model, 1.0, "X", s + h)
            - laplace_exponent(ref_model, 1.0, "X", s - h)
        ) / (2 * h)
        assert abs(exact - fd) < 1e-6


def test_psi_derivative_positive_right_of_root(ref_model):
    rs = characteristic_roots(ref_model, 1.0, "X", 0.05)
    d = psi_derivative(ref_model, 1.0, "X", rs.positive_root)
    assert complex(d).real > 0.0  # convexity right of Phi(q)


def test_non_minimal_representation_rejected():
    # two identical parallel phases: det(sI-T) has a double eigenvalue and the
    # cleared polynomial carries a root at the spectrum of T
    jump = PhaseTypeJump(alpha=np.array([0.5, 0.5]), T=-2.0 * np.eye(2))
    m = validate_model(LevyModelSpec(c_Y=1.0, sigma=0.0, kappa=1.0, jump=jump))
    with pytest.raises(LevyRefractError):
        characteristic_roots(m, 0.0, "Y", 0.1)


def test_random_models_solve_cleanly():
    rng = np.random.default_rng(202068)
    for k in range(10):
        m = random_model(rng)
        q = float(rng.uniform(0.01, 0.5))
        delta = float(rng.uniform(0.0, 1.0))
        for proc in ("Y", "X"):
            try:
                rs = characteristic_roots(m, delta, proc, q)
            except RepeatedRoots:
                continue  # admissible rejection for unlucky draws
            expected = m.jump.m + (2 if m.sigma > 0 else 1)
            assert len(rs.all_poles()) == expected
