"""Optimal dividend control with capital injection under a rate ceiling.

Dividends are paid at a rate bounded by delta and capital must be injected to
keep the surplus nonnegative; injected capital costs beta > 1 per unit and
cash flows are discounted at q > 0.  The optimal strategy refracts at the
unique level b* > 0 where

    f(b) = 1 + delta * Phi(q) int_0^b e^{-Phi(q) u} Wbb(u) du - beta e^{-Phi(q) b}

crosses zero: f(0) = 1 - beta < 0 and f'(b) = Phi e^{-Phi b}(delta Wbb(b) + beta) > 0.
At b* the candidate value function pastes C^1 (C^2 for unbounded variation)
and satisfies the variational inequality checked by hjb_residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoBracket
from .fluctuation import Geometry, apply_generator, kernel_r_hat, kernel_r_hat_prime
from .model import ValidatedModel
from .scale import ScaleFamily, build_scale_family, exp_weighted_integral

B_TOL = 1e-12
F_TOL = 1e-10


@dataclass(frozen=True)
class ControlProblem:
    """Model plus control parameters (delta, q, beta); beta > 1, q > 0, delta > 0."""

    model: ValidatedModel
    delta: float
    q: float
    beta: float

    def __post_init__(self):
        if self.beta <= 1.0:
            raise ValueError("beta must be > 1")
        if self.q <= 0.0:
            raise ValueError("q must be > 0")
        if self.delta <= 0.0:
            raise ValueError("delta must be > 0")

    def family(self) -> ScaleFamily:
        return build_scale_family(self.model, self.delta, self.q)

    def geometry(self, b: float, a: float | None = None) -> Geometry:
        return Geometry(b=b, delta=self.delta, q=self.q, a=a)


@dataclass(frozen=True)
class SolveResult:
    b_star: float
    f_residual: float
    smooth_fit_gap: float
    second_order_gap: float
    family: ScaleFamily = field(repr=False)
    value_at_grid: tuple[tuple[float, float], ...] = ()


def _ew(family: ScaleFamily, l: float) -> float:
    """int_0^l e^{-Phi u} Wbb(u) du."""
    if l <= 0:
        return 0.0
    return float(np.real(exp_weighted_integral(family, 0.0, l, -family.Phi, "Wbb")))


def f_of_b(problem: ControlProblem, family: ScaleFamily, b: float) -> float:
    """Smooth-fit defect f(b); its unique zero is the optimal level."""
    Phi = family.Phi
    return 1.0 + problem.delta * Phi * _ew(family, b) - math.exp(-Phi * b) * problem.beta


def f_prime_of_b(problem: ControlProblem, family: ScaleFamily, b: float) -> float:
    Phi = family.Phi
    return Phi * math.exp(-Phi * b) * (problem.delta * family.Wbb(b) + problem.beta)


def solve_bstar(problem: ControlProblem, grid_points: int = 0) -> SolveResult:
    """Locate b* by bracketed Newton with bisection fallback.

    The bracket [0, b_hi] is grown by doubling until f(b_hi) > 0 (guaranteed
    since f increases to infinity).  Exact f' makes Newton quadratic; any
    iterate leaving the bracket falls back to bisection.  On success the
    smooth-fit condition is re-verified through rhat'(b*).
    """
    family = problem.family()
    f = lambda b: f_of_b(problem, family, b)
    fp = lambda b: f_prime_of_b(problem, family, b)

    lo, flo = 0.0, f(0.0)
    if flo >= 0.0:
        raise NoBracket("f(0) >= 0; beta <= 1 should have been rejected earlier")
    hi = 1.0
    for _ in range(200):
        if f(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise NoBracket("f never crosses zero; model invariants are broken")

    b = 0.5 * (lo + hi)
    for _ in range(200):
        fb = f(b)
        if fb > 0.0:
            hi = b
        else:
            lo = b
        step = fb / fp(b)
        b_new = b - step
        if not (lo < b_new < hi):
            b_new = 0.5 * (lo + hi)
        if abs(b_new - b) < B_TOL * (1.0 + abs(b)) and abs(fb) < F_TOL:
            b = b_new
            break
        b = b_new
    residual = f(b)
    if abs(residual) > F_TOL:
        raise NoBracket(f"Newton stalled with |f(b)| = {abs(residual):.3e}")

    # smooth fit through the kernel: Phi e^{-Phi b}(delta Wbb(b) + beta) = rhat'(b)
    geom = problem.geometry(b)
    lhs = family.Phi * math.exp(-family.Phi * b) * (
        problem.delta * family.Wbb(b) + problem.beta
    )
    pasting = abs(lhs / kernel_r_hat_prime(family, geom, b) - 1.0)
    if pasting > 1e-9:
        raise ArithmeticError(f"smooth-fit identity violated: {pasting:.3e}")

    res = SolveResult(
        b_star=b,
        f_residual=residual,
        smooth_fit_gap=0.0,
        second_order_gap=0.0,
        family=family,
    )
    dplus = value_derivatives(problem, res, b, "right")
    dminus = value_derivatives(problem, res, b, "left")
    grid = ()
    if grid_points:
        xs = np.linspace(0.0, 2.0 * b, grid_points)
        grid = tuple((float(x), value_optimal(problem, res, float(x))) for x in xs)
    return SolveResult(
        b_star=b,
        f_residual=residual,
        smooth_fit_gap=abs(dplus[0] - dminus[0]),
        second_order_gap=abs(dplus[1] - dminus[1]),
        family=family,
        value_at_grid=grid,
    )


def value_refraction(
    problem: ControlProblem, family: ScaleFamily, b: float, x: float
) -> float:
    """NPV of the refraction-reflection strategy at level b (not necessarily b*).

    v^b(x) = delta Zbb(b-x)/q - rhat(b-x)/rhat'(b) * (delta Wbb(b) + beta);
    extended linearly below zero via v(x) = v(0) + beta x.
    """
    if x < 0:
        return value_refraction(problem, family, b, 0.0) + problem.beta * x
    geom = problem.geometry(b)
    ratio = kernel_r_hat(family, geom, b - x) / kernel_r_hat_prime(family, geom, b)
    return problem.delta * family.Zbb(b - x) / problem.q - ratio * (
        problem.delta * family.Wbb(b) + problem.beta
    )


def value_optimal(problem: ControlProblem, result: SolveResult, x: float) -> float:
    """Value function at the optimal level b*, in its collapsed closed form."""
    if x < 0:
        return value_optimal(problem, result, 0.0) + problem.beta * x
    family, bs = result.family, result.b_star
    Phi = family.Phi
    if x >= bs:
        return problem.delta / problem.q - math.exp(-Phi * (x - bs)) / Phi
    # delta Zbb(b*-x)/q - e^{Phi(b*-x)} (1/Phi + delta int_0^{b*-x} e^{-Phi u} Wbb(u) du)
    return problem.delta * family.Zbb(bs - x) / problem.q - math.exp(
        Phi * (bs - x)
    ) * (1.0 / Phi + problem.delta * _ew(family, bs - x))


def value_derivatives(
    problem: ControlProblem, result: SolveResult, x: float, side: str = "right"
) -> tuple[float, float]:
    """(v', v'') of the optimal value function; 'side' picks the branch at b*."""
    family, bs = result.family, result.b_star
    Phi = family.Phi
    if x > bs or (x == bs and side == "right"):
        vp = math.exp(-Phi * (x - bs))
        return vp, -Phi * vp
    vp = math.exp(-Phi * (x - bs)) * (1.0 + problem.delta * Phi * _ew(family, bs - x))
    vpp = -Phi * vp - problem.delta * Phi * family.Wbb(bs - x)
    return vp, vpp


def hjb_residual(problem: ControlProblem, result: SolveResult, x: float) -> float:
    """sup over dividend rates r in [0, delta] of (L_Y - q)v(x) - r v'(x) + r.

    The objective is affine in r, so the supremum sits at an endpoint:
    residual = (L_Y - q)v(x) + max(0, delta (1 - v'(x))).  Optimality demands
    residual <= 0 with equality on the active branch.
    """
    if x <= 0:
        raise ValueError("hjb_residual needs x > 0")
    bs = result.b_star
    g = lambda y: value_optimal(problem, result, y)
    gp = lambda y: value_derivatives(problem, result, y)[0]
    gpp = lambda y: value_derivatives(problem, result, y)[1]
    gen = apply_generator(
        problem.model, 0.0, g, gp, gpp, problem.q, x,
        breakpoints=(bs - x,) if x < bs else (),
    )
    return gen + max(0.0, problem.delta * (1.0 - gp(x)))


def generator_check(
    problem: ControlProblem, result: SolveResult, x: float
) -> float:
    """(L_Y - q)v below b*, (L_X - q)v + delta above; both should vanish."""
    bs = result.b_star
    g = lambda y: value_optimal(problem, result, y)
    gp = lambda y: value_derivatives(problem, result, y)[0]
    gpp = lambda y: value_derivatives(problem, result, y)[1]
    if x < bs:
        return apply_generator(
            problem.model, 0.0, g, gp, gpp, problem.q, x, breakpoints=(bs - x,)
        )
    return (
        apply_generator(problem.model, problem.delta, g, gp, gpp, problem.q, x)
        + problem.delta
    )


def unrestricted_limit(problem: ControlProblem, b: float, x: float) -> float:
    """Limiting value function as the rate ceiling is removed (delta -> inf).

    Equals -int_0^{b-x} Zbb(y) dy - psi_Y'(0+)/q with b the reflection barrier
    of the unconstrained problem (the root of Zbb(b) = beta).
    """
    family = problem.family()
    psi0 = float(np.real(family.psi_prime("Y", 0.0)))
    w = b - x
    if w <= 0:
        integral = w  # Zbb = 1 below zero
    else:
        # int_0^w Zbb = w + q * int_0^w Wbbbar
        integral = w + problem.q * float(
            np.real(family.Wbb_bar_mix.antiderivative_mixture()(w))
        )
    return -integral - psi0 / problem.q


def unrestricted_barrier(problem: ControlProblem) -> float:
    """Root of Zbb(b) = beta, the reflection barrier of the unconstrained limit."""
    family = problem.family()
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if family.Zbb(hi) > problem.beta:
            break
        hi *= 2.0
    else:
        raise NoBracket("Zbb never reaches beta")
    from scipy.optimize import brentq

    return float(brentq(lambda bb: family.Zbb(bb) - problem.beta, lo, hi, xtol=1e-13))


def sensitivity_sweep(
    model: ValidatedModel,
    parameter: str,
    values,
    x_grid,
    *,
    q: float,
    beta: float,
    delta: float,
) -> list[dict]:
    """Solve the problem across a parameter sweep; rows sorted by value.

    Each row carries the parameter value, b*, and v on the grid, plus flags
    recording the expected monotonicity (v decreasing in beta, increasing in
    delta, pointwise).
    """
    if parameter not in ("beta", "delta"):
        raise ValueError("parameter must be 'beta' or 'delta'")
    rows = []
    for val in sorted(values):
        kw = {"q": q, "beta": beta, "delta": delta}
        kw[parameter] = float(val)
        prob = ControlProblem(model=model, **kw)
        res = solve_bstar(prob)
        v = [value_optimal(prob, res, float(x)) for x in x_grid]
        vp = [
            value_derivatives(prob, res, float(x))[0] if x > 0 else kw["beta"]
            for x in x_grid
        ]
        rows.append(
            {
                "param": parameter,
                "value": float(val),
                "b_star": res.b_star,
                "x": [float(x) for x in x_grid],
                "v": v,
                "v_prime": vp,
            }
        )
    for prev, cur in zip(rows, rows[1:]):
        gaps = np.array(cur["v"]) - np.array(prev["v"])
        cur["monotone_ok"] = bool(
            np.all(gaps <= 1e-9) if parameter == "beta" else np.all(gaps >= -1e-9)
        )
    if rows:
        rows[0]["monotone_ok"] = True
    return rows


def sweep_to_csv(rows: list[dict], path) -> None:
    """Write sweep rows as CSV with columns (param, b_star, x, v, v_prime)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "b_star", "x", "v", "v_prime"])
        for row in rows:
            for x, v, vp in zip(row["x"], row["v"], row["v_prime"]):
                writer.writerow([row["value"], row["b_star"], x, v, vp])


def sweep_to_json(rows: list[dict], path) -> None:
    """Write sweep rows as a versioned JSON document."""
    import json

    doc = {"schema_version": 1, "rows": rows}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
