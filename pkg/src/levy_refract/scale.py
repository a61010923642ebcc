"""Scale functions of -X and -Y as exponential mixtures.

For a phase-type model with distinct characteristic roots, 1/(psi(theta) - q)
has only simple poles, so the scale function defined through

    int_0^inf exp(-theta x) W(x) dx = 1 / (psi(theta) - q)

is the partial-fraction inverse transform

    W(x) = sum over poles r of  exp(r x) / psi'(r),       x >= 0,

where the poles are the positive root (Phi(q) for X, varphi(q) for Y), all
negative-real-part roots, and additionally s = 0 at q = 0 when psi'(0+) < 0.
W vanishes on the negative half-line by convention.  The second scale
function is Z(x) = 1 + q * int_0^x W, equal to 1 for x <= 0.

Everything downstream (antiderivatives, one-sided derivatives, exponentially
weighted integrals, convolutions) is computed term-by-term on the mixture.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ThetaNotDominating
from .mixture import ExpMixture, convolve_at
from .model import ValidatedModel, laplace_exponent, laplace_exponent_derivative
from .spectral import RootSet, characteristic_roots

W_KINDS = ("W", "Wbb", "Z", "Zbb", "Wbar", "Wbbbar", "Wprime", "Wbbprime")

# which -> (process, base) with base in {"scale", "anti", "deriv", "second"}
_KIND = {
    "W": ("X", "scale"),
    "Wbb": ("Y", "scale"),
    "Wbar": ("X", "anti"),
    "Wbbbar": ("Y", "anti"),
    "Wprime": ("X", "deriv"),
    "Wbbprime": ("Y", "deriv"),
    "Z": ("X", "second"),
    "Zbb": ("Y", "second"),
}


@dataclass(frozen=True)
class ScaleFamily:
    """Scale functions of -X and -Y for fixed (q, delta); immutable."""

    model: ValidatedModel
    delta: float
    q: float
    roots_y: RootSet
    roots_x: RootSet
    W_mix: ExpMixture
    Wbb_mix: ExpMixture
    W0: float
    Wbb0: float
    W0_prime: float
    Wbb0_prime: float
    # derived mixtures, precomputed once
    W_prime_mix: ExpMixture = field(repr=False, default=None)
    Wbb_prime_mix: ExpMixture = field(repr=False, default=None)
    W_bar_mix: ExpMixture = field(repr=False, default=None)
    Wbb_bar_mix: ExpMixture = field(repr=False, default=None)

    @property
    def phi(self) -> float:
        """varphi(q), the nonnegative root for Y."""
        return self.roots_y.positive_root

    @property
    def Phi(self) -> float:
        """Phi(q), the nonnegative root for X."""
        return self.roots_x.positive_root

    def psi(self, process: str, s: complex) -> complex:
        return laplace_exponent(self.model, self.delta, process, s)

    def psi_prime(self, process: str, s: complex) -> complex:
        return laplace_exponent_derivative(self.model, self.delta, process, s)

    # scalar conveniences used heavily by the identity layer
    def W(self, x: float) -> float:
        return eval_scale(self, "W", x)

    def Wbb(self, x: float) -> float:
        return eval_scale(self, "Wbb", x)

    def Z(self, x: float) -> float:
        return eval_scale(self, "Z", x)

    def Zbb(self, x: float) -> float:
        return eval_scale(self, "Zbb", x)

    def Wbar(self, x: float) -> float:
        return eval_scale(self, "Wbar", x)

    def Wbbbar(self, x: float) -> float:
        return eval_scale(self, "Wbbbar", x)

    def Wprime(self, x: float) -> float:
        return eval_scale(self, "Wprime", x)

    def Wbbprime(self, x: float) -> float:
        return eval_scale(self, "Wbbprime", x)


def _mixture_from_roots(
    model: ValidatedModel, delta: float, process: str, roots: RootSet
) -> ExpMixture:
    terms = []
    for r in roots.all_poles():
        dpsi = laplace_exponent_derivative(model, delta, process, r)
        terms.append((1.0 / dpsi, r, 0))
    return ExpMixture.from_terms(terms)


def build_scale_family(model: ValidatedModel, delta: float, q: float) -> ScaleFamily:
    """Construct the (q, delta) scale family with closed-form mixtures.

    Boundary values W(0) and W'(0+) are set from the variation class:
    W(0) = 1/c for bounded variation and 0 otherwise; W'(0+) = 2/sigma^2 for
    sigma > 0 and (q + kappa)/c^2 for sigma = 0 (phase-type jumps have finite
    total mass kappa, so the infinite branch cannot occur).
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    roots_y = characteristic_roots(model, delta, "Y", q)
    roots_x = characteristic_roots(model, delta, "X", q)
    w_mix = _mixture_from_roots(model, delta, "X", roots_x)
    wbb_mix = _mixture_from_roots(model, delta, "Y", roots_y)

    if model.sigma > 0:
        w0 = wbb0 = 0.0
        w0p = wbb0p = 2.0 / model.sigma**2
    else:
        w0 = 1.0 / model.drift(delta)
        wbb0 = 1.0 / model.drift(0.0)
        w0p = (q + model.kappa) / model.drift(delta) ** 2
        wbb0p = (q + model.kappa) / model.drift(0.0) ** 2

    for mix, v0, name in ((w_mix, w0, "W"), (wbb_mix, wbb0, "Wbb")):
        got = mix(0.0)
        if abs(got - v0) > 1e-9 * (1.0 + abs(v0)):
            raise ArithmeticError(
                f"{name}(0) = {got} disagrees with boundary value {v0}"
            )

    return ScaleFamily(
        model=model,
        delta=float(delta),
        q=float(q),
        roots_y=roots_y,
        roots_x=roots_x,
        W_mix=w_mix,
        Wbb_mix=wbb_mix,
        W0=w0,
        Wbb0=wbb0,
        W0_prime=w0p,
        Wbb0_prime=wbb0p,
        W_prime_mix=w_mix.derivative_mixture(),
        Wbb_prime_mix=wbb_mix.derivative_mixture(),
        W_bar_mix=w_mix.antiderivative_mixture(),
        Wbb_bar_mix=wbb_mix.antiderivative_mixture(),
    )


def _parts(family: ScaleFamily, which: str):
    proc, base = _KIND[which]
    if proc == "X":
        scale, anti, deriv = family.W_mix, family.W_bar_mix, family.W_prime_mix
        w0p = family.W0_prime
    else:
        scale, anti, deriv = family.Wbb_mix, family.Wbb_bar_mix, family.Wbb_prime_mix
        w0p = family.Wbb0_prime
    return base, scale, anti, deriv, w0p


def eval_scale(family: ScaleFamily, which: str, x: float) -> float:
    """Evaluate one of W, Wbb, Z, Zbb, Wbar, Wbbbar, Wprime, Wbbprime at x.

    Conventions: W-type functions are 0 for x < 0 and Z-type equal 1 for
    x <= 0.  Wprime at 0 returns the right-derivative limit W'(0+), which is
    finite for every valid phase-type model.
    """
    if which not in _KIND:
        raise KeyError(f"unknown scale selector {which!r}")
    base, scale, anti, deriv, w0p = _parts(family, which)
    if base == "scale":
        return scale(x) if x >= 0 else 0.0
    if base == "anti":
        return anti(x) if x > 0 else 0.0
    if base == "second":
        return 1.0 + family.q * (anti(x) if x > 0 else 0.0)
    # derivative
    if x < 0:
        return 0.0
    if x == 0:
        return w0p
    return deriv(x)


def laplace_check(
    family: ScaleFamily, theta: float, which: str = "W"
) -> tuple[float, float]:
    """Both sides of the defining transform: (closed form, 1/(psi(theta)-q)).

    theta must strictly dominate the positive root of the matching process.
    """
    proc, _ = _KIND[which]
    mix = family.W_mix if proc == "X" else family.Wbb_mix
    pos = family.Phi if proc == "X" else family.phi
    if theta <= pos:
        raise ThetaNotDominating(f"theta = {theta} <= positive root {pos}")
    lhs = mix.laplace(theta)
    rhs = 1.0 / (family.psi(proc, theta) - family.q)
    return float(np.real(lhs)), float(np.real(rhs))


def exp_weighted_integral(
    family: ScaleFamily, x_lo: float, x_hi: float, rate: complex, which: str = "Wbb"
) -> complex:
    """Closed form of int_{x_lo}^{x_hi} exp(rate*u) * scale(u) du.

    Support conventions are honoured: W-type integrands vanish below 0 while
    Z-type integrands contribute exp(rate*u) * 1 on the negative part.
    Rate collisions with mixture terms switch to the u*exp(r*u) branch.
    """
    if x_lo > x_hi:
        raise ValueError("x_lo must be <= x_hi")
    base, scale, anti, deriv, _ = _parts(family, which)
    if base == "second":
        const = ExpMixture.constant(1.0).times_exp(rate)
        total = const.definite_integral(x_lo, x_hi)
        lo = max(x_lo, 0.0)
        if lo < x_hi:
            total += family.q * anti.times_exp(rate).definite_integral(lo, x_hi)
        return total
    mix = {"scale": scale, "anti": anti, "deriv": deriv}[base]
    lo = max(x_lo, 0.0)
    if lo >= x_hi:
        return 0.0
    return mix.times_exp(rate).definite_integral(lo, x_hi)


def convolve_on_interval(
    mix_a: ExpMixture, mix_b: ExpMixture, z_lo: float, z_hi: float, x: float
) -> float:
    """int_{z_lo}^{z_hi} mix_a(x-z) * mix_b(z) dz for W-type mixtures.

    Both factors follow the vanish-below-zero convention, so the integration
    range is clamped to [max(z_lo, 0), min(z_hi, x)].
    """
    lo = max(z_lo, 0.0)
    hi = min(z_hi, x)
    if lo >= hi:
        return 0.0
    val = convolve_at(mix_a, mix_b, lo, hi, x)
    re, im = val.real, abs(val.imag)
    if im >= 1e-10 * (1.0 + abs(re)):
        raise ArithmeticError(f"convolution has imaginary residue {im:.3e}")
    return re


def dump_mixture_csv(mix: ExpMixture, path: str | Path) -> None:
    """Write mixture terms as CSV (coef_re, coef_im, rate_re, rate_im, power)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coef_re", "coef_im", "rate_re", "rate_im", "power"])
        for c, r, k in mix.terms:
            writer.writerow([c.real, c.imag, r.real, r.imag, k])
