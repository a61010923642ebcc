"""Closed-form calculus on exponential mixtures.

An :class:`ExpMixture` is a finite sum

    f(x) = sum_i  c_i * x^{k_i} * exp(r_i * x)

with complex coefficients ``c_i``, complex rates ``r_i`` and nonnegative
integer powers ``k_i``.  Scale functions of processes with rational Laplace
exponents live in this class, and the class is closed under differentiation,
antidifferentiation, products, affine substitution and convolution over an
interval.  Every integral in the identity layer is therefore evaluated
symbolically; adaptive quadrature exists only as a test oracle.

Functions built from distinct characteristic roots always have ``k_i = 0``;
nonzero powers appear when an integration rate collides with a term rate
(confluent case), e.g. when integrating ``exp(-Phi*u) * W(u)`` for ``delta=0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Rates with |r| below this integrate on the polynomial branch; genuine root
# collisions are rejected upstream (RepeatedRoots), so only exact confluences
# (differences of identical floats) land in [0, tol).
CONFLUENCE_TOL = 1e-8

# |imag| tolerance, relative to the real part, for real-valued evaluation.
IMAG_RTOL = 1e-10

Term = tuple[complex, complex, int]


def _cexpm1(z: complex) -> complex:
    """exp(z) - 1 without cancellation for small |z| (complex-safe)."""
    if abs(z) < 1e-4:
        # 4-term Horner series; error O(|z|^5) < 1e-20 here
        return z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)))
    return np.exp(z) - 1.0


def _prim_term(c: complex, k: int, r: complex, lo: float, hi: float) -> complex:
    """Integral of c * u^k * exp(r*u) over [lo, hi], numerically stable."""
    if lo == hi:
        return 0.0
    if abs(r) < CONFLUENCE_TOL:
        return c * (hi ** (k + 1) - lo ** (k + 1)) / (k + 1)
    if k == 0:
        return c * np.exp(r * lo) * _cexpm1(r * (hi - lo)) / r

    def prim(u: float) -> complex:
        s = 0.0
        fac = 1.0
        for j in range(k + 1):
            s += (-1) ** j * fac * u ** (k - j) / r ** (j + 1)
            fac *= k - j
        return np.exp(r * u) * s

    return c * (prim(hi) - prim(lo))


@dataclass(frozen=True)
class ExpMixture:
    """Finite sum of ``coef * x^power * exp(rate*x)`` terms.

    The mixture is an analytic expression; support conventions (scale
    functions vanish on the negative half-line) are applied by the callers
    in :mod:`levy_refract.scale`.
    """

    terms: tuple[Term, ...]

    @staticmethod
    def from_terms(terms) -> "ExpMixture":
        return ExpMixture(tuple((complex(c), complex(r), int(k)) for c, r, k in terms))

    @staticmethod
    def zero() -> "ExpMixture":
        return ExpMixture(())

    @staticmethod
    def constant(c: complex) -> "ExpMixture":
        return ExpMixture(((complex(c), 0j, 0),))

    # ------------------------------------------------------------------ eval

    def eval_complex(self, x):
        """Evaluate at real x (scalar or ndarray), returning complex values."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for c, r, k in self.terms:
            out += c * x**k * np.exp(r * x)
        return out if out.shape else complex(out)

    def __call__(self, x):
        """Real value at x; raises if the imaginary residue is not negligible."""
        v = self.eval_complex(x)
        re, im = np.real(v), np.imag(v)
        bound = IMAG_RTOL * (1.0 + np.max(np.abs(re)))
        if np.max(np.abs(im)) >= bound:
            raise ArithmeticError(
                f"mixture evaluation has imaginary residue {np.max(np.abs(im)):.3e}"
            )
        return re if np.ndim(re) else float(re)

    # ------------------------------------------------------- linear algebra

    def scaled(self, a: complex) -> "ExpMixture":
        return ExpMixture(tuple((c * a, r, k) for c, r, k in self.terms))

    def __add__(self, other: "ExpMixture") -> "ExpMixture":
        return ExpMixture(self.terms + other.terms)

    def __sub__(self, other: "ExpMixture") -> "ExpMixture":
        return self + other.scaled(-1.0)

    def times_exp(self, rate: complex) -> "ExpMixture":
        """Multiply by exp(rate * x)."""
        return ExpMixture(tuple((c, r + rate, k) for c, r, k in self.terms))

    def simplify(self, drop_rtol: float = 1e-15) -> "ExpMixture":
        """Merge terms with (numerically) identical rate and power."""
        if not self.terms:
            return self
        scale = max(abs(c) for c, _, _ in self.terms) or 1.0
        merged: list[list] = []
        for c, r, k in self.terms:
            for slot in merged:
                if slot[2] == k and abs(slot[1] - r) < 1e-12 * (1.0 + abs(r)):
                    slot[0] += c
                    break
            else:
                merged.append([c, r, k])
        kept = tuple(
            (c, r, k) for c, r, k in merged if abs(c) > drop_rtol * scale
        )
        return ExpMixture(kept)

    # ------------------------------------------------------------- calculus

    def derivative_mixture(self) -> "ExpMixture":
        terms: list[Term] = []
        for c, r, k in self.terms:
            if r != 0:
                terms.append((c * r, r, k))
            if k > 0:
                terms.append((c * k, r, k - 1))
        return ExpMixture(tuple(terms))

    def antiderivative_mixture(self) -> "ExpMixture":
        """F with F' = f and F(0) = 0."""
        terms: list[Term] = []
        for c, r, k in self.terms:
            if abs(r) < CONFLUENCE_TOL:
                terms.append((c / (k + 1), 0j, k + 1))
                continue
            fac = 1.0
            for j in range(k + 1):
                terms.append((c * (-1) ** j * fac / r ** (j + 1), r, k - j))
                fac *= k - j
            # subtract the value of the primitive at 0 (only the j=k term)
            fack = math.factorial(k)
            terms.append((-c * (-1) ** k * fack / r ** (k + 1), 0j, 0))
        return ExpMixture(tuple(terms)).simplify(drop_rtol=0.0)

    def definite_integral(self, lo: float, hi: float) -> complex:
        """Integral over [lo, hi] (no support clamping)."""
        if lo == hi:
            return 0.0
        sign = 1.0
        if lo > hi:
            lo, hi, sign = hi, lo, -1.0
        return sign * sum(_prim_term(c, k, r, lo, hi) for c, r, k in self.terms)

    def integral_to_inf(self, lo: float) -> complex:
        """Integral over [lo, inf); every rate must have negative real part."""
        total = 0.0 + 0.0j
        for c, r, k in self.terms:
            if r.real >= 0 and abs(c) > 0:
                raise ValueError("divergent tail: rate with nonnegative real part")
            fac = 1.0
            s = 0.0 + 0.0j
            for j in range(k + 1):
                s += (-1) ** j * fac * lo ** (k - j) / r ** (j + 1)
                fac *= k - j
            total += -c * np.exp(r * lo) * s
        return total

    def laplace(self, theta: complex) -> complex:
        """int_0^inf exp(-theta x) f(x) dx; requires Re(theta) > max Re(rate)."""
        total = 0.0 + 0.0j
        for c, r, k in self.terms:
            if theta.real <= r.real:
                raise ValueError("Laplace transform diverges at this theta")
            total += c * math.factorial(k) / (theta - r) ** (k + 1)
        return total

    # --------------------------------------------------------- composition

    def substitute_affine(self, a0: float, a1: float) -> "ExpMixture":
        """Mixture g(u) = f(a0 + a1*u)."""
        terms: list[Term] = []
        for c, r, k in self.terms:
            base = c * np.exp(r * a0)
            for j in range(k + 1):
                terms.append(
                    (base * math.comb(k, j) * a0 ** (k - j) * a1**j, r * a1, j)
                )
        return ExpMixture(tuple(terms)).simplify(drop_rtol=0.0)

    def product(self, other: "ExpMixture") -> "ExpMixture":
        terms = tuple(
            (ca * cb, ra + rb, ka + kb)
            for ca, ra, ka in self.terms
            for cb, rb, kb in other.terms
        )
        return ExpMixture(terms)


def convolve_mixture(
    mix_a: ExpMixture, mix_b: ExpMixture, z_lo: float, z_hi: float
) -> ExpMixture:
    """Mixture in x of  g(x) = int_{z_lo}^{z_hi} mix_a(x - z) * mix_b(z) dz.

    Purely symbolic: for each term pair the z-integral is a scalar attached to
    an ``x^j exp(r_a x)`` factor.  The caller is responsible for support
    (the expression is the analytic continuation valid where both factors are
    on their mixture branch, i.e. x >= z_hi >= z_lo >= 0 in the usual usage).
    """
    if z_lo == z_hi:
        return ExpMixture.zero()
    out: list[Term] = []
    for ca, ra, ka in mix_a.terms:
        for cb, rb, kb in mix_b.terms:
            # (x - z)^ka = sum_j C(ka,j) x^{ka-j} (-z)^j
            for j in range(ka + 1):
                inner = _prim_term(1.0, j + kb, rb - ra, z_lo, z_hi)
                coef = ca * cb * math.comb(ka, j) * (-1.0) ** j * inner
                out.append((coef, ra, ka - j))
    return ExpMixture(tuple(out)).simplify(drop_rtol=0.0)


def convolve_at(
    mix_a: ExpMixture, mix_b: ExpMixture, z_lo: float, z_hi: float, x: float
) -> complex:
    """Scalar value of int_{z_lo}^{z_hi} mix_a(x - z) * mix_b(z) dz."""
    if z_lo >= z_hi:
        return 0.0
    total = 0.0 + 0.0j
    for ca, ra, ka in mix_a.terms:
        shifted = ExpMixture(((ca, ra, ka),)).substitute_affine(x, -1.0)
        total += shifted.product(mix_b).definite_integral(z_lo, z_hi)
    return total
