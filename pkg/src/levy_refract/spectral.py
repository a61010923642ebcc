"""Characteristic roots of psi(s) = q for the phase-type Levy model.

Multiplying psi(s) - q by the characteristic polynomial chi(s) = det(sI - T)
clears the rational part and leaves the polynomial

    P(s) = (c s + sigma^2 s^2 / 2 - kappa - q) chi(s) + kappa N(s),

with N(s) = alpha adj(sI - T) t_exit of degree <= m-1.  P has degree m+2 when
sigma > 0 and m+1 otherwise; its roots are exactly the solutions of
psi(s) = q.  There is a single root with positive real part (real, equal to
Phi(q) resp. varphi(q)), all remaining roots have strictly negative real part
-- except at q = 0, where s = 0 is always a root because psi(0) = 0.

Roots are located globally via the companion matrix (numpy.roots) and then
polished with Newton iterations on psi(s) - q itself, using the exact rational
derivative, so the final residuals are at machine-precision level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, PoleAtEigenvalue, RepeatedRoots
from .model import (
    ValidatedModel,
    laplace_exponent,
    laplace_exponent_derivative,
)

# pairwise root distance below which the family construction is rejected
DISTINCT_RTOL = 1e-7

RESIDUAL_TOL = 1e-9

# |imag| below this (relative) snaps a root to the real axis
_REAL_SNAP = 1e-9


@dataclass(frozen=True)
class RootSet:
    """All roots of psi(s) = q for one process ('Y' or 'X').

    positive_root is varphi(q) for Y and Phi(q) for X.  ``degenerate`` marks
    the q = 0 case with psi'(0+) >= 0, where the positive root collapses to 0
    and infinite-horizon discounted quantities blow up.  ``has_zero_pole``
    marks the complementary q = 0 case (psi'(0+) < 0), where s = 0 is an
    additional simple pole next to the strictly positive root.
    """

    q: float
    process: str
    positive_root: float
    negative_roots: tuple[complex, ...]
    multiplicity_ok: bool
    degenerate: bool = False
    has_zero_pole: bool = False

    def all_poles(self) -> tuple[complex, ...]:
        """Every simple pole of 1/(psi - q): positive root, optional 0, negatives."""
        poles: list[complex] = [complex(self.positive_root)]
        if self.has_zero_pole:
            poles.append(0.0 + 0.0j)
        poles.extend(self.negative_roots)
        return tuple(poles)


def _char_poly_and_numerator(model: ValidatedModel) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (descending) of chi(s) = det(sI-T) and N(s) = alpha adj(sI-T) t.

    Faddeev-LeVerrier recursion; exact up to rounding, no eigenvalues needed.
    """
    T = model.jump.T
    alpha = model.jump.alpha
    t = model.jump.t_exit
    m = T.shape[0]
    M = np.eye(m)
    chi = [1.0]
    num = [float(alpha @ M @ t)]
    for k in range(1, m + 1):
        AM = T @ M
        ck = -np.trace(AM) / k
        chi.append(float(ck))
        M = AM + ck * np.eye(m)
        if k < m:
            num.append(float(alpha @ M @ t))
    return np.array(chi), np.array(num)


def psi_derivative(
    model: ValidatedModel, delta: float, process: str, s: complex
) -> complex:
    """Exact derivative of the Laplace exponent (see model module)."""
    return laplace_exponent_derivative(model, delta, process, s)


def _newton_polish(
    model: ValidatedModel, delta: float, process: str, q: float, s0: complex
) -> complex:
    s = complex(s0)
    for _ in range(60):
        f = laplace_exponent(model, delta, process, s) - q
        fp = laplace_exponent_derivative(model, delta, process, s)
        step = f / fp
        s = s - step
        if abs(step) < 1e-15 * (1.0 + abs(s)):
            break
    return s


def _pair_conjugates(roots: list[complex]) -> list[complex]:
    """Snap near-real roots to the axis and enforce exact conjugate pairing."""
    real_parts = [r for r in roots if abs(r.imag) < _REAL_SNAP * (1.0 + abs(r))]
    complex_parts = [r for r in roots if abs(r.imag) >= _REAL_SNAP * (1.0 + abs(r))]
    out: list[complex] = [complex(r.real) for r in real_parts]
    upper = sorted((r for r in complex_parts if r.imag > 0), key=lambda z: (z.real, z.imag))
    lower = sorted((r for r in complex_parts if r.imag < 0), key=lambda z: (z.real, -z.imag))
    if len(upper) != len(lower):
        raise NoConvergence("complex roots do not come in conjugate pairs")
    for zu in upper:
        j = int(np.argmin([abs(zu - zl.conjugate()) for zl in lower]))
        zl = lower.pop(j)
        z = 0.5 * (zu + zl.conjugate())
        out.extend([z, z.conjugate()])
    return out


def characteristic_roots(
    model: ValidatedModel, delta: float, process: str, q: float
) -> RootSet:
    """Solve psi(s) = q for process 'Y' or 'X' (psi_X = psi_Y + delta*s).

    Returns the classified RootSet; raises RepeatedRoots when two roots are
    closer than the distinctness tolerance and NoConvergence when a residual
    exceeds 1e-9 * max(1, q).
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    c = model.drift(delta if process == "X" else 0.0)
    sig2h = 0.5 * model.sigma**2
    chi, num = _char_poly_and_numerator(model)
    # (sig2h s^2 + c s - (kappa+q)) * chi(s) + kappa * N(s)
    lin = np.array([sig2h, c, -(model.kappa + q)])
    if sig2h == 0.0:
        lin = lin[1:]
    P = np.polyadd(np.polymul(lin, chi), model.kappa * num)

    if q == 0.0:
        # s = 0 is an exact root (psi(0) = 0); deflate it explicitly
        const = P[-1]
        scale = np.max(np.abs(P))
        if abs(const) > 1e-10 * scale:
            raise NoConvergence("expected exact zero root at q = 0")
        P = P[:-1]

    raw = np.roots(P)
    try:
        polished = [_newton_polish(model, delta, process, q, r) for r in raw]
    except PoleAtEigenvalue as exc:
        # a characteristic root collides with the spectrum of T, which only
        # happens for non-minimal phase-type representations
        raise RepeatedRoots(
            "characteristic root collides with an eigenvalue of T; "
            "the phase-type representation is not minimal"
        ) from exc
    roots = _pair_conjugates(polished)
    if q == 0.0:
        roots.append(0.0 + 0.0j)

    expected = model.jump.m + (2 if model.sigma > 0 else 1)
    if len(roots) != expected:
        raise NoConvergence(f"found {len(roots)} roots, expected {expected}")

    # distinctness and residuals
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if abs(roots[i] - roots[j]) < DISTINCT_RTOL * (1.0 + abs(roots[i])):
                raise RepeatedRoots(
                    f"roots {roots[i]} and {roots[j]} are not numerically distinct"
                )
    for r in roots:
        # allowance for float cancellation when the individual psi terms are huge
        # (e.g. the O(c/sigma^2) root of extreme-drift models); at desk scale the
        # strict 1e-9 * max(1, q) bound is the binding one
        mag = abs(c * r) + sig2h * abs(r) ** 2 + model.kappa + q
        tol = RESIDUAL_TOL * max(1.0, q) + 100.0 * np.finfo(float).eps * mag
        if abs(laplace_exponent(model, delta, process, r) - q) > tol:
            raise NoConvergence(f"residual too large at root {r}")

    positive = [r for r in roots if r.real > 0 and r.imag == 0.0]
    strictly_negative = [r for r in roots if r.real < 0]
    zeros = [r for r in roots if r == 0]
    if len(positive) > 1 or len(positive) + len(strictly_negative) + len(zeros) != len(
        roots
    ):
        raise NoConvergence("unexpected root classification")

    if positive:
        pos = float(positive[0].real)
        degenerate = False
        has_zero = bool(zeros)  # only possible at q = 0 with psi'(0+) < 0
    else:
        # q = 0 and psi'(0+) >= 0: the supremum root is 0 itself
        pos = 0.0
        degenerate = True
        has_zero = False

    negatives = tuple(sorted(strictly_negative, key=lambda z: (z.real, abs(z.imag), z.imag)))
    return RootSet(
        q=q,
        process=process,
        positive_root=pos,
        negative_roots=negatives,
        multiplicity_ok=True,
        degenerate=degenerate,
        has_zero_pole=has_zero,
    )
