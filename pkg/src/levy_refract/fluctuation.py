"""Fluctuation identities of the refracted-reflected process V.

V is reflected at 0 (minimal capital injection R) and refracted at b > 0
(dividends paid at the maximal rate delta while V > b), driven by the
spectrally positive Y with drift-adjusted X = Y - delta t.  Everything here
is expressed through the scale families of -X and -Y via three kernels:

    r(l; a)   = W(l) + delta * int_{a-b}^{l} Wbb(l-z) W'(z) dz
    rhat(l)   = e^{-Phi(b-l)} (1 + delta Phi int_0^l e^{-Phi u} Wbb(u) du)
    calR(p,q; a) = (1 + delta Wbb(0)) W(a)
                 + delta int_0^b Wbb_{p+q}'(u) W(a-u) du
                 + (p/q) Wbb_{p+q}(b) Z(a-b)
                 + p int_0^b Wbb_{p+q}(u) W(a-u) du

(W-functions of -X at index q, Wbb-functions of -Y at index p+q).  All
integrals are closed-form mixture operations; Borel sets are finite unions of
half-open intervals.  Discounted quantities that blow up (q = 0 with
psi_X'(0+) >= 0) return math.inf rather than raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import (
    BOutOfRange,
    DegenerateDiscount,
    GeometryViolation,
    IndexViolation,
    QuadratureFailure,
    UnboundedVariationModel,
)
from .mixture import ExpMixture, convolve_at, convolve_mixture
from .model import (
    ValidatedModel,
    jump_density,
    jump_density_mixture,
    jump_tail,
    jump_tail_mixture,
)
from .scale import ScaleFamily, convolve_on_interval, exp_weighted_integral

INF = math.inf


# --------------------------------------------------------------------------
# geometry and interval sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Geometry:
    """Barrier geometry: refraction level b, optional target a, rates.

    delta = 0 is admitted so that the pure reflection degenerations are
    computable through the same code path.
    """

    b: float
    delta: float
    q: float
    a: float | None = None
    p: float | None = None

    def __post_init__(self):
        if self.b <= 0:
            raise GeometryViolation("refraction level b must be > 0")
        if self.delta < 0:
            raise GeometryViolation("delta must be >= 0")
        if self.q < 0:
            raise GeometryViolation("q must be >= 0")
        if self.a is not None and self.a <= self.b:
            raise GeometryViolation(f"target a = {self.a} must exceed b = {self.b}")
        if self.p is not None:
            if self.p < 0:
                raise GeometryViolation("occupation weight p must be >= 0")
            if self.q <= 0:
                raise GeometryViolation("occupation transforms require q > 0")

    def require_a(self) -> float:
        if self.a is None:
            raise GeometryViolation("this operation needs the upper target a")
        return self.a


class IntervalSet:
    """Finite union of disjoint half-open intervals [lo, hi) within [0, inf)."""

    def __init__(self, pairs):
        ivs = []
        for lo, hi in pairs:
            lo, hi = float(lo), float(hi)
            if not lo < hi:
                raise ValueError(f"empty or inverted interval [{lo}, {hi})")
            if lo < 0:
                raise ValueError("intervals must lie in [0, inf)")
            ivs.append((lo, hi))
        ivs.sort()
        for (l1, h1), (l2, _) in zip(ivs, ivs[1:]):
            if l2 < h1:
                raise ValueError("intervals must be disjoint")
        self.intervals: tuple[tuple[float, float], ...] = tuple(ivs)

    @staticmethod
    def empty() -> "IntervalSet":
        return IntervalSet(())

    def is_empty(self) -> bool:
        return not self.intervals

    def measure(self) -> float:
        return sum(h - l for l, h in self.intervals)

    def contains(self, x: float) -> bool:
        return any(l <= x < h for l, h in self.intervals)

    def clipped(self, lo: float, hi: float) -> "IntervalSet":
        """Intersection with [lo, hi)."""
        out = []
        for l, h in self.intervals:
            c, d = max(l, lo), min(h, hi)
            if c < d:
                out.append((c, d))
        return IntervalSet(out)

    def sup(self) -> float:
        return self.intervals[-1][1] if self.intervals else 0.0

    def __repr__(self) -> str:
        return f"IntervalSet({list(self.intervals)})"


def _check_family(family: ScaleFamily, geom: Geometry) -> None:
    if abs(family.q - geom.q) > 1e-14 or abs(family.delta - geom.delta) > 1e-14:
        raise GeometryViolation(
            "geometry (q, delta) does not match the scale family it is used with"
        )


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


def kernel_r(family: ScaleFamily, geom: Geometry, l: float, a: float | None = None) -> float:
    """r(l; a): W(l) plus the refraction correction over (a-b, l)."""
    _check_family(family, geom)
    a = geom.require_a() if a is None else a
    if a <= geom.b:
        raise GeometryViolation("kernel_r needs a > b")
    if l < 0:
        return 0.0
    val = family.W(l)  # W(0) is the bounded-variation mass 1/c, not 0
    if geom.delta != 0.0:
        val += geom.delta * convolve_on_interval(
            family.Wbb_mix, family.W_prime_mix, a - geom.b, l, l
        )
    return val


def kernel_r_prime(
    family: ScaleFamily, geom: Geometry, l: float, a: float | None = None
) -> float:
    """Right-hand derivative of r(.; a) at l."""
    _check_family(family, geom)
    a = geom.require_a() if a is None else a
    if a <= geom.b:
        raise GeometryViolation("kernel_r_prime needs a > b")
    if l < 0:
        return 0.0
    if l < a - geom.b:
        return family.Wprime(l)
    val = (1.0 + geom.delta * family.Wbb0) * family.Wprime(l)
    if geom.delta != 0.0:
        val += geom.delta * convolve_on_interval(
            family.Wbb_prime_mix, family.W_prime_mix, a - geom.b, l, l
        )
    return val


def _ew(family: ScaleFamily, l: float) -> float:
    """int_0^l e^{-Phi u} Wbb(u) du (0 for l <= 0)."""
    if l <= 0:
        return 0.0
    return float(
        np.real(exp_weighted_integral(family, 0.0, l, -family.Phi, "Wbb"))
    )


def kernel_r_hat(family: ScaleFamily, geom: Geometry, l: float) -> float:
    """rhat(l) = e^{-Phi(b-l)} (1 + delta Phi int_0^l e^{-Phi u} Wbb(u) du)."""
    _check_family(family, geom)
    _require_positive_Phi(family)
    Phi = family.Phi
    return math.exp(-Phi * (geom.b - l)) * (
        1.0 + geom.delta * Phi * _ew(family, l)
    )


def kernel_r_hat_prime(family: ScaleFamily, geom: Geometry, l: float) -> float:
    """rhat'(l) = Phi * (rhat(l) + delta e^{-Phi b} Wbb(l))."""
    _check_family(family, geom)
    _require_positive_Phi(family)
    Phi = family.Phi
    return Phi * (
        kernel_r_hat(family, geom, l)
        + geom.delta * math.exp(-Phi * geom.b) * family.Wbb(l)
    )


def _require_positive_Phi(family: ScaleFamily) -> None:
    if family.Phi <= 0.0:
        raise DegenerateDiscount(
            "Phi(q) = 0 (q = 0 with psi_X'(0+) >= 0); infinite-horizon "
            "quantities are infinite here"
        )


def kernel_cal_R(
    family_q: ScaleFamily,
    family_pq: ScaleFamily,
    p: float,
    q: float,
    a: float,
    b: float,
) -> float:
    """calR^{(p,q)}(a) built from the W-side of family_q and Wbb-side of family_pq."""
    delta = family_q.delta
    val = (1.0 + delta * family_q.Wbb0) * family_q.W(a)
    if delta != 0.0:
        val += delta * convolve_on_interval(
            family_q.W_mix, family_pq.Wbb_prime_mix, 0.0, b, a
        )
    if p != 0.0:
        if q == 0.0:
            raise DegenerateDiscount("calR^{(p,q)} needs q != 0 when p != 0")
        val += (p / q) * family_pq.Wbb(b) * family_q.Z(a - b)
        val += p * convolve_on_interval(family_q.W_mix, family_pq.Wbb_mix, 0.0, b, a)
    return val


def kernel_cal_R_prime(
    family_q: ScaleFamily,
    family_pq: ScaleFamily,
    p: float,
    q: float,
    a: float,
    b: float,
) -> float:
    """Right-hand a-derivative of calR^{(p,q)}."""
    delta = family_q.delta
    val = (1.0 + delta * family_q.Wbb0) * family_q.Wprime(a)
    if delta != 0.0:
        val += delta * convolve_on_interval(
            family_q.W_prime_mix, family_pq.Wbb_prime_mix, 0.0, b, a
        )
    if p != 0.0:
        val += p * (
            family_pq.Wbb(b) * family_q.W(a - b)
            + convolve_on_interval(family_q.W_prime_mix, family_pq.Wbb_mix, 0.0, b, a)
        )
    return val


def gamma_kernel(
    family: ScaleFamily, kind: str, l: float, level: float, B: IntervalSet
) -> float:
    """Gamma kernels of the reflected resolvents, closed-form per interval.

    kind 'Gamma_b':       int_{level-l}^{level} 1_B(y) Wbb(y-level+l) dy
    kind 'Gamma_b_prime': 1_B(level-l) Wbb(0) + same integral with Wbb'
    kind 'Gamma_bar_a':   int_{level-l}^{level} 1_B(y) W(y-level+l) dy
    """
    if level <= 0:
        raise GeometryViolation("gamma_kernel needs level > 0")
    if kind not in ("Gamma_b", "Gamma_b_prime", "Gamma_bar_a"):
        raise KeyError(f"unknown gamma kernel kind {kind!r}")
    if l <= 0:
        return 0.0
    if l > level + 1e-12:
        raise GeometryViolation("gamma_kernel needs l <= level")
    clipped = B.clipped(level - l, level)
    if kind == "Gamma_b_prime":
        total = family.Wbb0 if B.contains(level - l) else 0.0
        for c, d in clipped.intervals:
            total += family.Wbb(d - level + l) - family.Wbb(c - level + l)
        return total
    fn = family.Wbbbar if kind == "Gamma_b" else family.Wbar
    total = 0.0
    for c, d in clipped.intervals:
        total += fn(d - level + l) - fn(c - level + l)
    return total


# --------------------------------------------------------------------------
# running-boundary mixtures for the u-integrals
# --------------------------------------------------------------------------


def _r_prime_uu_mixture(family: ScaleFamily, b: float) -> ExpMixture:
    """r'(u; u) as a mixture in u, valid for u >= b."""
    mix = family.W_prime_mix.scaled(1.0 + family.delta * family.Wbb0)
    if family.delta != 0.0:
        mix = mix + convolve_mixture(
            family.W_prime_mix, family.Wbb_prime_mix, 0.0, b
        ).scaled(family.delta)
    return mix.simplify(drop_rtol=0.0)


def _r_umx_mixture(family: ScaleFamily, b: float, x: float) -> ExpMixture:
    """r(u - x; u) as a mixture in u, valid for u >= max(b, x)."""
    mix = family.W_mix.substitute_affine(-x, 1.0)
    if family.delta != 0.0 and x < b:
        mix = mix + convolve_mixture(
            family.W_prime_mix, family.Wbb_mix, 0.0, b - x
        ).substitute_affine(-x, 1.0).scaled(family.delta)
    return mix.simplify(drop_rtol=0.0)


def _integrate_intervals(mix: ExpMixture, B: IntervalSet) -> float:
    total = 0.0 + 0.0j
    for c, d in B.intervals:
        if math.isinf(d):
            total += mix.integral_to_inf(c)
        else:
            total += mix.definite_integral(c, d)
    return float(np.real(total))


# --------------------------------------------------------------------------
# resolvents
# --------------------------------------------------------------------------


def resolvent_finite(
    family: ScaleFamily, geom: Geometry, x: float, B: IntervalSet
) -> float:
    """E_x int_0^{T_a^+} e^{-qt} 1_{V_t in B} dt for B within [0, a]."""
    _check_family(family, geom)
    a, b = geom.require_a(), geom.b
    if x < 0:
        x = 0.0  # reflection at 0 makes the start immaterial below zero
    if x > a:
        raise GeometryViolation("resolvent_finite needs x <= a")
    if not B.is_empty() and B.sup() > a + 1e-12:
        raise BOutOfRange("B must be contained in [0, a]")
    ratio = kernel_r(family, geom, a - x) / kernel_r_prime(family, geom, a)
    val = -gamma_kernel(family, "Gamma_b", b - x, b, B)
    val += ratio * gamma_kernel(family, "Gamma_b_prime", b, b, B)
    m1 = _r_prime_uu_mixture(family, b)
    val += ratio * _integrate_intervals(m1, B.clipped(b, a))
    s = max(b, x)
    m2 = _r_umx_mixture(family, b, x)
    val -= _integrate_intervals(m2, B.clipped(s, a))
    return val


def resolvent_infinite(
    family: ScaleFamily, geom: Geometry, x: float, B: IntervalSet
) -> float:
    """E_x int_0^inf e^{-qt} 1_{V_t in B} dt; math.inf in the degenerate case."""
    _check_family(family, geom)
    b = geom.b
    if x < 0:
        x = 0.0
    if family.q == 0.0 and family.roots_x.degenerate:
        return INF if B.measure() > 0 else 0.0
    rhat_pb = kernel_r_hat_prime(family, geom, b)
    ratio = kernel_r_hat(family, geom, b - x) / rhat_pb
    val = ratio * gamma_kernel(family, "Gamma_b_prime", b, b, B)
    val -= gamma_kernel(family, "Gamma_b", b - x, b, B)
    m1 = _r_prime_uu_mixture(family, b)
    m2 = _r_umx_mixture(family, b, x)
    s = max(b, x)
    if s > b:
        # below the start the r(u-x; u) part vanishes
        val += ratio * _integrate_intervals(m1, B.clipped(b, s))
    diff = m1.scaled(ratio) - m2
    tail_part = B.clipped(s, INF)
    bounded = IntervalSet([iv for iv in tail_part.intervals if not math.isinf(iv[1])])
    unbounded = [iv for iv in tail_part.intervals if math.isinf(iv[1])]
    val += _integrate_intervals(diff, bounded)
    if unbounded:
        # the e^{Phi u} components of ratio*r'(u;u) and r(u-x;u) cancel exactly
        # in the a -> infinity limit; assert the residual and drop it, then
        # integrate the strictly decaying remainder to infinity
        kept, dropped_scale, bad = [], 0.0, False
        scale = max((abs(c) for c, _, _ in diff.terms), default=1.0)
        for c, r, k in diff.simplify(drop_rtol=0.0).terms:
            if r.real >= -1e-12:
                if abs(c) > 1e-9 * scale and abs(r.imag) < 1e-9 and r.real > 1e-12:
                    raise ArithmeticError(
                        "growing component failed to cancel in the infinite-horizon resolvent"
                    )
                if abs(c) > 1e-9 * scale:
                    bad = True  # genuine non-decaying mass (q = 0 transient case)
            else:
                kept.append((c, r, k))
        if bad:
            return INF
        decayed = ExpMixture(tuple(kept))
        val += _integrate_intervals(decayed, IntervalSet(unbounded))
    return val


# --------------------------------------------------------------------------
# exit, dividends, injections, occupation
# --------------------------------------------------------------------------


def exit_laplace(family: ScaleFamily, geom: Geometry, x: float) -> float:
    """E_x[e^{-q T_a^+}]: one-sided upward exit transform, in [0, 1]."""
    _check_family(family, geom)
    a, b, q = geom.require_a(), geom.b, geom.q
    if x < 0:
        x = 0.0
    if x > a:
        raise GeometryViolation("exit_laplace needs x <= a")
    if q == 0.0:
        return 1.0  # T_a^+ < infinity a.s.
    val = family.Z(a - x)
    val += q * geom.delta * convolve_on_interval(
        family.W_mix, family.Wbb_mix, 0.0, b - x, a - x
    )
    ratio = kernel_r(family, geom, a - x) / kernel_r_prime(family, geom, a)
    val -= q * ratio * kernel_cal_R(family, family, 0.0, q, a, b)
    return val


def dividends_npv(
    family: ScaleFamily, geom: Geometry, x: float, horizon: str = "infinite"
) -> float:
    """Expected NPV of dividends, to T_a^+ ('to_a') or over all time ('infinite')."""
    _check_family(family, geom)
    b, q, delta = geom.b, geom.q, geom.delta
    if x < 0:
        x = 0.0
    if horizon == "to_a":
        a = geom.require_a()
        if x > a:
            raise GeometryViolation("dividends_npv needs x <= a")
        conv = convolve_on_interval(family.W_mix, family.Wbb_mix, 0.0, b - x, a - x)
        ratio = kernel_r(family, geom, a - x) / kernel_r_prime(family, geom, a)
        calR0 = kernel_cal_R(family, family, 0.0, q, a, b)
        return delta * (
            family.Wbbbar(b - x) - family.Wbar(a - x) - delta * conv
        ) + delta * ratio * (calR0 - family.Wbb(b))
    if horizon != "infinite":
        raise ValueError("horizon must be 'to_a' or 'infinite'")
    if q == 0.0:
        return INF
    ratio = kernel_r_hat(family, geom, b - x) / kernel_r_hat_prime(family, geom, b)
    return delta * (family.Zbb(b - x) / q - ratio * family.Wbb(b))


def injection_npv(
    family: ScaleFamily, geom: Geometry, x: float, horizon: str = "infinite"
) -> float:
    """Expected NPV of capital injections; x < 0 adds the initial lump |x|."""
    _check_family(family, geom)
    shift = max(0.0, -x)
    x = max(x, 0.0)
    if horizon == "to_a":
        a = geom.require_a()
        if x > a:
            raise GeometryViolation("injection_npv needs x <= a")
        return shift + kernel_r(family, geom, a - x) / kernel_r_prime(family, geom, a)
    if horizon != "infinite":
        raise ValueError("horizon must be 'to_a' or 'infinite'")
    if family.q == 0.0 and family.roots_x.degenerate:
        return INF
    return shift + kernel_r_hat(family, geom, geom.b - x) / kernel_r_hat_prime(
        family, geom, geom.b
    )


def _occupation_identity(
    fam_q: ScaleFamily,
    fam_pq: ScaleFamily,
    p: float,
    q: float,
    b: float,
    a: float,
    x: float,
) -> float:
    """E_x exp(-q T_a^+ - p * time below b before T_a^+), p possibly negative.

    W/Z read from fam_q (index q), Wbb read from fam_pq (index p+q).
    """
    delta = fam_q.delta
    g1 = fam_q.W_bar_mix.scaled(p) + fam_q.W_mix.scaled(delta)
    g2 = fam_q.W_mix.scaled(p) + fam_q.W_prime_mix.scaled(delta)
    val = fam_q.Z(a - x) + p * fam_pq.Wbbbar(b - x)
    val += q * convolve_on_interval(g1, fam_pq.Wbb_mix, 0.0, b - x, a - x)
    num = kernel_cal_R(fam_q, fam_pq, p, q, a, b)
    den = kernel_cal_R_prime(fam_q, fam_pq, p, q, a, b)
    bracket = fam_q.W(a - x) + convolve_on_interval(
        g2, fam_pq.Wbb_mix, 0.0, b - x, a - x
    )
    val -= q * (num / den) * bracket
    return val


def occupation_laplace(
    family_q: ScaleFamily,
    family_pq: ScaleFamily,
    geom: Geometry,
    x: float,
    side: str,
) -> float:
    """E_x exp(-q T_a^+ - p * occupation time below/above b), in [0, 1].

    family_q is the scale family at q, family_pq the one at p+q.  The 'above'
    transform is the 'below' identity at swapped indices (-p, p+q).
    """
    _check_family(family_q, geom)
    if geom.p is None:
        raise GeometryViolation("occupation_laplace needs the occupation weight p")
    p, q, b = geom.p, geom.q, geom.b
    a = geom.require_a()
    if abs(family_pq.q - (p + q)) > 1e-12 or abs(family_pq.delta - geom.delta) > 1e-14:
        raise GeometryViolation("family_pq must be built at (q + p, same delta)")
    if p + q < 0:
        raise IndexViolation("p + q must be >= 0")
    if x < 0:
        x = 0.0
    if x > a:
        raise GeometryViolation("occupation_laplace needs x <= a")
    if side == "below":
        return _occupation_identity(family_q, family_pq, p, q, b, a, x)
    if side == "above":
        return _occupation_identity(family_pq, family_q, -p, p + q, b, a, x)
    raise ValueError("side must be 'below' or 'above'")


# --------------------------------------------------------------------------
# bounded-variation double-integral probes
# --------------------------------------------------------------------------


def identity_probe(
    family_qt: ScaleFamily,
    family_pt: ScaleFamily,
    variant: str,
    alpha: float,
    beta: float,
    gamma: float,
    p_tilde: float,
    q_tilde: float,
) -> tuple[float, float]:
    """Both sides of the bounded-variation simplification identities.

    family_qt is the family at index q_tilde (its W-side is used) and
    family_pt the family at p_tilde (its Wbb-side is used); both must share
    the model and delta, and the model must have sigma = 0.  Variants 'i' and
    'ii' need alpha < beta <= gamma; the primed variants need beta < gamma.
    """
    model = family_qt.model
    if model.sigma != 0.0:
        raise UnboundedVariationModel("identity probes require bounded variation")
    if family_qt.model is not family_pt.model or family_qt.delta != family_pt.delta:
        raise ValueError("families must share the model and delta")
    if abs(family_qt.q - q_tilde) > 1e-12 or abs(family_pt.q - p_tilde) > 1e-12:
        raise ValueError("families must be built at (q_tilde, p_tilde)")
    strict = variant in ("i_prime", "ii_prime")
    if not (alpha < beta and (beta < gamma if strict else beta <= gamma)):
        raise ValueError("need alpha < beta <= gamma (strict for primed variants)")

    delta = family_qt.delta
    w0 = family_pt.Wbb0
    pi_mix = jump_density_mixture(model)
    tail_mix = jump_tail_mixture(model)
    ba, ga_, gb = beta - alpha, gamma - alpha, gamma - beta

    def inner_against(target: ExpMixture) -> ExpMixture:
        """Mixture in y of int_0^{beta-alpha} target(beta-alpha-s) pi(y+s) ds.

        Each density eigen-component is a lone complex exponential, so the
        per-component integral is complex; realness returns only after the
        conjugate components are summed.
        """
        terms = []
        for c, r, k in pi_mix.terms:
            assert k == 0
            e_mix = ExpMixture.from_terms([(1.0, r, 0)])
            kint = convolve_at(target, e_mix, 0.0, ba, ba)
            terms.append((c * kint, r, 0))
        return ExpMixture.from_terms(terms)

    if variant in ("i", "i_prime"):
        inner = inner_against(family_qt.W_mix)
        h = family_qt.W_mix.scaled(q_tilde - p_tilde) - family_qt.W_prime_mix.scaled(
            delta
        )
        if variant == "i":
            lhs = convolve_on_interval(family_pt.Wbb_mix, inner, 0.0, gb, gb)
            rhs = (
                family_qt.W(ba) * family_pt.Wbb(gb) / w0
                - family_qt.W(ga_)
                + convolve_on_interval(family_pt.Wbb_mix, h, ba, ga_, ga_)
            )
        else:
            lhs = convolve_on_interval(family_pt.Wbb_prime_mix, inner, 0.0, gb, gb)
            lhs += w0 * convolve_on_interval(family_qt.W_mix, pi_mix, gb, ga_, ga_)
            rhs = (
                family_qt.W(ba) * family_pt.Wbbprime(gb) / w0
                - family_qt.Wprime(ga_)
                + convolve_on_interval(family_pt.Wbb_prime_mix, h, ba, ga_, ga_)
                + w0
                * ((q_tilde - p_tilde) * family_qt.W(ga_) - delta * family_qt.Wprime(ga_))
            )
        return float(lhs), float(rhs)

    if variant in ("ii", "ii_prime"):
        # Z = 1 + q_tilde * Wbar everywhere, so the inner integral splits into
        # a tail-mass part and a Wbar convolution
        inner_w = inner_against(family_qt.W_bar_mix).scaled(q_tilde)
        g = family_qt.W_bar_mix.scaled(q_tilde - p_tilde) - family_qt.W_mix.scaled(
            delta
        )
        if variant == "ii":
            lhs = convolve_on_interval(family_pt.Wbb_mix, inner_w, 0.0, gb, gb)
            lhs += convolve_on_interval(family_pt.Wbb_mix, tail_mix, 0.0, gb, gb)
            rhs = (
                family_qt.Z(ba) * family_pt.Wbb(gb) / w0
                - family_qt.Z(ga_)
                - (p_tilde - q_tilde) * family_pt.Wbbbar(gb)
                + q_tilde * convolve_on_interval(family_pt.Wbb_mix, g, ba, ga_, ga_)
            )
        else:
            lhs = convolve_on_interval(family_pt.Wbb_prime_mix, inner_w, 0.0, gb, gb)
            lhs += convolve_on_interval(family_pt.Wbb_prime_mix, tail_mix, 0.0, gb, gb)
            lhs += w0 * (
                tail_mix(gb)
                + q_tilde
                * convolve_on_interval(family_qt.W_bar_mix, pi_mix, gb, ga_, ga_)
            )
            rhs = (
                family_qt.Z(ba) * family_pt.Wbbprime(gb) / w0
                - q_tilde * (delta * w0 + 1.0) * family_qt.W(ga_)
                + (q_tilde - p_tilde) * family_pt.Wbb(gb)
                + q_tilde * w0 * (q_tilde - p_tilde) * family_qt.Wbar(ga_)
                + q_tilde
                * convolve_on_interval(family_pt.Wbb_prime_mix, g, ba, ga_, ga_)
            )
        return float(lhs), float(rhs)

    raise ValueError("variant must be one of 'i', 'i_prime', 'ii', 'ii_prime'")


# --------------------------------------------------------------------------
# generator
# --------------------------------------------------------------------------


def _jump_cutoff(model: ValidatedModel, tol: float = 1e-14) -> float:
    z = 1.0
    while jump_tail(model, z) > tol and z < 1e4:
        z *= 2.0
    return z


def apply_generator(
    model: ValidatedModel,
    delta: float,
    g,
    g_prime,
    g_second,
    q: float,
    x: float,
    breakpoints: tuple[float, ...] = (),
) -> float:
    """(L - q) g(x) for the generator of Y (delta = 0) or X (delta > 0).

    For finite-activity jumps the compensated form collapses to

        L g(x) = -c g'(x) + sigma^2/2 g''(x) + int_0^inf (g(x+z) - g(x)) Pi(dz),

    with c = c_Y + delta.  The jump integral is adaptive quadrature against
    the phase-type density, truncated where the tail mass is below 1e-14
    (the remainder is bounded by sup|g| * 1e-14 since g is bounded here).
    """
    if x <= 0:
        raise ValueError("apply_generator needs x > 0")
    c = model.drift(delta)
    zmax = _jump_cutoff(model)
    pts = sorted(z for z in breakpoints if 0.0 < z < zmax)

    def integrand(z: float) -> float:
        return g(x + z) * jump_density(model, z)

    val, err = quad(
        integrand, 0.0, zmax, points=pts or None, limit=400,
        epsabs=1e-11, epsrel=1e-11,
    )
    # generator identities are checked at the 1e-5 level; reject only estimates
    # that would actually pollute them
    if err > 1e-6 * max(1.0, abs(val)):
        raise QuadratureFailure(f"jump integral error estimate {err:.3e} too large")
    return (
        -c * g_prime(x)
        + 0.5 * model.sigma**2 * g_second(x)
        + val
        - (model.kappa + q) * g(x)
    )
