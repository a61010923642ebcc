"""Tour of the closed-form fluctuation identities and their internal checks.

Everything here is evaluated symbolically on exponential mixtures; the only
numerics are root finding and the final scalar arithmetic.  Each block prints
an identity together with an independent way of computing the same quantity.

Run:  python demos/fluctuation_identities.py
"""

import math

import numpy as np

from levy_refract import (
    Geometry,
    IntervalSet,
    LevyModelSpec,
    PhaseTypeJump,
    build_scale_family,
    dividends_npv,
    exit_laplace,
    gamma_kernel,
    identity_probe,
    injection_npv,
    kernel_r_hat,
    kernel_r_hat_prime,
    laplace_check,
    occupation_laplace,
    reference_model,
    resolvent_finite,
    resolvent_infinite,
    validate_model,
)

q, delta, b, a = 0.05, 1.0, 1.0, 2.0
model = reference_model()
fam = build_scale_family(model, delta, q)
geom = Geometry(b=b, delta=delta, q=q, a=a)
geom_free = Geometry(b=b, delta=delta, q=q)

print("== scale functions ==")
lhs, rhs = laplace_check(fam, fam.Phi + 1.0, "W")
print(f"Laplace transform round trip at theta = Phi+1: {lhs:.12f} vs {rhs:.12f}")
print(f"W(0) = {fam.W0} (Gaussian part present), W'(0+) = {fam.W0_prime}")

print("\n== exit, resolvent, occupation up to the first passage above a ==")
for x in (0.0, 0.5, 1.5):
    el = exit_laplace(fam, geom, x)
    res = resolvent_finite(fam, geom, x, IntervalSet([(0.0, a)]))
    print(f"x={x}: E[e^(-q T_a+)] = {el:.8f}; q*resolvent + exit = {q*res + el:.12f}")

B = IntervalSet([(0.2, 0.8)])
print(f"resolvent of [0.2, 0.8) from x=0.5: "
      f"{resolvent_finite(fam, geom, 0.5, B):.8f}")

fampq = build_scale_family(model, delta, q + 0.1)
geomp = Geometry(b=b, delta=delta, q=q, a=a, p=0.1)
below = occupation_laplace(fam, fampq, geomp, 0.5, "below")
above = occupation_laplace(fam, fampq, geomp, 0.5, "above")
print(f"occupation transforms (p=0.1) from x=0.5: below {below:.8f}, above {above:.8f}")

print("\n== dividends and injections over an infinite horizon ==")
for x in (0.0, 0.5, 1.5):
    d = dividends_npv(fam, geom_free, x, "infinite")
    r = injection_npv(fam, geom_free, x, "infinite")
    # decomposition check: delta/q - delta * (discounted time below b)
    below_b = resolvent_infinite(fam, geom_free, x, IntervalSet([(0.0, b)]))
    print(f"x={x}: dividends {d:.8f} (= delta/q - delta*R_below = "
          f"{delta/q - delta*below_b:.8f}), injections {r:.8f}")

ratio = kernel_r_hat(fam, geom_free, b) / kernel_r_hat_prime(fam, geom_free, b)
print(f"injection NPV from x=0 equals rhat(b)/rhat'(b) = {ratio:.8f}")

print("\n== pure-reflection degenerations (delta = 0) ==")
fam0 = build_scale_family(model, 0.0, q)
geom0 = Geometry(b=b, delta=0.0, q=q, a=a)
x = 0.5
print(f"exit:      {exit_laplace(fam0, geom0, x):.10f}")
print(f"reflected: {fam0.Zbb(a-x) - q*fam0.Wbb(a-x)*fam0.Wbb(a)/fam0.Wbbprime(a):.10f}")
print(f"injection: {injection_npv(fam0, geom0, x, 'to_a'):.10f}")
print(f"reflected: {fam0.Wbb(a-x)/fam0.Wbbprime(a):.10f}")

print("\n== bounded-variation double-integral identities ==")
bv = validate_model(LevyModelSpec(
    c_Y=1.0, sigma=0.0, kappa=1.0,
    jump=PhaseTypeJump(alpha=np.array([1.0]), T=np.array([[-2.0]])),
))
famq = build_scale_family(bv, 0.3, 0.10)
famp = build_scale_family(bv, 0.3, 0.15)
for variant in ("i", "i_prime", "ii", "ii_prime"):
    lhs, rhs = identity_probe(famq, famp, variant, 0.0, 1.0, 2.0, 0.15, 0.10)
    print(f"variant {variant:8s}: lhs = {lhs:.12f}, rhs = {rhs:.12f}, "
          f"gap = {abs(lhs-rhs):.1e}")
