"""Cross-validate the closed-form identities against the path simulator.

A desk-scale version of the full Monte Carlo closure: every analytic
functional is compared with its simulated counterpart and reported with a
z-score.  Increase N_PATHS for tighter confidence intervals (the full
acceptance run uses 100k paths).

Run:  python demos/monte_carlo_validation.py
"""

import math
import time

from levy_refract import (
    ControlProblem,
    Geometry,
    IntervalSet,
    build_scale_family,
    dividends_npv,
    estimate_exit_bundle,
    estimate_value,
    exit_laplace,
    injection_npv,
    occupation_laplace,
    reference_model,
    resolvent_finite,
    solve_bstar,
    value_refraction,
)
from levy_refract.montecarlo import SimConfig

N_PATHS = 20_000
SEED = 7
q, delta, b, a, x = 0.05, 1.0, 1.0, 2.0, 0.5

model = reference_model()
fam = build_scale_family(model, delta, q)
fampq = build_scale_family(model, delta, q + 0.1)
geom = Geometry(b=b, delta=delta, q=q, a=a, p=0.1)
geom_free = Geometry(b=b, delta=delta, q=q)
horizon = math.log(1000.0) / q
cfg = SimConfig(dt=1e-3, horizon=horizon, n_paths=N_PATHS, seed=SEED)
B = IntervalSet([(0.2, 0.8)])


def row(name, est, analytic):
    z = (est.mean - analytic) / est.stderr if est.stderr else float("nan")
    print(f"{name:24s} mc {est.mean:9.5f} +- {est.stderr:.5f}   "
          f"analytic {analytic:9.5f}   z {z:+.2f}")


print(f"first-passage functionals from x={x} (b={b}, a={a}, {N_PATHS} paths)")
t0 = time.time()
bundle = estimate_exit_bundle(model, geom, x, cfg, B=B)
row("exit transform", bundle["exit"], exit_laplace(fam, geom, x))
row("dividends to T_a+", bundle["dividends"], dividends_npv(fam, geom, x, "to_a"))
row("injections to T_a+", bundle["injection"], injection_npv(fam, geom, x, "to_a"))
row("resolvent [0.2,0.8)", bundle["resolvent"], resolvent_finite(fam, geom, x, B))
row("occupation below", bundle["occupation_below"],
    occupation_laplace(fam, fampq, geom, x, "below"))
row("occupation above", bundle["occupation_above"],
    occupation_laplace(fam, fampq, geom, x, "above"))
print(f"  [{time.time()-t0:.1f}s]")

print(f"\ninfinite-horizon value (truncated at {horizon:.1f}, "
      f"dividend bias bound {delta*math.exp(-q*horizon)/q:.4f})")
t0 = time.time()
problem = ControlProblem(model=model, delta=delta, q=q, beta=2.0)
est = estimate_value(model, geom_free, 2.0, x, cfg)
row("dividends - 2*injections", est, value_refraction(problem, fam, b, x))
print(f"  [{time.time()-t0:.1f}s]")

result = solve_bstar(problem)
geom_opt = Geometry(b=result.b_star, delta=delta, q=q)
t0 = time.time()
est = estimate_value(model, geom_opt, 2.0, x, cfg)
from levy_refract import value_optimal

row("value at b*", est, value_optimal(problem, result, x))
print(f"  [{time.time()-t0:.1f}s]")
