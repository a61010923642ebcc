"""Command-line front end: solve | check | simulate | figures.

The CLI only orchestrates the library and emits CSV or JSON; it never plots.
Exit codes: 0 success, 1 numeric failure (e.g. RepeatedRoots or a failed
check), 2 usage/config error.  LEVY_REFRACT_THREADS caps the worker count of
the Monte Carlo engine.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import control, fluctuation, montecarlo
from .errors import ConfigError, LevyRefractError
from .fluctuation import Geometry, IntervalSet
from .model import (
    REFERENCE_BETA,
    REFERENCE_DELTA,
    REFERENCE_Q,
    ValidatedModel,
    load_model_config,
    reference_model,
)
from .scale import build_scale_family, laplace_check

SCHEMA_VERSION = 1

FIGURE_BETAS = (1.01, 1.1, 2.0, 5.0, 10.0, 20.0)
FIGURE_DELTAS = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)


@dataclass
class RunConfig:
    command: str
    model: ValidatedModel
    q: float
    beta: float
    delta: float
    b: float | None
    a: float | None
    x_grid: np.ndarray | None
    B: IntervalSet | None
    seed: int
    n_paths: int
    dt: float
    horizon: float | None
    out: Path | None
    fmt: str
    with_mc: bool
    dump_paths: int


def _parse_x_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise ConfigError(f"bad --x-grid {text!r}; expected lo:hi:n") from exc
    if n < 1 or hi < lo:
        raise ConfigError(f"bad --x-grid {text!r}: empty grid")
    return np.linspace(lo, hi, n)


def _parse_intervals(text: str) -> IntervalSet:
    pairs = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        try:
            lo, hi = part.split(",")
            pairs.append((float(lo), float(hi)))
        except ValueError as exc:
            raise ConfigError(f"bad --B interval {part!r}; expected lo,hi") from exc
    try:
        return IntervalSet(pairs)
    except ValueError as exc:
        raise ConfigError(f"bad --B {text!r}: {exc}") from exc


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="levy-refract",
        description="Refracted-reflected spectrally positive Levy process toolkit",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "solve the optimal dividend problem (b*, value table)"),
        ("check", "run the analytic invariant suites"),
        ("simulate", "Monte Carlo estimates of the path functionals"),
        ("figures", "emit the threshold/value sensitivity datasets"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--model", type=str, default=None, help="model file (JSON or TOML)")
        p.add_argument("--paper-defaults", action="store_true",
                       help="use the bundled reference model and parameters")
        p.add_argument("--q", type=float, default=None, help="discount rate (1/time)")
        p.add_argument("--beta", type=float, default=None, help="cost per unit injected capital")
        p.add_argument("--delta", type=float, default=None, help="maximal dividend rate")
        p.add_argument("--b", type=float, default=None, help="refraction level")
        p.add_argument("--a", type=float, default=None, help="upper target level")
        p.add_argument("--x-grid", type=str, default=None, help="evaluation grid lo:hi:n")
        p.add_argument("--B", type=str, default=None, help='interval set "l1,u1;l2,u2"')
        p.add_argument("--seed", type=int, default=1, help="RNG seed")
        p.add_argument("--n-paths", type=int, default=10000)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--out", type=str, default=None, help="output path (default stdout)")
        p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
        p.add_argument("--with-mc", action="store_true",
                       help="add Monte Carlo cross-checks to `check`")
        p.add_argument("--dump-paths", type=int, default=0,
                       help="also dump the first k simulated paths (simulate)")
    return ap


def parse_config(argv: list[str]) -> RunConfig:
    """Parse argv into a validated RunConfig; flags override file values."""
    ns = _build_parser().parse_args(argv)
    if ns.model is not None:
        model = load_model_config(ns.model)
    elif ns.paper_defaults or ns.command in ("figures", "check"):
        model = reference_model()
    else:
        raise ConfigError("no model: pass --model PATH or --paper-defaults")
    q = ns.q if ns.q is not None else REFERENCE_Q
    beta = ns.beta if ns.beta is not None else REFERENCE_BETA
    delta = ns.delta if ns.delta is not None else REFERENCE_DELTA
    horizon = ns.horizon
    if horizon is None and q > 0:
        horizon = math.log(1000.0) / q  # discount below 1e-3 past the horizon
    x_grid = _parse_x_grid(ns.x_grid) if ns.x_grid is not None else None
    B = _parse_intervals(ns.B) if ns.B is not None else None
    if ns.command == "figures" and x_grid is not None and x_grid.size == 0:
        raise ConfigError("empty x-grid")
    return RunConfig(
        command=ns.command,
        model=model,
        q=q,
        beta=beta,
        delta=delta,
        b=ns.b,
        a=ns.a,
        x_grid=x_grid,
        B=B,
        seed=ns.seed,
        n_paths=ns.n_paths,
        dt=ns.dt,
        horizon=horizon,
        out=Path(ns.out) if ns.out else None,
        fmt=ns.fmt,
        with_mc=ns.with_mc,
        dump_paths=ns.dump_paths,
    )


def _emit(cfg: RunConfig, rows: list[dict], header: list[str], payload: dict) -> None:
    if cfg.fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in header})
        text = buf.getvalue()
    else:
        payload = dict(payload)
        payload["schema_version"] = SCHEMA_VERSION
        payload["rows"] = rows
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        cfg.out.write_text(text)


def cmd_solve(cfg: RunConfig) -> int:
    problem = control.ControlProblem(
        model=cfg.model, delta=cfg.delta, q=cfg.q, beta=cfg.beta
    )
    result = control.solve_bstar(problem)
    xs = cfg.x_grid
    if xs is None:
        xs = np.linspace(0.0, 2.0 * result.b_star, 200)
    rows = []
    for x in xs:
        v = control.value_optimal(problem, result, float(x))
        vp = control.value_derivatives(problem, result, float(x))[0] if x > 0 else cfg.beta
        rows.append({"x": float(x), "v": v, "v_prime": vp})
    payload = {
        "b_star": result.b_star,
        "f_residual": result.f_residual,
        "smooth_fit_gap": result.smooth_fit_gap,
        "second_order_gap": result.second_order_gap,
    }
    header = ["x", "v", "v_prime"]
    if cfg.fmt == "csv":
        rows = [{"x": "# b_star", "v": result.b_star, "v_prime": ""},
                {"x": "# f_residual", "v": result.f_residual, "v_prime": ""},
                {"x": "# smooth_fit_gap", "v": result.smooth_fit_gap, "v_prime": ""}] + rows
    _emit(cfg, rows, header, payload)
    return 0


def _check_suites(cfg: RunConfig) -> list[tuple[str, bool, str]]:
    model = cfg.model
    q, delta = cfg.q, cfg.delta
    fam = build_scale_family(model, delta, q)
    rng = np.random.default_rng(cfg.seed)
    checks: list[tuple[str, bool, str]] = []

    worst = 0.0
    for _ in range(10):
        theta = fam.Phi + 10 ** rng.uniform(-1, 1)
        lhs, rhs = laplace_check(fam, theta, "W")
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
        theta = fam.phi + 10 ** rng.uniform(-1, 1)
        lhs, rhs = laplace_check(fam, theta, "Wbb")
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    checks.append(("laplace_round_trip", worst < 1e-9, f"max rel err {worst:.2e}"))

    from .scale import convolve_on_interval

    worst = 0.0
    for _ in range(10):
        x = rng.uniform(0.1, 3.0)
        lhs = delta * convolve_on_interval(fam.Wbb_mix, fam.W_mix, 0.0, x, x)
        rhs = fam.Wbbbar(x) - fam.Wbar(x)
        worst = max(worst, abs(lhs - rhs))
    checks.append(("convolution_identity", worst < 1e-8, f"max abs err {worst:.2e}"))

    b = cfg.b if cfg.b is not None else 1.0
    a = cfg.a if cfg.a is not None else b + 1.0
    geom0 = Geometry(b=b, delta=0.0, q=q, a=a)
    fam0 = build_scale_family(model, 0.0, q)
    worst = 0.0
    B = cfg.B if cfg.B is not None else IntervalSet([(0.2 * b, 0.8 * b)])
    for x in np.linspace(0.0, a, 10):
        lhs = fluctuation.resolvent_finite(fam0, geom0, float(x), B)
        rhs = fam0.Wbb(a - x) / fam0.Wbbprime(a) * fluctuation.gamma_kernel(
            fam0, "Gamma_b_prime", a, a, B
        ) - fluctuation.gamma_kernel(fam0, "Gamma_b", a - x, a, B)
        worst = max(worst, abs(lhs - rhs))
    checks.append(("delta0_resolvent_degeneration", worst < 1e-8, f"max abs err {worst:.2e}"))

    if model.sigma == 0.0:
        worst = 0.0
        famq = build_scale_family(model, delta, q)
        famp = build_scale_family(model, delta, q + 0.05)
        for variant in ("i", "i_prime", "ii", "ii_prime"):
            lhs, rhs = fluctuation.identity_probe(
                famq, famp, variant, 0.0, 1.0, 2.0, q + 0.05, q
            )
            worst = max(worst, abs(lhs - rhs))
        checks.append(("bounded_variation_probes", worst < 1e-6, f"max abs err {worst:.2e}"))

    if q > 0 and cfg.beta > 1:
        problem = control.ControlProblem(model=model, delta=delta, q=q, beta=cfg.beta)
        result = control.solve_bstar(problem)
        worst = -math.inf
        for x in np.linspace(0.05, 2.0 * result.b_star, 40):
            if abs(x - result.b_star) < 1e-4:
                continue
            worst = max(worst, control.hjb_residual(problem, result, float(x)))
        checks.append(("hjb_grid", worst <= 1e-5, f"max residual {worst:.2e}"))

    if cfg.with_mc:
        geom = Geometry(b=b, delta=delta, q=q, a=a)
        sim = montecarlo.SimConfig(
            dt=cfg.dt, horizon=cfg.horizon, n_paths=cfg.n_paths, seed=cfg.seed
        )
        est = montecarlo.estimate_functional(model, geom, b / 2, "exit", "to_a", sim)
        ana = fluctuation.exit_laplace(fam, geom, b / 2)
        ok = abs(est.mean - ana) < 3 * est.stderr + 1e-12
        checks.append(("mc_exit_vs_analytic", ok,
                       f"mc {est.mean:.5f} +- {est.stderr:.5f} vs {ana:.5f}"))
    return checks


def cmd_check(cfg: RunConfig) -> int:
    checks = _check_suites(cfg)
    rows = [
        {"check": name, "status": "PASS" if ok else "FAIL", "detail": detail}
        for name, ok, detail in checks
    ]
    _emit(cfg, rows, ["check", "status", "detail"], {"command": "check"})
    return 0 if all(ok for _, ok, _ in checks) else 1


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.b is None:
        raise ConfigError("simulate needs --b")
    geom = Geometry(b=cfg.b, delta=cfg.delta, q=cfg.q, a=cfg.a)
    sim = montecarlo.SimConfig(
        dt=cfg.dt, horizon=cfg.horizon, n_paths=cfg.n_paths, seed=cfg.seed
    )
    x0 = float(cfg.x_grid[0]) if cfg.x_grid is not None else 0.0
    rows = []
    if cfg.a is not None:
        bundle = montecarlo.estimate_exit_bundle(cfg.model, geom, x0, sim, B=cfg.B)
        for name, est in bundle.items():
            rows.append(
                {"functional": name, "mean": est.mean, "stderr": est.stderr,
                 "n": est.n_paths, "dt": cfg.dt, "horizon": cfg.horizon}
            )
    else:
        for name in ("dividends", "injection"):
            est = montecarlo.estimate_functional(
                cfg.model, geom, x0, name, "infinite", sim, B=cfg.B
            )
            rows.append(
                {"functional": name, "mean": est.mean, "stderr": est.stderr,
                 "n": est.n_paths, "dt": cfg.dt, "horizon": cfg.horizon}
            )
    _emit(cfg, rows, ["functional", "mean", "stderr", "n", "dt", "horizon"],
          {"command": "simulate", "seed": cfg.seed, "x": x0})
    if cfg.dump_paths > 0:
        dump_target = (
            cfg.out.with_suffix(".paths.csv") if cfg.out is not None else None
        )
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["path", "t", "V", "L", "R"])
        for k in range(cfg.dump_paths):
            rec = montecarlo.simulate_path(
                cfg.model, geom, x0, sim, montecarlo.block_rng(cfg.seed, 10_000 + k)
            )
            for t, v, l, r in zip(rec.times, rec.V, rec.L, rec.R):
                writer.writerow([k, t, v, l, r])
        if dump_target is None:
            sys.stdout.write(buf.getvalue())
        else:
            dump_target.write_text(buf.getvalue())
    return 0


def cmd_figures(cfg: RunConfig) -> int:
    problem = control.ControlProblem(
        model=cfg.model, delta=cfg.delta, q=cfg.q, beta=cfg.beta
    )
    result = control.solve_bstar(problem)
    bs = result.b_star
    xs = cfg.x_grid if cfg.x_grid is not None else np.linspace(0.0, bs + 4.0, 200)
    rows = []
    # threshold-defect curve and its root
    for bb in np.linspace(0.0, 2.0 * bs, 200):
        rows.append({"series_id": "f_curve", "param": "", "x": float(bb),
                     "value": control.f_of_b(problem, result.family, float(bb))})
    rows.append({"series_id": "b_star", "param": "", "x": bs, "value": 0.0})
    # optimal and suboptimal NPVs
    for x in xs:
        rows.append({"series_id": "v_optimal", "param": "", "x": float(x),
                     "value": control.value_optimal(problem, result, float(x))})
    for off in (-1.0, -0.5, 0.5, 1.0):
        bb = bs + off
        if bb <= 0:
            continue
        for x in xs:
            rows.append({"series_id": "v_suboptimal", "param": f"{bb:.6f}", "x": float(x),
                         "value": control.value_refraction(problem, result.family, bb, float(x))})
    # sensitivity sweeps
    for beta_val in FIGURE_BETAS:
        prob = control.ControlProblem(model=cfg.model, delta=cfg.delta, q=cfg.q, beta=beta_val)
        res = control.solve_bstar(prob)
        for x in xs:
            rows.append({"series_id": "beta_sweep", "param": f"{beta_val}", "x": float(x),
                         "value": control.value_optimal(prob, res, float(x))})
    for delta_val in FIGURE_DELTAS:
        prob = control.ControlProblem(model=cfg.model, delta=delta_val, q=cfg.q, beta=cfg.beta)
        res = control.solve_bstar(prob)
        for x in xs:
            rows.append({"series_id": "delta_sweep", "param": f"{delta_val}", "x": float(x),
                         "value": control.value_optimal(prob, res, float(x))})
    # rate-ceiling-free limit curve
    blim = control.unrestricted_barrier(problem)
    for x in xs:
        rows.append({"series_id": "delta_limit", "param": "inf", "x": float(x),
                     "value": control.unrestricted_limit(problem, blim, float(x))})
    _emit(cfg, rows, ["series_id", "param", "x", "value"],
          {"command": "figures", "b_star": bs})
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse's own usage errors
        return 2 if exc.code not in (0, None) else 0
    try:
        if cfg.command == "solve":
            return cmd_solve(cfg)
        if cfg.command == "check":
            return cmd_check(cfg)
        if cfg.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_figures(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LevyRefractError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
