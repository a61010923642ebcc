"""Spectrally positive Levy model with compound-Poisson phase-type jumps.

The driving process is

    Y_t = -c_Y * t + sigma * B_t + sum_{n <= N_t} Z_n,

where ``B`` is a standard Brownian motion, ``N`` a Poisson process with rate
``kappa`` and ``Z_n`` i.i.d. phase-type(m, alpha, T).  The drift-adjusted
process ``X_t = Y_t - delta * t`` absorbs the maximal dividend rate.  Both
Laplace exponents

    psi(s) = c * s + sigma^2 s^2 / 2 + kappa * (alpha (sI - T)^{-1} t_exit - 1)

are rational in ``s`` (analytic except at the eigenvalues of ``T``), which is
what makes every scale function an exponential mixture downstream.

Only ``c_Y`` is stored: for finite-activity jumps the Levy-Khintchine drift
gamma_Y is recovered as ``c_Y - int_(0,1) x Pi(dx)`` and is never needed
separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .errors import (
    BadSubgenerator,
    ConfigError,
    NonStochasticAlpha,
    PoleAtEigenvalue,
    RepeatedRoots,
    SubordinatorModel,
)
from .mixture import ExpMixture

# absolute distance in the complex plane below which a query point is treated
# as colliding with the spectrum of T
POLE_TOL = 1e-9

ALPHA_SUM_TOL = 1e-12


@dataclass(frozen=True)
class PhaseTypeJump:
    """Phase-type law (m, alpha, T); t_exit = -T 1 is derived."""

    alpha: np.ndarray
    T: np.ndarray

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    @property
    def t_exit(self) -> np.ndarray:
        return -self.T @ np.ones(self.m)

    def mean(self) -> float:
        """E[Z] = alpha (-T)^{-1} 1."""
        return float(self.alpha @ np.linalg.solve(-self.T, np.ones(self.m)))


@dataclass(frozen=True)
class LevyModelSpec:
    """Raw model parameters: drift c_Y, Gaussian sigma, jump rate kappa, jump law."""

    c_Y: float
    sigma: float
    kappa: float
    jump: PhaseTypeJump


@dataclass(frozen=True)
class ValidatedModel:
    """A LevyModelSpec with all invariants certified; immutable, shareable."""

    c_Y: float
    sigma: float
    kappa: float
    jump: PhaseTypeJump
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def unbounded_variation(self) -> bool:
        # phase-type jumps have finite activity, so the variation class is
        # decided by the Gaussian part alone (strict positivity, no threshold)
        return self.sigma > 0.0

    def drift(self, delta: float = 0.0) -> float:
        """Downward drift rate of the chosen process: c_X = c_Y + delta."""
        return self.c_Y + delta


def validate_model(spec: LevyModelSpec) -> ValidatedModel:
    """Check all invariants of the spec and return an immutable model.

    Raises NonStochasticAlpha, BadSubgenerator or SubordinatorModel.
    """
    alpha = np.asarray(spec.jump.alpha, dtype=float)
    T = np.asarray(spec.jump.T, dtype=float)
    m = alpha.shape[0]
    if T.shape != (m, m):
        raise BadSubgenerator(f"T must be {m}x{m}, got {T.shape}")
    if np.any(alpha < 0) or abs(alpha.sum() - 1.0) > ALPHA_SUM_TOL:
        # no silent renormalization: a bad sum is a config error
        raise NonStochasticAlpha(
            f"alpha must be nonnegative and sum to 1 (sum = {alpha.sum()!r})"
        )
    off = T - np.diag(np.diag(T))
    if np.any(off < 0):
        raise BadSubgenerator("off-diagonal entries of T must be nonnegative")
    if np.any(np.diag(T) >= 0):
        raise BadSubgenerator("diagonal entries of T must be strictly negative")
    rowsum = T @ np.ones(m)
    if np.any(rowsum > 1e-12):
        raise BadSubgenerator("row sums of T must be <= 0")
    eig = np.linalg.eigvals(T)
    if np.any(eig.real >= -1e-12):
        raise BadSubgenerator(
            f"T must be a stable subgenerator; eigenvalue {eig[np.argmax(eig.real)]}"
        )
    if spec.sigma < 0:
        raise BadSubgenerator("sigma must be >= 0")
    if spec.kappa <= 0:
        raise BadSubgenerator("kappa must be > 0")
    if spec.sigma == 0.0 and spec.c_Y <= 0.0:
        raise SubordinatorModel("sigma = 0 requires c_Y > 0 (monotone paths excluded)")
    jump = PhaseTypeJump(alpha=alpha, T=T)
    return ValidatedModel(
        c_Y=float(spec.c_Y),
        sigma=float(spec.sigma),
        kappa=float(spec.kappa),
        jump=jump,
        eigenvalues=eig,
    )


def variation_class(model: ValidatedModel) -> str:
    """'unbounded' iff sigma > 0 (finite-activity jumps), else 'bounded'."""
    return "unbounded" if model.unbounded_variation else "bounded"


def _resolvent_vector(model: ValidatedModel, s: complex) -> np.ndarray:
    """(sI - T)^{-1} t_exit by linear solve (no explicit inverse)."""
    T = model.jump.T
    m = T.shape[0]
    if np.min(np.abs(s - model.eigenvalues)) < POLE_TOL:
        raise PoleAtEigenvalue(f"s = {s} collides with the spectrum of T")
    A = s * np.eye(m) - T
    return np.linalg.solve(A, model.jump.t_exit.astype(complex))


def laplace_exponent(
    model: ValidatedModel, delta: float, process: str, s: complex
) -> complex:
    """psi_Y(s) or psi_X(s) = psi_Y(s) + delta*s, exact rational evaluation.

    ``process`` is 'Y' or 'X'.  Real for real s; raises PoleAtEigenvalue if s
    is within POLE_TOL of an eigenvalue of T.
    """
    c = model.c_Y + (delta if process == "X" else 0.0)
    v = _resolvent_vector(model, s)
    val = c * s + 0.5 * model.sigma**2 * s * s + model.kappa * (
        model.jump.alpha @ v - 1.0
    )
    if np.isrealobj(s) or (isinstance(s, complex) and s.imag == 0.0):
        return complex(val).real
    return complex(val)


def laplace_exponent_derivative(
    model: ValidatedModel, delta: float, process: str, s: complex
) -> complex:
    """psi'(s) = c + sigma^2 s - kappa * alpha (sI-T)^{-2} t_exit (exact)."""
    c = model.c_Y + (delta if process == "X" else 0.0)
    T = model.jump.T
    m = T.shape[0]
    if np.min(np.abs(s - model.eigenvalues)) < POLE_TOL:
        raise PoleAtEigenvalue(f"s = {s} collides with the spectrum of T")
    A = s * np.eye(m) - T
    v = np.linalg.solve(A, model.jump.t_exit.astype(complex))
    w = np.linalg.solve(A, v)
    val = c + model.sigma**2 * s - model.kappa * (model.jump.alpha @ w)
    if isinstance(s, complex) and s.imag != 0.0:
        return complex(val)
    return complex(val).real


def jump_density(model: ValidatedModel, x) -> np.ndarray | float:
    """Levy density Pi(dx)/dx = kappa * alpha exp(T x) t_exit for x > 0.

    Integrates to kappa over (0, inf).  Uses the matrix exponential directly,
    so it works even for non-diagonalizable T.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(xs.shape)
    for i, xi in enumerate(xs):
        out[i] = model.kappa * float(
            model.jump.alpha @ expm(model.jump.T * xi) @ model.jump.t_exit
        )
    return out if np.ndim(x) else float(out[0])


def jump_tail(model: ValidatedModel, x: float) -> float:
    """Pi(x, inf) = kappa * alpha exp(T x) 1."""
    m = model.jump.m
    return model.kappa * float(model.jump.alpha @ expm(model.jump.T * x) @ np.ones(m))


def _eig_mixture(model: ValidatedModel, v: np.ndarray) -> ExpMixture:
    """kappa * alpha exp(T x) v as an ExpMixture via eigendecomposition.

    Requires the eigenvalues of T to be distinct (consistent with the global
    distinct-roots assumption); raises RepeatedRoots otherwise.
    """
    lam, S = np.linalg.eig(model.jump.T)
    for i in range(len(lam)):
        for j in range(i + 1, len(lam)):
            if abs(lam[i] - lam[j]) < 1e-7 * (1.0 + abs(lam[i])):
                raise RepeatedRoots("T has (nearly) repeated eigenvalues")
    left = model.jump.alpha @ S
    right = np.linalg.solve(S, v.astype(complex))
    coefs = model.kappa * left * right
    return ExpMixture.from_terms(
        [(coefs[i], lam[i], 0) for i in range(len(lam))]
    ).simplify()


def jump_density_mixture(model: ValidatedModel) -> ExpMixture:
    """Exponential-mixture form of the Levy density (for closed-form probes)."""
    return _eig_mixture(model, model.jump.t_exit)


def jump_tail_mixture(model: ValidatedModel) -> ExpMixture:
    """Exponential-mixture form of the tail Pi(x, inf)."""
    return _eig_mixture(model, np.ones(model.jump.m))


# --------------------------------------------------------------------------
# bundled reference configuration
# --------------------------------------------------------------------------

# Six-phase fit of the law of |N(0,1)| (mean ~ sqrt(2/pi) ~ 0.7979).
_ABSNORMAL_T = np.array(
    [
        [-4.0488, 0.0000, 0.0000, 0.0000, 0.0000, 0.0000],
        [0.1320, -4.0012, 0.0000, 0.0455, 3.7040, 0.0044],
        [0.2367, 0.8595, -4.2831, 0.1897, 0.2918, 2.3724],
        [3.1532, 0.0000, 0.0000, -4.0229, 0.0000, 0.0000],
        [0.2497, 0.0000, 0.0000, 3.7024, -4.0124, 0.0000],
        [0.0434, 2.1947, 0.0938, 0.1704, 0.1217, -4.9612],
    ]
)
_ABSNORMAL_ALPHA = np.array([0.0052, 0.0659, 0.7446, 0.0398, 0.0043, 0.1403])


def absnormal_phase_type() -> PhaseTypeJump:
    """Bundled six-phase approximation of the absolute value of a standard normal.

    The published coefficients are rounded to four decimals and sum to 1.0001;
    the initial vector is renormalized here (explicitly, once) so the bundled
    law is exactly stochastic.  User-supplied configs are never renormalized.
    """
    alpha = _ABSNORMAL_ALPHA / _ABSNORMAL_ALPHA.sum()
    return PhaseTypeJump(alpha=alpha, T=_ABSNORMAL_T.copy())


def reference_model() -> ValidatedModel:
    """Bundled reference model: c_Y=0.5, sigma=0.2, kappa=1, |N(0,1)| jumps."""
    return validate_model(
        LevyModelSpec(c_Y=0.5, sigma=0.2, kappa=1.0, jump=absnormal_phase_type())
    )


# reference problem parameters used by the CLI --paper-defaults switch
REFERENCE_Q = 0.05
REFERENCE_BETA = 2.0
REFERENCE_DELTA = 1.0


# --------------------------------------------------------------------------
# config ingestion
# --------------------------------------------------------------------------


def load_model_config(path: str | Path) -> ValidatedModel:
    """Read a model from a JSON or TOML document.

    Expected keys: c_Y (money/time), sigma (money/sqrt(time)), kappa (1/time),
    alpha (array), T (array of arrays, row-major, 1/time).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"model file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    required = {"c_Y", "sigma", "kappa", "alpha", "T"}
    missing = required - data.keys()
    if missing:
        raise ConfigError(f"model file {path} missing keys: {sorted(missing)}")
    unknown = data.keys() - required
    if unknown:
        raise ConfigError(f"model file {path} has unknown keys: {sorted(unknown)}")
    jump = PhaseTypeJump(
        alpha=np.asarray(data["alpha"], dtype=float),
        T=np.asarray(data["T"], dtype=float),
    )
    spec = LevyModelSpec(
        c_Y=float(data["c_Y"]),
        sigma=float(data["sigma"]),
        kappa=float(data["kappa"]),
        jump=jump,
    )
    return validate_model(spec)
