import os

# worker count only affects speed, never results (block-ordered reduction)
os.environ.setdefault("LEVY_REFRACT_THREADS", str(os.cpu_count() or 1))

import numpy as np
import pytest

from levy_refract.control import ControlProblem, solve_bstar
from levy_refract.model import (
    LevyModelSpec,
    PhaseTypeJump,
    reference_model,
    validate_model,
)
from levy_refract.scale import build_scale_family


def exponential_model(c_Y=1.0, sigma=0.0, kappa=1.0, mu=2.0):
    """Single-phase model: jumps ~ Exp(mu); psi_Y(s) = c s + s^2 sigma^2/2 + k(mu/(s+mu)-1)."""
    jump = PhaseTypeJump(alpha=np.array([1.0]), T=np.array([[-mu]]))
    return validate_model(LevyModelSpec(c_Y=c_Y, sigma=sigma, kappa=kappa, jump=jump))


def random_model(rng, sigma_mode="any"):
    """Random valid phase-type model with distinct-enough structure."""
    m = int(rng.integers(1, 4))
    off = rng.uniform(0.0, 1.0, size=(m, m))
    np.fill_diagonal(off, 0.0)
    exit_margin = rng.uniform(0.5, 2.0, size=m)
    T = off.copy()
    np.fill_diagonal(T, -(off.sum(axis=1) + exit_margin))
    alpha = rng.dirichlet(np.ones(m))
    if sigma_mode == "bounded":
        sigma = 0.0
    elif sigma_mode == "unbounded":
        sigma = rng.uniform(0.1, 0.5)
    else:
        sigma = rng.choice([0.0, rng.uniform(0.1, 0.5)])
    c_Y = rng.uniform(0.5, 2.0)
    kappa = rng.uniform(0.5, 2.0)
    jump = PhaseTypeJump(alpha=alpha, T=T)
    return validate_model(
        LevyModelSpec(c_Y=c_Y, sigma=float(sigma), kappa=kappa, jump=jump)
    )


@pytest.fixture(scope="session")
def exp_model():
    return exponential_model()


@pytest.fixture(scope="session")
def exp_family():
    """q=0.1, delta=0 family of the single-exponential model."""
    return build_scale_family(exponential_model(), 0.0, 0.1)


@pytest.fixture(scope="session")
def exp_family_d():
    """q=0.1, delta=0.3 family of the single-exponential model."""
    return build_scale_family(exponential_model(), 0.3, 0.1)


@pytest.fixture(scope="session")
def ref_model():
    return reference_model()


@pytest.fixture(scope="session")
def ref_family(ref_model):
    """Reference configuration family: q=0.05, delta=1."""
    return build_scale_family(ref_model, 1.0, 0.05)


@pytest.fixture(scope="session")
def ref_problem(ref_model):
    return ControlProblem(model=ref_model, delta=1.0, q=0.05, beta=2.0)


@pytest.fixture(scope="session")
def ref_solution(ref_problem):
    return solve_bstar(ref_problem)
