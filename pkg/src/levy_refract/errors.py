"""Exception hierarchy shared by all levy_refract modules."""


class LevyRefractError(Exception):
    """Base class for every error raised by this package."""


class ModelError(LevyRefractError):
    """Invalid model specification."""


class NonStochasticAlpha(ModelError):
    """Initial phase distribution is not a probability vector."""


class BadSubgenerator(ModelError):
    """T is not a valid subgenerator (signs, row sums or spectrum)."""


class SubordinatorModel(ModelError):
    """sigma = 0 together with c_Y <= 0 gives monotone paths."""


class PoleAtEigenvalue(LevyRefractError):
    """Laplace exponent queried too close to an eigenvalue of T."""


class RepeatedRoots(LevyRefractError):
    """Two characteristic roots closer than the distinctness tolerance."""


class NoConvergence(LevyRefractError):
    """Root solver failed to reach the residual tolerance."""


class ThetaNotDominating(LevyRefractError):
    """Laplace transform evaluated at theta <= the dominant root."""


class GeometryViolation(LevyRefractError):
    """Barrier geometry violated (e.g. a <= b, or x outside [0, a])."""


class BOutOfRange(LevyRefractError):
    """Borel interval set not contained in the admissible range."""


class DegenerateDiscount(LevyRefractError):
    """Operation undefined because the dominant root Phi(q) vanishes."""


class IndexViolation(LevyRefractError):
    """Occupation-time indices outside the admissible region (p+q < 0)."""


class UnboundedVariationModel(LevyRefractError):
    """Operation only defined for bounded-variation models (sigma = 0)."""


class QuadratureFailure(LevyRefractError):
    """Adaptive quadrature reported an unacceptable error estimate."""


class NoBracket(LevyRefractError):
    """Root bracketing of f(b) failed; indicates an invalid problem."""


class ConfigError(LevyRefractError):
    """Bad run configuration (CLI / config file)."""
