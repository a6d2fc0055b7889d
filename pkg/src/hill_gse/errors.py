"""Exception hierarchy shared by the numerical modules and the CLI."""


class HillGseError(Exception):
    """Base class for all package errors."""


class ConfigError(HillGseError, ValueError):
    """Invalid kernel, sampler or run configuration."""


class NotInCameronMartinSpace(HillGseError, ValueError):
    """Path carries energy in a mode the covariance does not represent."""


class NumericalError(HillGseError, RuntimeError):
    """A solver failed; ``module`` names the layer that raised it."""

    module = "numerics"

    def __init__(self, message, residual=None, module=None):
        super().__init__(message)
        self.residual = residual
        if module is not None:
            self.module = module


class ConvergenceError(NumericalError):
    module = "hill"


class BracketError(NumericalError):
    module = "hill"


class RiccatiError(NumericalError):
    module = "riccati"


class MonteCarloError(NumericalError):
    module = "montecarlo"


class VariationalError(NumericalError):
    module = "variational"
