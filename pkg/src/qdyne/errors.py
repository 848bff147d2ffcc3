"""Exception types raised across the package."""


class QdyneError(Exception):
    """Base class for all package errors."""


class NonFiniteError(QdyneError, FloatingPointError):
    """A Hamiltonian coefficient or state amplitude became NaN or infinite."""


class SaturationNotFoundError(QdyneError):
    """No sequence number reaches the requested contrast threshold."""


class SingularPointError(QdyneError, ZeroDivisionError):
    """The population sits at 0 or 1 where the Fisher factor is 0/0."""


class ConvergenceError(QdyneError):
    """The peak fit did not converge within the iteration budget."""


class AmbiguousAliasError(QdyneError):
    """More than one alias candidate is compatible with the frequency prior."""


class EmptySearchRangeError(QdyneError, ValueError):
    """The peak search window contains no bins."""


class StepBudgetError(QdyneError):
    """The requested integration needs more steps than allowed."""


class ConfigError(QdyneError, ValueError):
    """An experiment configuration is malformed or violates an invariant."""


class ChainRunError(QdyneError):
    """A single run inside a measurement chain failed."""

    def __init__(self, run_index, cause):
        self.run_index = run_index
        self.cause = cause
        super().__init__(f"run {run_index} failed: {cause}")
