"""Exception hierarchy for adialim."""


class AdialimError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(AdialimError, ValueError):
    """An argument lies outside the domain of an operation (e.g. t outside [-1, 1])."""


class DegenerateDispersionError(AdialimError, ArithmeticError):
    """The mode frequency vanished (or underflowed), so frames and projectors are undefined."""


class InvariantViolation(AdialimError, ValueError):
    """A constructed object does not satisfy its documented invariants."""


class IntegrationError(AdialimError, RuntimeError):
    """The ODE integrator could not deliver a solution."""


class StepLimitExceeded(IntegrationError):
    pass


class ToleranceNotAchievable(IntegrationError):
    pass


class ConfigError(AdialimError, ValueError):
    """Invalid run configuration.

    ``violations`` holds every problem found, not just the first one.
    """

    def __init__(self, violations, line=None, column=None):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        self.line = line
        self.column = column
        super().__init__("; ".join(self.violations))


class BelowNoiseFloor(AdialimError, ArithmeticError):
    """A convergence metric is too close to integrator noise for a meaningful rate fit."""
