"""Exception hierarchy shared by every module."""


class ChaosLabError(Exception):
    """Base class for all errors raised by chaoslab."""


class InvalidArgument(ChaosLabError, ValueError):
    pass


class ConstraintViolation(ChaosLabError, ValueError):
    """A kernel or configuration breaks one of the model assumptions."""

    def __init__(self, message, assumption=None):
        super().__init__(message)
        self.assumption = assumption


class InvalidDensity(ChaosLabError, ValueError):
    pass


class DomainError(ChaosLabError, ArithmeticError):
    pass


class NumericalBlowup(ChaosLabError, ArithmeticError):
    def __init__(self, message, replica=None):
        super().__init__(message)
        self.replica = replica


class PositivityLoss(DomainError):
    pass


class ConfigError(ChaosLabError, ValueError):
    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UndersampledError(ChaosLabError, ValueError):
    def __init__(self, message, minimum=None):
        super().__init__(message)
        self.minimum = minimum


class BudgetExceeded(ChaosLabError, RuntimeError):
    pass


class CancellationFailure(ChaosLabError, AssertionError):
    def __init__(self, message, probe=None):
        super().__init__(message)
        self.probe = probe
