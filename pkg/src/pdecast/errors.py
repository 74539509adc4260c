"""Exception hierarchy shared across the package."""


class PdecastError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InputError(PdecastError):
    exit_code = 2


class IngestError(InputError):
    pass


class ParseError(InputError):
    pass


class TooShort(InputError):
    pass


class SchemaError(InputError):
    pass


class ConfigError(PdecastError):
    exit_code = 4


class PlanError(ConfigError):
    pass


class UnsupportedOrder(ConfigError):
    pass


class WeightError(ConfigError):
    pass


class ShapeError(PdecastError):
    pass


class InternalError(PdecastError):
    pass


class NotTrained(PdecastError):
    pass


class TrainingDataError(PdecastError):
    pass


class NumericError(PdecastError):
    exit_code = 3

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateMetric(NumericError):
    pass


class DivergenceError(NumericError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class RolloutError(NumericError):
    """Raised when a rollout step fails; carries the predictions made so far."""

    def __init__(self, message, step, partial):
        super().__init__(message, index=step)
        self.step = step
        self.partial = partial
