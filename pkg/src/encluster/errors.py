"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class EnclusterError(Exception):
    exit_code = 1


class InvalidInputError(EnclusterError, ValueError):
    pass


class ConfigurationError(EnclusterError, ValueError):
    pass


class NoOverlapError(InvalidInputError):
    pass


class InfeasibleSpecError(InvalidInputError):
    pass


class ConsistencyError(InvalidInputError):
    pass


class FormatError(InvalidInputError):
    """A file on disk does not match its expected layout."""


class NumericError(EnclusterError, ArithmeticError):
    exit_code = 3


class UndefinedMetricError(NumericError):
    pass


class DegenerateMetricError(NumericError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss
