"""Exception hierarchy shared by every subpackage."""


class DDLMError(Exception):
    pass


class DimensionError(DDLMError, ValueError):
    pass


class NumericError(DDLMError, ArithmeticError):
    pass


class DataError(DDLMError, ValueError):
    pass


class UsageError(DDLMError, ValueError):
    pass


class CapacityError(DDLMError, ValueError):
    pass


class TrainingError(DDLMError, RuntimeError):
    def __init__(self, message, *, step=None, batch_id=None, param=None):
        super().__init__(message)
        self.step = step
        self.batch_id = batch_id
        self.param = param


class CheckpointError(DDLMError, IOError):
    pass
