"""Exception taxonomy shared by every module."""


class FlisError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(FlisError, ValueError):
    pass


class SingularMatrixError(FlisError, ArithmeticError):
    pass


class NotPSDError(FlisError, ArithmeticError):
    pass


class UndecidablePixelError(FlisError):
    """Sparse code has no mass, so class likelihoods are undefined."""


class DegenerateClassError(FlisError):
    def __init__(self, partition, class_name):
        super().__init__(
            f"class {class_name!r} absent from training pool of partition {partition}"
        )
        self.partition = partition
        self.class_name = class_name


class UndefinedMetricError(FlisError):
    pass


class ModelFormatError(FlisError):
    pass


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    def __init__(self, message, partition=None):
        super().__init__(message)
        self.partition = partition
