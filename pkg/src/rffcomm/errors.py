"""Exception hierarchy shared by every rffcomm module."""


class RffCommError(Exception):
    """Base class for all library errors."""


class ParameterError(RffCommError, ValueError):
    """An argument is out of range or has inconsistent dimensions."""


class DataError(RffCommError, ValueError):
    """Input data is non-finite or otherwise unusable."""


class InsufficientDataError(DataError):
    pass


class DegenerateDataError(DataError):
    pass


class DegenerateLabelsError(DataError):
    """Only one class is present, so F1 is undefined."""


class NumericError(RffCommError, ArithmeticError):
    """A computation produced non-finite or invalid intermediates."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class TrainingDivergenceError(NumericError):
    pass


class SingularityError(NumericError):
    pass


class UnsupportedCodeError(RffCommError, ValueError):
    pass


class ConfigError(RffCommError):
    """Configuration validation failed; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))
