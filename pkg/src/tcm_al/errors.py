"""Exception hierarchy shared by every module of the package."""


class TCMError(Exception):
    """Base class for all package errors."""


class InvalidDatasetError(TCMError, ValueError):
    pass


class InvalidQueryError(TCMError, ValueError):
    pass


class ShapeError(TCMError, ValueError):
    pass


class InvalidKError(TCMError, ValueError):
    pass


class UndefinedTypicalityError(TCMError, ValueError):
    pass


class BudgetExhaustedError(TCMError, ValueError):
    pass


class InvalidProbabilitiesError(TCMError, ValueError):
    pass


class InvalidRadiusError(TCMError, ValueError):
    pass


class MissingClassifierError(TCMError, RuntimeError):
    pass


class InvalidInputError(TCMError, ValueError):
    pass


class InvalidSpecError(TCMError, ValueError):
    pass


class FormatError(TCMError, ValueError):
    """Malformed embedding or label file. ``row`` is 1-based when known."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class AggregationMismatchError(TCMError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class ConfigValidationError(TCMError, ValueError):
    """Collects every problem found in a config file, not just the first."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
