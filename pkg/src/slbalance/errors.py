"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Argument outside the documented domain of an operation."""


class NumericalFailureError(ArithmeticError):
    """A numerical invariant (e.g. covariance PSD) could not be restored."""


class EstimatorStateError(RuntimeError):
    """Estimator queried for a quantity it has not produced yet."""


class DegenerateModelError(ValueError):
    """Model parameters make the requested map undefined (e.g. zero arm mass)."""


class ConfigError(ValueError):
    """Bad configuration file or override.

    ``line`` and ``column`` are 1-based and refer to the offending config
    source (file line, or position of the override in the command line).
    """

    def __init__(self, message, line=None, column=None, source=None):
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if source is not None:
            where = f"{source}:"
        if line is not None:
            where += f"{line}:"
            if column is not None:
                where += f"{column}:"
        super().__init__(f"{where} {message}" if where else message)
        self.message = message
