"""Exception hierarchy shared by all stocharma modules."""


class StocharmaError(Exception):
    """Base class for every error raised by this package."""


# data
class TooShort(StocharmaError, ValueError):
    pass


class ConstantSeries(StocharmaError, ValueError):
    pass


class MissingBase(StocharmaError, ValueError):
    pass


class MissingData(StocharmaError, ValueError):
    """A method defined only for complete series received missing values."""


class CyclicCrossPredictors(StocharmaError, ValueError):
    pass


class ParseError(StocharmaError, ValueError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


# model
class SchemaError(StocharmaError, ValueError):
    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


# inference
class ChainTooShort(StocharmaError, ValueError):
    pass


class NumericalFailure(StocharmaError, ArithmeticError):
    pass


class TooLarge(StocharmaError, ValueError):
    pass


# estimation
class DegenerateStats(StocharmaError, ValueError):
    pass


class NonMonotone(StocharmaError, RuntimeError):
    """EM log-likelihood dropped; always indicates a bug."""


class MissingCrossValues(StocharmaError, ValueError):
    def __init__(self, series, source, lag, time=None):
        self.series = series
        self.source = source
        self.lag = lag
        self.time = time
        msg = f"series {series!r}: cross predictor {source}:{lag} has missing values"
        if time is not None:
            msg += f" (first at time index {time})"
        super().__init__(msg)


# forecast
class ShortHistory(StocharmaError, ValueError):
    pass


# evaluation
class EmptyHoldout(StocharmaError, ValueError):
    pass


class AllTies(StocharmaError, ValueError):
    pass


class SpecError(StocharmaError, ValueError):
    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class NonConvergenceWarning(UserWarning):
    pass


class CrossFillWarning(UserWarning):
    """Missing cross-predictor values were filled by interpolation."""
