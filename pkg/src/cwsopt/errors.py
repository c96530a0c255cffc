"""Exception hierarchy.

Every domain error derives from :class:`CwsError`. The two intermediate classes
map onto CLI exit codes: :class:`DataError` (bad input files or configuration,
exit 3) and :class:`NumericError` (geometry or linear-algebra failures, exit 4).
"""


class CwsError(Exception):
    exit_code = 1


class DataError(CwsError):
    exit_code = 3


class NumericError(CwsError):
    exit_code = 4


# configuration / file formats
class FormatError(DataError):
    pass


class UnknownKey(DataError):
    def __init__(self, key):
        super().__init__(f"unknown configuration key {key!r}")
        self.key = key


class TypeMismatch(DataError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class MissingRequired(DataError):
    def __init__(self, key):
        super().__init__(f"missing required configuration key {key!r}")
        self.key = key


# geometry
class NonPositiveRadius(NumericError):
    pass


class DegenerateEmbedding(NumericError):
    pass


class TooCloseToSurface(NumericError):
    pass


class CoincidentPoints(NumericError):
    pass


# linear algebra / optimality
class SingularGram(NumericError):
    pass


class IllConditioned(NumericError):
    pass


class NotStationary(NumericError):
    pass


class ToleranceExceeded(NumericError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class LineSearchFailed(NumericError):
    pass


class InadmissibleIterate(NumericError):
    pass
