"""Exception hierarchy.

Three branches matter operationally: configuration problems (CLI exit
code 2), data problems (exit code 3) and numerical failures (exit code 4).
"""


class CurvecastError(Exception):
    """Base class for all library errors."""


class ConfigError(CurvecastError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class DataError(CurvecastError):
    """Malformed or insufficient input data (CLI exit code 3)."""


class NumericalError(CurvecastError):
    """Estimation or linear-algebra failure (CLI exit code 4)."""


# --- curves ---------------------------------------------------------------

class NonPositivePrice(DataError):
    pass


class GridMisaligned(DataError):
    pass


class EmptyDay(DataError):
    pass


class AlreadyDemeaned(DataError):
    pass


# --- fpca -----------------------------------------------------------------

class NotDemeaned(DataError):
    pass


class DegeneratePanel(NumericalError):
    pass


class AllZeroEigenvalues(NumericalError):
    pass


class IndexOutOfRange(CurvecastError):
    pass


# --- score models ---------------------------------------------------------

class NonConvergence(NumericalError):
    """Optimizer failed to produce a usable fit; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateSeries(DataError):
    pass


class SingularRegressor(NumericalError):
    pass


class NonPsdH(NumericalError):
    pass


# --- forecast -------------------------------------------------------------

class NonPsdCov(NumericalError):
    pass


class InsufficientHistory(DataError):
    pass


# --- rolling --------------------------------------------------------------

class InsufficientData(DataError):
    pass


class BadHorizon(ConfigError):
    pass


class SingularDesign(NumericalError):
    pass


# --- eval -----------------------------------------------------------------

class LengthMismatch(DataError):
    pass


class InvalidBounds(DataError):
    pass


class SeriesTooShort(DataError):
    pass


# --- sim ------------------------------------------------------------------

class InvalidSpec(ConfigError):
    pass
