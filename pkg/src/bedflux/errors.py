"""Exception hierarchy shared by every stage of the pipeline.

Each error carries a machine-readable ``kind`` (used in the CLI error JSON)
and an exit-code category.
"""

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class BedfluxError(Exception):
    kind = "BedfluxError"
    exit_code = EXIT_NUMERIC


# configuration / input validation
class ConfigError(BedfluxError, ValueError):
    kind = "ConfigError"
    exit_code = EXIT_CONFIG


class InsufficientSnapshots(ConfigError):
    kind = "InsufficientSnapshots"


class TransectOutOfRange(ConfigError):
    kind = "TransectOutOfRange"


class DegenerateRange(ConfigError):
    kind = "DegenerateRange"


class BoundaryTimeIndex(ConfigError):
    kind = "BoundaryTimeIndex"


class GridTooCoarse(ConfigError):
    kind = "GridTooCoarse"


class ShapeMismatch(ConfigError):
    kind = "ShapeMismatch"


# file handling
class InputError(BedfluxError):
    kind = "InputError"
    exit_code = EXIT_IO


class InputNotFound(InputError, FileNotFoundError):
    kind = "InputNotFound"


class FormatError(InputError, ValueError):
    kind = "FormatError"


class FormatVersionMismatch(FormatError):
    kind = "FormatVersionMismatch"


class CorruptPayload(FormatError):
    kind = "CorruptPayload"


# numerics
class NumericError(BedfluxError, ArithmeticError):
    kind = "NumericError"


class NonFiniteInput(NumericError, ValueError):
    kind = "NonFiniteInput"
    exit_code = EXIT_CONFIG


class RankDeficient(NumericError):
    kind = "RankDeficient"


class ExcludedMode(NumericError):
    """Raised when a zero-eigenvalue mode is asked for a continuous-time quantity."""

    kind = "ExcludedMode"


class EmptySpectrum(NumericError):
    kind = "EmptySpectrum"


class NoContributingModes(NumericError):
    kind = "NoContributingModes"


class AllExcluded(NumericError):
    kind = "AllExcluded"


class ZeroVariance(NumericError):
    kind = "ZeroVariance"


class DegenerateSamples(NumericError):
    kind = "DegenerateSamples"


class ZeroEigenvalueWarning(UserWarning):
    """Some discrete eigenvalues are numerically zero; their modes are excluded."""


class NonUniformTimesWarning(UserWarning):
    pass
