"""Exception types shared across the pipeline."""


class AffectPipeError(Exception):
    """Base class for all errors raised by this package."""


class MixedSessionError(AffectPipeError):
    """Frames from more than one session were passed to a per-session operation."""


class NonMonotonicTimeError(AffectPipeError):
    """Timestamps decreased within a single modality stream."""


class SchemaError(AffectPipeError):
    """A line of an input file does not match the documented schema."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class PointCountError(SchemaError):
    """A frame row carries the wrong number of landmark/AU fields for its modality."""


class MissingFramesError(AffectPipeError):
    """A manifest entry references a frames file that does not exist."""


class MissingLabelsError(AffectPipeError):
    """A manifest entry references a labels file that does not exist."""


class DegenerateScaleError(AffectPipeError):
    """The anchor pair used for scale normalization is (near-)coincident."""


class LengthMismatchError(AffectPipeError):
    """Two landmark lists that must be aligned have different lengths."""


class EmptyWindowError(AffectPipeError):
    """A window aggregate was requested over zero bins."""


class WindowOutOfRangeError(AffectPipeError):
    """A window extends beyond the bins of its session."""


class InsufficientDataError(AffectPipeError):
    """A statistic needs more observations than were provided."""


class SingleClassError(AffectPipeError):
    """Both classes are required but only one is present."""


class SingleClassFoldError(SingleClassError):
    """A training fold contains a single class; the fold cannot be fit."""


class DimensionMismatchError(AffectPipeError):
    """Model input does not match the expected per-group feature width."""


class VersionMismatchError(AffectPipeError):
    """A model file was written by an unsupported format version."""


class CorruptFileError(AffectPipeError):
    """A model file failed its integrity checks."""


class TooFewInfantsError(AffectPipeError):
    """Fewer infants than cross-validation folds."""


class DiskError(AffectPipeError):
    """An output file could not be written."""


class ConfigError(AffectPipeError):
    """A run configuration file is malformed or contains unknown keys."""
