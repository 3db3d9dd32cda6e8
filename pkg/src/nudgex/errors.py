"""Exception hierarchy shared across the pipeline modules."""

from __future__ import annotations


class NudgexError(Exception):
    """Base class for all domain errors."""


class ValidationError(NudgexError):
    """Input violates a documented precondition or value range."""


class NotFoundError(NudgexError):
    """Referenced entity does not exist."""


class ConflictError(NudgexError):
    """State transition already happened (compare-and-set lost)."""


class FormatError(NudgexError):
    """A structured document does not match its declared format."""


class UnsupportedLatitudeError(ValidationError):
    """Latitude outside the supported band for bounding-box geometry."""


class EmptyWindowError(ValidationError):
    """Acquisition window lies entirely past the knowledge horizon."""


class TransportError(NudgexError):
    """Provider call failed after exhausting retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class EmptyResponseError(NudgexError):
    """Model returned an empty completion."""


class JudgeFormatError(NudgexError):
    """Judge output could not be parsed after the configured retries."""


class UnsupportedFeatureError(NudgexError):
    """File uses a feature outside the supported GeoTIFF subset."""


class TiffParseError(NudgexError):
    """Malformed or truncated TIFF input."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MissingBandError(NudgexError):
    """Required raster band is not present in the grid."""


class DimensionError(NudgexError):
    """Array or vector shape does not match what the operation requires."""


class GroundingUnavailableError(NudgexError):
    """No retrieval hits; refusing to produce an un-grounded answer."""


class StageOrderError(NudgexError):
    """Pipeline stage invoked before its prerequisites exist."""


class BusyError(NudgexError):
    """Another stage run holds the data-root lock."""


class ConfigError(NudgexError):
    """Configuration file is invalid or out of range."""
