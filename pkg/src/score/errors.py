"""Exception taxonomy shared by all modules.

Exit-code mapping for the CLI lives in cli.py: config problems exit 2,
data/format problems exit 3, numeric failures exit 4.
"""


class ScoreToolError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ScoreToolError):
    """Invalid or inconsistent configuration."""


class FormatError(ScoreToolError):
    """Malformed file magic or header."""


class TruncatedError(ScoreToolError):
    """Payload length does not match the header."""


class DataError(ScoreToolError):
    """Payload values violate an invariant (NaN, non-binary mask bytes, ...)."""


class IoError(ScoreToolError):
    """Underlying OS-level read/write failure."""


class GridError(ScoreToolError):
    """Operands live on different grids (dims or spacing mismatch)."""


class LabelError(ScoreToolError):
    """Error label outside {-1, 0, 1, 2} or inconsistent with its score."""


class ScoreError(ScoreToolError):
    """Quality score outside {0..5}."""


class EmptyRegionError(ScoreToolError):
    """Reference mask for a region is empty."""


class DegenerateImageError(ScoreToolError):
    """Image is constant; no threshold separates it."""


class ShapeError(ScoreToolError):
    """Tensor shapes inconsistent with the network configuration."""


class CacheError(ScoreToolError):
    """Backward called with a cache from a stale forward pass."""


class NumericError(ScoreToolError):
    """Non-finite value encountered during training."""


class CheckpointError(ScoreToolError):
    """Checkpoint incompatible with the requested inference."""


class UndefinedMetric(ScoreToolError):
    """Metric undefined for the given inputs (e.g. HD95 of an empty mask)."""


class RegionCountError(ScoreToolError):
    """Prediction and reference disagree on the number of regions."""
