"""Exception types shared across the package."""


class SkelgaitError(Exception):
    """Base class for every package-specific error."""


class InvalidConfig(SkelgaitError, ValueError):
    """A configuration value is missing, malformed, or out of range."""


class SequenceTooShort(SkelgaitError, ValueError):
    """A skeleton sequence has fewer frames than an operation requires."""


class IndexOutOfRange(SkelgaitError, IndexError):
    """A joint/frame/node index is outside the valid range."""


class LayoutMismatch(SkelgaitError, ValueError):
    """Data does not agree with the declared joint layout."""


class DimensionMismatch(SkelgaitError, ValueError):
    """An array does not have the shape an operation requires."""


class EmptyNeighborhood(SkelgaitError, ValueError):
    """A graph node has no neighbors to normalize over."""


class UncoveredJoint(SkelgaitError, ValueError):
    """A joint belongs to no node of a grouping table."""


class InvalidLength(SkelgaitError, ValueError):
    """A sequence/subsequence length is unusable (e.g. f < 2)."""


class InvalidLabel(SkelgaitError, ValueError):
    """A class label is outside 1..C or missing where required."""


class GraphNotRecorded(SkelgaitError, RuntimeError):
    """backward() was called on a value with no recorded computation graph."""


class VersionMismatch(SkelgaitError, ValueError):
    """A checkpoint file has an unknown magic or format version."""
