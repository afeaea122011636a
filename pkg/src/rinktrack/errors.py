"""Exception hierarchy shared across the package."""


class TrackingError(Exception):
    """Base class for all rinktrack errors."""


class InvalidBox(TrackingError):
    """Bounding box has non-finite or negative-size fields."""


class DegenerateProjection(TrackingError):
    """Homogeneous divisor is (near) zero; the point sits at the plane's horizon."""


class SingularHomography(TrackingError):
    """Homography matrix is not invertible to working precision."""


class DimensionMismatch(TrackingError):
    """Vector or matrix shape does not match the declared layout."""


class ZeroEmbedding(TrackingError):
    """Appearance vector has (near) zero norm and cannot be normalized."""


class MissingHomography(TrackingError):
    """A frame with detections has no homography row."""


class CorruptGroundTruth(TrackingError):
    """Ground-truth identities violate the one-id-per-frame constraint."""


class NoTrainingData(TrackingError):
    """Training was requested but no labelled frame pairs exist."""


class CorruptModelFile(TrackingError):
    """Weight file is truncated, has a bad header, or wrong tensor shapes."""


class FormatError(TrackingError):
    """A data file violates its documented layout."""


class UndefinedMetric(TrackingError):
    """Metric is undefined for the given inputs (e.g. zero ground-truth count)."""
