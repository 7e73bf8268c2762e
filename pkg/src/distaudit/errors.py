"""Exception hierarchy shared across the toolkit."""


class DistAuditError(Exception):
    """Base class for all toolkit errors."""


class ImageFormatError(DistAuditError, ValueError):
    """Raised for malformed or unsupported image files."""


class KeypointError(DistAuditError, ValueError):
    """Raised for malformed keypoint files or degenerate regions."""


class SpecError(DistAuditError, ValueError):
    """Raised for an invalid distortion description.

    ``field`` names the offending field when one can be identified.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class StoreError(DistAuditError, ValueError):
    """Raised for malformed embedding stores or key problems."""


class ManifestError(DistAuditError, ValueError):
    """Raised for schema problems in manifests and pair files."""


class InsufficientDataError(DistAuditError):
    """Raised when a subgroup cannot supply the pairs the protocol needs."""
