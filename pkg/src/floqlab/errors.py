"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model or experiment configuration."""


class DomainError(ValueError):
    """Operation evaluated outside its mathematical domain."""


class AccuracyError(RuntimeError):
    """Requested tolerance cannot be met (undersampling, unitarity loss, ...)."""


class ResourceError(RuntimeError):
    """Problem size exceeds the configured desk-scale budget."""


class SingularityError(RuntimeError):
    """Spectral parameter too close to an eigenvalue for a stable inverse."""

    def __init__(self, message, nearest_eigenvalue=None):
        super().__init__(message)
        self.nearest_eigenvalue = nearest_eigenvalue
