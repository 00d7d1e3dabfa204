"""Exception hierarchy shared across the package."""


class FedVRDPError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(FedVRDPError, ValueError):
    """Invalid parameters, dimensions or configuration values.

    ``path`` names the offending configuration key(s) when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DomainError(ConfigurationError):
    """A mathematical precondition does not hold (e.g. outside a theorem's range)."""


class NotCertifiableError(FedVRDPError):
    """No privacy guarantee can be certified for the given noise level."""


class ProtocolError(FedVRDPError):
    """A federated round received inputs that violate the protocol."""


class IngestionError(FedVRDPError):
    """A dataset file could not be parsed."""

    def __init__(self, message, offset=None, source=None):
        self.offset = offset
        self.source = source
        parts = []
        if source is not None:
            parts.append(str(source))
        if offset is not None:
            parts.append(f"byte offset {offset}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class TrainingDivergedError(FedVRDPError, RuntimeError):
    """Local training produced non-finite values."""
