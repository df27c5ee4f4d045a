class ConfigurationError(ValueError):
    """Raised for invalid or infeasible scheme/experiment parameters."""


class AuditStateError(RuntimeError):
    """Raised when a power audit is queried before any channel use."""
