class DrfgError(Exception):
    """Base class for every error raised by this package."""


class InvalidShapeError(DrfgError, ValueError):
    pass


class InvalidInputError(DrfgError, ValueError):
    pass


class ConfigurationError(DrfgError, ValueError):
    pass


class DecodeError(DrfgError, OSError):
    pass


class GraphLoadError(DrfgError, RuntimeError):
    pass


class ContractViolation(DrfgError, RuntimeError):
    """A caller broke an API contract, e.g. a stale forward cache or a test-split read."""
