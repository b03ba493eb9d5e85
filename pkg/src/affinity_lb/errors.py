class ConfigError(ValueError):
    """Invalid parameters or configuration, rejected before any work starts."""


class InvariantError(RuntimeError):
    """An internal consistency check failed (policy or coupling bug)."""


class DomainError(ValueError):
    """Parameters fall outside the regime a formula is valid for."""


class IntegrationError(RuntimeError):
    """The fluid integrator produced an inconsistent state; reduce ``dt``."""
