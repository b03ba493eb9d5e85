"""Load balancing with job-server affinity: simulation, couplings, fluid limits and fixed points."""

from ._accel import BACKEND
from .errors import ConfigError, DomainError, IntegrationError, InvariantError
from .model import (
    JobType,
    OccupancyState,
    SelectionFamily,
    ServerConfig,
    allocate,
    apply_arrival,
    complete_service,
    service_rate,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DomainError",
    "IntegrationError",
    "InvariantError",
    "JobType",
    "OccupancyState",
    "SelectionFamily",
    "ServerConfig",
    "allocate",
    "apply_arrival",
    "complete_service",
    "service_rate",
]
