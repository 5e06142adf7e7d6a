"""Local, stateless job-shop scheduling and packet routing via seeded hash delays."""

from .hashing import HashFamily, Knobs, derive_params, sample_hash_set
from .model import (
    ContractViolation,
    Demand,
    DomainSet,
    Instance,
    JobSpec,
    PacketSpec,
    ParameterError,
    Path,
    ReciprocalGraph,
)
from .routing import PathSet, route, run_return_noisy_scheduler, semi_obl_router
from .schedulers import (
    SchedulerParams,
    SimTrace,
    run_greedy_scheduler,
    run_noisy_scheduler,
    run_stateless_scheduler,
)

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "Demand",
    "DomainSet",
    "HashFamily",
    "Instance",
    "JobSpec",
    "Knobs",
    "PacketSpec",
    "ParameterError",
    "Path",
    "PathSet",
    "ReciprocalGraph",
    "SchedulerParams",
    "SimTrace",
    "derive_params",
    "route",
    "run_greedy_scheduler",
    "run_noisy_scheduler",
    "run_return_noisy_scheduler",
    "run_stateless_scheduler",
    "sample_hash_set",
    "semi_obl_router",
]
