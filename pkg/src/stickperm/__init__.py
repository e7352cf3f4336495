"""Random permutations from stick-breaking partitions and their cycle statistics."""
from .errors import DomainError, NumericError, ValidationError
from .factor_models import Beta, ParetoLog, TabulatedDensity, parse_model
from .partition_samplers import CyclePartition, exact_partition_law
from .cycle_statistics import log_order, log_T, pittel_gap

__version__ = "0.1.0"

__all__ = [
    "Beta",
    "ParetoLog",
    "TabulatedDensity",
    "parse_model",
    "CyclePartition",
    "exact_partition_law",
    "log_T",
    "log_order",
    "pittel_gap",
    "DomainError",
    "NumericError",
    "ValidationError",
]
