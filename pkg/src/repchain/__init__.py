"""Entanglement distribution over homogeneous quantum repeater chains.

Three mutually checking views of the same system: closed-form rate, memory
and delay formulas (:mod:`repchain.analytic`), an exact continuous-time
Markov solver for small chains (:mod:`repchain.ctmc`) and an event-driven
simulator for anything larger (:mod:`repchain.simulator`).
"""

__version__ = "0.1.0"

from .model import (
    AllocationKind,
    AllocationPolicy,
    ChainConfig,
    FullMemoryRule,
    MemoryAllocation,
    ValidationError,
    constant_allocation,
    exponential_allocation,
    validate,
)
from .analytic import (
    RateBound,
    RateBoundKind,
    cognitive_rate_bound,
    cognitive_rate_factor,
    comm_delay_memory,
    doubling_rate_bound,
    end_to_end_delay_constant,
    end_to_end_delay_exponential,
    optimal_rate,
    queuing_delay,
    select_i0,
)
from .simulator import Protocol, SimConfig, SimStats, simulate

__all__ = [
    "AllocationKind",
    "AllocationPolicy",
    "ChainConfig",
    "FullMemoryRule",
    "MemoryAllocation",
    "Protocol",
    "RateBound",
    "RateBoundKind",
    "SimConfig",
    "SimStats",
    "ValidationError",
    "cognitive_rate_bound",
    "cognitive_rate_factor",
    "comm_delay_memory",
    "constant_allocation",
    "doubling_rate_bound",
    "end_to_end_delay_constant",
    "end_to_end_delay_exponential",
    "exponential_allocation",
    "optimal_rate",
    "queuing_delay",
    "select_i0",
    "simulate",
    "validate",
    "__version__",
]
