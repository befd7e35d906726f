"""Closed-form results: throughput bounds, memory sizing and delay formulas.

Everything in this module is a pure function of its arguments.  Rational
inputs (integer budgets) are handled with exact fractions where that is
cheap, so the small hand-checkable values come out exact; large parameter
grids fall back to double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from .model import AllocationKind, ChainConfig, MemoryAllocation, ValidationError


class RateBoundKind(Enum):
    DOUBLING_LOWER_BOUND = "doubling-lower-bound"
    COGNITIVE_LOWER_BOUND = "cognitive-lower-bound"
    OPTIMAL_INFINITE_MEMORY = "optimal-infinite-memory"


@dataclass(frozen=True)
class RateBound:
    """A delivered-pairs-per-unit-time figure together with its provenance."""

    value: float
    kind: RateBoundKind

    def __float__(self) -> float:
        return self.value


def reserved_weight_product(levels: Iterable[int]) -> Fraction:
    """Exact product of the per-level memory factors 2B/(2B+1)."""
    out = Fraction(1)
    for b in levels:
        out *= Fraction(2 * b, 2 * b + 1)
    return out


def doubling_rate_bound(config: ChainConfig, alloc: MemoryAllocation) -> RateBound:
    """Small-q throughput of the doubling protocol under reserved memories.

    Returns p * q**k * prod_i 2B_i/(2B_i+1).  The product saturates at 1 as
    every budget grows, recovering the infinite-memory optimum p*q**k.
    """
    if alloc.kind is not AllocationKind.RESERVED:
        raise ValidationError("doubling_rate_bound needs a reserved allocation")
    if len(alloc.levels) != config.k:
        raise ValidationError(
            f"dimension mismatch: {len(alloc.levels)} budgets for k={config.k}"
        )
    value = config.p * config.q ** config.k * float(reserved_weight_product(alloc.levels))
    return RateBound(value, RateBoundKind.DOUBLING_LOWER_BOUND)


def constant_alloc_rate(p: float, q: float, B: int, k: int) -> RateBound:
    """Doubling-protocol throughput when every level gets the same budget B.

    Equals ``doubling_rate_bound`` with levels [B]*k; the closed form is
    p * (2Bq/(2B+1))**k.
    """
    if B < 1 or k < 0:
        raise ValidationError(f"need B >= 1 and k >= 0, got B={B!r}, k={k!r}")
    value = p * q ** k * float(reserved_weight_product([B] * k))
    return RateBound(value, RateBoundKind.DOUBLING_LOWER_BOUND)


def optimal_rate(p: float, q: float, k: int) -> RateBound:
    """Throughput with unbounded memory at every node: p * q**k."""
    return RateBound(p * q ** k, RateBoundKind.OPTIMAL_INFINITE_MEMORY)


# ---------------------------------------------------------------------------
# Memory footprints


def average_memory_reserved(levels: Sequence[float], k: int) -> float:
    """Average queuing memories per node for a reserved allocation.

    Level i occupies 2*B_i memories at each of the 2**(k-i) - 1 nodes that
    hold that level; the total is averaged over the 2**k links of the chain.
    Real-valued budgets are accepted so that idealised geometric schedules
    can be compared against their integerised versions.
    """
    if len(levels) != k:
        raise ValidationError(f"dimension mismatch: {len(levels)} budgets for k={k}")
    total = sum(2.0 * levels[i] * (2 ** (k - i) - 1) for i in range(k))
    return total / 2 ** k


def average_memory_constant(B: int, k: int) -> float:
    """Average queuing memories per node with a constant budget B.

    Always at most 4B, independent of the chain length.
    """
    return average_memory_reserved([B] * k, k)


def average_memory_exponential_bound(gamma: float, i0: int) -> float:
    """Chain-length-independent bound on the average memory per node
    for the geometric schedule B_i = gamma**(i+i0): 2*gamma**i0 / (1 - gamma/2)."""
    if not (1.0 < gamma < 2.0):
        raise ValidationError(f"gamma outside (1,2): {gamma!r} (bound diverges at 2)")
    return 2.0 * gamma ** i0 / (1.0 - gamma / 2.0)


def average_memory_exponential_exact(gamma: float, i0: int, k: int) -> float:
    """Exact per-node average for the real-valued geometric schedule."""
    return average_memory_reserved([gamma ** (i + i0) for i in range(k)], k)


@dataclass(frozen=True)
class MemoryFootprint:
    exact: float
    bound: float


def max_memory_exponential(gamma: float, i0: int, k: int) -> MemoryFootprint:
    """Largest single-node memory under the geometric schedule.

    The busiest node stores every level, 2*sum_i gamma**(i+i0) memories in
    total; the closed bound (2*gamma**i0/(gamma-1)) * K**log2(gamma) grows
    sublinearly in the chain length K = 2**k because gamma < 2.
    """
    if not (1.0 < gamma < 2.0):
        raise ValidationError(f"gamma outside (1,2): {gamma!r}")
    exact = 2.0 * gamma ** i0 * (gamma ** k - 1.0) / (gamma - 1.0)
    bound = 2.0 * gamma ** i0 / (gamma - 1.0) * (2 ** k) ** math.log2(gamma)
    return MemoryFootprint(exact=exact, bound=bound)


# ---------------------------------------------------------------------------
# Geometric schedule sizing


def exponential_weight_product(gamma: float, i0: int, k: int) -> float:
    """prod_{i=0}^{k-1} 2*gamma**(i+i0) / (2*gamma**(i+i0) + 1), real-valued."""
    out = 1.0
    for i in range(k):
        b = 2.0 * gamma ** (i + i0)
        out *= b / (b + 1.0)
    return out


_TAIL_EPS = 1e-12


def _log_weight_tail(gamma: float, start: int) -> tuple[float, float]:
    """Sum of ln(2g**i/(2g**i+1)) for i >= start, with a certified remainder.

    Each term a_i = -ln(1 + x_i) with x_i = 1/(2 gamma**i) satisfies
    |a_i| <= x_i, and the x_i are geometric with ratio 1/gamma, so the
    truncated tail is bounded by the geometric remainder of the x series.
    Returns (partial_sum, remainder_bound); the true tail lies within
    [partial_sum - remainder_bound, partial_sum].
    """
    total = 0.0
    i = start
    while True:
        total -= math.log1p(1.0 / (2.0 * gamma ** i))
        i += 1
        remainder = (1.0 / (2.0 * gamma ** i)) * gamma / (gamma - 1.0)
        if remainder < _TAIL_EPS:
            return total, remainder


def tail_criterion_met(gamma: float, delta: float, i0: int) -> bool:
    """Certified check that the infinite product from i0 stays above 1-delta.

    True only when the truncated tail sum minus its remainder bound still
    clears ln(1-delta), so a True answer is rigorous at the 1e-12 level.
    """
    if not (1.0 < gamma < 2.0):
        raise ValidationError(f"gamma outside (1,2): {gamma!r}")
    if not (0.0 < delta < 1.0):
        raise ValidationError(f"delta outside (0,1): {delta!r}")
    if i0 < 0:
        return False
    partial, remainder = _log_weight_tail(gamma, i0)
    return partial - remainder >= math.log1p(-delta)


def select_i0(gamma: float, delta: float) -> int:
    """Smallest starting exponent making the geometric schedule delta-tight.

    Returns the least i0 >= 1 with sum_{i>=i0} ln(2g**i/(2g**i+1)) >= ln(1-delta),
    which guarantees prod_{i=0}^{k-1} 2g**(i+i0)/(2g**(i+i0)+1) >= 1-delta for
    every chain length exponent k.
    """
    i0 = 1
    while not tail_criterion_met(gamma, delta, i0):
        i0 += 1
        if i0 > 10_000:  # unreachable for gamma in (1,2), defensive cap
            raise RuntimeError("tail criterion search did not converge")
    return i0


# ---------------------------------------------------------------------------
# Shared-pool (cognitive) method


def _cognitive_triangle_exact(pool: int, level: int) -> dict:
    table: dict[tuple[int, int], Fraction] = {}
    for b in range(pool + 1):
        table[(b, 0)] = Fraction(1)
    for i in range(1, level + 1):
        for b in range(pool + 1):
            if b == 0:
                table[(b, i)] = Fraction(0)
                continue
            z = Fraction(1)
            prod = Fraction(1)
            fb = table[(b, i - 1)]
            for j in range(b):
                prod *= table[(b - j, i - 1)]
                z += 2 * prod / fb ** (j + 1)
            table[(b, i)] = table[(b, i - 1)] * (1 - Fraction(1) / z)
    return table


@lru_cache(maxsize=None)
def cognitive_rate_factor_exact(pool: int, level: int) -> Fraction:
    """Exact rational value of :func:`cognitive_rate_factor`.

    Denominators grow very quickly with the pool size; keep this to
    pool <= 4 and level <= 8 (raises beyond that) and use the float
    version for larger grids.
    """
    if pool < 0 or level < 0:
        raise ValidationError(f"need pool >= 0 and level >= 0, got {pool!r}, {level!r}")
    if pool > 4 or level > 8:
        raise ValidationError(
            f"exact factor limited to pool <= 4, level <= 8 (got {pool}, {level}); "
            "use cognitive_rate_factor for larger inputs"
        )
    return _cognitive_triangle_exact(pool, level)[(pool, level)]


@lru_cache(maxsize=None)
def _cognitive_triangle_float(pool: int, level: int) -> float:
    table: dict[tuple[int, int], float] = {}
    for b in range(pool + 1):
        table[(b, 0)] = 1.0
    for i in range(1, level + 1):
        for b in range(pool + 1):
            if b == 0:
                table[(b, i)] = 0.0
                continue
            z = 1.0
            prod = 1.0
            fb = table[(b, i - 1)]
            for j in range(b):
                prod *= table[(b - j, i - 1)]
                z += 2.0 * prod / fb ** (j + 1)
            table[(b, i)] = table[(b, i - 1)] * (1.0 - 1.0 / z)
    return table[(pool, level)]


def cognitive_rate_factor(pool: int, level: int) -> float:
    """Limiting throughput factor of the shared-pool method.

    For a chain of 2**level links whose nodes share B = ``pool`` memories
    per link, the delivered rate approaches p * q**level * factor as q -> 0;
    this returns the factor.  It is defined by factor(B, 0) = 1 (a single
    link delivers every generated pair) and, for deeper chains, by the
    recursion

        factor(B, i) / factor(B, i-1)
            = 1 - 1 / (1 + 2 * sum_{j=0}^{B-1} prod_{j0=0}^{j}
                       factor(B-j0, i-1) / factor(B, i-1)**(j+1))

    which couples all pool sizes 1..B one level down: stored half-chain
    pairs shrink the pool that the producing half-chain can still use.
    The recursion yields factor(B, 1) = 2B/(2B+1) and, for a single memory
    per link, the geometric family factor(1, i) = (2/3)**i.
    """
    if pool < 0 or level < 0:
        raise ValidationError(f"need pool >= 0 and level >= 0, got {pool!r}, {level!r}")
    if pool <= 4 and level <= 8:
        return float(cognitive_rate_factor_exact(pool, level))
    return _cognitive_triangle_float(pool, level)


def cognitive_rate_bound(p: float, q: float, pool: int, level: int) -> RateBound:
    """Small-q throughput of the shared-pool method: p * q**level * factor."""
    value = p * q ** level * cognitive_rate_factor(pool, level)
    return RateBound(value, RateBoundKind.COGNITIVE_LOWER_BOUND)


# ---------------------------------------------------------------------------
# Classical communication delay memory


@dataclass(frozen=True)
class CommDelayMemory:
    """Expected qubits parked while waiting for remote swap outcomes."""

    average: float  # averaged over the chain, per node
    any_node: float  # bound holding at every single node


def comm_delay_memory(
    p: float,
    q: float,
    k: int,
    d: float,
    c: float,
    levels: Sequence[int] | None = None,
) -> CommDelayMemory:
    """Little's-law bounds on communication-delay memory occupancy.

    A swap producing a level-n pair keeps the two far-end qubits parked for
    2**(n-1) * d / c while its outcome propagates.  Summing arrival rate
    times holding time over levels gives, per node on average,
    sum_n p q**(n-1) d/c (closed form p*d*(1-q**k)/(c*(1-q))), and for the
    worst-case node the same sum with an extra 2**(n-1) factor.  When a
    reserved allocation is supplied every term is additionally damped by the
    memory factors of the levels below, which only lowers both bounds.
    """
    if k < 0:
        raise ValidationError(f"k must be >= 0, got {k!r}")
    if levels is not None and len(levels) < k:
        raise ValidationError(f"dimension mismatch: {len(levels)} budgets for k={k}")
    avg = 0.0
    worst = 0.0
    weight = 1.0
    for n in range(1, k + 1):
        if levels is not None and n >= 2:
            b = levels[n - 2]
            weight *= 2.0 * b / (2.0 * b + 1.0)
        term = p * q ** (n - 1) * d / c * weight
        avg += term
        worst += term * 2 ** (n - 1)
    return CommDelayMemory(average=avg, any_node=worst)


# ---------------------------------------------------------------------------
# Delay of entanglement distribution


def queuing_delay(level: int, p: float, q: float, levels: Sequence[int]) -> float:
    """Average time a level-i pair waits in queuing memory (Little's law).

    Treats the typical queue length as half the budget for that level and
    divides by the level arrival rate p * q**(i-1) * prod_{m<=i-2} 2B_m/(2B_m+1).
    For the delivery level (one past the last stored level) the top budget
    is reused, matching the constant-allocation closed form.
    """
    if level < 1:
        raise ValidationError(f"queuing delay defined for level >= 1, got {level!r}")
    if not levels:
        raise ValidationError("need at least one level budget")
    b = levels[level] if level < len(levels) else levels[-1]
    arrival = p * q ** (level - 1) * float(reserved_weight_product(levels[: max(level - 1, 0)]))
    return (b / 2.0) / arrival


@dataclass(frozen=True)
class EndToEndDelay:
    """Average delay of a delivered chain-spanning pair."""

    total: float
    queuing: float
    notification: float
    linear_in_chain_length: bool


def end_to_end_delay_constant(
    p: float, q: float, k: int, d: float, c: float, B: int
) -> EndToEndDelay:
    """Average delivered-pair delay under the constant allocation.

    queuing part (B/2p) * ((2B+1)/(2Bq))**(k-1) plus the final notification
    time 2**(k-1) d/c.  The delay stays linear in the chain length exactly
    when (2B+1)/(2Bq) < 2.
    """
    if B < 1 or k < 1:
        raise ValidationError(f"need B >= 1 and k >= 1, got B={B!r}, k={k!r}")
    growth = (2.0 * B + 1.0) / (2.0 * B * q)
    queuing = B / (2.0 * p) * growth ** (k - 1)
    notification = 2 ** (k - 1) * d / c
    return EndToEndDelay(
        total=queuing + notification,
        queuing=queuing,
        notification=notification,
        linear_in_chain_length=growth < 2.0,
    )


def end_to_end_delay_exponential(
    p: float,
    q: float,
    k: int,
    d: float,
    c: float,
    gamma: float,
    i0: int,
    delta: float,
) -> EndToEndDelay:
    """Average delivered-pair delay under the geometric allocation.

    queuing part (q * gamma**i0 / (2p(1-delta))) * (gamma/q)**(k-1) plus the
    final notification time; linear in the chain length when gamma/q < 2.
    """
    if not (1.0 < gamma < 2.0):
        raise ValidationError(f"gamma outside (1,2): {gamma!r}")
    if not (0.0 < delta < 1.0):
        raise ValidationError(f"delta outside (0,1): {delta!r}")
    growth = gamma / q
    queuing = q * gamma ** i0 / (2.0 * p * (1.0 - delta)) * growth ** (k - 1)
    notification = 2 ** (k - 1) * d / c
    return EndToEndDelay(
        total=queuing + notification,
        queuing=queuing,
        notification=notification,
        linear_in_chain_length=growth < 2.0,
    )
