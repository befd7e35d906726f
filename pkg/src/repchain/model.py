"""Domain types for homogeneous repeater chains with finite memories.

A chain has K = 2**k identical links joining nodes 0..K.  Neighbouring nodes
generate elementary (level 0) entangled pairs as a Poisson process with rate
p per link; interior nodes merge adjacent pairs by entanglement swapping,
which succeeds with probability q and destroys both inputs on failure.
A pair spanning 2**i links is called a level-i pair; a level-k pair spans
the whole chain and is delivered to the end nodes immediately.

Memory at the interior nodes is what limits throughput.  Two allocation
styles are supported:

* reserved: every node that may store level-i pairs gets a dedicated
  budget of B_i pairs per side, one entry of ``levels`` per swap level;
* cognitive: each link owns a shared pool of B memories per node side,
  used by whatever level needs them, with higher levels taking precedence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class ValidationError(ValueError):
    """A chain configuration or memory allocation violates an invariant."""


class AllocationKind(Enum):
    RESERVED = "reserved"
    COGNITIVE = "cognitive"


class FullMemoryRule(Enum):
    """What to do when a freshly generated pair finds its memory full."""

    BLOCK = "block"
    DISCARD_OLDEST = "discard-oldest"


@dataclass(frozen=True)
class ChainConfig:
    """Chain parameters.

    Attributes
    ----------
    k : int
        Chain size exponent; the chain has 2**k links and 2**k + 1 nodes.
    p : float
        Poisson rate of successful level-0 generation per link.
    q : float
        Entanglement swapping success probability, in (0, 1].
    d : float
        Length of each link (only used when classical delay is modelled).
    c : float
        Propagation speed of classical messages.
    """

    k: int
    p: float
    q: float
    d: float = 1.0
    c: float = 1.0

    @property
    def num_links(self) -> int:
        return 2 ** self.k

    @property
    def num_nodes(self) -> int:
        return 2 ** self.k + 1


@dataclass(frozen=True)
class MemoryAllocation:
    """Per-level reserved budgets or a shared per-link pool.

    For ``RESERVED`` allocations ``levels[i]`` is the number of level-i
    pairs that may be stored per side of a node, one entry per swap level
    (level k pairs are delivered immediately and never stored, so there is
    no budget for them).  For ``COGNITIVE`` allocations ``pool`` is the
    shared per-link budget B; interior nodes own 2B memories.
    """

    kind: AllocationKind
    levels: tuple[int, ...] = ()
    pool: int = 0

    @classmethod
    def reserved(cls, levels) -> "MemoryAllocation":
        return cls(kind=AllocationKind.RESERVED, levels=tuple(int(b) for b in levels))

    @classmethod
    def cognitive(cls, pool: int) -> "MemoryAllocation":
        return cls(kind=AllocationKind.COGNITIVE, pool=int(pool))

    def label(self) -> str:
        """Compact text form used in CSV output, e.g. ``reserved:1|2``."""
        if self.kind is AllocationKind.RESERVED:
            return "reserved:" + "|".join(str(b) for b in self.levels)
        return f"cognitive:{self.pool}"

    @classmethod
    def from_label(cls, text: str) -> "MemoryAllocation":
        head, _, rest = text.partition(":")
        if head == "reserved":
            return cls.reserved(int(b) for b in rest.split("|") if b)
        if head == "cognitive":
            return cls.cognitive(int(rest))
        raise ValidationError(f"unknown allocation label {text!r}")


@dataclass(frozen=True)
class AllocationPolicy:
    """Behaviour when a lower-level pair would be produced into full memory."""

    full_memory_rule: FullMemoryRule = FullMemoryRule.BLOCK


def validate(config: ChainConfig, alloc: MemoryAllocation | None = None) -> None:
    """Check every type invariant; raise :class:`ValidationError` otherwise.

    With ``alloc`` given, also checks that the allocation matches the chain:
    a reserved allocation needs exactly ``config.k`` level budgets.
    """
    if not isinstance(config.k, int) or config.k < 0:
        raise ValidationError(f"k must be a non-negative integer, got {config.k!r}")
    if not (config.p > 0 and math.isfinite(config.p)):
        raise ValidationError(f"generation rate p must be positive, got {config.p!r}")
    if not (0.0 < config.q <= 1.0):
        raise ValidationError(f"q outside (0,1]: {config.q!r}")
    if not (config.d > 0 and math.isfinite(config.d)):
        raise ValidationError(f"link length d must be positive, got {config.d!r}")
    if not (config.c > 0 and math.isfinite(config.c)):
        raise ValidationError(f"signal speed c must be positive, got {config.c!r}")
    if alloc is None:
        return
    if alloc.kind is AllocationKind.RESERVED:
        if len(alloc.levels) != config.k:
            raise ValidationError(
                f"dimension mismatch: allocation has {len(alloc.levels)} level budgets, "
                f"chain with k={config.k} needs {config.k}"
            )
        for i, b in enumerate(alloc.levels):
            if not isinstance(b, int) or b < 1:
                raise ValidationError(f"level budget B_{i} must be a positive integer, got {b!r}")
    elif alloc.kind is AllocationKind.COGNITIVE:
        if not isinstance(alloc.pool, int) or alloc.pool < 1:
            raise ValidationError(f"pool size must be a positive integer, got {alloc.pool!r}")
    else:  # pragma: no cover - enum is closed
        raise ValidationError(f"unknown allocation kind {alloc.kind!r}")


def constant_allocation(B: int, k: int) -> MemoryAllocation:
    """Reserved allocation with the same budget B at every level."""
    if B < 1:
        raise ValidationError(f"B must be a positive integer, got {B!r}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k!r}")
    return MemoryAllocation.reserved([B] * k)


def exponential_allocation(gamma: float, i0: int, k: int) -> MemoryAllocation:
    """Reserved allocation with geometrically growing budgets.

    Level i gets ceil(gamma**(i + i0)) memories per side, 1 < gamma < 2.
    Rounding up only ever adds memory, so any rate guarantee derived for the
    real-valued budgets still holds for the integer allocation.
    """
    if not (1.0 < gamma < 2.0):
        raise ValidationError(f"gamma outside (1,2): {gamma!r}")
    if i0 < 1:
        raise ValidationError(f"i0 must be >= 1, got {i0!r}")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k!r}")
    return MemoryAllocation.reserved(math.ceil(gamma ** (i + i0)) for i in range(k))
