"""Exact continuous-time Markov analysis of small repeater chains.

The chain state is represented recursively.  A two-link segment is a signed
integer s: |s| pairs are stored at its midpoint and the sign says which of
the two links they belong to (at most one side can be occupied, because the
midpoint swaps the instant it holds a pair from each side).  A chain of
2**n links is a tuple (left, right, eL, eR) where left/right are the states
of its two half chains and eL/eR count the stored half-spanning pairs at
the midpoint, again with eL * eR = 0.

Transitions are driven purely by link-level generation events at rate p per
link.  Swaps are instantaneous: a generation that completes a swap input
splits its rate-p arc into a success branch (weight q, which may cascade
further up and finally either stores a pair or delivers a chain-spanning
one) and a failure branch (weight 1-q, both inputs destroyed).

Full memories can be handled two ways, and the choice changes the chain:

* BLOCK suppresses any generation whose forced swap chain would have
  nowhere to put its product, so sub-chains sitting under a full slot
  freeze until the slot drains;
* DISCARD_OLDEST lets every swap fire and replaces the oldest stored pair
  when a product lands in a full slot (on pair counts this is the same as
  throwing the product away), so sub-chains keep cycling.

Both policies deliver at the same limiting rate, but only the discard
flavour converges pointwise to the product-form limiting distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import spsolve

from .analytic import cognitive_rate_factor_exact, doubling_rate_bound
from .model import (
    AllocationKind,
    ChainConfig,
    FullMemoryRule,
    MemoryAllocation,
    ValidationError,
)

DEFAULT_STATE_CAP = 2_000_000


class StateSpaceCapError(RuntimeError):
    """The recursive state space is larger than the configured cap."""


class StationarySolveError(RuntimeError):
    """The stationary linear solve failed to reach the residual tolerance."""


# ---------------------------------------------------------------------------
# State enumeration

def state_space_size(n: int, levels: Sequence[int]) -> int:
    """Number of states of an n-level chain without materialising them."""
    size = 2 * levels[0] + 1
    for j in range(2, n + 1):
        size = size * size * (2 * levels[j - 1] + 1)
    return size


def _e_pairs(cap: int) -> list[tuple[int, int]]:
    pairs = [(0, e) for e in range(cap + 1)] + [(e, 0) for e in range(1, cap + 1)]
    return sorted(pairs)


def enumerate_states(n: int, levels: Sequence[int], cap: int = DEFAULT_STATE_CAP) -> list:
    """All valid states of an n-level chain, in lexicographic order."""
    if n < 1:
        raise ValidationError(f"need n >= 1, got {n!r}")
    if len(levels) < n:
        raise ValidationError(f"dimension mismatch: {len(levels)} budgets for n={n}")
    if state_space_size(n, levels) > cap:
        raise StateSpaceCapError(
            f"state space has {state_space_size(n, levels)} states, cap is {cap}"
        )
    return _enumerate(n, tuple(levels))


def _enumerate(n: int, levels: tuple) -> list:
    if n == 1:
        return list(range(-levels[0], levels[0] + 1))
    subs = _enumerate(n - 1, levels)
    out = []
    for left in subs:
        for right in subs:
            for e_left, e_right in _e_pairs(levels[n - 1]):
                out.append((left, right, e_left, e_right))
    return out


def empty_state(n: int):
    if n == 1:
        return 0
    sub = empty_state(n - 1)
    return (sub, sub, 0, 0)


def can_emit(state, n: int) -> bool:
    """True when some single generation event can cascade into a
    chain-spanning pair from this state (every swap on the way succeeding)."""
    if n == 1:
        return state != 0
    left, right, e_left, e_right = state
    if e_left > 0 and can_emit(right, n - 1):
        return True
    if e_right > 0 and can_emit(left, n - 1):
        return True
    return False


# ---------------------------------------------------------------------------
# Flat working form: per-segment stored-pair counts

def _unpack(state, n: int):
    """state -> (s1, es); s1[m] is the signed base-segment count, es[j][t]
    the (eL, eR) tuple of the level-j chain segment t, for j in 2..n."""
    s1 = [0] * (1 << (n - 1))
    es = {j: [(0, 0)] * (1 << (n - j)) for j in range(2, n + 1)}

    def fill(sub, lvl: int, t: int) -> None:
        if lvl == 1:
            s1[t] = sub
            return
        left, right, e_left, e_right = sub
        es[lvl][t] = (e_left, e_right)
        fill(left, lvl - 1, 2 * t)
        fill(right, lvl - 1, 2 * t + 1)

    fill(state, n, 0)
    return s1, es


def _pack(s1, es, n: int, t: int = 0):
    if n == 1:
        return s1[t]
    left = _pack(s1, es, n - 1, 2 * t)
    right = _pack(s1, es, n - 1, 2 * t + 1)
    e_left, e_right = es[n][t]
    return (left, right, e_left, e_right)


def _absorbable(es, k: int, levels: Sequence[int], j: int, seg: int) -> bool:
    """Can a fresh level-j pair in level-j segment ``seg`` be taken in?

    Either its sibling segment holds a partner (the forced swap fires, so
    the question recurses on the swap product) or its own storage slot has
    room.  Level-k pairs are always absorbed: they are delivered.
    """
    while j < k:
        parent = seg >> 1
        side = seg & 1
        e_left, e_right = es[j + 1][parent]
        partner = e_right if side == 0 else e_left
        if partner > 0:
            j, seg = j + 1, parent
            continue
        own = e_left if side == 0 else e_right
        return own < levels[j]
    return True


def _gen_enabled(s1, es, k: int, levels: Sequence[int], link: int, blocking: bool) -> bool:
    """Whether a generation on ``link`` changes the state at all.

    Blocking suppresses generations whose forced swap chain cannot place
    its product.  Under the discard policy a generation is a no-op (and is
    skipped here) only when the pair would displace itself: no partner and
    its own link already full.
    """
    m, side = divmod(link, 2)
    s = s1[m]
    partner = (-s if s < 0 else 0) if side == 0 else (s if s > 0 else 0)
    if partner > 0:
        if not blocking or k == 1:
            return True
        return _absorbable(es, k, levels, 1, m)
    own = s if side == 0 else -s
    return own < levels[0]


def _with_e(es, j: int, t: int, value: tuple[int, int]):
    out = dict(es)
    row = list(out[j])
    row[t] = value
    out[j] = row
    return out


def _expand_generation(s1, es, k: int, levels, q: float, link: int, blocking: bool):
    """Outcomes of an enabled generation on ``link``.

    Returns a list of (probability, new_state, delivered) triples whose
    probabilities sum to one.
    """
    m, side = divmod(link, 2)
    s = s1[m]
    has_partner = (s < 0) if side == 0 else (s > 0)
    s1b = list(s1)
    s1b[m] = s + 1 if side == 0 else s - 1  # store, or consume one stored partner
    if not has_partner:
        return [(1.0, _pack(s1b, es, k), 0)]

    out = []

    def emit(es_cur, j: int, seg: int, weight: float) -> None:
        # a fresh level-j pair exists in level-j segment seg
        if j == k:
            out.append((weight, _pack(s1b, es_cur, k), 1))
            return
        parent = seg >> 1
        side_j = seg & 1
        e_left, e_right = es_cur[j + 1][parent]
        partner = e_right if side_j == 0 else e_left
        if partner == 0:
            own = e_left if side_j == 0 else e_right
            if own >= levels[j]:
                if blocking:  # pragma: no cover - excluded by _gen_enabled
                    raise AssertionError("generation expanded into a blocked store")
                # discard policy: the product displaces the oldest stored
                # pair, leaving the counts unchanged
                out.append((weight, _pack(s1b, es_cur, k), 0))
                return
            stored = (own + 1, 0) if side_j == 0 else (0, own + 1)
            out.append((weight, _pack(s1b, _with_e(es_cur, j + 1, parent, stored), k), 0))
            return
        consumed = (e_left, e_right - 1) if side_j == 0 else (e_left - 1, e_right)
        es_next = _with_e(es_cur, j + 1, parent, consumed)
        out.append((weight * (1.0 - q), _pack(s1b, es_next, k), 0))
        emit(es_next, j + 1, parent, weight * q)

    out.append((1.0 - q, _pack(s1b, es, k), 0))
    emit(es, 1, m, q)
    return out


# ---------------------------------------------------------------------------
# Generator matrix

@dataclass
class GeneratorMatrix:
    """Sparse transition-rate description of one chain.

    ``rates`` maps (from_index, to_index) to a positive rate; diagonal
    entries are implicit.  ``delivery_rate[i]`` is the rate at which
    chain-spanning pairs are delivered out of state i.  Only states
    reachable from the empty chain carry transitions.
    """

    states: list
    index: dict
    rates: dict
    delivery_rate: np.ndarray
    reachable: np.ndarray
    config: ChainConfig | None = None
    levels: tuple = ()

    @property
    def size(self) -> int:
        return len(self.states)


def generator_from_rates(states: Sequence, rates: dict) -> GeneratorMatrix:
    """Build a generator from an explicit rate map (mostly for tests)."""
    states = list(states)
    return GeneratorMatrix(
        states=states,
        index={s: i for i, s in enumerate(states)},
        rates=dict(rates),
        delivery_rate=np.zeros(len(states)),
        reachable=np.ones(len(states), dtype=bool),
    )


def build_generator(
    config: ChainConfig,
    alloc: MemoryAllocation,
    policy: FullMemoryRule = FullMemoryRule.BLOCK,
    cap: int = DEFAULT_STATE_CAP,
) -> GeneratorMatrix:
    """Transition rates of the doubling protocol on the full chain."""
    if alloc.kind is not AllocationKind.RESERVED:
        raise ValidationError("the exact solver supports reserved allocations only")
    k = config.k
    if k < 1:
        raise ValidationError("the exact solver needs k >= 1 (a single link has rate p)")
    levels = alloc.levels
    if len(levels) != k:
        raise ValidationError(f"dimension mismatch: {len(levels)} budgets for k={k}")
    blocking = policy is FullMemoryRule.BLOCK
    states = enumerate_states(k, levels, cap=cap)
    index = {s: i for i, s in enumerate(states)}
    num_links = config.num_links
    p, q = config.p, config.q

    rates: dict[tuple[int, int], float] = {}
    delivery = np.zeros(len(states))
    reachable = np.zeros(len(states), dtype=bool)

    frontier = [index[empty_state(k)]]
    reachable[frontier[0]] = True
    while frontier:
        i = frontier.pop()
        s1, es = _unpack(states[i], k)
        for link in range(num_links):
            if not _gen_enabled(s1, es, k, levels, link, blocking):
                continue
            outcomes = _expand_generation(s1, es, k, levels, q, link, blocking)
            for prob, target, delivered in outcomes:
                if prob <= 0.0:
                    continue
                j = index[target]
                if j != i:
                    key = (i, j)
                    rates[key] = rates.get(key, 0.0) + p * prob
                if delivered:
                    delivery[i] += p * prob
                if not reachable[j]:
                    reachable[j] = True
                    frontier.append(j)
    return GeneratorMatrix(
        states=states,
        index=index,
        rates=rates,
        delivery_rate=delivery,
        reachable=reachable,
        config=config,
        levels=tuple(levels),
    )


def stationary(gen: GeneratorMatrix, residual_tol: float = 1e-10) -> np.ndarray:
    """Stationary distribution of the chain restricted to reachable states.

    Solves pi Q = 0 with one balance equation replaced by sum(pi) = 1,
    checks the residual against ``residual_tol`` and clamps solver noise
    (entries above -1e-14) to zero.  Unreachable states get probability 0.
    """
    keep = np.flatnonzero(gen.reachable)
    remap = {int(old): new for new, old in enumerate(keep)}
    n = len(keep)
    if n == 0:
        raise StationarySolveError("no reachable states")

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    last = n - 1  # balance row sacrificed for the normalisation constraint
    for (i, j), r in gen.rates.items():
        a, b = remap[i], remap[j]
        diag[a] -= r
        if b != last:
            rows.append(b)
            cols.append(a)
            vals.append(r)
    for a in range(n - 1):
        rows.append(a)
        cols.append(a)
        vals.append(diag[a])
    rows.extend([last] * n)
    cols.extend(range(n))
    vals.extend([1.0] * n)

    matrix = csc_matrix((vals, (rows, cols)), shape=(n, n))
    rhs = np.zeros(n)
    rhs[last] = 1.0
    solution = spsolve(matrix, rhs)

    if np.min(solution) < -1e-14:
        raise StationarySolveError(
            f"stationary solve produced probability {np.min(solution):.3e}"
        )
    solution = np.clip(solution, 0.0, None)
    solution /= solution.sum()

    # residual of the full balance system pi Q = 0
    residual = np.zeros(n)
    for (i, j), r in gen.rates.items():
        a, b = remap[i], remap[j]
        residual[b] += solution[a] * r
        residual[a] -= solution[a] * r
    worst = np.max(np.abs(residual))
    if worst > residual_tol:
        raise StationarySolveError(f"balance residual {worst:.3e} exceeds {residual_tol:g}")

    full = np.zeros(gen.size)
    full[keep] = solution
    return full


def exact_rate(
    config: ChainConfig,
    alloc: MemoryAllocation,
    policy: FullMemoryRule = FullMemoryRule.BLOCK,
    cap: int = DEFAULT_STATE_CAP,
) -> float:
    """Exact long-run delivered pairs per unit time for the doubling protocol.

    Computed as the stationary delivery flux: the sum over states of the
    stationary probability times the delivery rate out of that state.
    """
    if config.k == 0:
        return config.p  # single link, every generated pair is delivered
    gen = build_generator(config, alloc, policy=policy, cap=cap)
    pi = stationary(gen)
    return float(pi @ gen.delivery_rate)


@dataclass(frozen=True)
class RatioPoint:
    q: float
    exact: float
    bound: float

    @property
    def ratio(self) -> float:
        return self.bound / self.exact


def rate_ratio_curve(
    config: ChainConfig,
    alloc: MemoryAllocation,
    q_values: Sequence[float],
    policy: FullMemoryRule = FullMemoryRule.BLOCK,
    cap: int = DEFAULT_STATE_CAP,
) -> list[RatioPoint]:
    """Closed-form bound over exact rate across a grid of swap probabilities.

    The ratio tends to 1 as q -> 0, which is the tightness statement the
    acceptance suite checks.
    """
    points = []
    for q in q_values:
        cfg = ChainConfig(k=config.k, p=config.p, q=float(q), d=config.d, c=config.c)
        exact = exact_rate(cfg, alloc, policy=policy, cap=cap)
        bound = doubling_rate_bound(cfg, alloc).value
        points.append(RatioPoint(q=float(q), exact=exact, bound=bound))
    return points


# ---------------------------------------------------------------------------
# Limiting (q -> 0) distributions

@dataclass
class Distribution:
    """A distribution over an explicit, ordered state list."""

    states: list
    probabilities: list  # Fractions or floats, aligned with ``states``

    def as_dict(self) -> dict:
        return dict(zip(self.states, self.probabilities))

    def as_array(self) -> np.ndarray:
        return np.array([float(x) for x in self.probabilities])

    def export_csv(self, path) -> None:
        """Write (state, probability) rows; reals carry 17 significant digits."""
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["state", "probability"])
            for state, prob in zip(self.states, self.probabilities):
                writer.writerow([format_state(state), f"{float(prob):.17g}"])


def format_state(state) -> str:
    """Canonical bracketed text form of a nested chain state."""
    if isinstance(state, tuple):
        return "(" + " ".join(format_state(part) for part in state) + ")"
    return str(state)


def limiting_distribution_doubling(
    n: int, levels: Sequence[int], cap: int = DEFAULT_STATE_CAP
) -> Distribution:
    """Small-q limit of the stationary distribution, exact rationals.

    The base two-link segment is uniform over its 2*B_0 + 1 signed states;
    for larger chains the halves become independent and the stored-pair
    groups at the midpoint share mass equally, giving the product form
    mass(left) * mass(right) / (2*B_{n-1} + 1).
    """
    states = enumerate_states(n, levels, cap=cap)

    def mass(state, lvl: int) -> Fraction:
        if lvl == 1:
            return Fraction(1, 2 * levels[0] + 1)
        left, right, _, _ = state
        return (
            mass(left, lvl - 1)
            * mass(right, lvl - 1)
            / (2 * levels[lvl - 1] + 1)
        )

    return Distribution(states=states, probabilities=[mass(s, n) for s in states])


def swappable_mass(dist: Distribution, n: int):
    """Total probability of states that can cascade into a delivery."""
    total = 0
    for state, prob in zip(dist.states, dist.probabilities):
        if can_emit(state, n):
            total += prob
    return total


# ---------------------------------------------------------------------------
# Shared-pool limiting distribution

def enumerate_states_cognitive(n: int, pool: int, cap: int = DEFAULT_STATE_CAP) -> list:
    """States of an n-level chain whose links share ``pool`` memories.

    Each stored half-spanning pair at a midpoint claims one slot on every
    link of its half, so the sub-chain state spaces shrink with the number
    of stored pairs above them.
    """
    if n < 1 or pool < 0:
        raise ValidationError(f"need n >= 1 and pool >= 0, got {n!r}, {pool!r}")
    count = _cognitive_size(n, pool)
    if count > cap:
        raise StateSpaceCapError(f"state space has {count} states, cap is {cap}")
    return _enumerate_cognitive(n, pool)


def _cognitive_size(n: int, pool: int) -> int:
    if n == 1:
        return 2 * pool + 1
    total = 0
    for e_left, e_right in _e_pairs(pool):
        total += _cognitive_size(n - 1, pool - e_left) * _cognitive_size(n - 1, pool - e_right)
    return total


def _enumerate_cognitive(n: int, pool: int) -> list:
    if n == 1:
        return list(range(-pool, pool + 1))
    out = []
    for e_left, e_right in _e_pairs(pool):
        for left in _enumerate_cognitive(n - 1, pool - e_left):
            for right in _enumerate_cognitive(n - 1, pool - e_right):
                out.append((left, right, e_left, e_right))
    return out


def limiting_distribution_cognitive(
    n: int, pool: int, cap: int = DEFAULT_STATE_CAP
) -> Distribution:
    """Small-q limit distribution of the virtual-occupant pool protocol.

    Midpoint groups with e stored pairs carry relative mass
    prod_{j0=0}^{e-1} f(pool-j0, n-1) / f(pool, n-1)**e where f is the
    shared-pool rate factor one level down, normalised so all groups sum
    to one; within a group the two halves are independent with pools
    reduced by the stored pairs above them.  The total mass of states able
    to cascade into a delivery equals f(pool, n) exactly.
    """
    states = enumerate_states_cognitive(n, pool, cap=cap)
    masses = _cognitive_mass_table(n, pool)
    return Distribution(states=states, probabilities=[masses[s] for s in states])


def _cognitive_mass_table(n: int, pool: int) -> dict:
    if n == 1:
        share = Fraction(1, 2 * pool + 1) if pool > 0 else Fraction(1)
        return {s: share for s in range(-pool, pool + 1)}

    factor = {b: cognitive_rate_factor_exact(b, n - 1) for b in range(pool + 1)}
    normaliser = Fraction(1)
    group = [Fraction(1)]  # relative mass of a one-sided group with e stored pairs
    running = Fraction(1)
    for e in range(1, pool + 1):
        running *= factor[pool - (e - 1)] / factor[pool]
        group.append(running)
        normaliser += 2 * running

    table = {}
    for e_left, e_right in _e_pairs(pool):
        left_tbl = _cognitive_mass_table(n - 1, pool - e_left)
        right_tbl = _cognitive_mass_table(n - 1, pool - e_right)
        weight = group[max(e_left, e_right)] / normaliser
        for left, lmass in left_tbl.items():
            for right, rmass in right_tbl.items():
                table[(left, right, e_left, e_right)] = lmass * rmass * weight
    return table

