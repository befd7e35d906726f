"""Event-driven simulation of entanglement distribution over a repeater chain.

The only timed randomness is link-level generation, a Poisson process with
rate p per link, so the event loop advances by exponential jumps of the
merged stream (rate K*p) and attributes each event to a uniformly chosen
link.  Candidates that the protocol currently suppresses are no-ops, which
by memorylessness leaves the enabled generation process exactly Poisson.

Without classical delay, swaps are instantaneous: every pair creation walks
up the doubling hierarchy, consuming stored partners and flipping a coin
per swap, until it is stored, destroyed or delivered.  With classical delay
on, a swap instead starts a pending attempt: the two input pairs leave
queuing memory, their far-end qubits sit in communication-delay memory for
2**(level) * d / c, and the outcome (drawn at initiation) is applied when
the notification arrives.

Occupancy statistics are integrated exactly between events, per node and
split into queuing memory and communication-delay memory.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field, replace as dataclasses_replace
from enum import Enum
from random import Random
from typing import Optional

import numpy as np
from numpy.random import SeedSequence
from scipy import stats as _scipy_stats

from .model import (
    AllocationKind,
    ChainConfig,
    FullMemoryRule,
    MemoryAllocation,
    ValidationError,
    validate,
)


class Protocol(Enum):
    MODIFIED_DOUBLING = "modified-doubling"
    COGNITIVE = "cognitive"
    AUXILIARY_VIRTUAL = "auxiliary-virtual"


class EntangledPair:
    """A live entangled pair between two chain nodes.

    ``usable_after`` lags ``created_at`` only when the pair was produced by
    a swap whose outcome had to propagate classically.  The qubit timestamps
    track when the leftmost/rightmost constituent link pairs were generated,
    which is what the delivered-pair delay statistics are built from.
    """

    __slots__ = (
        "level",
        "left_node",
        "right_node",
        "created_at",
        "usable_after",
        "virtual",
        "min_created",
        "left_qubit_t0",
        "right_qubit_t0",
        "max_measured",
        "stored_at",
    )

    def __init__(self, level, left_node, right_node, created_at, usable_after=None):
        self.level = level
        self.left_node = left_node
        self.right_node = right_node
        self.created_at = created_at
        self.usable_after = created_at if usable_after is None else usable_after
        self.virtual = False
        self.min_created = created_at
        self.left_qubit_t0 = created_at
        self.right_qubit_t0 = created_at
        self.max_measured = 0.0
        self.stored_at = created_at


@dataclass
class SimConfig:
    chain: ChainConfig
    alloc: MemoryAllocation
    protocol: Protocol = Protocol.MODIFIED_DOUBLING
    policy: FullMemoryRule = FullMemoryRule.BLOCK
    classical_delay: bool = False
    horizon_time: Optional[float] = None
    horizon_delivered: Optional[int] = None
    seed: int = 0
    warmup_fraction: float = 0.1
    batch_count: int = 20
    collect_delay_samples: bool = False
    collect_hold_log: bool = False
    trace_path: Optional[str] = None

    def horizon_label(self) -> str:
        if self.horizon_time is not None:
            return f"{self.horizon_time:.17g}"
        return f"count:{self.horizon_delivered}"


STATS_CSV_HEADER = (
    "k,p,q,alloc,protocol,policy,delay_mode,seed,horizon,delivered,elapsed,"
    "rate,rate_ci,comm_mem_avg,queue_mem_avg,delay_mean,delay_max"
)


@dataclass
class LevelQueueStats:
    arrivals: int
    mean_wait: float
    time_avg_length: float


@dataclass
class SimStats:
    config: SimConfig
    delivered: int
    elapsed: float
    rate_estimate: float
    rate_half_width: float
    per_node_queue_avg: list
    per_node_comm_avg: list
    queue_mem_avg: float  # summed over nodes, divided by the link count
    comm_mem_avg: float
    delay_mean: float  # mean over delivered pairs of the worst qubit residence
    delay_max: float
    delay_span_mean: float  # mean creation-to-delivery span
    per_level_queue: dict
    created: list
    consumed: list
    discarded: list
    lost: list
    alive: list
    pending_attempts: int
    holds_started: int
    hold_time_total: float
    delay_samples: list = field(default_factory=list)
    hold_log: list = field(default_factory=list)  # (start, duration) per held qubit

    def csv_row(self) -> str:
        cfg = self.config
        fields = [
            str(cfg.chain.k),
            f"{cfg.chain.p:.17g}",
            f"{cfg.chain.q:.17g}",
            cfg.alloc.label(),
            cfg.protocol.value,
            cfg.policy.value,
            "delay" if cfg.classical_delay else "ideal",
            str(cfg.seed),
            cfg.horizon_label(),
            str(self.delivered),
            f"{self.elapsed:.17g}",
            f"{self.rate_estimate:.17g}",
            f"{self.rate_half_width:.17g}",
            f"{self.comm_mem_avg:.17g}",
            f"{self.queue_mem_avg:.17g}",
            f"{self.delay_mean:.17g}",
            f"{self.delay_max:.17g}",
        ]
        return ",".join(fields)


def seed_from(master_seed: int, cell_index: int = 0) -> int:
    """Derive a per-run seed from a master seed and a cell index."""
    return int(SeedSequence([master_seed, cell_index]).generate_state(1, np.uint64)[0])


def _check_config(cfg: SimConfig) -> None:
    validate(cfg.chain, cfg.alloc)
    if cfg.protocol is Protocol.MODIFIED_DOUBLING:
        if cfg.alloc.kind is not AllocationKind.RESERVED:
            raise ValidationError("modified doubling requires a reserved allocation")
    else:
        if cfg.alloc.kind is not AllocationKind.COGNITIVE:
            raise ValidationError(f"{cfg.protocol.value} requires a cognitive allocation")
    if cfg.horizon_time is None and cfg.horizon_delivered is None:
        raise ValidationError("set horizon_time or horizon_delivered")
    if cfg.horizon_time is not None and cfg.horizon_time <= 0:
        raise ValidationError("horizon must be positive")
    if cfg.horizon_delivered is not None and cfg.horizon_delivered <= 0:
        raise ValidationError("horizon must be positive")


class _Engine:
    def __init__(self, cfg: SimConfig):
        _check_config(cfg)
        self.cfg = cfg
        chain = cfg.chain
        self.k = chain.k
        self.K = chain.num_links
        self.p = chain.p
        self.q = chain.q
        self.notify_unit = chain.d / chain.c
        self.protocol = cfg.protocol
        self.blocking = cfg.policy is FullMemoryRule.BLOCK
        self.delay = cfg.classical_delay
        self.rng = Random(cfg.seed)
        self.trace = open(cfg.trace_path, "w") if cfg.trace_path else None

        if self.protocol is Protocol.MODIFIED_DOUBLING:
            self.levels = cfg.alloc.levels
            self.pool = 0
        else:
            self.levels = ()
            self.pool = cfg.alloc.pool

        k, K = self.k, self.K
        self.stored = [[deque() for _ in range(K >> j)] for j in range(k)]
        self.pending_out = [[0] * (K >> j) for j in range(k)]  # reserved slots in flight
        self.start_used = [0] * (K + 1)  # cognitive: pairs starting at node n
        self.end_used = [0] * (K + 1)  # cognitive: pairs ending at node n
        self.span_used = [0] * K  # auxiliary: pairs (and their stand-ins) covering a link

        nodes = K + 1
        self.q_occ = [0] * nodes
        self.q_int = [0.0] * nodes
        self.q_last = [0.0] * nodes
        self.c_occ = [0] * nodes
        self.c_int = [0.0] * nodes
        self.c_last = [0.0] * nodes

        self.level_len = [0] * k
        self.level_int = [0.0] * k
        self.level_last = [0.0] * k
        self.level_arrivals = [0] * k
        self.level_wait_sum = [0.0] * k
        self.level_wait_n = [0] * k

        self.created = [0] * (k + 1)
        self.consumed = [0] * (k + 1)
        self.discarded = [0] * (k + 1)
        self.lost = [0] * (k + 1)
        self.delivered = 0
        self.delivery_times: list[float] = []
        self.delay_samples: list[tuple[float, float]] = []
        self.delay_sum = 0.0
        self.delay_max = 0.0
        self.span_sum = 0.0
        self.pending_attempts = 0
        self.holds_started = 0
        self.hold_time_total = 0.0
        self.hold_log: list[tuple[float, float]] = []
        self.heap: list = []
        self.seq = 0

    # -- occupancy integration ------------------------------------------

    def _q_touch(self, node: int, t: float, delta: int) -> None:
        self.q_int[node] += self.q_occ[node] * (t - self.q_last[node])
        self.q_last[node] = t
        self.q_occ[node] += delta

    def _c_touch(self, node: int, t: float, delta: int) -> None:
        self.c_int[node] += self.c_occ[node] * (t - self.c_last[node])
        self.c_last[node] = t
        self.c_occ[node] += delta

    def _level_touch(self, j: int, t: float, delta: int) -> None:
        self.level_int[j] += self.level_len[j] * (t - self.level_last[j])
        self.level_last[j] = t
        self.level_len[j] += delta

    def _flush(self, t: float) -> None:
        for node in range(self.K + 1):
            self._q_touch(node, t, 0)
            self._c_touch(node, t, 0)
        for j in range(self.k):
            self._level_touch(j, t, 0)

    # -- pool bookkeeping -------------------------------------------------

    def _claim(self, pair: EntangledPair) -> bool:
        """Take the memory claims of a live pair; False if there is no room."""
        if self.protocol is Protocol.COGNITIVE:
            if (
                self.start_used[pair.left_node] >= self.pool
                or self.end_used[pair.right_node] >= self.pool
            ):
                return False
            self.start_used[pair.left_node] += 1
            self.end_used[pair.right_node] += 1
            return True
        if self.protocol is Protocol.AUXILIARY_VIRTUAL:
            for link in range(pair.left_node, pair.right_node):
                if self.span_used[link] >= self.pool:
                    return False
            for link in range(pair.left_node, pair.right_node):
                self.span_used[link] += 1
            return True
        return True

    def _release(self, pair: EntangledPair) -> None:
        if self.protocol is Protocol.COGNITIVE:
            self.start_used[pair.left_node] -= 1
            self.end_used[pair.right_node] -= 1
        elif self.protocol is Protocol.AUXILIARY_VIRTUAL:
            for link in range(pair.left_node, pair.right_node):
                self.span_used[link] -= 1

    # -- storage ----------------------------------------------------------

    def _store(self, pair: EntangledPair, j: int, seg: int, t: float) -> None:
        if self.protocol is Protocol.MODIFIED_DOUBLING:
            cap = self.levels[j]
            used = len(self.stored[j][seg]) + self.pending_out[j][seg]
            if used >= cap:
                if self.blocking:
                    raise AssertionError("blocked store reached storage")
                evicted = self._unstore(j, seg, t)
                self.discarded[j] += 1
                self._release(evicted)
                self._emit_trace(t, "discard", evicted.left_node, j, "evicted")
        # between events a midpoint never holds same-level pairs from both
        # sides: without signalling delay they would have swapped on arrival
        assert self.delay or not self.stored[j][seg ^ 1]
        pair.stored_at = t
        self.stored[j][seg].append(pair)
        self._q_touch(pair.left_node, t, +1)
        self._q_touch(pair.right_node, t, +1)
        self._level_touch(j, t, +1)
        self.level_arrivals[j] += 1

    def _unstore(self, j: int, seg: int, t: float) -> EntangledPair:
        pair = self.stored[j][seg].popleft()
        self._q_touch(pair.left_node, t, -1)
        self._q_touch(pair.right_node, t, -1)
        self._level_touch(j, t, -1)
        self.level_wait_sum[j] += t - pair.stored_at
        self.level_wait_n[j] += 1
        return pair

    # -- generation gating --------------------------------------------------

    def _count(self, j: int, seg: int) -> int:
        return len(self.stored[j][seg]) + self.pending_out[j][seg]

    def _absorbable(self, j: int, seg: int) -> bool:
        # mirror of the exact chain: a fresh level-j pair is taken in when
        # its forced swap chain ends at a delivery or at a slot with room
        while j < self.k:
            if len(self.stored[j][seg ^ 1]) > 0:
                seg >>= 1
                j += 1
                continue
            return self._count(j, seg) < self.levels[j]
        return True

    def _gen_enabled(self, link: int) -> bool:
        if self.protocol is Protocol.COGNITIVE:
            return (
                self.start_used[link] < self.pool
                and self.end_used[link + 1] < self.pool
            )
        if self.protocol is Protocol.AUXILIARY_VIRTUAL:
            return self.span_used[link] < self.pool
        if self.k == 0:
            return True
        if not self.blocking:
            return True  # discard policy always accepts, evicting as needed
        if self.delay:
            return self._count(0, link) < self.levels[0]
        return self._absorbable(0, link)

    # -- instantaneous cascade (no classical delay) -----------------------

    def _merge(self, pair: EntangledPair, partner: EntangledPair, seg: int, t: float):
        """Combine the level-j pair in segment ``seg`` with the partner from
        the sibling segment into one pair a level up."""
        if seg & 1:
            left, right = partner, pair
        else:
            left, right = pair, partner
        merged = EntangledPair(pair.level + 1, left.left_node, right.right_node, t)
        merged.min_created = min(left.min_created, right.min_created)
        merged.left_qubit_t0 = left.left_qubit_t0
        merged.right_qubit_t0 = right.right_qubit_t0
        merged.max_measured = max(
            left.max_measured,
            right.max_measured,
            t - left.right_qubit_t0,
            t - right.left_qubit_t0,
        )
        return merged

    def _cascade(self, pair: EntangledPair, seg: int, t: float) -> None:
        j = pair.level
        while True:
            if j == self.k:
                self._deliver(pair, t)
                return
            sibling = self.stored[j][seg ^ 1]
            if not sibling:
                self._store(pair, j, seg, t)
                return
            partner = self._unstore(j, seg ^ 1, t)
            self.consumed[j] += 2
            success = self.rng.random() < self.q
            self._emit_trace(
                t, "swap", (seg | 1) << j, j + 1, "success" if success else "failure"
            )
            if not success:
                self._release(pair)
                self._release(partner)
                return
            merged = self._merge(pair, partner, seg, t)
            self.created[j + 1] += 1
            self._release(pair)
            self._release(partner)
            self._claim(merged)  # net zero for pools: the merge frees what it takes
            pair = merged
            j += 1
            seg >>= 1

    def _deliver(self, pair: EntangledPair, t: float) -> None:
        self._release(pair)
        self.delivered += 1
        self.delivery_times.append(t)
        worst = max(
            pair.max_measured, t - pair.left_qubit_t0, t - pair.right_qubit_t0
        )
        span = t - pair.min_created
        self.delay_sum += worst
        self.span_sum += span
        if worst > self.delay_max:
            self.delay_max = worst
        if self.cfg.collect_delay_samples:
            self.delay_samples.append((worst, span))
        self._emit_trace(t, "deliver", 0, self.k, "delivered")

    # -- pending swaps (classical delay) -----------------------------------

    def _room_for_output(self, j_out: int, seg_out: int) -> bool:
        if j_out >= self.k:
            return True
        if self.protocol is Protocol.MODIFIED_DOUBLING:
            if not self.blocking:
                return True
            return self._count(j_out, seg_out) < self.levels[j_out]
        return True  # pool protocols admit or lose at arrival time

    def _pump_sites(self, sites: list, t: float) -> None:
        while sites:
            j, parent = sites.pop()
            fired = False
            while (
                self.stored[j][2 * parent]
                and self.stored[j][2 * parent + 1]
                and self._room_for_output(j + 1, parent)
            ):
                left = self._unstore(j, 2 * parent, t)
                right = self._unstore(j, 2 * parent + 1, t)
                self.consumed[j] += 2
                self._release(left)
                self._release(right)
                success = self.rng.random() < self.q
                wait = (2 ** j) * self.notify_unit
                self._c_touch(left.left_node, t, +1)
                self._c_touch(right.right_node, t, +1)
                self.holds_started += 2
                if self.cfg.collect_hold_log:
                    self.hold_log.append((t, wait))
                    self.hold_log.append((t, wait))
                if j + 1 < self.k and self.protocol is Protocol.MODIFIED_DOUBLING:
                    self.pending_out[j + 1][parent] += 1
                self.pending_attempts += 1
                self.seq += 1
                heapq.heappush(
                    self.heap, (t + wait, self.seq, j, parent, left, right, success)
                )
                node = (2 * parent + 1) << j
                self._emit_trace(t, "swap-init", node, j + 1, "pending")
                fired = True
            if fired and j > 0:
                sites.append((j - 1, 2 * parent))
                sites.append((j - 1, 2 * parent + 1))

    def _arrive(self, event, t: float) -> None:
        _, _, j, parent, left, right, success = event
        self.pending_attempts -= 1
        self._c_touch(left.left_node, t, -1)
        self._c_touch(right.right_node, t, -1)
        self.hold_time_total += 2 * (2 ** j) * self.notify_unit
        j_out = j + 1
        if j_out < self.k and self.protocol is Protocol.MODIFIED_DOUBLING:
            self.pending_out[j_out][parent] -= 1
        node = (2 * parent + 1) << j
        self._emit_trace(t, "swap-arrive", node, j_out, "success" if success else "failure")
        if not success:
            # the held qubits are destroyed; the freed slot may unblock the
            # site that feeds it
            self._pump_sites([(j, parent)], t)
            return
        merged = self._merge(left, right, 2 * parent, t)
        merged.created_at = t - (2 ** j) * self.notify_unit
        merged.usable_after = t
        self.created[j_out] += 1
        if j_out == self.k:
            self._deliver(merged, t)
            self._pump_sites([(j, parent)], t)
            return
        if not self._claim(merged):
            self.lost[j_out] += 1
            self._emit_trace(t, "discard", merged.left_node, j_out, "no-room")
            self._pump_sites([(j, parent)], t)
            return
        self._store(merged, j_out, parent, t)
        self._pump_sites([(j_out, parent >> 1), (j, parent)], t)

    # -- event loop ---------------------------------------------------------

    def _emit_trace(self, t: float, kind: str, node: int, level: int, outcome: str) -> None:
        if self.trace is not None:
            self.trace.write(f"{t:.17g}\t{kind}\t{node}\t{level}\t{outcome}\n")

    def _generate(self, link: int, t: float) -> None:
        self.created[0] += 1
        pair = EntangledPair(0, link, link + 1, t)
        self._claim(pair)  # cannot fail: gating checked the pools
        self._emit_trace(t, "gen", link, 0, "ok")
        if self.k == 0:
            self._deliver(pair, t)
            return
        if not self.delay:
            self._cascade(pair, link, t)
        else:
            self._store(pair, 0, link, t)
            self._pump_sites([(0, link >> 1)], t)

    def run(self) -> SimStats:
        cfg = self.cfg
        horizon = cfg.horizon_time
        target = cfg.horizon_delivered
        if self.delay:
            t = self._run_with_heap(horizon, target)
        else:
            t = self._run_generation_only(horizon, target)
        elapsed = t if horizon is None else horizon
        self._flush(elapsed)
        if self.trace is not None:
            self.trace.close()
        return self._stats(elapsed)

    def _run_generation_only(self, horizon, target) -> float:
        # without classical delay the only timed events are generations
        uniform = self.rng.random
        log = math.log
        links = self.K
        step = 1.0 / (links * self.p) if self.k > 0 else 1.0 / self.p
        enabled = self._gen_enabled
        generate = self._generate
        t = 0.0
        while True:
            t -= log(1.0 - uniform()) * step
            if horizon is not None and t > horizon:
                return horizon
            link = int(uniform() * links) if self.k > 0 else 0
            if enabled(link):
                generate(link, t)
                if target is not None and self.delivered >= target:
                    return t

    def _run_with_heap(self, horizon, target) -> float:
        rng = self.rng
        total_rate = self.K * self.p if self.k > 0 else self.p
        t = 0.0
        next_gen = rng.expovariate(total_rate)
        while True:
            if self.heap and self.heap[0][0] <= next_gen:
                event = heapq.heappop(self.heap)
                t = event[0]
                if horizon is not None and t > horizon:
                    return horizon
                self._arrive(event, t)
            else:
                t = next_gen
                if horizon is not None and t > horizon:
                    return horizon
                link = int(rng.random() * self.K) if self.k > 0 else 0
                if self._gen_enabled(link):
                    self._generate(link, t)
                next_gen = t + rng.expovariate(total_rate)
            if target is not None and self.delivered >= target:
                return t

    # -- statistics -----------------------------------------------------------

    def _stats(self, elapsed: float) -> SimStats:
        cfg = self.cfg
        rate, half_width = _batch_means_rate(
            self.delivery_times, elapsed, cfg.warmup_fraction, cfg.batch_count
        )
        nodes = self.K + 1
        per_node_queue = [self.q_int[n] / elapsed for n in range(nodes)]
        per_node_comm = [self.c_int[n] / elapsed for n in range(nodes)]
        queue_avg = sum(self.q_int) / (elapsed * self.K)
        comm_avg = sum(self.c_int) / (elapsed * self.K)
        per_level = {}
        for j in range(self.k):
            waits = self.level_wait_n[j]
            per_level[j] = LevelQueueStats(
                arrivals=self.level_arrivals[j],
                mean_wait=self.level_wait_sum[j] / waits if waits else math.nan,
                time_avg_length=self.level_int[j] / elapsed,
            )
        alive = [0] * (self.k + 1)
        for j in range(self.k):
            alive[j] = sum(len(dq) for dq in self.stored[j])
        delay_mean = self.delay_sum / self.delivered if self.delivered else math.nan
        span_mean = self.span_sum / self.delivered if self.delivered else math.nan
        stats = SimStats(
            config=cfg,
            delivered=self.delivered,
            elapsed=elapsed,
            rate_estimate=rate,
            rate_half_width=half_width,
            per_node_queue_avg=per_node_queue,
            per_node_comm_avg=per_node_comm,
            queue_mem_avg=queue_avg,
            comm_mem_avg=comm_avg,
            delay_mean=delay_mean,
            delay_max=self.delay_max,
            delay_span_mean=span_mean,
            per_level_queue=per_level,
            created=list(self.created),
            consumed=list(self.consumed),
            discarded=list(self.discarded),
            lost=list(self.lost),
            alive=alive,
            pending_attempts=self.pending_attempts,
            holds_started=self.holds_started,
            hold_time_total=self.hold_time_total,
            delay_samples=self.delay_samples,
            hold_log=self.hold_log,
        )
        assert stats.rate_estimate >= 0.0
        assert all(v >= -1e-12 for v in per_node_queue)
        assert all(v >= -1e-12 for v in per_node_comm)
        return stats


def occupancy_batch_means(hold_log, elapsed, normaliser, warmup_fraction=0.1, batches=20):
    """Batch-means estimate of the average held-qubit occupancy.

    ``hold_log`` holds (start, duration) intervals; each batch's occupancy is
    the held time overlapping the batch window divided by its length, then
    scaled by ``normaliser`` (pass the link count for a chain average).
    Returns (mean, half_width).
    """
    warmup = warmup_fraction * elapsed
    window = elapsed - warmup
    if window <= 0 or batches < 2:
        return 0.0, math.inf
    edges = [warmup + window * i / batches for i in range(batches + 1)]
    per_batch = [0.0] * batches
    width = window / batches
    for start, duration in hold_log:
        end = start + duration
        if end <= warmup or start >= elapsed:
            continue
        lo = max(0, min(batches - 1, int((start - warmup) // width)))
        for b in range(lo, batches):
            b_start, b_end = edges[b], edges[b + 1]
            if start >= b_end:
                continue
            if end <= b_start:
                break
            per_batch[b] += min(end, b_end) - max(start, b_start)
    rates = [x / (width * normaliser) for x in per_batch]
    mean = sum(rates) / batches
    var = sum((r - mean) ** 2 for r in rates) / (batches - 1)
    student = _scipy_stats.t.ppf(0.975, batches - 1)
    return mean, student * math.sqrt(var / batches)


def _batch_means_rate(delivery_times, elapsed, warmup_fraction, batches):
    """Post-warmup throughput with a batch-means confidence half width."""
    warmup = warmup_fraction * elapsed
    window = elapsed - warmup
    if window <= 0 or batches < 2:
        return 0.0, math.inf
    start = bisect_left(delivery_times, warmup)
    count = len(delivery_times) - start
    rate = count / window
    edges = [warmup + window * i / batches for i in range(batches + 1)]
    idx = [bisect_left(delivery_times, e) for e in edges]
    per_batch = [
        (idx[i + 1] - idx[i]) / (window / batches) for i in range(batches)
    ]
    mean = sum(per_batch) / batches
    var = sum((r - mean) ** 2 for r in per_batch) / (batches - 1)
    student = _scipy_stats.t.ppf(0.975, batches - 1)
    half_width = student * math.sqrt(var / batches)
    return rate, half_width


def simulate(cfg: SimConfig) -> SimStats:
    """Run one simulation cell to its horizon and gather statistics."""
    return _Engine(cfg).run()


# ---------------------------------------------------------------------------
# Measurement helpers


@dataclass
class RatioMeasurement:
    ratio: float
    half_width: float
    stats: SimStats


def measure_ratio_to_bound(cfg: SimConfig, analytic_bound: float) -> RatioMeasurement:
    """Simulated rate over a closed-form reference, with propagated CI."""
    if analytic_bound == 0:
        raise ValidationError("analytic bound is zero; ratio undefined")
    stats = simulate(cfg)
    return RatioMeasurement(
        ratio=stats.rate_estimate / analytic_bound,
        half_width=stats.rate_half_width / abs(analytic_bound),
        stats=stats,
    )


@dataclass
class CommDelayMeasurement:
    per_node: list
    chain_average: float
    chain_average_half_width: float
    little_queue_avg: float  # L: time-average held qubits, whole chain
    little_arrival_rate: float  # lambda: hold starts per unit time
    little_mean_hold: float  # W: mean hold duration
    stats: SimStats


def measure_comm_delay_memory(cfg: SimConfig) -> CommDelayMeasurement:
    """Communication-delay occupancy per node plus Little's-law ingredients."""
    if not cfg.classical_delay:
        raise ValidationError("communication delay measurement needs classical_delay")
    if not cfg.collect_hold_log:
        cfg = dataclasses_replace(cfg, collect_hold_log=True)
    stats = simulate(cfg)
    total_held_time = sum(stats.per_node_comm_avg) * stats.elapsed
    lam = stats.holds_started / stats.elapsed
    mean_hold = (
        stats.hold_time_total / (stats.holds_started - stats.pending_attempts * 2)
        if stats.holds_started > stats.pending_attempts * 2
        else math.nan
    )
    _, half_width = occupancy_batch_means(
        stats.hold_log,
        stats.elapsed,
        cfg.chain.num_links,
        cfg.warmup_fraction,
        cfg.batch_count,
    )
    return CommDelayMeasurement(
        per_node=stats.per_node_comm_avg,
        chain_average=stats.comm_mem_avg,
        chain_average_half_width=half_width,
        little_queue_avg=total_held_time / stats.elapsed,
        little_arrival_rate=lam,
        little_mean_hold=mean_hold,
        stats=stats,
    )


@dataclass
class DelaySummary:
    per_level: dict
    little_consistency: dict  # level -> (L, lambda * W) pairs
    qubit_residence_mean: float
    qubit_residence_max: float
    span_mean: float
    stats: SimStats


def measure_delays(cfg: SimConfig) -> DelaySummary:
    """Per-level queuing delays and delivered-pair residence statistics."""
    stats = simulate(cfg)
    consistency = {}
    for level, q in stats.per_level_queue.items():
        lam = q.arrivals / stats.elapsed
        consistency[level] = (q.time_avg_length, lam * q.mean_wait)
    return DelaySummary(
        per_level=stats.per_level_queue,
        little_consistency=consistency,
        qubit_residence_mean=stats.delay_mean,
        qubit_residence_max=stats.delay_max,
        span_mean=stats.delay_span_mean,
        stats=stats,
    )
