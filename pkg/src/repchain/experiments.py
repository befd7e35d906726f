"""Experiment runner: structured configs in, CSV tables out.

An experiment file is a single YAML mapping.  Common keys:

    name: short-identifier
    mode: analytic | exact | ratio-curve | simulate | sweep
    output: results/table.csv         # path, relative to the config file
    figures: false                    # also render a PNG next to the CSV

``analytic`` computes one closed-form quantity over a parameter grid,
``exact`` and ``ratio-curve`` run the small-chain solver over a q grid, and
``simulate``/``sweep`` run simulation cells (sweep adds grids over q, B and
seeds).  Every run writes one CSV with a commented metadata block echoing
the full configuration; re-running with the same master seed reproduces the
body byte for byte.
"""

from __future__ import annotations

import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable

import yaml

from . import __version__
from .model import (
    ChainConfig,
    FullMemoryRule,
    MemoryAllocation,
    ValidationError,
    constant_allocation,
    exponential_allocation,
    validate,
)
from . import analytic, ctmc
from .simulator import (
    Protocol,
    STATS_CSV_HEADER,
    SimConfig,
    seed_from,
    simulate,
)

WORKERS_ENV = "REPCHAIN_WORKERS"

MODES = ("analytic", "exact", "ratio-curve", "simulate", "sweep")


@dataclass
class Experiment:
    name: str
    mode: str
    output: str
    spec: dict
    base_dir: str = "."
    figures: bool = False

    @property
    def output_path(self) -> str:
        return os.path.join(self.base_dir, self.output)


def load_experiment(path: str) -> Experiment:
    with open(path) as handle:
        try:
            raw = yaml.safe_load(handle)
        except yaml.YAMLError as exc:
            raise ValidationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: experiment file must be a mapping")
    for key in ("name", "mode", "output"):
        if key not in raw:
            raise ValidationError(f"{path}: missing required field '{key}'")
    mode = raw["mode"]
    if mode not in MODES:
        raise ValidationError(f"{path}: unknown mode '{mode}' (expected one of {MODES})")
    return Experiment(
        name=str(raw["name"]),
        mode=mode,
        output=str(raw["output"]),
        spec=raw,
        base_dir=os.path.dirname(os.path.abspath(path)),
        figures=bool(raw.get("figures", False)),
    )


# ---------------------------------------------------------------------------
# Config pieces


def _chain_from(spec: dict, key: str = "chain") -> ChainConfig:
    try:
        section = spec[key]
        return ChainConfig(
            k=int(section["k"]),
            p=float(section.get("p", 1.0)),
            q=float(section.get("q", 0.5)),
            d=float(section.get("d", 1.0)),
            c=float(section.get("c", 1.0)),
        )
    except KeyError as exc:
        raise ValidationError(f"missing chain field {exc}") from exc


def _alloc_from(spec: dict, k: int) -> MemoryAllocation:
    section = spec.get("allocation")
    if section is None:
        raise ValidationError("missing required field 'allocation'")
    kind = section.get("kind", "reserved")
    if kind == "reserved":
        if "levels" in section:
            return MemoryAllocation.reserved(section["levels"])
        if "constant" in section:
            return constant_allocation(int(section["constant"]), k)
        if "exponential" in section:
            exp = section["exponential"]
            return exponential_allocation(float(exp["gamma"]), int(exp["i0"]), k)
        raise ValidationError("reserved allocation needs 'levels', 'constant' or 'exponential'")
    if kind == "cognitive":
        try:
            return MemoryAllocation.cognitive(int(section["pool"]))
        except KeyError as exc:
            raise ValidationError("cognitive allocation needs 'pool'") from exc
    raise ValidationError(f"unknown allocation kind '{kind}'")


def _sim_config(spec: dict, chain: ChainConfig, alloc: MemoryAllocation, seed: int) -> SimConfig:
    sim = spec.get("sim", {})
    protocol = Protocol(sim.get("protocol", "modified-doubling"))
    policy = FullMemoryRule(sim.get("policy", "block"))
    horizon_time = sim.get("horizon_time")
    horizon_delivered = sim.get("horizon_delivered")
    return SimConfig(
        chain=chain,
        alloc=alloc,
        protocol=protocol,
        policy=policy,
        classical_delay=bool(sim.get("classical_delay", False)),
        horizon_time=float(horizon_time) if horizon_time is not None else None,
        horizon_delivered=int(horizon_delivered) if horizon_delivered is not None else None,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Analytic quantities

def _rows_analytic(spec: dict) -> tuple[list[str], list[list[str]]]:
    quantity = spec.get("quantity")
    handlers: dict[str, Callable] = {
        "select-i0": _analytic_select_i0,
        "doubling-rate": _analytic_doubling_rate,
        "cognitive-rate": _analytic_cognitive_rate,
        "memory-constant": _analytic_memory_constant,
        "memory-exponential": _analytic_memory_exponential,
        "comm-delay": _analytic_comm_delay,
        "queuing-delay": _analytic_queuing_delay,
        "end-to-end-delay": _analytic_end_to_end,
    }
    if quantity not in handlers:
        raise ValidationError(
            f"unknown analytic quantity '{quantity}' (expected one of {sorted(handlers)})"
        )
    grid = spec.get("grid")
    if not isinstance(grid, dict) or not grid:
        raise ValidationError("analytic mode needs a non-empty 'grid' mapping")
    keys = list(grid.keys())
    lists = []
    for key in keys:
        vals = grid[key]
        if not isinstance(vals, list) or not vals:
            raise ValidationError(f"grid entry '{key}' must be a non-empty list")
        lists.append(vals)
    header, rows = None, []
    for combo in itertools.product(*lists):
        point = dict(zip(keys, combo))
        out = handlers[quantity](point)
        if header is None:
            header = keys + list(out.keys())
        rows.append([_fmt(point[key]) for key in keys] + [_fmt(v) for v in out.values()])
    return header, rows


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _analytic_select_i0(point: dict) -> dict:
    gamma, delta = float(point["gamma"]), float(point["delta"])
    i0 = analytic.select_i0(gamma, delta)
    worst = min(
        analytic.exponential_weight_product(gamma, i0, k) for k in range(1, 51)
    )
    return {"i0": i0, "min_product_k_le_50": worst, "target": 1.0 - delta}


def _analytic_doubling_rate(point: dict) -> dict:
    levels = point.get("levels")
    k = int(point["k"])
    if levels is None:
        levels = [int(point["B"])] * k
    cfg = ChainConfig(k=k, p=float(point.get("p", 1.0)), q=float(point["q"]))
    alloc = MemoryAllocation.reserved(levels)
    bound = analytic.doubling_rate_bound(cfg, alloc)
    return {"rate_bound": bound.value, "optimal": analytic.optimal_rate(cfg.p, cfg.q, k).value}


def _analytic_cognitive_rate(point: dict) -> dict:
    pool, level = int(point["B"]), int(point["i"])
    p, q = float(point.get("p", 1.0)), float(point["q"])
    return {
        "factor": analytic.cognitive_rate_factor(pool, level),
        "rate_bound": analytic.cognitive_rate_bound(p, q, pool, level).value,
    }


def _analytic_memory_constant(point: dict) -> dict:
    B, k = int(point["B"]), int(point["k"])
    return {"average": analytic.average_memory_constant(B, k), "bound": 4.0 * B}


def _analytic_memory_exponential(point: dict) -> dict:
    gamma, i0, k = float(point["gamma"]), int(point["i0"]), int(point["k"])
    footprint = analytic.max_memory_exponential(gamma, i0, k)
    return {
        "average_exact": analytic.average_memory_exponential_exact(gamma, i0, k),
        "average_bound": analytic.average_memory_exponential_bound(gamma, i0),
        "max_exact": footprint.exact,
        "max_bound": footprint.bound,
    }


def _analytic_comm_delay(point: dict) -> dict:
    res = analytic.comm_delay_memory(
        p=float(point.get("p", 1.0)),
        q=float(point["q"]),
        k=int(point["k"]),
        d=float(point.get("d", 1.0)),
        c=float(point.get("c", 1.0)),
        levels=point.get("levels"),
    )
    return {"average_bound": res.average, "any_node_bound": res.any_node}


def _analytic_queuing_delay(point: dict) -> dict:
    levels = point["levels"] if "levels" in point else [int(point["B"])] * int(point["k"])
    return {
        "queuing_delay": analytic.queuing_delay(
            int(point["i"]), float(point.get("p", 1.0)), float(point["q"]), levels
        )
    }


def _analytic_end_to_end(point: dict) -> dict:
    common = dict(
        p=float(point.get("p", 1.0)),
        q=float(point["q"]),
        k=int(point["k"]),
        d=float(point.get("d", 1.0)),
        c=float(point.get("c", 1.0)),
    )
    if "gamma" in point:
        est = analytic.end_to_end_delay_exponential(
            gamma=float(point["gamma"]),
            i0=int(point["i0"]),
            delta=float(point["delta"]),
            **common,
        )
    else:
        est = analytic.end_to_end_delay_constant(B=int(point["B"]), **common)
    return {
        "delay": est.total,
        "queuing": est.queuing,
        "notification": est.notification,
        "linear_in_chain_length": est.linear_in_chain_length,
    }


# ---------------------------------------------------------------------------
# Exact-solver modes

def _rows_exact(spec: dict) -> tuple[list[str], list[list[str]]]:
    chain = _chain_from(spec)
    alloc = _alloc_from(spec, chain.k)
    validate(chain, alloc)
    policy = FullMemoryRule(spec.get("policy", "block"))
    q_values = spec.get("grid", {}).get("q", [chain.q])
    header = ["k", "p", "alloc", "policy", "q", "exact_rate", "rate_bound", "ratio", "states"]
    rows = []
    for q in q_values:
        cfg = ChainConfig(k=chain.k, p=chain.p, q=float(q), d=chain.d, c=chain.c)
        gen = ctmc.build_generator(cfg, alloc, policy=policy)
        pi = ctmc.stationary(gen)
        exact = float(pi @ gen.delivery_rate)
        bound = analytic.doubling_rate_bound(cfg, alloc).value
        rows.append(
            [
                str(chain.k),
                _fmt(chain.p),
                alloc.label(),
                policy.value,
                _fmt(float(q)),
                _fmt(exact),
                _fmt(bound),
                _fmt(bound / exact),
                str(gen.size),
            ]
        )
    dist_out = spec.get("distribution_output")
    if dist_out:
        gen = ctmc.build_generator(chain, alloc, policy=policy)
        dist = ctmc.Distribution(states=gen.states, probabilities=list(ctmc.stationary(gen)))
        dist.export_csv(os.path.join(spec.get("_base_dir", "."), dist_out))
    return header, rows


def _rows_ratio_curve(spec: dict) -> tuple[list[str], list[list[str]]]:
    chain = _chain_from(spec)
    alloc = _alloc_from(spec, chain.k)
    validate(chain, alloc)
    policy = FullMemoryRule(spec.get("policy", "block"))
    grid = spec.get("grid", {})
    if "q" not in grid or not grid["q"]:
        raise ValidationError("ratio-curve mode needs grid.q")
    points = ctmc.rate_ratio_curve(chain, alloc, [float(q) for q in grid["q"]], policy=policy)
    header = ["k", "p", "alloc", "policy", "q", "exact_rate", "rate_bound", "ratio"]
    rows = [
        [
            str(chain.k),
            _fmt(chain.p),
            alloc.label(),
            policy.value,
            _fmt(pt.q),
            _fmt(pt.exact),
            _fmt(pt.bound),
            _fmt(pt.ratio),
        ]
        for pt in points
    ]
    return header, rows


# ---------------------------------------------------------------------------
# Simulation modes

def _sim_cells(spec: dict) -> list[SimConfig]:
    chain = _chain_from(spec)
    master_seed = int(spec.get("seed", 0))
    grid = spec.get("grid", {})
    q_values = [float(q) for q in grid.get("q", [chain.q])]
    k_values = [int(k) for k in grid.get("k", [chain.k])]
    b_values = grid.get("B", [None])
    replicates = int(spec.get("replicates", 1))
    cells = []
    index = 0
    for k, q, b, rep in itertools.product(k_values, q_values, b_values, range(replicates)):
        cfg_chain = ChainConfig(k=k, p=chain.p, q=q, d=chain.d, c=chain.c)
        if b is None:
            alloc = _alloc_from(spec, k)
        else:
            kind = spec.get("allocation", {}).get("kind", "reserved")
            alloc = (
                MemoryAllocation.cognitive(int(b))
                if kind == "cognitive"
                else constant_allocation(int(b), k)
            )
        validate(cfg_chain, alloc)
        cell = _sim_config(spec, cfg_chain, alloc, seed_from(master_seed, index))
        cells.append(cell)
        index += 1
    return cells


def _run_cell(cell: SimConfig) -> str:
    return simulate(cell).csv_row()


def _rows_simulate(spec: dict) -> tuple[list[str], list[list[str]]]:
    cells = _sim_cells(spec)
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(cell) for cell in cells]
    header = STATS_CSV_HEADER.split(",")
    return header, [row.split(",") for row in rows]


# ---------------------------------------------------------------------------
# Driver

def run_experiment(exp: Experiment) -> str:
    """Execute one experiment and write its CSV; returns the output path."""
    spec = dict(exp.spec)
    spec["_base_dir"] = exp.base_dir
    if exp.mode == "analytic":
        header, rows = _rows_analytic(spec)
    elif exp.mode == "exact":
        header, rows = _rows_exact(spec)
    elif exp.mode == "ratio-curve":
        header, rows = _rows_ratio_curve(spec)
    elif exp.mode in ("simulate", "sweep"):
        header, rows = _rows_simulate(spec)
    else:  # pragma: no cover - load_experiment already screens modes
        raise ValidationError(f"unknown mode {exp.mode}")

    path = exp.output_path
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as handle:
        echo = {k: v for k, v in exp.spec.items() if not k.startswith("_")}
        handle.write(f"# repchain {__version__}\n")
        handle.write(f"# generated_at: {datetime.now(timezone.utc).isoformat()}\n")
        handle.write(f"# name: {exp.name}\n")
        handle.write(f"# mode: {exp.mode}\n")
        handle.write(f"# config: {json.dumps(echo, sort_keys=True, default=str)}\n")
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(row) + "\n")
    if exp.figures:
        from .figures import render_experiment

        render_experiment(path, exp.mode)
    return path


# ---------------------------------------------------------------------------
# Result comparison

@dataclass
class ToleranceSpec:
    column: str
    value: float
    mode: str  # "abs", "rel" or "ci"


def parse_tolerances(text: str) -> list[ToleranceSpec]:
    """Parse e.g. ``rate=3ci,exact_rate=1e-9rel,delay=0.5`` (bare = absolute)."""
    specs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValidationError(f"bad tolerance entry '{part}' (want column=value)")
        column, value = part.split("=", 1)
        mode = "abs"
        for suffix in ("ci", "rel"):
            if value.endswith(suffix):
                mode = suffix
                value = value[: -len(suffix)]
                break
        try:
            specs.append(ToleranceSpec(column=column.strip(), value=float(value), mode=mode))
        except ValueError as exc:
            raise ValidationError(f"bad tolerance value in '{part}'") from exc
    if not specs:
        raise ValidationError("empty tolerance spec")
    return specs


def read_result_csv(path: str) -> tuple[list[str], list[list[str]]]:
    header = None
    rows = []
    with open(path) as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    if header is None:
        raise ValidationError(f"{path}: no header row found")
    return header, rows


@dataclass
class CompareReport:
    ok: bool
    lines: list


def compare_results(path_a: str, path_b: str, tolerances: list[ToleranceSpec]) -> CompareReport:
    """Row-by-row tolerance comparison of two result tables.

    Schemas must agree on every compared column; a ``ci`` tolerance uses
    the ``<column>_ci`` column of whichever file carries it.
    """
    header_a, rows_a = read_result_csv(path_a)
    header_b, rows_b = read_result_csv(path_b)
    if len(rows_a) != len(rows_b):
        raise ValidationError(f"row count mismatch: {len(rows_a)} vs {len(rows_b)}")
    for tol in tolerances:
        if tol.column not in header_a or tol.column not in header_b:
            raise ValidationError(f"schema mismatch: column '{tol.column}' missing")
        if tol.mode == "ci":
            ci_col = tol.column + "_ci"
            if ci_col not in header_a and ci_col not in header_b:
                raise ValidationError(f"schema mismatch: no '{ci_col}' column for ci tolerance")
    lines = []
    ok = True
    for i, (ra, rb) in enumerate(zip(rows_a, rows_b)):
        for tol in tolerances:
            va = float(ra[header_a.index(tol.column)])
            vb = float(rb[header_b.index(tol.column)])
            deviation = abs(va - vb)
            if tol.mode == "abs":
                limit = tol.value
            elif tol.mode == "rel":
                limit = tol.value * max(abs(va), abs(vb))
            else:  # ci
                ci_col = tol.column + "_ci"
                ci = 0.0
                if ci_col in header_a:
                    ci = max(ci, float(ra[header_a.index(ci_col)]))
                if ci_col in header_b:
                    ci = max(ci, float(rb[header_b.index(ci_col)]))
                limit = tol.value * ci
            good = deviation <= limit
            ok = ok and good
            lines.append(
                f"row {i} {tol.column}: |{va:.10g} - {vb:.10g}| = {deviation:.3g} "
                f"{'<=' if good else '>'} {limit:.3g} [{'ok' if good else 'DEVIATION'}]"
            )
    return CompareReport(ok=ok, lines=lines)
