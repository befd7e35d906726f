"""Render result tables to PNG figures next to their CSV files."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiments import read_result_csv  # noqa: E402

_STYLE = {
    "figure.figsize": (5.5, 3.6),
    "figure.dpi": 150,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
}


def render_experiment(csv_path: str, mode: str) -> str | None:
    """Draw the figure matching an experiment mode; returns the PNG path."""
    header, rows = read_result_csv(csv_path)
    png_path = os.path.splitext(csv_path)[0] + ".png"
    with plt.rc_context(_STYLE):
        if mode in ("exact", "ratio-curve"):
            return _ratio_figure(header, rows, png_path)
        if mode in ("simulate", "sweep"):
            return _rate_figure(header, rows, png_path)
        return _generic_figure(header, rows, png_path)


def _ratio_figure(header, rows, png_path):
    q = [float(r[header.index("q")]) for r in rows]
    ratio = [float(r[header.index("ratio")]) for r in rows]
    exact = [float(r[header.index("exact_rate")]) for r in rows]
    bound = [float(r[header.index("rate_bound")]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.4))
    ax1.loglog(q, exact, "o-", label="exact")
    ax1.loglog(q, bound, "s--", label="closed form")
    ax1.set_xlabel("swap success probability q")
    ax1.set_ylabel("delivered pairs / time")
    ax1.legend()
    ax2.semilogx(q, ratio, "o-")
    ax2.axhline(1.0, color="k", lw=0.8)
    ax2.set_xlabel("swap success probability q")
    ax2.set_ylabel("closed form / exact")
    fig.tight_layout()
    fig.savefig(png_path)
    plt.close(fig)
    return png_path


def _rate_figure(header, rows, png_path):
    iq, ik, ia = header.index("q"), header.index("k"), header.index("alloc")
    ir, ic = header.index("rate"), header.index("rate_ci")
    series = defaultdict(list)
    for r in rows:
        series[(r[ik], r[ia])].append((float(r[iq]), float(r[ir]), float(r[ic])))
    fig, ax = plt.subplots()
    for (k, alloc), pts in sorted(series.items()):
        pts.sort()
        ax.errorbar(
            [p[0] for p in pts],
            [p[1] for p in pts],
            yerr=[p[2] for p in pts],
            marker="o",
            capsize=2,
            label=f"k={k} {alloc}",
        )
    ax.set_xlabel("swap success probability q")
    ax.set_ylabel("delivered pairs / time")
    if len(series) <= 8:
        ax.legend()
    fig.tight_layout()
    fig.savefig(png_path)
    plt.close(fig)
    return png_path


def _generic_figure(header, rows, png_path):
    # plot every numeric output column against the first varying input column
    if len(rows) < 2:
        return None
    columns = list(zip(*rows))
    x_idx = None
    for i, col in enumerate(columns):
        try:
            values = [float(v) for v in col]
        except ValueError:
            continue
        if len(set(values)) > 1:
            x_idx = i
            break
    if x_idx is None:
        return None
    x = [float(v) for v in columns[x_idx]]
    fig, ax = plt.subplots()
    for i, col in enumerate(columns):
        if i == x_idx:
            continue
        try:
            y = [float(v) for v in col]
        except ValueError:
            continue
        order = sorted(range(len(x)), key=x.__getitem__)
        ax.plot([x[j] for j in order], [y[j] for j in order], "o-", label=header[i])
    ax.set_xlabel(header[x_idx])
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path)
    plt.close(fig)
    return png_path
