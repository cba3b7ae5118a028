"""Figure rendering over the toolkit's CSV outputs.

Input files are validated column-for-column and rejected loudly on any
drift.  Vehicles are colored along the string from dark blue (first
follower) to dark red (last follower).
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import LinearSegmentedColormap

__all__ = ["FigureSpec", "SchemaDriftError", "render", "string_colors"]

KINDS = ("moments", "region", "surface", "trajectories")

_COLUMNS = {
    "moments": ["k", "vehicle", "mean", "var"],
    "ensemble": ["k", "vehicle", "mean", "var", "se_mean"],
    "sweep": ["p1", "p2", "rho_A", "rho_kron", "m11_norm", "m21_norm",
              "mean_ok", "var_ok", "mss", "marginal"],
    "run": ["k", "vehicle", "y", "zeta"],
}


class SchemaDriftError(ValueError):
    """An input file does not match its documented column schema."""


def read_table(path, schema):
    """Load a CSV with exactly the documented columns, as float arrays."""
    want = _COLUMNS[schema]
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaDriftError(f"{path}: file is empty") from None
        missing = [c for c in want if c not in header]
        extra = [c for c in header if c not in want]
        if missing:
            raise SchemaDriftError(f"{path}: missing column '{missing[0]}'")
        if extra:
            raise SchemaDriftError(f"{path}: unexpected column '{extra[0]}'")
        idx = [header.index(c) for c in want]
        rows = [[float(row[i]) for i in idx] for row in reader]
    if not rows:
        raise SchemaDriftError(f"{path}: no data rows")
    data = np.asarray(rows)
    return {c: data[:, j] for j, c in enumerate(want)}


def string_colors(n):
    """Per-vehicle colors, first follower dark blue to last dark red."""
    cmap = LinearSegmentedColormap.from_list("string", ["navy", "darkred"])
    if n == 1:
        return [cmap(0.0)]
    return [cmap(i / (n - 1)) for i in range(n)]


@dataclass
class FigureSpec:
    """What to draw: a kind plus the input files it consumes."""

    kind: str
    inputs: list
    output: Path
    dpi: int = 150
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind '{self.kind}'; choose from {KINDS}")
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)


def _per_vehicle(table, column):
    vehicles = np.unique(table["vehicle"]).astype(int)
    series = {}
    for v in vehicles:
        mask = table["vehicle"] == v
        order = np.argsort(table["k"][mask])
        series[v] = (table["k"][mask][order], table[column][mask][order])
    return vehicles, series


def _render_moments(spec):
    tables = [read_table(p, "moments") for p in spec.inputs]
    labels = spec.labels or [p.stem for p in spec.inputs]
    rows = len(tables)
    fig, axes = plt.subplots(rows, 2, figsize=(9, 2.6 * rows), squeeze=False)
    for r, (table, label) in enumerate(zip(tables, labels)):
        for c, column in enumerate(("mean", "var")):
            ax = axes[r][c]
            vehicles, series = _per_vehicle(table, column)
            colors = string_colors(len(vehicles))
            for color, v in zip(colors, vehicles):
                k, vals = series[v]
                ax.plot(k, vals, color=color, linewidth=0.9)
            ax.set_xlabel("k")
            ax.set_ylabel(f"tracking error {column}")
            ax.set_title(f"{label}: {column}")
    fig.tight_layout()
    fig.savefig(spec.output, dpi=spec.dpi)
    plt.close(fig)
    return [spec.output]


def _sweep_grid(table, column):
    p1 = np.unique(table["p1"])
    p2 = np.unique(table["p2"])
    grid = np.full((p2.size, p1.size), np.nan)
    i1 = np.searchsorted(p1, table["p1"])
    i2 = np.searchsorted(p2, table["p2"])
    grid[i2, i1] = table[column]
    return p1, p2, grid


def _render_region(spec):
    table = read_table(spec.inputs[0], "sweep")
    p1, p2, mss = _sweep_grid(table, "mss")
    fig, ax = plt.subplots(figsize=(5, 4.2))
    ax.pcolormesh(p1, p2, mss, cmap="RdYlGn", vmin=0.0, vmax=1.0, shading="nearest")
    ax.set_xlabel("p1")
    ax.set_ylabel("p2")
    ax.set_title("mean-square stable region")
    fig.tight_layout()
    fig.savefig(spec.output, dpi=spec.dpi)
    plt.close(fig)
    return [spec.output]


def _render_surface(spec):
    table = read_table(spec.inputs[0], "sweep")
    fig = plt.figure(figsize=(10, 4.2))
    for j, column in enumerate(("rho_A", "rho_kron")):
        ax = fig.add_subplot(1, 2, j + 1, projection="3d")
        p1, p2, grid = _sweep_grid(table, column)
        P1, P2 = np.meshgrid(p1, p2)
        ax.plot_surface(P1, P2, grid, cmap="viridis", linewidth=0)
        ax.set_xlabel("p1")
        ax.set_ylabel("p2")
        ax.set_title(column)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=spec.dpi)
    plt.close(fig)
    return [spec.output]


def _render_trajectories(spec):
    table = read_table(spec.inputs[0], "run")
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    for ax, column in zip(axes, ("y", "zeta")):
        vehicles, series = _per_vehicle(table, column)
        colors = string_colors(len(vehicles))
        for color, v in zip(colors, vehicles):
            k, vals = series[v]
            ax.plot(k, vals, color=color, linewidth=0.9)
        ax.set_xlabel("k")
        ax.set_ylabel(column)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=spec.dpi)
    plt.close(fig)
    return [spec.output]


_RENDERERS = {
    "moments": _render_moments,
    "region": _render_region,
    "surface": _render_surface,
    "trajectories": _render_trajectories,
}


def render(spec):
    """Render one figure spec to its output path; returns written paths."""
    if not spec.inputs:
        raise SchemaDriftError(f"figure kind '{spec.kind}' received no input files")
    return _RENDERERS[spec.kind](spec)
