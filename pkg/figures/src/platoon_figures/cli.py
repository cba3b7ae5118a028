"""render_figures: draw paper-style figures from a toolkit output directory."""

import argparse
import sys
from pathlib import Path

from .render import KINDS, FigureSpec, SchemaDriftError, render


def _moment_specs(data_dir):
    base = data_dir / "moments.csv"
    cases = sorted(data_dir.glob("moments_*.csv"))
    inputs = ([base] if base.exists() else []) + cases
    if not inputs:
        return []
    labels = [p.stem.replace("moments_", "case ") if p.stem != "moments" else "base"
              for p in inputs]
    return [FigureSpec("moments", inputs, data_dir / "fig_moments.png", labels=labels)]


def _sweep_specs(data_dir, kind):
    specs = []
    for path in sorted(data_dir.glob("sweep*.csv")):
        suffix = path.stem.replace("sweep", "") or ""
        specs.append(FigureSpec(kind, [path], data_dir / f"fig_{kind}{suffix}.png"))
    return specs


def _trajectory_specs(data_dir):
    return [
        FigureSpec("trajectories", [path], data_dir / f"fig_{path.stem}.png")
        for path in sorted(data_dir.glob("run_*.csv"))
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="render_figures",
        description="Render figures from platoon-mss CSV outputs (no analysis is recomputed)",
    )
    parser.add_argument("data_dir", help="directory holding moments/sweep/run CSV files")
    parser.add_argument("--kind", default="all", choices=("all",) + KINDS)
    args = parser.parse_args(argv)

    data_dir = Path(args.data_dir)
    if not data_dir.is_dir():
        print(f"error: {data_dir} is not a directory", file=sys.stderr)
        return 2

    specs = []
    if args.kind in ("all", "moments"):
        specs += _moment_specs(data_dir)
    if args.kind in ("all", "region"):
        specs += _sweep_specs(data_dir, "region")
    if args.kind in ("all", "surface"):
        specs += _sweep_specs(data_dir, "surface")
    if args.kind in ("all", "trajectories"):
        specs += _trajectory_specs(data_dir)

    if not specs:
        print(f"error: no renderable inputs for kind '{args.kind}' in {data_dir}",
              file=sys.stderr)
        return 1
    try:
        for spec in specs:
            for path in render(spec):
                print(f"wrote {path}")
    except SchemaDriftError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
