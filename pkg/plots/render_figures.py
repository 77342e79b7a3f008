"""Render harness CSVs to static PNG figures.

Usage:
    python3 -m plots.render_figures KIND CSV [CSV ...] --out DIR
        [--name BASE] [--log-x] [--log-y {on,off}] [--snapshot]

KIND is one of extrapolation | slackness | dynamics | dstar. Each CSV
becomes one figure (KIND.png for a single input, KIND-2.png etc. for
more); --snapshot also writes the data-layer JSON next to each image.
Inputs are read only, never rewritten.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import figdata
from .figdata import FigureData, load_figure_data, write_snapshot


@dataclass
class FigureRecipe:
    """One CSV-to-image job; log flags of None mean the kind's default."""

    csv_paths: list[str]
    kind: str
    out_path: str
    log_x: bool = False
    log_y: bool | None = None
    snapshot_path: str | None = None

    def __post_init__(self):
        if self.kind not in figdata.SCHEMAS:
            raise ValueError(f"unknown figure kind {self.kind!r} (have {sorted(figdata.SCHEMAS)})")
        if not self.csv_paths:
            raise ValueError("recipe needs at least one csv path")
        for p in self.csv_paths:
            if not Path(p).exists():
                raise FileNotFoundError(f"csv not found: {p}")


_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def _draw(ax, data: FigureData, log_x: bool, log_y: bool) -> None:
    if data.bar:
        # Paired bars: one group per x position, one bar per series.
        width = 0.8 / max(1, len(data.series))
        for si, s in enumerate(data.series):
            pos = [x + (si - (len(data.series) - 1) / 2) * width for x in s.x]
            ax.bar(pos, s.y, width=width, label=s.label, color=_COLORS[si % len(_COLORS)])
    else:
        for si, s in enumerate(data.series):
            ax.plot(s.x, s.y, marker="o", markersize=3, label=s.label,
                    color=_COLORS[si % len(_COLORS)])
    ax.set_xlabel(data.x_label)
    ax.set_ylabel(data.y_label)
    if log_x:
        ax.set_xscale("log")
    if log_y:
        ax.set_yscale("log")
    if data.series:
        ax.legend(fontsize=8)
    ax.set_title(Path(data.source).name)


def render(recipe: FigureRecipe) -> list[FigureData]:
    """Draw every CSV in the recipe onto one figure file.

    Multiple CSVs become side-by-side panels. Returns the loaded data,
    one per panel, in input order; writes the snapshot JSON when asked.
    """
    loaded = [load_figure_data(recipe.kind, p) for p in recipe.csv_paths]
    n = len(loaded)
    fig, axes = plt.subplots(1, n, figsize=(5.5 * n, 4.0), squeeze=False)
    for ax, data in zip(axes[0], loaded):
        log_y = data.log_y if recipe.log_y is None else recipe.log_y
        # Log axes cannot show an all-zero series; fall back to linear.
        if log_y and all(v == 0 for s in data.series for v in s.y):
            log_y = False
        _draw(ax, data, recipe.log_x, log_y)
    fig.tight_layout()
    out = Path(recipe.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120, metadata={"Software": None})
    plt.close(fig)
    if recipe.snapshot_path is not None:
        for i, data in enumerate(loaded):
            p = Path(recipe.snapshot_path)
            target = p if n == 1 else p.with_name(f"{p.stem}-{i + 1}{p.suffix}")
            write_snapshot(data, target)
    return loaded


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="render_figures", description="Render harness CSV artifacts to PNG figures."
    )
    parser.add_argument("kind", choices=sorted(figdata.SCHEMAS))
    parser.add_argument("csvs", nargs="+", metavar="CSV")
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("--name", default=None, help="output file base name (default: KIND)")
    parser.add_argument("--log-x", action="store_true")
    parser.add_argument("--log-y", choices=["on", "off"], default=None,
                        help="override the kind's default y scale")
    parser.add_argument("--snapshot", action="store_true",
                        help="also write the data-layer JSON next to the image")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    base = args.name or args.kind
    out_dir = Path(args.out)
    log_y = None if args.log_y is None else args.log_y == "on"
    try:
        recipe = FigureRecipe(
            csv_paths=args.csvs,
            kind=args.kind,
            out_path=str(out_dir / f"{base}.png"),
            log_x=args.log_x,
            log_y=log_y,
            snapshot_path=str(out_dir / f"{base}.json") if args.snapshot else None,
        )
        render(recipe)
    except (figdata.SchemaError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {recipe.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
