"""CSV schemas for the harness artifacts and their render-ready form.

Each loader turns one documented CSV layout into a FigureData: a list of
labeled (x, y) series plus axis names, the exact structure the renderer
draws and the snapshot files record. Keeping this layer separate from
matplotlib lets tests pin figure content without comparing pixels.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

SCHEMAS = {
    "extrapolation": ["model", "regime", "length", "mse", "stderr"],
    "slackness": ["index", "lambda", "u", "product"],
    "dynamics": ["step", "loss", "norm_A", "norm_B", "norm_C", "asym_A", "asym_BC"],
    "dstar": ["dstar", "model", "mean_extrap_mse"],
}

# Log-scale y by default where values span orders of magnitude.
LOG_Y_DEFAULT = {"extrapolation": True, "slackness": False, "dynamics": False, "dstar": True}


class SchemaError(ValueError):
    """The CSV header does not match the documented layout."""


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]


@dataclass
class FigureData:
    """Everything the renderer needs, with no drawing library involved."""

    kind: str
    series: list[Series]
    x_label: str
    y_label: str
    log_y: bool
    bar: bool = False
    source: str = ""


def load_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read header and rows, skipping leading '#' provenance comments."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"csv not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    if not rows:
        raise SchemaError(f"{path} has no header row")
    return rows[0], rows[1:]


def check_header(kind: str, header: list[str], path: str | Path) -> None:
    if kind not in SCHEMAS:
        raise ValueError(f"unknown figure kind {kind!r} (have {sorted(SCHEMAS)})")
    missing = [c for c in SCHEMAS[kind] if c not in header]
    if missing:
        raise SchemaError(
            f"{path}: missing column(s) {', '.join(missing)} "
            f"for kind {kind!r} (expected {', '.join(SCHEMAS[kind])})"
        )


def _columns(header: list[str], rows: list[list[str]], path) -> dict[str, list[str]]:
    idx = {name: header.index(name) for name in header}
    out: dict[str, list[str]] = {name: [] for name in header}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {i + 2} has {len(row)} cells, header has {len(header)}")
        for name in header:
            out[name].append(row[idx[name]])
    return out


def _floats(cells: list[str], name: str, path) -> list[float]:
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        raise SchemaError(f"{path}: column {name!r} has a non-numeric cell: {exc}") from None


def extrapolation_data(path: str | Path) -> FigureData:
    """One series per (model, regime) pair: mse against evaluation length."""
    header, rows = load_table(path)
    check_header("extrapolation", header, path)
    cols = _columns(header, rows, path)
    lengths = _floats(cols["length"], "length", path)
    mses = _floats(cols["mse"], "mse", path)
    groups: dict[str, Series] = {}
    for model, regime, x, y in zip(cols["model"], cols["regime"], lengths, mses):
        label = f"{model} ({regime})"
        if label not in groups:
            groups[label] = Series(label, [], [])
        groups[label].x.append(x)
        groups[label].y.append(y)
    return FigureData(
        kind="extrapolation",
        series=list(groups.values()),
        x_label="length",
        y_label="mse",
        log_y=LOG_Y_DEFAULT["extrapolation"],
        source=str(path),
    )


def slackness_data(path: str | Path) -> FigureData:
    """Paired bars per eigen-index: |lambda| next to |u|."""
    header, rows = load_table(path)
    check_header("slackness", header, path)
    cols = _columns(header, rows, path)
    index = _floats(cols["index"], "index", path)
    lam = [abs(v) for v in _floats(cols["lambda"], "lambda", path)]
    u = [abs(v) for v in _floats(cols["u"], "u", path)]
    return FigureData(
        kind="slackness",
        series=[Series("|lambda|", index, lam), Series("|u|", list(index), u)],
        x_label="index",
        y_label="absolute value",
        log_y=LOG_Y_DEFAULT["slackness"],
        bar=True,
        source=str(path),
    )


def dynamics_data(path: str | Path) -> FigureData:
    """Every trajectory column against the step counter."""
    header, rows = load_table(path)
    check_header("dynamics", header, path)
    cols = _columns(header, rows, path)
    steps = _floats(cols["step"], "step", path)
    series = [
        Series(name, list(steps), _floats(cols[name], name, path))
        for name in SCHEMAS["dynamics"][1:]
    ]
    return FigureData(
        kind="dynamics",
        series=series,
        x_label="step",
        y_label="value",
        log_y=LOG_Y_DEFAULT["dynamics"],
        source=str(path),
    )


def dstar_data(path: str | Path) -> FigureData:
    """One series per model: mean extrapolation mse against teacher width."""
    header, rows = load_table(path)
    check_header("dstar", header, path)
    cols = _columns(header, rows, path)
    xs = _floats(cols["dstar"], "dstar", path)
    ys = _floats(cols["mean_extrap_mse"], "mean_extrap_mse", path)
    groups: dict[str, Series] = {}
    for model, x, y in zip(cols["model"], xs, ys):
        if model not in groups:
            groups[model] = Series(model, [], [])
        groups[model].x.append(x)
        groups[model].y.append(y)
    return FigureData(
        kind="dstar",
        series=list(groups.values()),
        x_label="dstar",
        y_label="mean_extrap_mse",
        log_y=LOG_Y_DEFAULT["dstar"],
        source=str(path),
    )


LOADERS = {
    "extrapolation": extrapolation_data,
    "slackness": slackness_data,
    "dynamics": dynamics_data,
    "dstar": dstar_data,
}


def load_figure_data(kind: str, path: str | Path) -> FigureData:
    if kind not in LOADERS:
        raise ValueError(f"unknown figure kind {kind!r} (have {sorted(LOADERS)})")
    return LOADERS[kind](path)


def snapshot(data: FigureData) -> dict:
    """JSON-ready record of exactly what would be drawn.

    Floats go through 17-significant-digit formatting so the snapshot is
    byte-stable across runs and platforms that agree on the CSV bytes.
    """
    fmt = lambda v: f"{v:.17g}"
    return {
        "kind": data.kind,
        "x_label": data.x_label,
        "y_label": data.y_label,
        "log_y": data.log_y,
        "bar": data.bar,
        "series": [
            {"label": s.label, "x": [fmt(v) for v in s.x], "y": [fmt(v) for v in s.y]}
            for s in data.series
        ],
    }


def write_snapshot(data: FigureData, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(snapshot(data), f, indent=2, sort_keys=True)
        f.write("\n")


def read_snapshot(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)
