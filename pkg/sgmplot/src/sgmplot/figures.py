"""Figure specifications and the CSV readers behind them.

The readers accept only the documented artifact schemas: density fields as
``x,value`` or ``x,y,value`` rows on a full lattice, and plain numeric
tables with a header row. Anything else raises SchemaError pointing at the
file and the column that broke the contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("heatmap_sequence", "line_overlay", "loglog_fit")

STYLE_KEYS = {
    "sqrt_contrast": bool,
    "x_label": str,
    "y_label": str,
    "title": str,
    "log_y": bool,
    "rows": int,
    "labels": list,
    "positions": list,
    "x_column": str,
    "y_column": str,
    "band_column": str,
}


class SchemaError(ValueError):
    """A CSV does not match what the figure kind expects."""

    def __init__(self, path, column: str, message: str):
        super().__init__(f"{path}: column '{column}': {message}")
        self.path = str(path)
        self.column = column


def read_table(path) -> dict[str, np.ndarray]:
    """Parse a headed CSV into a dict of float columns, in header order."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(path, "<file>", f"cannot read ({exc})") from exc
    lines = [ln for ln in text.splitlines() if ln]
    if not lines:
        raise SchemaError(path, "<file>", "file is empty")
    names = lines[0].split(",")
    if len(set(names)) != len(names):
        raise SchemaError(path, names[0], "duplicate column names in header")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(names):
            raise SchemaError(
                path, names[min(len(parts), len(names)) - 1],
                f"row {i} has {len(parts)} fields, header has {len(names)}",
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise SchemaError(path, names[0], f"row {i} is not numeric: {ln!r}") from exc
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(names)))
    return {name: data[:, j] for j, name in enumerate(names)}


def require_columns(table: dict, path, *columns: str) -> None:
    for col in columns:
        if col not in table:
            raise SchemaError(
                path, col, f"missing (file has {', '.join(table)})"
            )


@dataclass(frozen=True)
class DensityField:
    """Values on a 1D or 2D lattice recovered from x[,y],value rows."""

    x: np.ndarray
    y: np.ndarray | None
    values: np.ndarray

    @property
    def dim(self) -> int:
        return 1 if self.y is None else 2


def read_density_field(path) -> DensityField:
    """Read a density CSV, rebuilding the lattice it was written from."""
    table = read_table(path)
    names = list(table)
    if names == ["x", "value"]:
        x, v = table["x"], table["value"]
        if x.size < 2 or np.any(np.diff(x) <= 0):
            raise SchemaError(path, "x", "must be strictly increasing with at least 2 rows")
        _check_density_values(path, v)
        return DensityField(x, None, v)
    if names == ["x", "y", "value"]:
        x, y, v = table["x"], table["y"], table["value"]
        ux, uy = np.unique(x), np.unique(y)
        nx, ny = ux.size, uy.size
        if nx * ny != x.size:
            raise SchemaError(path, "x", f"{x.size} rows do not fill a {nx} x {ny} lattice")
        if not np.array_equal(x, np.repeat(ux, ny)):
            raise SchemaError(path, "x", "rows must iterate x slowest over a full lattice")
        if not np.array_equal(y, np.tile(uy, nx)):
            raise SchemaError(path, "y", "rows must iterate y fastest over a full lattice")
        _check_density_values(path, v)
        return DensityField(ux, uy, v.reshape(nx, ny))
    for col in ("x", "value"):
        if col not in table:
            raise SchemaError(path, col, f"missing (file has {', '.join(names)})")
    extra = [n for n in names if n not in ("x", "y", "value")]
    raise SchemaError(path, extra[0], "not part of a density field schema")


def _check_density_values(path, v: np.ndarray) -> None:
    if not np.all(np.isfinite(v)):
        raise SchemaError(path, "value", "contains non-finite entries")
    if v.min() < 0.0:
        raise SchemaError(path, "value", "contains negative entries")


@dataclass(frozen=True)
class FigureSpec:
    """One figure: input CSVs, how to draw them, and where the PNG goes."""

    kind: str
    inputs: tuple
    output: Path
    overlay: Path | None = None
    styling: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        inputs = tuple(Path(p) for p in self.inputs)
        if not inputs:
            raise ValueError("inputs must name at least one CSV")
        if self.kind == "loglog_fit" and len(inputs) != 1:
            raise ValueError("loglog_fit takes exactly one input CSV")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "output", Path(self.output))
        if self.overlay is not None:
            object.__setattr__(self, "overlay", Path(self.overlay))
        styling = dict(self.styling)
        for key, value in styling.items():
            if key not in STYLE_KEYS:
                raise ValueError(f"unknown styling key {key!r}")
            if not isinstance(value, STYLE_KEYS[key]) or isinstance(value, bool) != (
                STYLE_KEYS[key] is bool
            ):
                raise ValueError(f"styling.{key} must be {STYLE_KEYS[key].__name__}")
        rows = styling.get("rows", 1)
        if rows < 1:
            raise ValueError("styling.rows must be at least 1")
        if len(inputs) % rows:
            raise ValueError(f"styling.rows = {rows} does not divide {len(inputs)} inputs")
        if "labels" in styling and len(styling["labels"]) != len(inputs):
            raise ValueError(
                f"styling.labels has {len(styling['labels'])} entries for {len(inputs)} inputs"
            )
        per_row = len(inputs) // rows
        if "positions" in styling and len(styling["positions"]) != per_row:
            raise ValueError(
                f"styling.positions has {len(styling['positions'])} entries "
                f"for {per_row} columns"
            )
        if "positions" in styling:
            pos = [float(p) for p in styling["positions"]]
            if any(b <= a for a, b in zip(pos, pos[1:])):
                raise ValueError("styling.positions must be strictly increasing")
            styling["positions"] = pos
        object.__setattr__(self, "styling", styling)

    def check_inputs_exist(self) -> None:
        for p in list(self.inputs) + ([self.overlay] if self.overlay else []):
            if not Path(p).is_file():
                raise SchemaError(p, "<file>", "input CSV does not exist")


def parse_spec(doc: dict, base_dir) -> FigureSpec:
    """Build a FigureSpec from a JSON document, resolving paths against base_dir."""
    if not isinstance(doc, dict):
        raise ValueError("figure spec must be a JSON object")
    unknown = set(doc) - {"kind", "inputs", "output", "overlay", "styling"}
    if unknown:
        raise ValueError(f"unknown figure spec fields: {', '.join(sorted(unknown))}")
    for key in ("kind", "inputs", "output"):
        if key not in doc:
            raise ValueError(f"figure spec needs field {key!r}")
    if not isinstance(doc["inputs"], list) or not all(
        isinstance(p, str) for p in doc["inputs"]
    ):
        raise ValueError("inputs must be a list of paths")
    base = Path(base_dir)
    overlay = doc.get("overlay")
    styling = doc.get("styling", {})
    if not isinstance(styling, dict):
        raise ValueError("styling must be an object")
    return FigureSpec(
        kind=doc["kind"],
        inputs=tuple(base / p for p in doc["inputs"]),
        output=base / doc["output"],
        overlay=base / overlay if overlay else None,
        styling=styling,
    )


def load_spec(path) -> FigureSpec:
    """Read a figure spec JSON file; relative paths resolve against its directory."""
    p = Path(path)
    doc = json.loads(p.read_text())
    return parse_spec(doc, p.parent)
