"""Matplotlib rendering for the three figure kinds."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .figures import (
    DensityField,
    FigureSpec,
    SchemaError,
    read_density_field,
    read_table,
    require_columns,
)

DPI = 150
PNG_METADATA = {"Software": "sgmplot"}


def render(spec: FigureSpec) -> Path:
    """Draw the figure described by ``spec`` and return the written PNG path."""
    spec.check_inputs_exist()
    if spec.kind == "heatmap_sequence":
        fig = _render_heatmap_sequence(spec)
    elif spec.kind == "line_overlay":
        fig = _render_line_overlay(spec)
    else:
        fig = _render_loglog_fit(spec)
    if spec.styling.get("title"):
        fig.suptitle(spec.styling["title"])
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=DPI, metadata=PNG_METADATA)
    plt.close(fig)
    return out


def _render_heatmap_sequence(spec: FigureSpec):
    fields = [read_density_field(p) for p in spec.inputs]
    dims = {f.dim for f in fields}
    if dims == {1}:
        return _heatmap_strips(spec, fields)
    if dims == {2}:
        if spec.overlay is not None:
            raise SchemaError(spec.overlay, "y", "overlay is only supported with 1D fields")
        return _heatmap_panels(spec, fields)
    mixed = next(p for p, f in zip(spec.inputs, fields) if f.dim == 2)
    raise SchemaError(mixed, "y", "inputs mix 1D and 2D density fields")


def _contrast(values: np.ndarray, spec: FigureSpec) -> np.ndarray:
    if spec.styling.get("sqrt_contrast", False):
        return np.sqrt(values)
    return values


def _heatmap_strips(spec: FigureSpec, fields: list[DensityField]):
    """1D fields side by side, one image row per styling.rows group."""
    x = fields[0].x
    for p, f in zip(spec.inputs, fields):
        if not np.array_equal(f.x, x):
            raise SchemaError(p, "x", "grid differs from the first input")
    rows = spec.styling.get("rows", 1)
    per_row = len(fields) // rows
    positions = spec.styling.get("positions")
    has_overlay = spec.overlay is not None
    fig_w = min(12.0, 0.85 * per_row + 2.5) + (2.2 if has_overlay else 0.0)
    fig, axes = plt.subplots(
        rows,
        2 if has_overlay else 1,
        figsize=(fig_w, 2.4 * rows + 0.8),
        squeeze=False,
        gridspec_kw={"width_ratios": [per_row, 2]} if has_overlay else None,
    )
    matrix = np.column_stack([_contrast(f.values, spec) for f in fields])
    vmax = matrix.max() or 1.0
    for r in range(rows):
        ax = axes[r][0]
        block = matrix[:, r * per_row : (r + 1) * per_row]
        im = ax.imshow(
            block,
            origin="lower",
            aspect="auto",
            cmap="viridis",
            vmin=0.0,
            vmax=vmax,
            extent=(-0.5, per_row - 0.5, x[0], x[-1]),
        )
        ax.set_xticks(np.arange(per_row))
        if positions is not None:
            ax.set_xticklabels([f"{t:g}" for t in positions[:per_row]])
        ax.set_ylabel(spec.styling.get("y_label", "x"))
        if r == rows - 1:
            ax.set_xlabel(
                spec.styling.get("x_label", "time" if positions is not None else "frame")
            )
    fig.colorbar(im, ax=[axes[r][0] for r in range(rows)], shrink=0.85)
    if has_overlay:
        for r in range(rows - 1):
            axes[r][1].axis("off")
        overlay_field = read_density_field(spec.overlay)
        if overlay_field.dim != 1:
            raise SchemaError(spec.overlay, "y", "overlay must be a 1D density field")
        side = axes[rows - 1][1]
        side.plot(overlay_field.values, overlay_field.x, lw=1.2)
        side.set_ylim(x[0], x[-1])
        side.set_xlabel("density")
    return fig


def _heatmap_panels(spec: FigureSpec, fields: list[DensityField]):
    """2D fields as a row of panels on a shared color scale."""
    rows = spec.styling.get("rows", 1)
    per_row = len(fields) // rows
    positions = spec.styling.get("positions")
    labels = spec.styling.get("labels")
    fig, axes = plt.subplots(
        rows,
        per_row,
        figsize=(2.6 * per_row + 1.2, 2.6 * rows + 0.6),
        squeeze=False,
    )
    panels = [_contrast(f.values, spec) for f in fields]
    vmax = max(p.max() for p in panels) or 1.0
    for i, (f, vals) in enumerate(zip(fields, panels)):
        ax = axes[i // per_row][i % per_row]
        im = ax.imshow(
            vals.T,
            origin="lower",
            cmap="viridis",
            vmin=0.0,
            vmax=vmax,
            extent=(f.x[0], f.x[-1], f.y[0], f.y[-1]),
        )
        if labels is not None:
            ax.set_title(labels[i], fontsize=9)
        elif positions is not None:
            ax.set_title(f"t = {positions[i % per_row]:g}", fontsize=9)
        if i % per_row:
            ax.set_yticklabels([])
    fig.colorbar(im, ax=axes.ravel().tolist(), shrink=0.85)
    return fig


def _line_data(spec: FigureSpec, path):
    table = read_table(path)
    names = list(table)
    if len(names) < 2:
        raise SchemaError(path, names[0] if names else "<file>", "needs at least two columns")
    x_col = spec.styling.get("x_column", names[0])
    y_col = spec.styling.get("y_column", names[1])
    require_columns(table, path, x_col, y_col)
    band_col = spec.styling.get("band_column")
    if band_col is not None:
        require_columns(table, path, band_col)
    return table[x_col], table[y_col], table[band_col] if band_col else None, x_col, y_col


def _render_line_overlay(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    log_y = spec.styling.get("log_y", False)
    labels = spec.styling.get("labels")
    x_name = y_name = None
    for i, path in enumerate(spec.inputs):
        x, y, band, x_name, y_name = _line_data(spec, path)
        keep = np.isfinite(x) & np.isfinite(y)
        if log_y:
            keep &= y > 0
        x, y = x[keep], y[keep]
        label = labels[i] if labels is not None else Path(path).stem
        (line,) = ax.plot(x, y, lw=1.4, label=label)
        if band is not None:
            b = band[keep]
            ax.fill_between(x, y - b, y + b, alpha=0.25, color=line.get_color(), lw=0)
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(spec.styling.get("x_label", x_name))
    ax.set_ylabel(spec.styling.get("y_label", y_name))
    if labels is not None or len(spec.inputs) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def fit_loglog(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log x."""
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def _render_loglog_fit(spec: FigureSpec):
    path = spec.inputs[0]
    x, y, _, x_name, y_name = _line_data(spec, path)
    if x.size < 2:
        raise SchemaError(path, x_name, "needs at least 2 rows to fit")
    for name, col in ((x_name, x), (y_name, y)):
        if np.any(~np.isfinite(col)) or np.any(col <= 0):
            raise SchemaError(path, name, "must be finite and positive for log-log axes")
    slope, intercept = fit_loglog(x, y)
    fig, ax = plt.subplots(figsize=(4.6, 3.6))
    ax.loglog(x, y, "o", ms=4, label="data")
    ax.loglog(x, np.exp(intercept) * x**slope, "-", lw=1.2, label=f"slope {slope:.3f}")
    ax.set_xlabel(spec.styling.get("x_label", x_name))
    ax.set_ylabel(spec.styling.get("y_label", y_name))
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig
