"""Build default figure specs from a scenario manifest.

A manifest lists its artifacts under "files" with a kind, a role, and for
density fields the snapshot time. Density roles become heat-map sequences
(two 1D roles stack into one figure, with the final-density profile as an
overlay when present), the Novikov table becomes a log-mean line, the drift
distance curve a log-scale line, and a slope-fit curve a log-log fit panel.
Ensembles, per-path distance snapshots, loss tables, and prior tables have
no default figure.
"""

from __future__ import annotations

import json
from pathlib import Path

from .figures import FigureSpec
from .render import render


def _density_groups(entries, base: Path):
    groups: dict[str, list[tuple[float | None, Path]]] = {}
    final = None
    for entry in entries:
        if entry.get("kind") != "density_field":
            continue
        path = base / entry["path"]
        if entry.get("role") == "final_density":
            final = path
            continue
        groups.setdefault(entry.get("role", "density"), []).append(
            (entry.get("time"), path)
        )
    for role, members in groups.items():
        if all(t is not None for t, _ in members):
            members.sort(key=lambda tp: tp[0])
    return groups, final


def _peek_dim(path: Path) -> int:
    with open(path, "r") as fh:
        header = fh.readline().strip()
    return 2 if header == "x,y,value" else 1


def _positions(groups_times) -> list | None:
    first = groups_times[0]
    if any(t is None for t in first):
        return None
    if any(b <= a for a, b in zip(first, first[1:])):
        return None
    for other in groups_times[1:]:
        if list(other) != list(first):
            return None
    return list(first)


def figure_specs_from_manifest(manifest_path, out_dir) -> list[FigureSpec]:
    """Default figures for every renderable artifact in the manifest."""
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    if not isinstance(doc, dict) or not isinstance(doc.get("files"), list):
        raise ValueError(f"{manifest_path}: not a scenario manifest (no files list)")
    base = manifest_path.parent
    out = Path(out_dir)
    entries = doc["files"]
    specs = []

    groups, final = _density_groups(entries, base)
    if groups:
        dims = {role: _peek_dim(members[0][1]) for role, members in groups.items()}
        if set(dims.values()) == {1} and len(groups) <= 2:
            ordered = list(groups.values())
            inputs = [p for members in ordered for _, p in members]
            styling = {"rows": len(ordered)}
            pos = _positions([[t for t, _ in members] for members in ordered])
            if pos is not None:
                styling["positions"] = pos
            specs.append(
                FigureSpec(
                    kind="heatmap_sequence",
                    inputs=tuple(inputs),
                    output=out / "densities.png",
                    overlay=final,
                    styling=styling,
                )
            )
        else:
            for role, members in groups.items():
                styling = {}
                pos = _positions([[t for t, _ in members]])
                if pos is not None:
                    styling["positions"] = pos
                specs.append(
                    FigureSpec(
                        kind="heatmap_sequence",
                        inputs=tuple(p for _, p in members),
                        output=out / f"{role}.png",
                        styling=styling,
                    )
                )

    for entry in entries:
        kind = entry.get("kind")
        path = base / entry["path"]
        if kind == "novikov":
            specs.append(
                FigureSpec(
                    kind="line_overlay",
                    inputs=(path,),
                    output=out / "novikov.png",
                    styling={
                        "x_column": "time",
                        "y_column": "log_mean",
                        "x_label": "t",
                        "y_label": "log Novikov mean",
                    },
                )
            )
        elif kind == "drift_distance":
            specs.append(
                FigureSpec(
                    kind="line_overlay",
                    inputs=(path,),
                    output=out / "drift_distance.png",
                    styling={
                        "x_column": "time",
                        "y_column": "mean_distance",
                        "log_y": True,
                        "x_label": "t",
                        "y_label": "mean distance between drifts",
                    },
                )
            )
        elif kind == "slope_fit":
            specs.append(
                FigureSpec(
                    kind="loglog_fit",
                    inputs=(path,),
                    output=out / "slope_fit.png",
                    styling={"x_column": "t", "y_column": "mean_norm"},
                )
            )

    if not specs:
        raise ValueError(f"{manifest_path}: manifest lists no artifacts sgmplot can render")
    return specs


def render_manifest(manifest_path, out_dir) -> list[Path]:
    """Render every default figure for a manifest; returns the PNG paths."""
    return [render(spec) for spec in figure_specs_from_manifest(manifest_path, out_dir)]
