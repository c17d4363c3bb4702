"""Config-driven scenario runner and the ``sgmlab`` command line tool.

A scenario is a single JSON document naming the SDE, the data measure, the
prior, the drift perturbation, the step schedule, path counts, the seed and
the requested outputs. ``run_scenario`` executes the pipeline
deterministically and writes CSV artifacts plus a ``manifest.json`` with a
config hash, library versions and per-file checksums; re-running the same
config with the same seed reproduces every byte.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np
import scipy

from . import __version__
from .girsanov import drift_distance_curve, girsanov_log_weights, novikov_estimate, path_losses
from .integrate import (
    PathEnsemble,
    StepSchedule,
    resolve_schedule,
    simulate_forward,
    simulate_reverse,
)
from .measures import (
    Measure,
    PointCloudMeasure,
    RNG_ALGORITHM,
    make_circle_points,
    measure_from_json,
)
from .metrics import DensityField, drift_explosion_slope, kde_grid, nearest_distance
from .prior import kl_estimate, optimal_gaussian_prior
from .score import DriftPerturbation, log_density, set_num_threads
from .sde import SDE_KINDS, SdeSpec, pushforward


class ConfigError(ValueError):
    """Invalid scenario configuration; the message starts with the field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


_OUTPUT_KEYS = (
    "forward_ensemble",
    "reverse_ensemble",
    "kde",
    "final_density",
    "distances",
    "novikov",
    "drift_distance",
    "losses",
    "prior_table",
    "slope_fit",
)

_CONFIG_KEYS = {
    "name",
    "sde",
    "data",
    "prior",
    "perturbation",
    "schedule",
    "n_paths",
    "n_paths_full",
    "seed",
    "outputs",
}


def _require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(field, message)


def _as_positive_int(value, field: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), field, "must be an integer")
    _require(value > 0, field, "must be positive")
    return value


def _measure_from_config(obj, field: str) -> Measure:
    _require(isinstance(obj, dict), field, "must be a JSON object")
    if obj.get("kind") == "circle_points":
        extra = set(obj) - {"kind", "n", "radius"}
        _require(not extra, field, f"unknown keys {sorted(extra)}")
        n = obj.get("n")
        _require(isinstance(n, int) and n > 0, f"{field}.n", "must be a positive integer")
        radius = obj.get("radius", 1.0)
        _require(
            isinstance(radius, (int, float)) and radius > 0, f"{field}.radius", "must be positive"
        )
        return make_circle_points(int(n), float(radius))
    try:
        return measure_from_json(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(field, str(exc)) from exc


def _perturbation_from_config(obj, field: str) -> DriftPerturbation:
    _require(isinstance(obj, dict), field, "must be a JSON object")
    spec = dict(obj)
    if spec.get("kind") == "exact_score":
        _require("measure" in spec, f"{field}.measure", "exact_score needs a target measure")
        target = _measure_from_config(spec["measure"], f"{field}.measure")
        return DriftPerturbation.exact_score(target)
    try:
        return DriftPerturbation.from_json(spec)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(field, str(exc)) from exc


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Parsed scenario: validated objects plus the canonical raw document."""

    name: str
    spec: SdeSpec
    data: Measure
    prior: Measure | None
    perturbation: DriftPerturbation
    schedule: StepSchedule
    n_paths: int
    n_paths_full: int
    seed: int
    outputs: dict
    raw: dict

    def to_json(self) -> dict:
        return json.loads(json.dumps(self.raw))

    @property
    def config_sha256(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def _validate_output_block(obj, field: str, required: dict, optional: dict) -> dict:
    _require(isinstance(obj, dict), field, "must be a JSON object")
    extra = set(obj) - set(required) - set(optional)
    _require(not extra, field, f"unknown keys {sorted(extra)}")
    out = {}
    for key, check in required.items():
        _require(key in obj, f"{field}.{key}", "is required")
        out[key] = check(obj[key], f"{field}.{key}")
    for key, (default, check) in optional.items():
        out[key] = check(obj[key], f"{field}.{key}") if key in obj else default
    return out


def _check_times(value, field: str):
    _require(isinstance(value, list) and value, field, "must be a nonempty list of times")
    times = []
    for i, t in enumerate(value):
        _require(isinstance(t, (int, float)), f"{field}[{i}]", "must be a number")
        times.append(float(t))
    _require(all(b > a for a, b in zip(times, times[1:])), field, "must be strictly increasing")
    return times


def _check_file(value, field: str):
    if value is None:
        return None
    _require(isinstance(value, str) and value, field, "must be a file name or null")
    _require("/" not in value and "\\" not in value, field, "must be a bare file name")
    return value


def _check_bool(value, field: str):
    _require(isinstance(value, bool), field, "must be true or false")
    return value


def _check_source(value, field: str):
    _require(value in ("forward", "reverse"), field, "must be 'forward' or 'reverse'")
    return value


def _check_grid(value, field: str):
    _require(isinstance(value, list) and len(value) in (1, 2), field, "must list 1 or 2 axes")
    axes = []
    for i, axis in enumerate(value):
        _require(
            isinstance(axis, list) and len(axis) == 3, f"{field}[{i}]", "must be [min, max, count]"
        )
        lo, hi, count = axis
        _require(isinstance(lo, (int, float)), f"{field}[{i}]", "min must be a number")
        _require(isinstance(hi, (int, float)) and hi > lo, f"{field}[{i}]", "max must exceed min")
        _require(isinstance(count, int) and count >= 2, f"{field}[{i}]", "count must be >= 2")
        axes.append((float(lo), float(hi), int(count)))
    return tuple(axes)


def _check_number(value, field: str):
    _require(isinstance(value, (int, float)), field, "must be a number")
    return float(value)


def _check_positive(value, field: str):
    v = _check_number(value, field)
    _require(v > 0, field, "must be positive")
    return v


def _check_name(value, field: str):
    _require(isinstance(value, str) and value, field, "must be a nonempty string")
    return value


_KDE_BLOCK = dict(
    required={"source": _check_source, "times": _check_times, "grid": _check_grid},
    optional={
        "beta": (1000.0, _check_positive),
        "normalize": (False, _check_bool),
        "prefix": (None, _check_name),
    },
)


def _validate_outputs(obj, field: str) -> dict:
    _require(isinstance(obj, dict), field, "must be a JSON object")
    extra = set(obj) - set(_OUTPUT_KEYS)
    _require(not extra, field, f"unknown output kinds {sorted(extra)}")
    out = {}
    for key, block in obj.items():
        f = f"{field}.{key}"
        if key in ("forward_ensemble", "reverse_ensemble"):
            optional = {"file": (None, _check_file)}
            if key == "reverse_ensemble":
                optional["girsanov"] = (False, _check_bool)
            out[key] = _validate_output_block(
                block, f, {"record_times": _check_times}, optional
            )
        elif key == "kde":
            blocks = block if isinstance(block, list) else [block]
            parsed = []
            for i, b in enumerate(blocks):
                sub = f"{f}[{i}]" if isinstance(block, list) else f
                parsed.append(_validate_output_block(b, sub, **_KDE_BLOCK))
                if parsed[-1]["prefix"] is None:
                    parsed[-1]["prefix"] = f"kde_{parsed[-1]['source']}"
            names = [b["prefix"] for b in parsed]
            _require(len(set(names)) == len(names), f, "kde prefixes must be distinct")
            out[key] = parsed
        elif key == "final_density":
            out[key] = _validate_output_block(
                block,
                f,
                {"grid": _check_grid},
                {"file": ("final_density.csv", _check_file)},
            )
        elif key == "distances":
            out[key] = _validate_output_block(
                block,
                f,
                {"time": _check_number},
                {"source": ("reverse", _check_source), "file": ("distances.csv", _check_file)},
            )
        elif key == "novikov":
            out[key] = _validate_output_block(
                block,
                f,
                {"times": _check_times},
                {"file": ("novikov.csv", _check_file)},
            )
        elif key == "drift_distance":
            out[key] = _validate_output_block(
                block,
                f,
                {"times": _check_times},
                {"file": ("drift_distance.csv", _check_file)},
            )
        elif key == "losses":
            out[key] = _validate_output_block(
                block,
                f,
                {},
                {"file": ("losses.csv", _check_file), "weight_fn": ("uniform", _check_name)},
            )
        elif key == "prior_table":
            out[key] = _validate_output_block(
                block,
                f,
                {"horizons": _check_times},
                {"file": ("prior_table.csv", _check_file)},
            )
        elif key == "slope_fit":
            out[key] = _validate_output_block(
                block,
                f,
                {"t_grid": _check_times, "n": lambda v, ff: _as_positive_int(v, ff)},
                {"file": ("slope_fit.csv", _check_file)},
            )
    return out


def parse_config(doc) -> ScenarioConfig:
    """Validate a scenario document; raises ConfigError naming the bad field."""
    _require(isinstance(doc, dict), "config", "must be a JSON object")
    extra = set(doc) - _CONFIG_KEYS
    _require(not extra, "config", f"unknown keys {sorted(extra)}")
    for key in ("name", "sde", "data", "schedule", "n_paths", "seed", "outputs"):
        _require(key in doc, key, "is required")
    name = _check_name(doc["name"], "name")

    sde_obj = doc["sde"]
    _require(isinstance(sde_obj, dict), "sde", "must be a JSON object")
    extra = set(sde_obj) - {"sde", "T"}
    _require(not extra, "sde", f"unknown keys {sorted(extra)}")
    kind = sde_obj.get("sde")
    _require(kind in SDE_KINDS, "sde.sde", f"must be one of {list(SDE_KINDS)}")
    T = _check_positive(sde_obj.get("T", 1.0), "sde.T")

    data = _measure_from_config(doc["data"], "data")
    try:
        spec = SdeSpec(kind, data.dim, T)
    except ValueError as exc:
        raise ConfigError("sde", str(exc)) from exc

    prior_obj = doc.get("prior")
    if prior_obj is None:
        prior = None
    elif prior_obj == "optimal":
        _require(
            spec.kind == "brownian",
            "prior",
            "'optimal' uses the Brownian moment match and needs Brownian dynamics",
        )
        prior = optimal_gaussian_prior(data, T).as_measure()
    elif prior_obj == "pushforward":
        prior = pushforward(spec, data, T)
    elif isinstance(prior_obj, str):
        raise ConfigError("prior", "string priors are 'optimal' or 'pushforward'")
    else:
        prior = _measure_from_config(prior_obj, "prior")
        _require(
            prior.dim == spec.state_dim,
            "prior",
            f"dim {prior.dim} does not match the state dim {spec.state_dim}",
        )

    perturbation = _perturbation_from_config(doc.get("perturbation", {"kind": "none"}), "perturbation")
    if perturbation.kind == "constant":
        _require(
            len(perturbation.vector) == spec.state_dim,
            "perturbation.vector",
            f"must have length {spec.state_dim}",
        )
    if perturbation.kind == "exact_score":
        _require(
            perturbation.target.dim == data.dim,
            "perturbation.measure",
            f"target dim {perturbation.target.dim} does not match data dim {data.dim}",
        )

    try:
        schedule = resolve_schedule(doc["schedule"])
    except (ValueError, TypeError) as exc:
        raise ConfigError("schedule", str(exc)) from exc
    _require(
        abs(schedule.span - T) <= 1e-12,
        "schedule",
        f"span {schedule.span!r} must equal the terminal time {T!r}",
    )

    n_paths = _as_positive_int(doc["n_paths"], "n_paths")
    n_full = doc.get("n_paths_full", n_paths)
    n_full = _as_positive_int(n_full, "n_paths_full")
    seed = doc["seed"]
    _require(isinstance(seed, int) and not isinstance(seed, bool), "seed", "must be an integer")
    _require(seed >= 0, "seed", "must be nonnegative")

    outputs = _validate_outputs(doc["outputs"], "outputs")

    _require(
        prior is not None or "reverse_ensemble" not in outputs,
        "prior",
        "required for reverse ensembles",
    )
    for block in outputs.get("kde", []):
        for t in block["times"]:
            _require_grid_time(schedule, t, "outputs.kde.times")
        _require(
            len(block["grid"]) == spec.state_dim,
            "outputs.kde.grid",
            f"must have {spec.state_dim} axes to match the state dimension",
        )
        src_key = f"{block['source']}_ensemble"
        _require(
            src_key in outputs, "outputs.kde.source", f"needs outputs.{src_key} to be requested"
        )
        missing = [t for t in block["times"] if t not in outputs[src_key]["record_times"]]
        _require(
            not missing,
            "outputs.kde.times",
            f"{missing} not among outputs.{src_key}.record_times",
        )
    if "final_density" in outputs:
        _require(
            len(outputs["final_density"]["grid"]) == spec.state_dim,
            "outputs.final_density.grid",
            f"must have {spec.state_dim} axes to match the state dimension",
        )
    for key in ("forward_ensemble", "reverse_ensemble"):
        if key in outputs:
            for t in outputs[key]["record_times"]:
                _require_grid_time(schedule, t, f"outputs.{key}.record_times")
    for key, src in (("novikov", "reverse_ensemble"),
                     ("drift_distance", "reverse_ensemble"), ("losses", "forward_ensemble")):
        if key in outputs:
            _require(src in outputs, f"outputs.{key}", f"needs outputs.{src} to be requested")
    if "distances" in outputs:
        _require(
            isinstance(data, PointCloudMeasure), "outputs.distances", "data must be a point cloud"
        )
        src_key = f"{outputs['distances']['source']}_ensemble"
        _require(
            src_key in outputs, "outputs.distances", f"needs outputs.{src_key} to be requested"
        )
        _require(
            outputs["distances"]["time"] in outputs[src_key]["record_times"],
            "outputs.distances.time",
            f"must be among outputs.{src_key}.record_times",
        )
    for key in ("novikov", "drift_distance"):
        if key in outputs:
            missing = [
                t for t in outputs[key]["times"]
                if t not in outputs["reverse_ensemble"]["record_times"]
            ]
            _require(
                not missing,
                f"outputs.{key}.times",
                f"{missing} not among outputs.reverse_ensemble.record_times",
            )
    if "prior_table" in outputs:
        _require(data.dim == 1, "outputs.prior_table", "only defined for 1D data")
    if "slope_fit" in outputs:
        _require(spec.kind == "brownian", "outputs.slope_fit", "needs Brownian dynamics")
        _require(
            isinstance(data, PointCloudMeasure), "outputs.slope_fit", "data must be a point cloud"
        )
        grid = outputs["slope_fit"]["t_grid"]
        _require(len(grid) >= 4, "outputs.slope_fit.t_grid", "needs at least 4 points")
        _require(
            0.0 < grid[0] and grid[-1] <= T, "outputs.slope_fit.t_grid", "must lie in (0, T]"
        )

    raw = {
        "name": name,
        "sde": {"sde": kind, "T": T},
        "data": json.loads(json.dumps(doc["data"])),
        "perturbation": json.loads(json.dumps(doc.get("perturbation", {"kind": "none"}))),
        "schedule": doc["schedule"] if isinstance(doc["schedule"], str) else schedule.to_json(),
        "n_paths": n_paths,
        "n_paths_full": n_full,
        "seed": int(seed),
        "outputs": json.loads(json.dumps(doc["outputs"])),
    }
    if prior_obj is not None:
        raw["prior"] = json.loads(json.dumps(prior_obj))
    return ScenarioConfig(
        name, spec, data, prior, perturbation, schedule, n_paths, n_full, int(seed), outputs, raw
    )


def _require_grid_time(schedule: StepSchedule, t: float, field: str) -> None:
    try:
        schedule.grid_index(t)
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from exc


def with_overrides(config: ScenarioConfig, seed: int | None = None) -> ScenarioConfig:
    """Same scenario with a replaced seed (re-parses the raw document)."""
    if seed is None:
        return config
    raw = config.to_json()
    raw["seed"] = int(seed)
    return parse_config(raw)


def _sha256_file(path: str) -> tuple[str, int]:
    h = hashlib.sha256()
    size = 0
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
            size += len(chunk)
    return h.hexdigest(), size


def _fmt_cell(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return repr(int(v))
    return repr(float(v))


def _write_rows(path: str, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(_fmt_cell(v) for v in row) for row in rows)
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode())


class _Artifacts:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.entries: list[dict] = []

    def register(self, file_name: str, kind: str, role: str, **extra) -> None:
        digest, size = _sha256_file(os.path.join(self.out_dir, file_name))
        entry = {"path": file_name, "kind": kind, "role": role, "sha256": digest, "bytes": size}
        entry.update(extra)
        self.entries.append(entry)

    def path(self, file_name: str) -> str:
        return os.path.join(self.out_dir, file_name)


def run_scenario(
    config: ScenarioConfig, out_dir: str, full: bool = False, threads: int | None = None
) -> dict:
    """Execute a scenario and write its artifacts; returns the manifest dict.

    Every requested output lands in ``out_dir`` together with
    ``manifest.json``. ``full`` switches the path count to ``n_paths_full``.
    """
    if threads is not None:
        set_num_threads(threads)
    os.makedirs(out_dir, exist_ok=True)
    n = config.n_paths_full if full else config.n_paths
    art = _Artifacts(out_dir)
    summary: dict = {}
    outputs = config.outputs
    ensembles: dict[str, PathEnsemble] = {}

    if "forward_ensemble" in outputs:
        block = outputs["forward_ensemble"]
        ensembles["forward"] = simulate_forward(
            config.spec, config.data, config.schedule, n, config.seed, block["record_times"]
        )
        if block["file"]:
            ensembles["forward"].to_csv(art.path(block["file"]))
            art.register(block["file"], "ensemble", "forward")

    if "reverse_ensemble" in outputs:
        block = outputs["reverse_ensemble"]
        ensembles["reverse"] = simulate_reverse(
            config.spec,
            config.data,
            config.perturbation,
            config.prior,
            config.schedule,
            n,
            config.seed,
            block["record_times"],
            record_girsanov=block["girsanov"],
        )
        if block["file"]:
            ensembles["reverse"].to_csv(art.path(block["file"]))
            art.register(block["file"], "ensemble", "reverse")

    for block in outputs.get("kde", []):
        ens = ensembles[block["source"]]
        for i, t in enumerate(block["times"]):
            field = kde_grid(
                ens.states_at(t), block["beta"], block["grid"], normalize=block["normalize"]
            )
            file_name = f"{block['prefix']}_{i:03d}.csv"
            field.to_csv(art.path(file_name))
            art.register(file_name, "density_field", block["prefix"], time=t)

    if "final_density" in outputs:
        block = outputs["final_density"]
        smoothed = pushforward(config.spec, config.data, config.schedule.last_dt)
        field = DensityField(block["grid"], np.zeros(tuple(c for _, _, c in block["grid"])))
        vals = np.exp(log_density(smoothed, field.grid_points()))
        field = DensityField(block["grid"], vals.reshape(field.values.shape))
        field.to_csv(art.path(block["file"]))
        art.register(block["file"], "density_field", "final_density", time=config.schedule.last_dt)

    if "distances" in outputs:
        block = outputs["distances"]
        states = ensembles[block["source"]].states_at(block["time"])
        if config.spec.kind == "cld":
            states = states[:, : config.spec.data_dim]
        dists = nearest_distance(states, config.data)
        _write_rows(
            art.path(block["file"]),
            "path_id,distance",
            ((i, d) for i, d in enumerate(dists)),
        )
        art.register(block["file"], "distances", "distances", time=block["time"])
        summary["distances"] = {
            "mean": float(dists.mean()),
            "max": float(dists.max()),
            "frac_within_0.05": float((dists <= 0.05).mean()),
        }

    if "novikov" in outputs or "drift_distance" in outputs:
        ens = ensembles["reverse"]
        if "novikov" in outputs:
            block = outputs["novikov"]
            acc = girsanov_log_weights(ens, config.spec, config.data, config.perturbation)
            rows = []
            for t in block["times"]:
                est = novikov_estimate(
                    ens, config.spec, config.data, config.perturbation, t, accumulator=acc
                )
                rows.append(
                    (t, est.estimate, est.std_error, float(est.log_scale), est.log_mean,
                     est.max_log_sample)
                )
            _write_rows(
                art.path(block["file"]),
                "time,estimate,std_error,log_scale,log_mean,max_log_sample",
                rows,
            )
            art.register(block["file"], "novikov", "novikov")
            summary["novikov"] = {"log_mean_last": rows[-1][4]}
        if "drift_distance" in outputs:
            block = outputs["drift_distance"]
            curve = drift_distance_curve(
                ens, config.spec, config.data, config.perturbation, times=block["times"]
            )
            _write_rows(art.path(block["file"]), "time,mean_distance", curve)
            art.register(block["file"], "drift_distance", "drift_distance")
            summary["drift_distance"] = {
                "first": float(curve[0, 1]),
                "last": float(curve[-1, 1]),
            }

    if "losses" in outputs:
        block = outputs["losses"]
        est = path_losses(
            ensembles["forward"],
            config.spec,
            config.data,
            config.perturbation,
            weight_fn_id=block["weight_fn"],
        )
        _write_rows(
            art.path(block["file"]),
            "l2,l_exp,log_scale,log_mean_exp,max_log_sample",
            [(est.l2, est.l_exp, float(est.log_scale), est.log_mean_exp, est.max_log_sample)],
        )
        art.register(block["file"], "losses", "losses")
        summary["losses"] = {"l2": est.l2, "log_mean_exp": est.log_mean_exp}

    if "prior_table" in outputs:
        block = outputs["prior_table"]
        rows = []
        for T in block["horizons"]:
            fit = optimal_gaussian_prior(config.data, T, isotropic=True)
            horizon_spec = SdeSpec("brownian", 1, T)
            p_t = pushforward(horizon_spec, config.data, T)
            kl = kl_estimate(p_t, fit.as_measure(), "quadrature_1d")
            rows.append((T, fit.mean[0], fit.isotropic_variance, fit.kl_bound_value, kl))
        _write_rows(
            art.path(block["file"]), "T,mean,variance,kl_bound,kl_quadrature", rows
        )
        art.register(block["file"], "prior_table", "prior_table")

    if "slope_fit" in outputs:
        block = outputs["slope_fit"]
        slope, intercept, curve = drift_explosion_slope(
            config.spec, config.data, block["t_grid"], block["n"], config.seed, with_curve=True
        )
        _write_rows(art.path(block["file"]), "t,mean_norm", curve)
        art.register(block["file"], "slope_fit", "slope_fit")
        summary["slope_fit"] = {"slope": slope, "intercept": intercept}

    manifest = {
        "name": config.name,
        "config_sha256": config.config_sha256,
        "config": config.to_json(),
        "seed": config.seed,
        "n_paths": n,
        "full": bool(full),
        "rng": RNG_ALGORITHM,
        "versions": {
            "sgmlab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "files": art.entries,
        "summary": summary,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def preset_names() -> list[str]:
    root = resources.files("sgmlab").joinpath("scenarios")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("sgmlab").joinpath("scenarios", f"{name}.json")
    if not path.is_file():
        raise ConfigError("config", f"unknown preset {name!r}; known: {preset_names()}")
    return json.loads(path.read_text())


def _load_config_argument(arg: str) -> dict:
    if os.path.isfile(arg):
        try:
            with open(arg) as fh:
                return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{arg} is not valid JSON: {exc}") from exc
    if arg.endswith(".json"):
        raise ConfigError("config", f"no such file: {arg}")
    return load_preset(arg)


def _cmd_run(args) -> int:
    doc = _load_config_argument(args.config)
    config = parse_config(doc)
    if args.seed is not None:
        config = with_overrides(config, seed=args.seed)
    out_root = args.out or os.environ.get("SGMLAB_OUT") or "out"
    out_dir = os.path.join(out_root, config.name)
    try:
        manifest = run_scenario(config, out_dir, full=args.full, threads=args.threads)
    except ConfigError:
        raise
    except Exception as exc:
        print(f"numerical failure in scenario {config.name!r}: {exc}", file=sys.stderr)
        return 3
    print(f"{config.name}: wrote {len(manifest['files'])} files to {out_dir}")
    return 0


def _cmd_prior_fit(args) -> int:
    with open(args.measure) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("measure", f"{args.measure} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict) and "data" in doc and "kind" not in doc:
        doc = doc["data"]
    measure = _measure_from_config(doc, "measure")
    try:
        fit = optimal_gaussian_prior(measure, args.T, isotropic=args.isotropic)
    except Exception as exc:
        print(f"numerical failure in prior fit: {exc}", file=sys.stderr)
        return 3
    out = {
        "mean": fit.mean.tolist(),
        "T": fit.horizon,
        "kl_bound": fit.kl_bound_value,
        "covariance": None if fit.covariance is None else fit.covariance.tolist(),
        "isotropic_variance": fit.isotropic_variance,
    }
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    print()
    return 0


def _cmd_list_presets(_args) -> int:
    for name in preset_names():
        doc = load_preset(name)
        sde = doc.get("sde", {})
        print(
            f"{name}: sde={sde.get('sde')} T={sde.get('T')} "
            f"n_paths={doc.get('n_paths')} (full {doc.get('n_paths_full')}) seed={doc.get('seed')}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgmlab", description="Run score-based generative modeling scenarios."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario config or preset")
    run_p.add_argument("config", help="path to a scenario JSON file, or a preset name")
    run_p.add_argument("--out", default=None, help="output root (default $SGMLAB_OUT or ./out)")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--threads", type=int, default=None, help="worker thread cap")
    run_p.add_argument("--full", action="store_true", help="use n_paths_full instead of n_paths")
    run_p.set_defaults(func=_cmd_run)

    fit_p = sub.add_parser("prior-fit", help="print the moment-matched Gaussian prior")
    fit_p.add_argument("measure", help="JSON file holding a measure (or a scenario config)")
    fit_p.add_argument("--T", type=float, required=True, help="time horizon")
    fit_p.add_argument("--isotropic", action="store_true", help="fit an isotropic prior")
    fit_p.set_defaults(func=_cmd_prior_fit)

    list_p = sub.add_parser("list-presets", help="list packaged scenario presets")
    list_p.set_defaults(func=_cmd_list_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
