"""Euler-Maruyama path ensembles over piecewise-constant step schedules.

Determinism contract: a scenario seed s derives independent PCG64 streams via
SeedSequence([s, tag]) with fixed tags (forward init 1, forward noise 2,
reverse init 3, reverse noise 4). Each step consumes exactly one standard
normal block of shape (n_paths, noise_dim), step-major, so identical
(spec, measure, perturbation, prior, schedule, n, seed) reproduce ensembles
bit for bit, which is also how Girsanov replays recover per-step quantities
without storing them.

Recording: ensembles store post-step states at requested grid times (time 0
is the initial draw). Record times must sit on the schedule grid, they are
mapped to integer step indices up front and never matched by float equality
inside the loop.
"""
from __future__ import annotations

from dataclasses import dataclass
import gzip
import io
import json
import math

import numpy as np

from .measures import Measure, measure_from_json, measure_to_json
from .score import DriftPerturbation, perturbed_score
from .sde import SdeSpec

SEED_TAG_FORWARD_INIT = 1
SEED_TAG_FORWARD_NOISE = 2
SEED_TAG_REVERSE_INIT = 3
SEED_TAG_REVERSE_NOISE = 4

_SEGMENT_TOL = 1e-12
_GRID_TOL = 1e-9

SCHEDULE_PRESETS: dict[str, tuple[tuple[float, float, float], ...]] = {
    # 2000 uniform steps on [0, 1].
    "uniform_2000": ((0.0, 1.0, 1.0 / 2000.0),),
    # Three segments refining toward t = 1, a thousand steps each.
    "tail_refined": (
        (0.0, 0.9, 0.9 / 1000.0),
        (0.9, 0.99, 0.09 / 1000.0),
        (0.99, 1.0, 1.0e-5),
    ),
    # Same shape with decimal-friendly steps so times like 0.25 and 0.5
    # land exactly on the grid.
    "tail_refined_decimal": (
        (0.0, 0.9, 5.0e-4),
        (0.9, 0.99, 9.0e-5),
        (0.99, 1.0, 1.0e-5),
    ),
}


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise-constant step sizes: segments of (t_start, t_end, dt) covering [0, span].

    Segments must be contiguous, start at 0, have positive dt, and each
    segment length must be an integer multiple of its dt within 1e-12.
    """

    segments: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        segs = tuple((float(a), float(b), float(dt)) for a, b, dt in self.segments)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("schedule must start at t = 0")
        prev_end = 0.0
        counts = []
        for i, (a, b, dt) in enumerate(segs):
            if abs(a - prev_end) > _SEGMENT_TOL:
                raise ValueError(f"segment {i} starts at {a!r}, expected {prev_end!r}")
            if not (b > a):
                raise ValueError(f"segment {i} must have t_end > t_start")
            if not (dt > 0.0):
                raise ValueError(f"segment {i} must have dt > 0")
            k = round((b - a) / dt)
            if k < 1 or abs(k * dt - (b - a)) > _SEGMENT_TOL:
                raise ValueError(
                    f"segment {i} length {b - a!r} is not an integer multiple of dt={dt!r}"
                )
            counts.append(k)
            prev_end = b
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_counts", tuple(counts))

    @staticmethod
    def preset(name: str) -> "StepSchedule":
        if name not in SCHEDULE_PRESETS:
            raise ValueError(f"unknown schedule preset {name!r}; known: {sorted(SCHEDULE_PRESETS)}")
        return StepSchedule(SCHEDULE_PRESETS[name])

    @property
    def span(self) -> float:
        return self.segments[-1][1]

    @property
    def n_steps(self) -> int:
        return sum(self._counts)

    @property
    def last_dt(self) -> float:
        return self.segments[-1][2]

    def steps(self):
        """Yield (t_left, dt) for every step, in order."""
        for (a, _b, dt), k in zip(self.segments, self._counts):
            for i in range(k):
                yield a + i * dt, dt

    def grid_index(self, t: float) -> int:
        """Global index of grid time ``t`` (0 = start), or ValueError if off-grid."""
        if t < -_GRID_TOL or t > self.span + _GRID_TOL:
            raise ValueError(f"time {t!r} outside schedule span [0, {self.span}]")
        base = 0
        for (a, b, dt), k in zip(self.segments, self._counts):
            if t <= b + _GRID_TOL:
                idx = round((t - a) / dt)
                idx = min(max(idx, 0), k)
                if abs((a + idx * dt) - t) > _GRID_TOL:
                    raise ValueError(f"time {t!r} is not on the schedule grid")
                return base + idx
            base += k
        raise ValueError(f"time {t!r} is not on the schedule grid")

    def to_json(self) -> list[list[float]]:
        return [list(s) for s in self.segments]


def resolve_schedule(obj) -> StepSchedule:
    """Accept a StepSchedule, a preset name, or a list of [t0, t1, dt] rows."""
    if isinstance(obj, StepSchedule):
        return obj
    if isinstance(obj, str):
        return StepSchedule.preset(obj)
    return StepSchedule(tuple(tuple(row) for row in obj))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """States of n paths at recorded times: ``states`` has shape (m, n, state_dim).

    ``girsanov_ito`` and ``girsanov_quad`` (each (m, n)) hold the cumulative
    Ito integral of sigma'e against the driving noise and the cumulative
    quadratic variation integral of |sigma'e|^2, at the recorded times, when
    the ensemble was simulated with ``record_girsanov=True``.
    """

    record_times: np.ndarray
    states: np.ndarray
    seed: int
    direction: str
    provenance: dict
    girsanov_ito: np.ndarray | None = None
    girsanov_quad: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.states.shape[1]

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    def states_at(self, t: float) -> np.ndarray:
        idx = _time_index(self.record_times, t)
        return self.states[idx]

    def to_csv(self, path) -> None:
        """Write rows path_id,time,x_0..x_{d-1}; gzip when the path ends in .gz."""
        d = self.state_dim
        header = "path_id,time," + ",".join(f"x_{i}" for i in range(d))
        raw = io.StringIO()
        raw.write(header + "\n")
        for ti, t in enumerate(self.record_times):
            block = self.states[ti]
            t_txt = repr(float(t))
            for pid in range(block.shape[0]):
                coords = ",".join(repr(float(v)) for v in block[pid])
                raw.write(f"{pid},{t_txt},{coords}\n")
        data = raw.getvalue().encode()
        if str(path).endswith(".gz"):
            # fileobj + fixed mtime keep the gzip header free of name and
            # timestamp, so identical ensembles compress to identical bytes
            with open(path, "wb") as raw_fh:
                with gzip.GzipFile(filename="", fileobj=raw_fh, mode="wb", mtime=0) as fh:
                    fh.write(data)
        else:
            with open(path, "wb") as fh:
                fh.write(data)


def _time_index(times: np.ndarray, t: float) -> int:
    hits = np.nonzero(np.abs(times - t) <= _GRID_TOL)[0]
    if hits.size != 1:
        raise ValueError(f"time {t!r} is not among the recorded times {times.tolist()}")
    return int(hits[0])


def _validate_record_times(schedule: StepSchedule, record_times) -> tuple[np.ndarray, dict[int, int]]:
    times = np.asarray(list(record_times), dtype=float)
    if times.size == 0:
        raise ValueError("record_times must be nonempty")
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("record_times must be strictly increasing")
    slots: dict[int, int] = {}
    for slot, t in enumerate(times):
        idx = schedule.grid_index(float(t))
        if idx in slots:
            raise ValueError(f"record time {t!r} duplicates a grid point")
        slots[idx] = slot
    return times, slots


def _sample_init(measure: Measure, n: int, rng: np.random.Generator) -> np.ndarray:
    return measure._sample(n, rng)


def _spawn_rngs(seed: int, init_tag: int, noise_tag: int):
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    init = np.random.default_rng(np.random.SeedSequence([int(seed), init_tag]))
    noise = np.random.default_rng(np.random.SeedSequence([int(seed), noise_tag]))
    return init, noise


def _check_span(spec: SdeSpec, schedule: StepSchedule) -> None:
    if abs(schedule.span - spec.terminal_time) > _SEGMENT_TOL:
        raise ValueError(
            f"schedule span {schedule.span!r} must equal the terminal time {spec.terminal_time!r}"
        )


def simulate_forward(
    spec: SdeSpec,
    init: Measure,
    schedule: StepSchedule,
    n: int,
    seed: int,
    record_times,
) -> PathEnsemble:
    """Euler-Maruyama forward ensemble started from ``init``.

    For CLD the initial positions are drawn from ``init`` and velocities from
    N(0, I) (positions first, then velocities, from the init stream).
    ``n = 0`` yields an empty ensemble with valid metadata.
    """
    _check_span(spec, schedule)
    if init.dim != spec.data_dim:
        raise ValueError(f"init measure dim {init.dim} does not match data_dim {spec.data_dim}")
    if n < 0:
        raise ValueError("n must be nonnegative")
    times, slots = _validate_record_times(schedule, record_times)
    rng_init, rng_noise = _spawn_rngs(seed, SEED_TAG_FORWARD_INIT, SEED_TAG_FORWARD_NOISE)
    if n == 0:
        states = np.zeros((0, spec.state_dim))
    elif spec.kind == "cld":
        pos = _sample_init(init, n, rng_init)
        vel = rng_init.standard_normal((n, spec.data_dim))
        states = np.concatenate([pos, vel], axis=1)
    else:
        states = _sample_init(init, n, rng_init)
    out = np.empty((times.size, n, spec.state_dim))
    if 0 in slots:
        out[slots[0]] = states
    g = 0
    sq = math.sqrt
    for t, dt in schedule.steps():
        drift = spec.drift(states)
        db = rng_noise.standard_normal((n, spec.noise_dim)) * sq(dt)
        states = states + drift * dt + spec.scatter_noise(db)
        g += 1
        if g in slots:
            out[slots[g]] = states
    provenance = {
        "direction": "forward",
        "spec": spec.to_json(),
        "init": measure_to_json(init),
        "schedule": schedule.to_json(),
        "n": int(n),
        "seed": int(seed),
        "record_times": times.tolist(),
    }
    return PathEnsemble(times, out, int(seed), "forward", provenance)


def simulate_reverse(
    spec: SdeSpec,
    measure: Measure,
    perturbation: DriftPerturbation,
    prior: Measure,
    schedule: StepSchedule,
    n: int,
    seed: int,
    record_times,
    record_girsanov: bool = False,
) -> PathEnsemble:
    """Reverse-SDE ensemble from ``prior`` under the exact score of ``measure`` plus ``perturbation``.

    Reverse time tau runs over [0, T]; drifts are evaluated at the left
    endpoint of every step, so the score is evaluated at forward times
    T - tau >= dt_last and never at 0. The state recorded at tau = T is the
    post-step state of the final step (its law is the data measure smoothed
    by the last step size). With ``record_girsanov=True`` the cumulative Ito
    and quadratic-variation integrals of the perturbation are stored at every
    record time (left-endpoint Ito convention, using the same increments that
    drive the paths).
    """
    _check_span(spec, schedule)
    if measure.dim != spec.data_dim:
        raise ValueError(f"measure dim {measure.dim} does not match data_dim {spec.data_dim}")
    if prior.dim != spec.state_dim:
        raise ValueError(
            f"prior dim {prior.dim} does not match state dim {spec.state_dim}"
            + (" (CLD priors live in position-velocity space)" if spec.kind == "cld" else "")
        )
    if n < 0:
        raise ValueError("n must be nonnegative")
    times, slots = _validate_record_times(schedule, record_times)
    rng_init, rng_noise = _spawn_rngs(seed, SEED_TAG_REVERSE_INIT, SEED_TAG_REVERSE_NOISE)
    states = _sample_init(prior, n, rng_init) if n else np.zeros((0, spec.state_dim))
    T = spec.terminal_time
    out = np.empty((times.size, n, spec.state_dim))
    ito = np.zeros(n)
    quad = np.zeros(n)
    out_ito = np.zeros((times.size, n)) if record_girsanov else None
    out_quad = np.zeros((times.size, n)) if record_girsanov else None
    if 0 in slots:
        out[slots[0]] = states
    g = 0
    sq = math.sqrt
    for tau, dt in schedule.steps():
        t_fwd = T - tau
        s_plus_e, err = perturbed_score(spec, measure, perturbation, t_fwd, states)
        drift = -spec.drift(states) + spec.diffuse(s_plus_e)
        db = rng_noise.standard_normal((n, spec.noise_dim)) * sq(dt)
        if record_girsanov:
            se = spec.sigma_transpose(err)
            ito += np.einsum("ni,ni->n", se, db)
            quad += np.einsum("ni,ni->n", se, se) * dt
        states = states + drift * dt + spec.scatter_noise(db)
        g += 1
        if g in slots:
            slot = slots[g]
            out[slot] = states
            if record_girsanov:
                out_ito[slot] = ito
                out_quad[slot] = quad
    provenance = {
        "direction": "reverse",
        "spec": spec.to_json(),
        "measure": measure_to_json(measure),
        "perturbation": perturbation.to_json(),
        "prior": measure_to_json(prior),
        "schedule": schedule.to_json(),
        "n": int(n),
        "seed": int(seed),
        "record_times": times.tolist(),
    }
    return PathEnsemble(
        times, out, int(seed), "reverse", provenance, girsanov_ito=out_ito, girsanov_quad=out_quad
    )


def ensemble_from_provenance(provenance: dict, record_girsanov: bool = False) -> PathEnsemble:
    """Re-simulate an ensemble from its stored provenance (bit-identical replay)."""
    spec = SdeSpec.from_json(provenance["spec"])
    schedule = StepSchedule(tuple(tuple(s) for s in provenance["schedule"]))
    if provenance["direction"] == "forward":
        init = measure_from_json(provenance["init"])
        return simulate_forward(
            spec, init, schedule, provenance["n"], provenance["seed"], provenance["record_times"]
        )
    measure = measure_from_json(provenance["measure"])
    prior = measure_from_json(provenance["prior"])
    perturbation = DriftPerturbation.from_json(provenance["perturbation"])
    return simulate_reverse(
        spec,
        measure,
        perturbation,
        prior,
        schedule,
        provenance["n"],
        provenance["seed"],
        provenance["record_times"],
        record_girsanov=record_girsanov,
    )


def provenance_fingerprint(provenance: dict) -> str:
    import hashlib

    blob = json.dumps(provenance, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
