"""Girsanov reweighting along simulated paths: log-weights, Novikov and loss estimates.

Along a reverse ensemble driven by score + e, the change-of-measure weight at
time t is Z_t = exp(int_0^t sigma'e . dB - 1/2 int_0^t |sigma'e|^2 ds), with
both integrals discretized at left endpoints using the very increments that
drove the paths. The integrals are accumulated online while simulating
(``record_girsanov=True``); when an ensemble lacks them they are recovered by
a bit-identical replay from the ensemble's provenance, which simultaneously
verifies that the ensemble matches the (spec, measure, perturbation) the
caller claims, replays that diverge are rejected.

Heavy-tail reporting: exponential-moment estimates (Novikov, exponential path
loss) always carry the log-scale mean and the largest log sample next to the
plain mean, and flip to log scale when the mean cannot be represented.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import logsumexp

from .integrate import (
    PathEnsemble,
    StepSchedule,
    _time_index,
    _validate_record_times,
    ensemble_from_provenance,
)
from .measures import Measure, measure_to_json
from .score import DriftPerturbation
from .sde import SdeSpec

_OVERFLOW_LOG = 700.0  # exp() overflows float64 just above 709


@dataclass(frozen=True, eq=False)
class GirsanovAccumulator:
    """Cumulative Ito and quadratic-variation integrals per path at record times."""

    record_times: np.ndarray
    ito: np.ndarray   # (m, n)
    quad: np.ndarray  # (m, n)

    @property
    def log_weights(self) -> np.ndarray:
        """log Z at every record time, exactly ito - quad/2 as accumulated."""
        return self.ito - 0.5 * self.quad

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        idx = _time_index(self.record_times, t)
        return self.ito[idx], self.quad[idx]


@dataclass(frozen=True)
class NovikovEstimate:
    """Monte Carlo estimate of E[exp(1/2 int |sigma'e|^2 ds)] with jackknife error."""

    t: float
    estimate: float
    std_error: float
    log_scale: bool
    log_mean: float
    max_log_sample: float


@dataclass(frozen=True)
class PathLossEstimate:
    """Quadratic and exponential drift-error functionals along forward paths."""

    l2: float
    l_exp: float
    log_scale: bool
    log_mean_exp: float
    max_log_sample: float


def _require_provenance(ensemble: PathEnsemble, **expected) -> None:
    for key, value in expected.items():
        stored = ensemble.provenance.get(key)
        if stored != value:
            raise ValueError(
                f"ensemble provenance mismatch on {key!r}: the ensemble was not "
                "produced with the arguments passed here"
            )


def girsanov_log_weights(
    ensemble: PathEnsemble,
    spec: SdeSpec,
    measure: Measure,
    perturbation: DriftPerturbation,
) -> GirsanovAccumulator:
    """Girsanov integrals of ``perturbation`` along a reverse ensemble it generated.

    Uses integrals stored at simulation time when present; otherwise replays
    the simulation deterministically and checks the recorded states agree.
    """
    if ensemble.direction != "reverse":
        raise ValueError("girsanov_log_weights needs a reverse ensemble")
    _require_provenance(
        ensemble,
        spec=spec.to_json(),
        measure=measure_to_json(measure),
        perturbation=perturbation.to_json(),
    )
    if ensemble.girsanov_ito is not None:
        return GirsanovAccumulator(ensemble.record_times, ensemble.girsanov_ito, ensemble.girsanov_quad)
    twin = ensemble_from_provenance(ensemble.provenance, record_girsanov=True)
    if not np.array_equal(twin.states, ensemble.states):
        raise ValueError("ensemble replay diverged from recorded states; provenance is stale")
    return GirsanovAccumulator(twin.record_times, twin.girsanov_ito, twin.girsanov_quad)


def _exp_mean_with_error(log_samples: np.ndarray) -> tuple[float, float, bool, float, float]:
    """Mean of exp(log_samples) with jackknife standard error, in log scale on overflow.

    Returns (estimate, std_error, log_scale, log_mean, max_log_sample).
    """
    n = log_samples.size
    if n == 0:
        raise ValueError("need at least one sample")
    max_log = float(log_samples.max())
    log_mean = float(logsumexp(log_samples) - np.log(n))
    if max_log < _OVERFLOW_LOG:
        values = np.exp(log_samples)
        mean = float(values.mean())
        se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return mean, se, False, log_mean, max_log
    # Log scale: jackknife over the log of the leave-one-out means.
    if n > 1:
        loo = np.empty(n)
        for i in range(n):
            rest = np.delete(log_samples, i)
            loo[i] = logsumexp(rest) - np.log(n - 1)
        se = float(np.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum()))
    else:
        se = 0.0
    return log_mean, se, True, log_mean, max_log


def novikov_estimate(
    ensemble: PathEnsemble,
    spec: SdeSpec,
    measure: Measure,
    perturbation: DriftPerturbation,
    t: float,
    accumulator: GirsanovAccumulator | None = None,
) -> NovikovEstimate:
    """Estimate N_t = E[exp(1/2 int_0^t |sigma'e|^2 ds)] over the ensemble.

    ``t`` must be one of the ensemble's record times. Pass a precomputed
    ``accumulator`` to avoid recomputing the integrals for several t.
    """
    acc = accumulator or girsanov_log_weights(ensemble, spec, measure, perturbation)
    _, quad = acc.at(t)
    est, se, log_scale, log_mean, max_log = _exp_mean_with_error(0.5 * quad)
    return NovikovEstimate(float(t), est, se, log_scale, log_mean, max_log)


def martingale_mean(
    accumulator: GirsanovAccumulator, t: float
) -> tuple[float, float]:
    """Sample mean and standard error of Z_t = exp(log-weight) at a record time."""
    ito, quad = accumulator.at(t)
    z = np.exp(ito - 0.5 * quad)
    n = z.size
    return float(z.mean()), float(z.std(ddof=1) / np.sqrt(n))


def path_losses(
    ensemble: PathEnsemble,
    spec: SdeSpec,
    measure: Measure,
    perturbation: DriftPerturbation,
    weight_fn_id: str = "uniform",
) -> PathLossEstimate:
    """L2 and exponential drift-error functionals along a forward ensemble.

    L2 is the mean over paths of sum_i w(t_i) |e(X_i, t_i)|^2 dt_i and the
    exponential loss is the mean of exp((sigma/2) sum_i |e(X_i, t_i)|^2 dt_i)
    with sigma the family's scalar noise amplitude. Quadrature convention:
    the first step always uses its right endpoint (the integrand may be
    undefined at t = 0 on degenerate data), later steps use left endpoints.
    Only the uniform weight function is defined.
    """
    if weight_fn_id != "uniform":
        raise ValueError(f"unknown weight_fn_id {weight_fn_id!r}; only 'uniform' is defined")
    if ensemble.direction != "forward":
        raise ValueError("path_losses needs a forward ensemble")
    _require_provenance(ensemble, spec=spec.to_json(), init=measure_to_json(measure))
    prov = ensemble.provenance
    schedule = StepSchedule(tuple(tuple(s) for s in prov["schedule"]))
    n = prov["n"]
    if n == 0:
        raise ValueError("path_losses needs a nonempty ensemble")
    times, slots = _validate_record_times(schedule, prov["record_times"])
    rng_init, rng_noise = _replay_forward_streams(prov)
    states = _replay_forward_init(spec, measure, n, rng_init)
    if 0 in slots and not np.array_equal(states, ensemble.states[slots[0]]):
        raise ValueError("ensemble replay diverged from recorded states; provenance is stale")
    integral = np.zeros(n)
    first = True
    g = 0
    for t, dt in schedule.steps():
        if not first:
            err = perturbation.error(spec, measure, t, states)
            integral += np.einsum("ni,ni->n", err, err) * dt
        db = rng_noise.standard_normal((n, spec.noise_dim)) * math.sqrt(dt)
        states = states + spec.drift(states) * dt + spec.scatter_noise(db)
        if first:
            err = perturbation.error(spec, measure, t + dt, states)
            integral += np.einsum("ni,ni->n", err, err) * dt
            first = False
        g += 1
        if g in slots and not np.array_equal(states, ensemble.states[slots[g]]):
            raise ValueError("ensemble replay diverged from recorded states; provenance is stale")
    l2 = float(integral.mean())
    half_sigma = 0.5 * spec.noise_amplitude
    est, _se, log_scale, log_mean, max_log = _exp_mean_with_error(half_sigma * integral)
    return PathLossEstimate(l2, est, log_scale, log_mean, max_log)


def _replay_forward_streams(prov: dict):
    from .integrate import SEED_TAG_FORWARD_INIT, SEED_TAG_FORWARD_NOISE, _spawn_rngs

    return _spawn_rngs(prov["seed"], SEED_TAG_FORWARD_INIT, SEED_TAG_FORWARD_NOISE)


def _replay_forward_init(spec: SdeSpec, measure: Measure, n: int, rng_init) -> np.ndarray:
    if spec.kind == "cld":
        pos = measure._sample(n, rng_init)
        vel = rng_init.standard_normal((n, spec.data_dim))
        return np.concatenate([pos, vel], axis=1)
    return measure._sample(n, rng_init)


def drift_distance_curve(
    ensemble: PathEnsemble,
    spec: SdeSpec,
    measure_ref: Measure,
    drift_under_test: DriftPerturbation,
    times=None,
) -> np.ndarray:
    """Mean error norm E|e(Y_t, .)| of the drift under test along recorded states.

    Returns an array of rows (t, mean norm) over ``times`` (default: every
    record time). For reverse ensembles the error field is evaluated at the
    matching forward time T - t; requesting t = T on degenerate data raises,
    since the reference score does not exist there.
    """
    ts = np.asarray(list(times), dtype=float) if times is not None else ensemble.record_times
    out = np.empty((ts.size, 2))
    for i, t in enumerate(ts):
        states = ensemble.states_at(float(t))
        t_fwd = spec.terminal_time - float(t) if ensemble.direction == "reverse" else float(t)
        err = drift_under_test.error(spec, measure_ref, t_fwd, states)
        out[i, 0] = t
        out[i, 1] = float(np.linalg.norm(err, axis=1).mean())
    return out
