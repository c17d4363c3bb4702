"""Exact log-densities and scores of Gaussian mixtures, and reverse-SDE drifts.

The score of a mixture sum_k w_k N(mu_k, C_k) is computed in posterior-mean
form: responsibilities are a softmax of the centered component log-weights
(always finite, so widely separated components degenerate gracefully to the
nearest-component single-Gaussian score instead of producing NaNs), and the
score is the responsibility-weighted sum of C_k^{-1}(mu_k - x). When every
component shares the covariance s^2*I, which is the pushforward of any point
cloud, that collapses to (posterior mean - x) / s^2 and is evaluated with two
matrix products.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import logsumexp

from .measures import (
    GaussianMixtureMeasure,
    Measure,
    as_mixture,
    is_degenerate,
    measure_from_json,
    measure_to_json,
)
from .sde import SdeSpec, augment_with_velocity, pushforward

_LOG_2PI = math.log(2.0 * math.pi)

# Evaluation of (n_points, n_components) arrays is chunked to bound memory;
# chunks are fixed so threading cannot change results, only their timing.
_BLOCK_ELEMENTS = 1 << 21
_THREADS = 1


def set_num_threads(k: int) -> None:
    """Cap the worker threads used for chunked mixture evaluation (default 1)."""
    global _THREADS
    _THREADS = max(1, int(k))


def _chunked(f, x: np.ndarray, n_components: int) -> np.ndarray:
    n = x.shape[0]
    chunk = max(1, _BLOCK_ELEMENTS // max(1, n_components))
    if n <= chunk:
        return f(x)
    spans = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    if _THREADS > 1:
        with ThreadPoolExecutor(max_workers=_THREADS) as pool:
            parts = list(pool.map(lambda s: f(x[s[0]:s[1]]), spans))
    else:
        parts = [f(x[a:b]) for a, b in spans]
    return np.concatenate(parts, axis=0)


def _as_batch(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (dim,):
            raise ValueError(f"point has dim {arr.shape}, expected ({dim},)")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"points must be (n, {dim}), got {arr.shape}")
    return arr, False


def _shared_logits(mix: GaussianMixtureMeasure, x: np.ndarray, s2: float) -> np.ndarray:
    # log w_k - |x - mu_k|^2 / (2 s^2), expanded so the cross term is one GEMM.
    cross = x @ mix.means.T
    sq = np.einsum("ni,ni->n", x, x)[:, None] + np.einsum("ki,ki->k", mix.means, mix.means)[None, :]
    return np.log(mix.weights)[None, :] - 0.5 * (sq - 2.0 * cross) / s2


def _general_logits_and_pulls(mix: GaussianMixtureMeasure, x: np.ndarray, want_pulls: bool):
    """Per-component log N(x; mu_k, C_k) + log w_k, optionally with C_k^{-1}(mu_k - x)."""
    vals, vecs = mix._eigvals, mix._eigvecs
    if vals.min() <= 0.0:
        raise ValueError("mixture has a singular component covariance; density undefined")
    n, d = x.shape
    k = mix.n_components
    logits = np.empty((n, k))
    pulls = np.empty((k, n, d)) if want_pulls else None
    log_w = np.log(mix.weights)
    for j in range(k):
        diff = x - mix.means[j]
        y = diff @ vecs[j]
        maha = np.einsum("ni,ni->n", y / vals[j], y)
        logdet = float(np.log(vals[j]).sum())
        logits[:, j] = log_w[j] - 0.5 * (maha + logdet + d * _LOG_2PI)
        if want_pulls:
            pulls[j] = -(y / vals[j]) @ vecs[j].T
    return logits, pulls


def log_density(mixture: GaussianMixtureMeasure, x) -> float | np.ndarray:
    """log of the mixture density at ``x`` ((d,) or (n, d)); finite for all finite x.

    Raises ValueError when any component covariance is singular.
    """
    pts, single = _as_batch(x, mixture.dim)
    s2 = mixture.shared_isotropic_variance
    if s2 is not None and s2 <= 0.0:
        raise ValueError("mixture has a singular component covariance; density undefined")

    def eval_block(block):
        if s2 is not None:
            logits = _shared_logits(mixture, block, s2)
            logits -= 0.5 * mixture.dim * math.log(2.0 * math.pi * s2)
        else:
            logits, _ = _general_logits_and_pulls(mixture, block, want_pulls=False)
        return logsumexp(logits, axis=1)

    out = _chunked(eval_block, pts, mixture.n_components)
    return float(out[0]) if single else out


def responsibilities(mixture: GaussianMixtureMeasure, x) -> np.ndarray:
    """Posterior component probabilities at ``x``; rows sum to one exactly up to rounding."""
    pts, single = _as_batch(x, mixture.dim)
    s2 = mixture.shared_isotropic_variance

    def eval_block(block):
        if s2 is not None:
            if s2 <= 0.0:
                raise ValueError("responsibilities undefined for singular components")
            logits = _shared_logits(mixture, block, s2)
        else:
            logits, _ = _general_logits_and_pulls(mixture, block, want_pulls=False)
        logits = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)

    out = _chunked(eval_block, pts, mixture.n_components)
    return out[0] if single else out


def mixture_score(mixture: GaussianMixtureMeasure, x) -> np.ndarray:
    """Gradient of log-density of the mixture at ``x``."""
    pts, single = _as_batch(x, mixture.dim)
    s2 = mixture.shared_isotropic_variance

    def eval_block(block):
        if s2 is not None:
            if s2 <= 0.0:
                raise ValueError("score undefined for singular components")
            logits = _shared_logits(mixture, block, s2)
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            resp = p / p.sum(axis=1, keepdims=True)
            posterior_mean = resp @ mixture.means
            return (posterior_mean - block) / s2
        logits, pulls = _general_logits_and_pulls(mixture, block, want_pulls=True)
        logits = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        resp = p / p.sum(axis=1, keepdims=True)
        return np.einsum("nk,knd->nd", resp, pulls)

    out = _chunked(eval_block, pts, mixture.n_components)
    return out[0] if single else out


def score(spec: SdeSpec, measure: Measure, t: float, x) -> np.ndarray:
    """Exact score of the pushforward law at forward time ``t``: grad log p_t(x).

    ``x`` lives in state space (twice the data dimension for CLD). At t = 0
    the score is that of the data measure itself and requires nondegenerate
    components; point clouds at t = 0 have no density, which is reported as a
    ValueError (the drift-explosion regime).
    """
    if t == 0.0:
        if is_degenerate(measure):
            raise ValueError(
                "score undefined at t = 0 for a measure with degenerate components"
            )
        mix = augment_with_velocity(measure) if spec.kind == "cld" else as_mixture(measure)
        return mixture_score(mix, x)
    return mixture_score(pushforward(spec, measure, t), x)


@dataclass(frozen=True)
class DriftPerturbation:
    """Additive error applied to the exact score inside the reverse drift.

    Kinds:

    * ``none``: e = 0.
    * ``constant``: e(x, t) = vector (state dimension).
    * ``radial``: e(x, t) = scale * x / max(|x|, 1e-12).
    * ``exact_score``: the drift under test is the exact pushforward score of
      ``target``, so e(x, t) = score_target(x, t) - score_measure(x, t).
    """

    kind: str = "none"
    vector: tuple[float, ...] | None = None
    scale: float | None = None
    target: Measure | None = None

    def __post_init__(self):
        kinds = ("none", "constant", "radial", "exact_score")
        if self.kind not in kinds:
            raise ValueError(f"perturbation kind must be one of {kinds}, got {self.kind!r}")
        if self.kind == "constant":
            if self.vector is None:
                raise ValueError("constant perturbation needs a vector")
            object.__setattr__(self, "vector", tuple(float(v) for v in np.atleast_1d(self.vector)))
        if self.kind == "radial" and self.scale is None:
            raise ValueError("radial perturbation needs a scale")
        if self.kind == "exact_score" and self.target is None:
            raise ValueError("exact_score perturbation needs a target measure")

    @staticmethod
    def none() -> "DriftPerturbation":
        return DriftPerturbation("none")

    @staticmethod
    def constant(vector) -> "DriftPerturbation":
        return DriftPerturbation("constant", vector=tuple(np.atleast_1d(np.asarray(vector, dtype=float))))

    @staticmethod
    def radial(scale: float) -> "DriftPerturbation":
        return DriftPerturbation("radial", scale=float(scale))

    @staticmethod
    def exact_score(target: Measure) -> "DriftPerturbation":
        return DriftPerturbation("exact_score", target=target)

    @property
    def evaluates_score(self) -> bool:
        return self.kind == "exact_score"

    def error(self, spec: SdeSpec, measure: Measure, t: float, x) -> np.ndarray:
        """The error field e(x, t) in state space, rowwise over ``x``."""
        pts, single = _as_batch(x, spec.state_dim)
        out = self._error_batch(spec, measure, t, pts)
        return out[0] if single else out

    def _error_batch(self, spec, measure, t, pts) -> np.ndarray:
        if self.kind == "none":
            return np.zeros_like(pts)
        if self.kind == "constant":
            vec = np.asarray(self.vector, dtype=float)
            if vec.shape != (spec.state_dim,):
                raise ValueError(
                    f"constant perturbation has dim {vec.shape[0]}, state dim is {spec.state_dim}"
                )
            return np.broadcast_to(vec, pts.shape).copy()
        if self.kind == "radial":
            norms = np.linalg.norm(pts, axis=1, keepdims=True)
            return self.scale * pts / np.maximum(norms, 1e-12)
        alt = score(spec, self.target, t, pts)
        ref = score(spec, measure, t, pts)
        return alt - ref

    def to_json(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        if self.kind == "constant":
            return {"kind": "constant", "vector": list(self.vector)}
        if self.kind == "radial":
            return {"kind": "radial", "scale": self.scale}
        return {"kind": "exact_score", "measure": measure_to_json(self.target)}

    @staticmethod
    def from_json(obj: dict) -> "DriftPerturbation":
        kind = obj.get("kind", "none")
        if kind == "none":
            return DriftPerturbation.none()
        if kind == "constant":
            return DriftPerturbation.constant(obj["vector"])
        if kind == "radial":
            return DriftPerturbation.radial(obj["scale"])
        if kind == "exact_score":
            return DriftPerturbation.exact_score(measure_from_json(obj["measure"]))
        raise ValueError(f"unknown perturbation kind {kind!r}")


def perturbed_score(
    spec: SdeSpec,
    measure: Measure,
    perturbation: DriftPerturbation,
    t: float,
    x: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """(score + e, e) at forward time t, sharing score evaluations between the two."""
    if perturbation.kind == "exact_score":
        alt = score(spec, perturbation.target, t, x)
        ref = score(spec, measure, t, x)
        return alt, alt - ref
    ref = score(spec, measure, t, x)
    e = perturbation._error_batch(spec, measure, t, np.atleast_2d(x))
    e = e.reshape(ref.shape)
    return ref + e, e


def reverse_drift(
    spec: SdeSpec,
    measure: Measure,
    perturbation: DriftPerturbation,
    t_reverse: float,
    y,
) -> np.ndarray:
    """Drift of the reverse SDE at reverse time ``t_reverse`` in [0, T).

    Equals -beta(y) + sigma sigma' (score(y, T - t_reverse) + e). The
    perturbation is added to the score before the diffusion product, so for
    CLD only velocity components receive the score term.
    """
    T = spec.terminal_time
    if not (0.0 <= t_reverse < T):
        raise ValueError(f"t_reverse must lie in [0, {T}), got {t_reverse!r}")
    pts, single = _as_batch(y, spec.state_dim)
    s_plus_e, _ = perturbed_score(spec, measure, perturbation, T - t_reverse, pts)
    out = -spec.drift(pts) + spec.diffuse(s_plus_e)
    return out[0] if single else out
