"""Forward SDE families and their Gaussian transition kernels.

Three families are supported, all with additive noise:

* ``brownian``:  dX = dW. Kernel N(x0, t*I).
* ``ou``:        dX = -X dt + sqrt(2) dW. Kernel N(e^{-t} x0, (1 - e^{-2t}) I),
  stationary at N(0, I).
* ``cld``:       per data coordinate, position/velocity pair (x, v) with
  dx = v dt, dv = (-x - 2v) dt + 2 dW. Data enters the position block, the
  velocity block starts at N(0, I). The state dimension is twice the data
  dimension, laid out as (x_1..x_d, v_1..v_d).

The CLD drift matrix A = [[0, 1], [-1, -2]] has the repeated eigenvalue -1
with a one-dimensional eigenspace, so e^{At} = e^{-t}(I + t(A + I)) with
(A + I) nilpotent. The covariance of the kernel is the closed form of
4 * int_0^t e^{Au} diag(0, 1) e^{A'u} du; it converges to the identity, the
unique solution of A S + S A' + diag(0, 4) = 0.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .measures import GaussianMixtureMeasure, Measure, as_mixture

SDE_KINDS = ("brownian", "ou", "cld")


@dataclass(frozen=True)
class SdeSpec:
    """Forward SDE family, data dimension and terminal time."""

    kind: str
    data_dim: int
    terminal_time: float = 1.0

    def __post_init__(self):
        if self.kind not in SDE_KINDS:
            raise ValueError(f"kind must be one of {SDE_KINDS}, got {self.kind!r}")
        if not isinstance(self.data_dim, (int, np.integer)) or self.data_dim < 1:
            raise ValueError("data_dim must be a positive integer")
        if not (self.terminal_time > 0.0) or not math.isfinite(self.terminal_time):
            raise ValueError("terminal_time must be positive and finite")

    @property
    def state_dim(self) -> int:
        return 2 * self.data_dim if self.kind == "cld" else self.data_dim

    @property
    def noise_dim(self) -> int:
        """Dimension of the driving Brownian motion."""
        return self.data_dim if self.kind == "cld" else self.state_dim

    @property
    def noise_amplitude(self) -> float:
        """Scalar noise amplitude of the family (1, sqrt(2), 2)."""
        return {"brownian": 1.0, "ou": math.sqrt(2.0), "cld": 2.0}[self.kind]

    def drift(self, x: np.ndarray) -> np.ndarray:
        """Forward drift beta evaluated rowwise on states ``x`` (n, state_dim)."""
        if self.kind == "brownian":
            return np.zeros_like(x)
        if self.kind == "ou":
            return -x
        d = self.data_dim
        pos, vel = x[:, :d], x[:, d:]
        return np.concatenate([vel, -pos - 2.0 * vel], axis=1)

    def scatter_noise(self, db: np.ndarray) -> np.ndarray:
        """Map standard Brownian increments (n, noise_dim) to state increments sigma*dB."""
        if self.kind == "brownian":
            return db
        if self.kind == "ou":
            return math.sqrt(2.0) * db
        return np.concatenate([np.zeros_like(db), 2.0 * db], axis=1)

    def sigma_transpose(self, v: np.ndarray) -> np.ndarray:
        """Apply sigma' to a state-space vector field, yielding (n, noise_dim)."""
        if self.kind == "brownian":
            return v
        if self.kind == "ou":
            return math.sqrt(2.0) * v
        return 2.0 * v[:, self.data_dim:]

    def diffuse(self, v: np.ndarray) -> np.ndarray:
        """Apply sigma sigma' to a state-space vector field (used by the reverse drift)."""
        if self.kind == "brownian":
            return v
        if self.kind == "ou":
            return 2.0 * v
        out = np.zeros_like(v)
        out[:, self.data_dim:] = 4.0 * v[:, self.data_dim:]
        return out

    def to_json(self) -> dict:
        return {"sde": self.kind, "T": self.terminal_time, "data_dim": self.data_dim}

    @staticmethod
    def from_json(obj: dict, data_dim: int | None = None) -> "SdeSpec":
        kind = obj.get("sde")
        T = float(obj.get("T", 1.0))
        d = obj.get("data_dim", data_dim)
        if d is None:
            raise ValueError("data_dim missing and not inferable")
        return SdeSpec(kind, int(d), T)


@dataclass(frozen=True)
class TransitionKernel:
    """Gaussian kernel of the forward flow at time t: X_t | X_0 = x0 ~ N(mean_map @ x0, cov).

    ``mean_map`` and ``cov`` are full (state_dim, state_dim) matrices.
    """

    t: float
    mean_map: np.ndarray
    cov: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.mean_map.shape[0]


def _cld_pair_kernel(t: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (mean map, covariance) of a single CLD coordinate pair."""
    et = math.exp(-t)
    e2t = math.exp(-2.0 * t)
    mean = et * np.array([[1.0 + t, t], [-t, 1.0 - t]])
    sxx = 1.0 - e2t * (2.0 * t * t + 2.0 * t + 1.0)
    sxv = 2.0 * t * t * e2t
    svv = 1.0 + e2t * (2.0 * t - 2.0 * t * t - 1.0)
    cov = np.array([[sxx, sxv], [sxv, svv]])
    return mean, cov


def transition_kernel(spec: SdeSpec, t: float) -> TransitionKernel:
    """Transition kernel of the forward SDE at time ``t``, 0 < t <= T."""
    if not (0.0 < t <= spec.terminal_time):
        raise ValueError(
            f"t must lie in (0, {spec.terminal_time}], got {t!r}"
        )
    d = spec.data_dim
    if spec.kind == "brownian":
        return TransitionKernel(t, np.eye(d), t * np.eye(d))
    if spec.kind == "ou":
        decay = math.exp(-t)
        return TransitionKernel(t, decay * np.eye(d), (1.0 - decay * decay) * np.eye(d))
    mean2, cov2 = _cld_pair_kernel(t)
    eye = np.eye(d)
    return TransitionKernel(t, np.kron(mean2, eye), np.kron(cov2, eye))


def augment_with_velocity(measure: Measure) -> GaussianMixtureMeasure:
    """CLD initial condition: data in the position block, independent N(0, I) velocities."""
    mix = as_mixture(measure)
    k, d = mix.n_components, mix.dim
    means = np.concatenate([mix.means, np.zeros((k, d))], axis=1)
    covs = np.zeros((k, 2 * d, 2 * d))
    covs[:, :d, :d] = mix.covs
    covs[:, d:, d:] = np.eye(d)
    return GaussianMixtureMeasure(means, covs, mix.weights)


def pushforward(spec: SdeSpec, measure: Measure, t: float) -> GaussianMixtureMeasure:
    """Law of X_t when X_0 ~ measure: a Gaussian mixture with the same weights.

    Component (mu, C) maps to (M mu, M C M' + Sigma_t) for the kernel
    (M, Sigma_t) at time t. For CLD the measure is first augmented with the
    standard normal velocity block, so the result lives in state space.
    """
    if measure.dim != spec.data_dim:
        raise ValueError(
            f"measure dim {measure.dim} does not match SDE data_dim {spec.data_dim}"
        )
    kernel = transition_kernel(spec, t)
    if spec.kind == "cld":
        mix = augment_with_velocity(measure)
    else:
        mix = as_mixture(measure)
    if spec.kind != "cld":
        # Scalar kernels: keep the arithmetic per component bit-for-bit equal so
        # shared-isotropic structure survives exactly.
        decay = kernel.mean_map[0, 0]
        s2 = kernel.cov[0, 0]
        means = decay * mix.means
        covs = (decay * decay) * mix.covs + s2 * np.eye(mix.dim)
    else:
        m = kernel.mean_map
        means = mix.means @ m.T
        covs = np.einsum("ij,kjl,ml->kim", m, mix.covs, m) + kernel.cov
    return GaussianMixtureMeasure(means, covs, mix.weights)
