"""Data measures: weighted point clouds and Gaussian mixtures.

Every experiment starts from one of the two measure types here. A point cloud
is the degenerate (zero covariance) case of a Gaussian mixture, and both
sample deterministically from an explicit seed: one categorical draw for the
component/atom index, then one standard normal block, in that order. That
draw order is part of the contract, it makes a zero-covariance mixture and
the matching point cloud produce identical atom histograms under equal seeds.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

#: Tolerance for "weights sum to one".
WEIGHT_TOL = 1e-12

#: Covariance eigenvalues above this are clamped to zero; below it the
#: covariance is rejected as not positive semidefinite.
EIG_FLOOR = -1e-10

#: Identifier of the generator algorithm behind every seeded draw in this
#: package (numpy's default PCG64 bit generator). Recorded in run manifests.
RNG_ALGORITHM = "numpy-pcg64"

#: Integer tags appended to a scenario seed to derive independent substreams.
SEED_TAG_MEASURE = 5


def _normalized_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0.0):
        raise ValueError("weights must be nonnegative")
    total = float(w.sum())
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1 within {WEIGHT_TOL}, got {total!r}")
    return w


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloudMeasure:
    """Finitely supported measure: atoms ``points`` (n, d) with ``weights`` (n,).

    Weights default to uniform. Arrays are copied and made read-only.
    """

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, ndmin=2)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a nonempty (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(_normalized_weights(self.weights, pts.shape[0])))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.points, axis=1).max())

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def cov(self) -> np.ndarray:
        centered = self.points - self.mean()
        return (self.weights[:, None] * centered).T @ centered

    def _sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.n_atoms, size=n, p=self.weights)
        return self.points[idx]


@dataclass(frozen=True, eq=False)
class GaussianMixtureMeasure:
    """Gaussian mixture with component ``means`` (K, d), ``covs`` (K, d, d) and ``weights`` (K,).

    ``covs`` accepts per-component scalars, diagonal vectors (d,), or full
    matrices (d, d); everything is stored as full symmetric matrices.
    Covariances may be singular (zero eigenvalues are allowed, that is the
    point-cloud limit); eigenvalues below ``EIG_FLOOR`` are rejected, small
    negative ones are clamped to zero. An eigendecomposition of every
    component is computed once and cached for sampling and density work.
    """

    means: np.ndarray
    covs: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        means = np.array(self.means, dtype=float, ndmin=2)
        if means.ndim != 2 or means.shape[0] < 1 or means.shape[1] < 1:
            raise ValueError(f"means must be a nonempty (K, d) array, got shape {means.shape}")
        if not np.all(np.isfinite(means)):
            raise ValueError("means must be finite")
        k, d = means.shape
        covs = self._expand_covs(self.covs, k, d)
        sym_err = np.abs(covs - covs.transpose(0, 2, 1)).max()
        if sym_err > 1e-9 * max(1.0, np.abs(covs).max()):
            raise ValueError("component covariances must be symmetric")
        covs = 0.5 * (covs + covs.transpose(0, 2, 1))
        vals, vecs = np.linalg.eigh(covs)
        if vals.min() < EIG_FLOOR:
            raise ValueError(
                f"component covariance has eigenvalue {vals.min():.3e} below {EIG_FLOOR:.0e}"
            )
        if vals.min() < 0.0:
            vals = np.clip(vals, 0.0, None)
            covs = vecs @ (vals[:, :, None] * vecs.transpose(0, 2, 1))
            covs = 0.5 * (covs + covs.transpose(0, 2, 1))
        object.__setattr__(self, "means", _frozen(means))
        object.__setattr__(self, "covs", _frozen(covs))
        object.__setattr__(self, "weights", _frozen(_normalized_weights(self.weights, k)))
        object.__setattr__(self, "_eigvals", _frozen(vals))
        object.__setattr__(self, "_eigvecs", _frozen(vecs))
        object.__setattr__(self, "_shared_iso", self._detect_shared_isotropic(covs))

    @staticmethod
    def _expand_covs(covs, k: int, d: int) -> np.ndarray:
        arr = np.asarray(covs, dtype=float)
        if arr.ndim == 0:
            arr = np.full(k, float(arr))
        if arr.shape == (k,):
            out = np.zeros((k, d, d))
            out[:, range(d), range(d)] = arr[:, None]
            return out
        if arr.shape == (k, d):
            out = np.zeros((k, d, d))
            out[:, range(d), range(d)] = arr
            return out
        if arr.shape == (k, d, d):
            out = arr.copy()
        else:
            raise ValueError(
                f"covs must be scalar per component, (K,), (K, d) diagonals or (K, d, d), got {arr.shape}"
            )
        if not np.all(np.isfinite(out)):
            raise ValueError("covariances must be finite")
        return out

    @staticmethod
    def _detect_shared_isotropic(covs: np.ndarray) -> float | None:
        # Exact test: every component covariance equals the same s^2 * I.
        d = covs.shape[1]
        s2 = covs[0, 0, 0]
        if np.all(covs == s2 * np.eye(d)):
            return float(s2)
        return None

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def shared_isotropic_variance(self) -> float | None:
        """Common variance s^2 when every component covariance is exactly s^2*I, else None."""
        return self._shared_iso

    @property
    def min_eigenvalue(self) -> float:
        return float(self._eigvals.min())

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def cov(self) -> np.ndarray:
        m = self.mean()
        centered = self.means - m
        between = (self.weights[:, None] * centered).T @ centered
        within = np.einsum("k,kij->ij", self.weights, self.covs)
        return within + between

    def _sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        scale = self._eigvecs * np.sqrt(self._eigvals)[:, None, :]
        return self.means[idx] + np.einsum("nij,nj->ni", scale[idx], z)


Measure = PointCloudMeasure | GaussianMixtureMeasure


def is_degenerate(measure: Measure) -> bool:
    """True when the measure has atoms or singular mixture components."""
    if isinstance(measure, PointCloudMeasure):
        return True
    return measure.min_eigenvalue <= 0.0


def as_mixture(measure: Measure) -> GaussianMixtureMeasure:
    """View any supported measure as a Gaussian mixture (point clouds get zero covariance)."""
    if isinstance(measure, GaussianMixtureMeasure):
        return measure
    return GaussianMixtureMeasure(measure.points, 0.0, measure.weights)


def make_circle_points(n: int, radius: float = 1.0) -> PointCloudMeasure:
    """Uniformly weighted cloud of ``n`` points evenly spaced on the circle of ``radius``."""
    if n < 1:
        raise ValueError("n must be positive")
    if not (radius > 0.0):
        raise ValueError("radius must be positive")
    angles = 2.0 * np.pi * np.arange(n) / n
    pts = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return PointCloudMeasure(pts)


def sample_measure(measure: Measure, n: int, seed) -> np.ndarray:
    """Draw ``n`` iid samples, bit-identical for identical (measure, n, seed).

    ``seed`` is a nonnegative integer or a ``numpy.random.SeedSequence``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(_seed_sequence(seed))
    return measure._sample(n, rng)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError("seed must be a nonnegative integer or SeedSequence")
    return np.random.SeedSequence([int(seed), SEED_TAG_MEASURE])


def measure_to_json(measure: Measure) -> dict:
    """Serialize to the documented JSON form (kind, dim, entries, weights)."""
    if isinstance(measure, PointCloudMeasure):
        return {
            "kind": "points",
            "dim": measure.dim,
            "entries": measure.points.tolist(),
            "weights": measure.weights.tolist(),
        }
    return {
        "kind": "mixture",
        "dim": measure.dim,
        "entries": [
            {"mean": m.tolist(), "cov": c.tolist()}
            for m, c in zip(measure.means, measure.covs)
        ],
        "weights": measure.weights.tolist(),
    }


def measure_from_json(obj: dict) -> Measure:
    """Inverse of :func:`measure_to_json`. Accepts scalar or diagonal ``cov`` entries."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("measure JSON must be an object with a 'kind' field")
    kind = obj["kind"]
    dim = int(obj.get("dim", 0))
    entries = obj.get("entries")
    if not entries:
        raise ValueError("measure JSON needs a nonempty 'entries' list")
    weights = obj.get("weights")
    if kind == "points":
        pts = np.asarray(entries, dtype=float)
        measure = PointCloudMeasure(pts, weights)
    elif kind == "mixture":
        means = np.asarray([e["mean"] for e in entries], dtype=float)
        covs = [np.asarray(e["cov"], dtype=float) for e in entries]
        d = means.shape[1]
        full = np.zeros((len(covs), d, d))
        for i, c in enumerate(covs):
            if c.ndim == 0:
                full[i] = float(c) * np.eye(d)
            elif c.shape == (d,):
                full[i] = np.diag(c)
            elif c.shape == (d, d):
                full[i] = c
            else:
                raise ValueError(f"entry {i}: cov must be scalar, diagonal (d,) or full (d, d)")
        entry_weights = [e.get("weight") for e in entries]
        if weights is None and any(w is not None for w in entry_weights):
            if any(w is None for w in entry_weights):
                raise ValueError("either all mixture entries carry a weight or none do")
            weights = entry_weights
        measure = GaussianMixtureMeasure(means, full, weights)
    else:
        raise ValueError(f"unknown measure kind {kind!r}")
    if dim and measure.dim != dim:
        raise ValueError(f"declared dim {dim} does not match entries of dim {measure.dim}")
    return measure
