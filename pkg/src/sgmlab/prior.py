"""Gaussian prior selection for Brownian forward dynamics, and KL utilities.

Among Gaussian priors, the KL divergence KL(p_T || prior) under Brownian
noising is minimized by matching moments of the noised data: mean equal to
the data mean and covariance Cov(data) + T*I. Restricted to isotropic
priors N(m, c*I), the optimum is c = trace(Cov(data))/d + T (the per-axis
average, not the full trace). The divergence of the full fit is bounded by
(1/2) sum_i log(1 + c_i / T) over the eigenvalues c_i of Cov(data), a bound
that decays like 1/T.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import GaussianMixtureMeasure, Measure, as_mixture
from .quadrature import integrate_1d, integrate_2d
from .score import log_density
from .sde import SdeSpec, pushforward

KL_METHODS = ("closed_form_gaussian", "quadrature_1d", "quadrature_2d")


@dataclass(frozen=True, eq=False)
class PriorFit:
    """Fitted Gaussian prior: mean plus either a full SPD covariance or an isotropic scalar."""

    mean: np.ndarray
    horizon: float
    covariance: np.ndarray | None = None
    isotropic_variance: float | None = None
    kl_bound_value: float = float("nan")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def covariance_matrix(self) -> np.ndarray:
        if self.covariance is not None:
            return self.covariance
        return self.isotropic_variance * np.eye(self.dim)

    def as_measure(self) -> GaussianMixtureMeasure:
        return GaussianMixtureMeasure(self.mean[None, :], self.covariance_matrix()[None, :, :])


def optimal_gaussian_prior(measure: Measure, T: float, isotropic: bool = False) -> PriorFit:
    """Moment-matched Gaussian prior for data noised to time ``T`` by Brownian motion."""
    if not (T > 0.0):
        raise ValueError("T must be positive")
    mean = measure.mean()
    cov = measure.cov()
    eigs = np.linalg.eigvalsh(cov)
    bound = kl_bound(eigs, T)
    if isotropic:
        c = float(np.trace(cov)) / measure.dim + T
        return PriorFit(mean, T, isotropic_variance=c, kl_bound_value=bound)
    return PriorFit(mean, T, covariance=cov + T * np.eye(measure.dim), kl_bound_value=bound)


def kl_bound(cov_eigenvalues, T: float) -> float:
    """Upper bound (1/2) sum log(1 + c_i / T) on KL(p_T || fitted prior)."""
    if not (T > 0.0):
        raise ValueError("T must be positive")
    eigs = np.atleast_1d(np.asarray(cov_eigenvalues, dtype=float))
    if eigs.min() < -1e-10:
        raise ValueError("covariance eigenvalues must be nonnegative")
    eigs = np.clip(eigs, 0.0, None)
    return float(0.5 * np.log1p(eigs / T).sum())


def _single_gaussian(measure: Measure) -> tuple[np.ndarray, np.ndarray]:
    mix = as_mixture(measure)
    if mix.n_components != 1:
        raise ValueError("closed_form_gaussian needs single-component Gaussians")
    return mix.means[0], mix.covs[0]


def _gaussian_kl(m0, c0, m1, c1) -> float:
    d = m0.shape[0]
    c1_inv = np.linalg.inv(c1)
    diff = m1 - m0
    _, logdet0 = np.linalg.slogdet(c0)
    _, logdet1 = np.linalg.slogdet(c1)
    return float(
        0.5 * (np.trace(c1_inv @ c0) + diff @ c1_inv @ diff - d + logdet1 - logdet0)
    )


def _support_box(mix: GaussianMixtureMeasure, pad_sigmas: float = 8.5):
    sig = np.sqrt(np.maximum(mix._eigvals.max(axis=1), 0.0))
    lo = (mix.means - pad_sigmas * sig[:, None]).min(axis=0)
    hi = (mix.means + pad_sigmas * sig[:, None]).max(axis=0)
    return lo, hi


def kl_estimate(p: Measure, q: Measure, method: str) -> float:
    """KL(p || q) by the requested method.

    * ``closed_form_gaussian``: both single Gaussians, exact formula.
    * ``quadrature_1d`` / ``quadrature_2d``: adaptive Gauss-Legendre over the
      support box of p (absolute error well under 1e-6); q must have a
      density wherever p has mass, which holds for nondegenerate mixtures.
    """
    if method not in KL_METHODS:
        raise ValueError(f"method must be one of {KL_METHODS}, got {method!r}")
    if method == "closed_form_gaussian":
        m0, c0 = _single_gaussian(p)
        m1, c1 = _single_gaussian(q)
        return _gaussian_kl(m0, c0, m1, c1)
    pm = as_mixture(p)
    qm = as_mixture(q)
    if pm.min_eigenvalue <= 0.0 or qm.min_eigenvalue <= 0.0:
        raise ValueError("quadrature KL needs nondegenerate mixtures on both sides")
    lo, hi = _support_box(pm)
    if method == "quadrature_1d":
        if pm.dim != 1:
            raise ValueError("quadrature_1d needs one-dimensional measures")

        def f(xs):
            pts = xs[:, None]
            logp = log_density(pm, pts)
            logq = log_density(qm, pts)
            return np.exp(logp) * (logp - logq)

        return integrate_1d(f, float(lo[0]), float(hi[0]), tol=1e-9)
    if pm.dim != 2:
        raise ValueError("quadrature_2d needs two-dimensional measures")

    def f2(pts):
        logp = log_density(pm, pts)
        logq = log_density(qm, pts)
        return np.exp(logp) * (logp - logq)

    return integrate_2d(f2, (float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])), tol=1e-8)


def noised_kl_vs_bound(measure: Measure, T: float, spec_kind: str = "brownian") -> tuple[float, float]:
    """(quadrature KL(p_T || fitted prior), bound) for 1d or 2d data under Brownian noising."""
    spec = SdeSpec(spec_kind, measure.dim, T)
    p_t = pushforward(spec, measure, T)
    fit = optimal_gaussian_prior(measure, T)
    method = "quadrature_1d" if measure.dim == 1 else "quadrature_2d"
    return kl_estimate(p_t, fit.as_measure(), method), fit.kl_bound_value
