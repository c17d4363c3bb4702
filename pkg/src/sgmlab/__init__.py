"""Score-based generative modeling on exactly tractable measures.

Forward and reverse Euler-Maruyama ensembles for Brownian, OU and CLD
dynamics over point clouds and Gaussian mixtures, with closed-form scores,
Girsanov path diagnostics, Gaussian prior fits with KL bounds, and
distribution metrics. The ``sgmlab`` command runs packaged scenarios and
writes deterministic CSV artifacts.
"""

__version__ = "0.1.0"

from .girsanov import (
    GirsanovAccumulator,
    NovikovEstimate,
    PathLossEstimate,
    drift_distance_curve,
    girsanov_log_weights,
    martingale_mean,
    novikov_estimate,
    path_losses,
)
from .integrate import (
    SCHEDULE_PRESETS,
    PathEnsemble,
    StepSchedule,
    ensemble_from_provenance,
    resolve_schedule,
    simulate_forward,
    simulate_reverse,
)
from .measures import (
    RNG_ALGORITHM,
    GaussianMixtureMeasure,
    PointCloudMeasure,
    as_mixture,
    make_circle_points,
    measure_from_json,
    measure_to_json,
    sample_measure,
)
from .metrics import (
    DensityField,
    de_bruijn_residual,
    differential_entropy_1d,
    drift_explosion_slope,
    histogram_kl,
    histogram_l1,
    kde_grid,
    mixture_cdf_1d,
    nearest_distance,
    nearest_index,
)
from .prior import PriorFit, kl_bound, kl_estimate, optimal_gaussian_prior
from .quadrature import QuadratureError, integrate_1d, integrate_2d
from .score import (
    DriftPerturbation,
    log_density,
    mixture_score,
    perturbed_score,
    responsibilities,
    reverse_drift,
    score,
    set_num_threads,
)
from .sde import (
    SDE_KINDS,
    SdeSpec,
    TransitionKernel,
    augment_with_velocity,
    pushforward,
    transition_kernel,
)

__all__ = [
    "__version__",
    "DensityField",
    "DriftPerturbation",
    "GaussianMixtureMeasure",
    "GirsanovAccumulator",
    "NovikovEstimate",
    "PathEnsemble",
    "PathLossEstimate",
    "PointCloudMeasure",
    "PriorFit",
    "QuadratureError",
    "RNG_ALGORITHM",
    "SCHEDULE_PRESETS",
    "SDE_KINDS",
    "SdeSpec",
    "StepSchedule",
    "TransitionKernel",
    "as_mixture",
    "augment_with_velocity",
    "de_bruijn_residual",
    "differential_entropy_1d",
    "drift_distance_curve",
    "drift_explosion_slope",
    "ensemble_from_provenance",
    "girsanov_log_weights",
    "histogram_kl",
    "histogram_l1",
    "integrate_1d",
    "integrate_2d",
    "kde_grid",
    "kl_bound",
    "kl_estimate",
    "log_density",
    "make_circle_points",
    "martingale_mean",
    "measure_from_json",
    "measure_to_json",
    "mixture_cdf_1d",
    "mixture_score",
    "nearest_distance",
    "nearest_index",
    "novikov_estimate",
    "optimal_gaussian_prior",
    "path_losses",
    "perturbed_score",
    "pushforward",
    "resolve_schedule",
    "responsibilities",
    "reverse_drift",
    "sample_measure",
    "score",
    "set_num_threads",
    "simulate_forward",
    "simulate_reverse",
    "transition_kernel",
]
