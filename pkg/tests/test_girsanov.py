"""Change-of-measure weights, Novikov quantities and path-loss functionals."""

import math

import numpy as np
import pytest

from sgmlab.girsanov import (
    GirsanovAccumulator,
    girsanov_log_weights,
    drift_distance_curve,
    martingale_mean,
    novikov_estimate,
    path_losses,
)
from sgmlab.integrate import StepSchedule, simulate_forward, simulate_reverse
from sgmlab.measures import GaussianMixtureMeasure, make_circle_points
from sgmlab.score import DriftPerturbation
from sgmlab.sde import SdeSpec, pushforward

E_HALF = 1.6487212707001282       # exp(1/2)
E_FOUR_HALF = 90.01713130052181   # exp(9/2)


def uniform_schedule(n=40):
    return StepSchedule(((0.0, 1.0, 1.0 / n),))


def reverse_setup(pert, n=64, seed=9, record=(0.0, 0.5, 1.0), record_girsanov=True, steps=40):
    data = GaussianMixtureMeasure([[0.0]], 1.0)
    spec = SdeSpec("brownian", 1, 1.0)
    prior = pushforward(spec, data, 1.0)
    ens = simulate_reverse(
        spec, data, pert, prior, uniform_schedule(steps), n, seed, list(record),
        record_girsanov=record_girsanov,
    )
    return ens, spec, data


def test_log_weights_identity():
    times = np.array([0.5, 1.0])
    ito = np.array([[0.2, -0.1], [0.4, 0.0]])
    quad = np.array([[0.3, 0.3], [0.6, 0.6]])
    acc = GirsanovAccumulator(times, ito, quad)
    np.testing.assert_array_equal(acc.log_weights, ito - 0.5 * quad)
    i, q = acc.at(0.5)
    np.testing.assert_array_equal(i, ito[0])
    np.testing.assert_array_equal(q, quad[0])
    with pytest.raises(ValueError):
        acc.at(0.25)


def test_recorded_and_replayed_accumulators_agree():
    pert = DriftPerturbation.constant([2.0])
    recorded, spec, data = reverse_setup(pert, record_girsanov=True)
    bare, _, _ = reverse_setup(pert, record_girsanov=False)
    a = girsanov_log_weights(recorded, spec, data, pert)
    b = girsanov_log_weights(bare, spec, data, pert)
    np.testing.assert_array_equal(a.ito, b.ito)
    np.testing.assert_array_equal(a.quad, b.quad)


def test_log_weights_require_matching_provenance():
    pert = DriftPerturbation.constant([2.0])
    ens, spec, data = reverse_setup(pert)
    with pytest.raises(ValueError):
        girsanov_log_weights(ens, spec, data, DriftPerturbation.constant([1.0]))
    other = GaussianMixtureMeasure([[1.0]], 1.0)
    with pytest.raises(ValueError):
        girsanov_log_weights(ens, spec, other, pert)


def test_log_weights_reject_forward_ensembles():
    data = GaussianMixtureMeasure([[0.0]], 1.0)
    spec = SdeSpec("brownian", 1, 1.0)
    fwd = simulate_forward(spec, data, uniform_schedule(), 8, 1, [1.0])
    with pytest.raises(ValueError):
        girsanov_log_weights(fwd, spec, data, DriftPerturbation.none())


def test_martingale_property_constant_drift_error():
    # Z_t = exp(e.B_t - |e|^2 t / 2) has mean one exactly, step by step,
    # because the discrete increments are exactly Gaussian
    pert = DriftPerturbation.constant([1.5])
    ens, spec, data = reverse_setup(pert, n=4000, seed=31, record=(0.25, 0.5, 0.75, 1.0), steps=200)
    acc = girsanov_log_weights(ens, spec, data, pert)
    for t in (0.25, 0.5, 0.75, 1.0):
        mean, se = martingale_mean(acc, t)
        assert abs(mean - 1.0) < 3.0 * se, f"t={t}: {mean} +- {se}"


def test_martingale_mean_oracle():
    acc = GirsanovAccumulator(
        np.array([1.0]), np.array([[math.log(2.0)] * 4]), np.zeros((1, 4))
    )
    mean, se = martingale_mean(acc, 1.0)
    assert mean == pytest.approx(2.0, rel=1e-15)
    assert se == 0.0


def test_novikov_constant_error_is_deterministic():
    # quad integrates |e|^2 over [0, t] with no state dependence at all
    pert = DriftPerturbation.constant([3.0])
    ens, spec, data = reverse_setup(pert, record=(0.5, 1.0))
    got_half = novikov_estimate(ens, spec, data, pert, 0.5)
    got_one = novikov_estimate(ens, spec, data, pert, 1.0)
    np.testing.assert_allclose(got_half.estimate, math.exp(2.25), rtol=1e-12)
    np.testing.assert_allclose(got_one.estimate, E_FOUR_HALF, rtol=1e-12)
    assert got_one.std_error == 0.0
    assert not got_one.log_scale
    np.testing.assert_allclose(got_one.log_mean, 4.5, rtol=1e-12)
    np.testing.assert_allclose(got_one.max_log_sample, 4.5, rtol=1e-12)


def test_novikov_accepts_precomputed_accumulator():
    pert = DriftPerturbation.constant([1.0])
    ens, spec, data = reverse_setup(pert, record=(0.5, 1.0))
    acc = girsanov_log_weights(ens, spec, data, pert)
    a = novikov_estimate(ens, spec, data, pert, 1.0)
    b = novikov_estimate(ens, spec, data, pert, 1.0, accumulator=acc)
    assert a == b
    np.testing.assert_allclose(a.estimate, E_HALF, rtol=1e-12)


def test_novikov_switches_to_log_scale_on_overflow():
    # |e|^2 = 2000 makes the half-integral 1000, far past float range
    pert = DriftPerturbation.constant([math.sqrt(2000.0)])
    data = GaussianMixtureMeasure([[0.0]], 1.0)
    spec = SdeSpec("brownian", 1, 1.0)
    prior = pushforward(spec, data, 1.0)
    ens = simulate_reverse(
        spec, data, pert, prior, StepSchedule(((0.0, 1.0, 0.25),)), 16, 3, [1.0],
        record_girsanov=True,
    )
    est = novikov_estimate(ens, spec, data, pert, 1.0)
    assert est.log_scale
    assert est.estimate == est.log_mean
    np.testing.assert_allclose(est.log_mean, 1000.0, rtol=1e-12)
    assert est.std_error == 0.0


def test_novikov_log_scale_jackknife_error():
    # two log samples 800 and 800 + 2 ln 2: the values are e^800 and
    # 4 e^800, so the log-mean is 800 + ln 2.5; the leave-one-out logs are
    # 800 + 2 ln 2 and 800, making the jackknife error ln 2
    pert = DriftPerturbation.constant([1.0])
    ens, spec, data = reverse_setup(pert, n=2, record=(1.0,))
    acc = GirsanovAccumulator(
        np.array([1.0]), np.zeros((1, 2)), np.array([[1600.0, 1600.0 + 4.0 * math.log(2.0)]])
    )
    est = novikov_estimate(ens, spec, data, pert, 1.0, accumulator=acc)
    assert est.log_scale
    np.testing.assert_allclose(est.log_mean, 800.0 + math.log(2.5), rtol=1e-12)
    np.testing.assert_allclose(est.std_error, math.log(2.0), rtol=1e-10)
    np.testing.assert_allclose(est.max_log_sample, 800.0 + 2.0 * math.log(2.0), rtol=1e-12)


def test_novikov_empty_ensemble_raises():
    pert = DriftPerturbation.constant([1.0])
    ens, spec, data = reverse_setup(pert, n=0)
    with pytest.raises(ValueError):
        novikov_estimate(ens, spec, data, pert, 1.0)


def test_path_losses_constant_error_oracle():
    # the time integral of |e|^2 is |e|^2 T for every path, so both losses
    # are deterministic: L2 = 9 and L_exp = exp(9/2) for brownian noise
    data = GaussianMixtureMeasure([[0.0]], 1.0)
    spec = SdeSpec("brownian", 1, 1.0)
    ens = simulate_forward(spec, data, uniform_schedule(), 32, 2, [1.0])
    pert = DriftPerturbation.constant([3.0])
    loss = path_losses(ens, spec, data, pert)
    np.testing.assert_allclose(loss.l2, 9.0, rtol=1e-12)
    np.testing.assert_allclose(loss.l_exp, E_FOUR_HALF, rtol=1e-12)
    np.testing.assert_allclose(loss.log_mean_exp, 4.5, rtol=1e-12)
    assert not loss.log_scale


def test_path_losses_scale_with_noise_amplitude():
    # same |e|^2 integral, but OU noise amplitude sqrt(2) rescales the
    # exponential loss to exp(sqrt(2)/2 * 4)
    data = GaussianMixtureMeasure([[0.0]], 1.0)
    spec = SdeSpec("ou", 1, 1.0)
    ens = simulate_forward(spec, data, uniform_schedule(), 16, 2, [1.0])
    loss = path_losses(ens, spec, data, DriftPerturbation.constant([2.0]))
    np.testing.assert_allclose(loss.l2, 4.0, rtol=1e-12)
    np.testing.assert_allclose(loss.l_exp, math.exp(2.0 * math.sqrt(2.0)), rtol=1e-12)


def test_path_losses_exact_score_avoids_time_zero():
    # point-cloud data has no score at t = 0; the first-step quadrature must
    # sidestep it and still produce finite losses
    data = make_circle_points(5)
    target = make_circle_points(3)
    spec = SdeSpec("brownian", 2, 1.0)
    ens = simulate_forward(spec, data, uniform_schedule(20), 16, 4, [1.0])
    loss = path_losses(ens, spec, data, DriftPerturbation.exact_score(target))
    assert math.isfinite(loss.l2) and loss.l2 > 0.0
    assert math.isfinite(loss.l_exp) and loss.l_exp > 1.0


def test_path_losses_validation():
    data = GaussianMixtureMeasure([[0.0]], 1.0)
    spec = SdeSpec("brownian", 1, 1.0)
    fwd = simulate_forward(spec, data, uniform_schedule(), 8, 2, [1.0])
    pert = DriftPerturbation.none()
    with pytest.raises(ValueError):
        path_losses(fwd, spec, data, pert, weight_fn_id="quadratic")
    with pytest.raises(ValueError):
        path_losses(fwd, spec, GaussianMixtureMeasure([[1.0]], 1.0), pert)
    rev = simulate_reverse(
        spec, data, pert, pushforward(spec, data, 1.0), uniform_schedule(), 8, 2, [1.0]
    )
    with pytest.raises(ValueError):
        path_losses(rev, spec, data, pert)
    empty = simulate_forward(spec, data, uniform_schedule(), 0, 2, [1.0])
    with pytest.raises(ValueError):
        path_losses(empty, spec, data, pert)


def test_drift_distance_curve_constant_error():
    data = GaussianMixtureMeasure([[0.0, 0.0]], 1.0)
    spec = SdeSpec("brownian", 2, 1.0)
    ens = simulate_forward(spec, data, uniform_schedule(), 16, 5, [0.0, 0.5, 1.0])
    curve = drift_distance_curve(ens, spec, data, DriftPerturbation.constant([3.0, 4.0]))
    assert curve.shape == (3, 2)
    np.testing.assert_array_equal(curve[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_allclose(curve[:, 1], 5.0, rtol=1e-12)


def test_drift_distance_curve_reverse_time_mapping():
    # at reverse time tau the error field is evaluated at forward T - tau;
    # for a point-cloud reference, tau = T hits t = 0 where no score exists
    data = make_circle_points(9)
    target = make_circle_points(3)
    spec = SdeSpec("brownian", 2, 1.0)
    pert = DriftPerturbation.exact_score(target)
    prior = pushforward(spec, data, 1.0)
    ens = simulate_reverse(spec, data, pert, prior, uniform_schedule(20), 32, 6, [0.5, 0.95, 1.0])
    curve = drift_distance_curve(ens, spec, data, pert, times=[0.5, 0.95])
    assert curve.shape == (2, 2)
    assert np.all(np.isfinite(curve))
    with pytest.raises(ValueError):
        drift_distance_curve(ens, spec, data, pert, times=[1.0])
    with pytest.raises(ValueError):
        drift_distance_curve(ens, spec, data, pert, times=[0.3])
