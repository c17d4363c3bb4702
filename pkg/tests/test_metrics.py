"""Distances, kernel density fields, entropy identities and histogram metrics."""

import math

import numpy as np
import pytest
from scipy.special import ndtr

from sgmlab.measures import GaussianMixtureMeasure, PointCloudMeasure, make_circle_points
from sgmlab.metrics import (
    BRUTE_FORCE_LIMIT,
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
from sgmlab.sde import SdeSpec


class TestNearest:
    def test_exact_distances(self):
        training = PointCloudMeasure([[0.0, 0.0], [3.0, 4.0]])
        d = nearest_distance([[0.0, 1.0], [3.0, 4.0]], training)
        np.testing.assert_array_equal(d, [1.0, 0.0])
        idx = nearest_index([[0.0, 1.0], [3.0, 4.0]], training)
        np.testing.assert_array_equal(idx, [0, 1])

    def test_brute_and_tree_agree_bitwise(self):
        rng = np.random.default_rng(12)
        training = PointCloudMeasure(rng.standard_normal((300, 2)))
        x = rng.standard_normal((1000, 2))
        a = nearest_distance(x, training, method="brute")
        b = nearest_distance(x, training, method="tree")
        np.testing.assert_array_equal(a, b)

    def test_auto_uses_tree_above_limit(self):
        rng = np.random.default_rng(13)
        big = PointCloudMeasure(rng.standard_normal((BRUTE_FORCE_LIMIT + 1, 2)))
        x = rng.standard_normal((50, 2))
        got = nearest_distance(x, big, method="auto")
        np.testing.assert_array_equal(got, nearest_distance(x, big, method="tree"))

    def test_validation(self):
        training = PointCloudMeasure([[0.0, 0.0]])
        with pytest.raises(ValueError):
            nearest_distance([[0.0, 0.0]], training, method="grid")
        with pytest.raises(ValueError):
            nearest_distance([[0.0, 0.0, 0.0]], training)


class TestDensityField:
    def test_validation(self):
        with pytest.raises(ValueError):
            DensityField(((0.0, 1.0, 3),), np.zeros(4))
        with pytest.raises(ValueError):
            DensityField(((0.0, 1.0, 1),), np.zeros(1))
        with pytest.raises(ValueError):
            DensityField(((1.0, 0.0, 3),), np.zeros(3))
        with pytest.raises(ValueError):
            DensityField(((0.0, 1.0, 3),), np.array([0.0, -1.0, 0.0]))
        with pytest.raises(ValueError):
            DensityField(((0.0, 1.0, 2),) * 3, np.zeros((2, 2, 2)))

    def test_grid_points_first_axis_slowest(self):
        f = DensityField(((0.0, 1.0, 2), (0.0, 10.0, 3)), np.zeros((2, 3)))
        want = [[0, 0], [0, 5], [0, 10], [1, 0], [1, 5], [1, 10]]
        np.testing.assert_array_equal(f.grid_points(), want)

    def test_cell_volume(self):
        assert DensityField(((0.0, 1.0, 5),), np.zeros(5)).cell_volume() == 0.25
        f = DensityField(((0.0, 1.0, 5), (0.0, 3.0, 4)), np.zeros((5, 4)))
        assert f.cell_volume() == 0.25

    def test_csv_1d(self, tmp_path):
        f = DensityField(((0.0, 1.0, 3),), np.array([0.0, 2.0, 4.0]))
        p = tmp_path / "f.csv"
        f.to_csv(p)
        assert p.read_text() == "x,value\n0.0,0.0\n0.5,2.0\n1.0,4.0\n"

    def test_csv_2d_and_contrast(self, tmp_path):
        f = DensityField(((0.0, 1.0, 2), (0.0, 1.0, 2)), np.array([[0.0, 1.0], [4.0, 9.0]]))
        p = tmp_path / "f.csv"
        f.to_csv(p, sqrt_contrast=True)
        lines = p.read_text().splitlines()
        assert lines[0] == "x,y,value"
        assert lines[1:] == ["0.0,0.0,0.0", "0.0,1.0,1.0", "1.0,0.0,2.0", "1.0,1.0,3.0"]
        # contrast is a view for writing; the field itself is untouched
        np.testing.assert_array_equal(f.values, [[0.0, 1.0], [4.0, 9.0]])

    def test_values_frozen(self):
        f = DensityField(((0.0, 1.0, 2),), np.zeros(2))
        with pytest.raises(ValueError):
            f.values[0] = 1.0


class TestKdeGrid:
    def test_single_state_peak(self):
        f = kde_grid([[0.0]], 1000.0, ((-1.0, 1.0, 5),))
        np.testing.assert_allclose(f.values[2], 1.0, rtol=1e-12)
        np.testing.assert_allclose(f.values[1], math.exp(-1000.0 * 0.25), rtol=1e-9)

    def test_two_states_midpoint_value(self):
        # both states sit 0.25 from the center: 2 exp(-1000 / 16)
        f = kde_grid([[-0.25], [0.25]], 1000.0, ((-0.5, 0.5, 5),))
        np.testing.assert_allclose(f.values[2], 2.0 * math.exp(-62.5), rtol=1e-9)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((500, 2))
        grid = ((-2.0, 2.0, 11), (-2.0, 2.0, 11))
        a = kde_grid(x, 4.0, grid)
        b = kde_grid(x[::-1], 4.0, grid)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-12)

    def test_multiplicity_is_additive(self):
        x = np.array([[0.3], [-0.2], [0.1]])
        grid = ((-1.0, 1.0, 21),)
        single = kde_grid(x, 10.0, grid)
        doubled = kde_grid(np.vstack([x, x]), 10.0, grid)
        np.testing.assert_allclose(doubled.values, 2.0 * single.values, rtol=1e-12)

    def test_normalized_riemann_sum(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((200, 1))
        f = kde_grid(x, 50.0, ((-5.0, 5.0, 201),), normalize=True)
        np.testing.assert_allclose(f.values.sum() * f.cell_volume(), 1.0, rtol=1e-12)

    def test_normalize_rejects_zero_mass(self):
        # every grid point is ~100 away: exp(-1000 * 10^4) underflows to 0
        with pytest.raises(ValueError):
            kde_grid([[100.0]], 1000.0, ((-1.0, 1.0, 5),), normalize=True)

    def test_2d_peak_location(self):
        f = kde_grid([[0.5, -0.5]], 100.0, ((-1.0, 1.0, 9), (-1.0, 1.0, 9)))
        peak = np.unravel_index(np.argmax(f.values), f.values.shape)
        np.testing.assert_array_equal(f.grid_points()[np.ravel_multi_index(peak, f.values.shape)], [0.5, -0.5])

    def test_validation(self):
        with pytest.raises(ValueError):
            kde_grid([[0.0]], 0.0, ((-1.0, 1.0, 5),))
        with pytest.raises(ValueError):
            kde_grid([[0.0]], 1.0, ())
        with pytest.raises(ValueError):
            kde_grid([[0.0, 0.0]], 1.0, ((-1.0, 1.0, 5),))


def test_explosion_slope_single_atom():
    # score of a point mass at the origin is -x/t, so E|score| is
    # sqrt(2 / (pi t)): slope -1/2, intercept log sqrt(2/pi)
    spec = SdeSpec("brownian", 1, 1.0)
    pc = PointCloudMeasure([[0.0]])
    grid = np.geomspace(1e-4, 1e-1, 8)
    slope, intercept, curve = drift_explosion_slope(spec, pc, grid, 2000, 7, with_curve=True)
    assert abs(slope + 0.5) < 0.02
    assert abs(intercept - 0.5 * math.log(2.0 / math.pi)) < 0.05
    assert curve.shape == (8, 2)
    np.testing.assert_allclose(curve[:, 1], np.sqrt(2.0 / (math.pi * grid)), rtol=0.1)


def test_explosion_slope_deterministic():
    spec = SdeSpec("brownian", 2, 1.0)
    pc = make_circle_points(9)
    grid = np.geomspace(1e-4, 1e-1, 6)
    a = drift_explosion_slope(spec, pc, grid, 200, 5)
    b = drift_explosion_slope(spec, pc, grid, 200, 5)
    c = drift_explosion_slope(spec, pc, grid, 200, 6)
    assert a == b
    assert a != c


def test_explosion_slope_validation():
    pc = PointCloudMeasure([[0.0]])
    good = np.geomspace(1e-3, 1e-1, 5)
    with pytest.raises(ValueError):
        drift_explosion_slope(SdeSpec("ou", 1, 1.0), pc, good, 10, 0)
    spec = SdeSpec("brownian", 1, 1.0)
    with pytest.raises(ValueError):
        drift_explosion_slope(spec, pc, good[:3], 10, 0)
    with pytest.raises(ValueError):
        drift_explosion_slope(spec, pc, np.geomspace(1e-2, 1e-1, 5), 10, 0)
    with pytest.raises(ValueError):
        drift_explosion_slope(spec, pc, np.geomspace(1e-1, 10.0, 5), 10, 0)
    with pytest.raises(ValueError):
        drift_explosion_slope(spec, pc, good, 0, 0)


def test_entropy_of_gaussians():
    # H(N(0, c)) = (1/2) log(2 pi e c)
    for c in (1.0, 2.0):
        m = GaussianMixtureMeasure([[0.0]], c)
        want = 0.5 * math.log(2.0 * math.pi * math.e * c)
        np.testing.assert_allclose(differential_entropy_1d(m), want, atol=1e-10)


def test_entropy_mixture_bracket():
    # conditional entropy <= H(p) <= conditional entropy + H(weights)
    m = GaussianMixtureMeasure([[-2.0], [2.0]], 0.01, [1 / 3, 2 / 3])
    h = differential_entropy_1d(m)
    h_cond = 0.5 * math.log(2.0 * math.pi * math.e * 0.01)
    h_w = -(1 / 3) * math.log(1 / 3) - (2 / 3) * math.log(2 / 3)
    assert h_cond < h < h_cond + h_w + 1e-9
    # far-separated components saturate the upper bound
    np.testing.assert_allclose(h, h_cond + h_w, atol=1e-6)


def test_entropy_validation():
    with pytest.raises(ValueError):
        differential_entropy_1d(GaussianMixtureMeasure([[0.0, 0.0]], 1.0))


def test_de_bruijn_residual_small():
    m = GaussianMixtureMeasure([[-2.0], [2.0]], 0.01, [1 / 3, 2 / 3])
    assert de_bruijn_residual(m, 0.25, 1e-3) < 1e-4


def test_de_bruijn_residual_scales_quadratically():
    m = GaussianMixtureMeasure([[-1.0], [1.0]], 0.05, [0.5, 0.5])
    r8 = de_bruijn_residual(m, 0.25, 8e-3)
    r4 = de_bruijn_residual(m, 0.25, 4e-3)
    assert 3.0 < r8 / r4 < 5.0


def test_de_bruijn_validation():
    m = GaussianMixtureMeasure([[0.0]], 1.0)
    with pytest.raises(ValueError):
        de_bruijn_residual(m, 1e-3, 1e-3)
    with pytest.raises(ValueError):
        de_bruijn_residual(m, 0.5, 0.0)
    with pytest.raises(ValueError):
        de_bruijn_residual(GaussianMixtureMeasure([[0.0, 0.0]], 1.0), 0.5, 1e-3)


def test_mixture_cdf_values():
    g = GaussianMixtureMeasure([[0.0]], 1.0)
    np.testing.assert_allclose(mixture_cdf_1d(g, 0.0), [0.5], rtol=1e-15)
    np.testing.assert_allclose(mixture_cdf_1d(g, [1.0]), [ndtr(1.0)], rtol=1e-15)
    m = GaussianMixtureMeasure([[-2.0], [2.0]], 0.01, [1 / 3, 2 / 3])
    np.testing.assert_allclose(mixture_cdf_1d(m, 0.0), [1 / 3], atol=1e-12)
    xs = np.linspace(-4, 4, 33)
    assert np.all(np.diff(mixture_cdf_1d(m, xs)) >= 0.0)


def test_mixture_cdf_validation():
    with pytest.raises(ValueError):
        mixture_cdf_1d(GaussianMixtureMeasure([[0.0, 0.0]], 1.0), 0.0)


def test_histogram_l1_close_for_true_samples():
    m = GaussianMixtureMeasure([[0.0]], 1.0)
    x = np.random.default_rng(8).standard_normal(100000)
    assert histogram_l1(x, m, 50, -4.0, 4.0) < 0.02


def test_histogram_l1_overflow_bin():
    # all samples in [0, 1], all model mass near 10: distance saturates at 2
    m = GaussianMixtureMeasure([[10.0]], 1e-4)
    x = np.full(100, 0.5)
    np.testing.assert_allclose(histogram_l1(x, m, 1, 0.0, 1.0), 2.0, atol=1e-12)


def test_histogram_l1_detects_shift():
    m = GaussianMixtureMeasure([[0.0]], 1.0)
    x = np.random.default_rng(9).standard_normal(20000) + 0.5
    assert histogram_l1(x, m, 50, -4.0, 4.0) > 0.3


def test_histogram_kl_two_bin_oracle():
    # equal sample mass per bin against N(0, 1) masses on [-1, 1]:
    # each bin has model mass ndtr(1) - 1/2, so KL = log(1/2 / that)
    m = GaussianMixtureMeasure([[0.0]], 1.0)
    x = np.array([-0.5] * 50 + [0.5] * 50)
    p = ndtr(1.0) - 0.5
    want = math.log(0.5 / p)
    np.testing.assert_allclose(histogram_kl(x, m, 2, -1.0, 1.0), want, rtol=1e-12)


def test_histogram_kl_small_for_true_samples():
    m = GaussianMixtureMeasure([[0.0]], 1.0)
    x = np.random.default_rng(10).standard_normal(50000)
    x = x[np.abs(x) < 5.0]
    assert histogram_kl(x, m, 100, -5.0, 5.0) < 0.005


def test_histogram_kl_rejects_outside_samples():
    m = GaussianMixtureMeasure([[0.0]], 1.0)
    with pytest.raises(ValueError):
        histogram_kl([0.0, 7.0], m, 10, -5.0, 5.0)


def test_histogram_kl_rejects_zero_probability_bins():
    m = GaussianMixtureMeasure([[10.0]], 1e-6)
    with pytest.raises(ValueError):
        histogram_kl([0.0], m, 4, -1.0, 1.0)


def test_histogram_empty_samples_raise():
    m = GaussianMixtureMeasure([[0.0]], 1.0)
    with pytest.raises(ValueError):
        histogram_l1([], m, 10, -1.0, 1.0)
    with pytest.raises(ValueError):
        histogram_kl([], m, 10, -1.0, 1.0)
