"""Fréchet mean and variance on the hyperboloid."""

import math

import numpy as np
import pytest

from lorentzkit import frechet, geometry as geo, gyro
from lorentzkit.errors import ConvergenceError, ValidationError
from lorentzkit.frechet import (
    frechet_variance,
    momentum_mean_update,
    weighted_frechet_mean,
)
from lorentzkit.geometry import LorentzPoint

RNG = np.random.default_rng(23)


def points_from(arr):
    return [LorentzPoint.from_ambient(row) for row in arr]


class TestWeightedMean:
    def test_duplicate_points_give_that_point(self):
        p = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 4, radius=1.0)[0])
        res = weighted_frechet_mean([p, p], [0.5, 0.5])
        np.testing.assert_allclose(res.mean.ambient, p.ambient, atol=1e-12)
        assert res.variance < 1e-12

    def test_two_point_mean_is_geodesic_midpoint(self):
        o = LorentzPoint.origin(1)
        q = LorentzPoint.from_ambient([math.cosh(1.0), math.sinh(1.0)])
        res = weighted_frechet_mean([o, q], [0.5, 0.5])
        # midpoint oracle: exp_p(0.5 log_p(q))
        np.testing.assert_allclose(
            res.mean.ambient, [math.cosh(0.5), math.sinh(0.5)], atol=1e-7
        )

    def test_two_point_matches_midpoint_random(self):
        pts = geo.random_points(RNG, 2, 6, radius=2.0)
        res = weighted_frechet_mean(points_from(pts))
        midpoint = geo.expmap(pts[0], 0.5 * geo.logmap(pts[0], pts[1]))
        np.testing.assert_allclose(res.mean.ambient, midpoint, atol=1e-7)

    def test_local_minimality_probe(self):
        """Perturbing the mean along 50 random tangent steps raises the objective."""
        pts = geo.random_points(RNG, 24, 5, radius=1.2)
        w = np.full(24, 1 / 24)
        res = weighted_frechet_mean(points_from(pts), w)
        mu = res.mean.ambient

        def objective(q):
            d = geo.dist(np.broadcast_to(q, pts.shape), pts)
            return float(np.sum(w * d * d))

        f0 = objective(mu)
        for _ in range(50):
            g = RNG.normal(size=6)
            tang = geo.project_tangent(mu, g)
            tang = 1e-3 * tang / math.sqrt(max(float(geo.inner(tang, tang)), 1e-30))
            assert objective(geo.expmap(mu, tang)) > f0

    def test_iteration_count_stays_low(self):
        """256 points of spread <= 2 converge in well under 30 iterations."""
        pts = geo.random_points(RNG, 256, 10, radius=2.0)
        res = weighted_frechet_mean(points_from(pts), tol=1e-9)
        assert res.iterations < 30
        assert res.final_grad_norm <= 1e-9

    def test_gyroinverse_equivariance(self):
        """Space reflection is an isometry, so it commutes with the mean."""
        pts = geo.random_points(RNG, 16, 4, radius=1.5)
        mean_a = weighted_frechet_mean(points_from(pts)).mean.ambient
        reflected = np.concatenate([pts[:, :1], -pts[:, 1:]], axis=1)
        mean_b = weighted_frechet_mean(points_from(reflected)).mean.ambient
        np.testing.assert_allclose(
            mean_b, np.concatenate([mean_a[:1], -mean_a[1:]]), atol=1e-7
        )

    def test_weight_validation(self):
        pts = points_from(geo.random_points(RNG, 3, 3, radius=1.0))
        with pytest.raises(ValidationError):
            weighted_frechet_mean(pts, [0.5, 0.5, 0.5])
        with pytest.raises(ValidationError):
            weighted_frechet_mean(pts, [-0.5, 1.0, 0.5])
        with pytest.raises(ValidationError):
            weighted_frechet_mean([])

    def test_nonconvergence_carries_last_iterate(self):
        pts = geo.random_points(RNG, 32, 4, radius=1.5)
        with pytest.raises(ConvergenceError) as err:
            frechet.frechet_mean_array(pts, np.full(32, 1 / 32), max_iter=1, tol=1e-16)
        assert err.value.last_iterate is not None
        assert err.value.iterations == 1


class TestVariance:
    def test_zero_for_duplicates(self):
        p = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 3, radius=1.0)[0])
        assert frechet_variance([p, p], [0.5, 0.5], p) == 0.0

    def test_two_points_distance_two(self):
        """Points at distance 2 around their midpoint: variance 0.5*1 + 0.5*1."""
        o = LorentzPoint.origin(1)
        q = LorentzPoint.from_ambient([math.cosh(2.0), math.sinh(2.0)])
        mid = weighted_frechet_mean([o, q]).mean
        var = frechet_variance([o, q], [0.5, 0.5], mid)
        assert abs(var - 1.0) < 1e-9

    def test_permutation_invariance(self):
        pts = geo.random_points(RNG, 8, 4, radius=1.5)
        w = RNG.uniform(0.5, 1.5, 8)
        w /= w.sum()
        mean = weighted_frechet_mean(points_from(pts), w).mean
        perm = RNG.permutation(8)
        v1 = frechet_variance(points_from(pts), w, mean)
        v2 = frechet_variance(points_from(pts[perm]), w[perm], mean)
        assert v1 == pytest.approx(v2, abs=1e-12)


class TestMomentumUpdate:
    def test_eta_zero_keeps_previous(self):
        p = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 3, radius=1.0)[0])
        q = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 3, radius=1.0)[0])
        assert momentum_mean_update(p, q, 0.0) is p

    def test_eta_one_returns_batch(self):
        p = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 3, radius=1.0)[0])
        q = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 3, radius=1.0)[0])
        assert momentum_mean_update(p, q, 1.0) is q

    def test_half_step_hand_value(self):
        o = LorentzPoint.origin(1)
        q = LorentzPoint.from_ambient([math.cosh(1.0), math.sinh(1.0)])
        out = momentum_mean_update(o, q, 0.5)
        np.testing.assert_allclose(out.ambient, [math.cosh(0.5), math.sinh(0.5)], atol=1e-12)

    def test_eta_range_enforced(self):
        o = LorentzPoint.origin(2)
        with pytest.raises(ValidationError):
            momentum_mean_update(o, o, 1.5)

    def test_update_is_two_point_weighted_mean(self):
        pts = geo.random_points(RNG, 2, 5, radius=1.5)
        eta = 0.3
        via_update = momentum_mean_update(
            LorentzPoint.from_ambient(pts[0]), LorentzPoint.from_ambient(pts[1]), eta
        )
        via_mean = weighted_frechet_mean(points_from(pts), [1 - eta, eta])
        np.testing.assert_allclose(via_update.ambient, via_mean.mean.ambient, atol=1e-9)
