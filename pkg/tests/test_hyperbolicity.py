"""Four-point-condition hyperbolicity: exact values, oracle equality, sampling."""

import numpy as np
import pytest

from lorentzkit import geometry as geo
from lorentzkit.errors import ValidationError
from lorentzkit.hyperbolicity import (
    HyperbolicityReport,
    delta_bruteforce,
    delta_exact,
    delta_sampled,
    gromov_product,
    pairwise_distances,
)

RNG = np.random.default_rng(31)


def star_metric(leaves):
    """Star tree with unit edges: center is index 0."""
    n = leaves + 1
    d = np.full((n, n), 2.0)
    d[0, :] = 1.0
    d[:, 0] = 1.0
    np.fill_diagonal(d, 0.0)
    return d


def path_metric(n):
    idx = np.arange(n, dtype=float)
    return np.abs(idx[:, None] - idx[None, :])


def cycle_metric(n):
    idx = np.arange(n)
    diff = np.abs(idx[:, None] - idx[None, :])
    return np.minimum(diff, n - diff).astype(float)


class TestGromovProduct:
    def test_star_leaves_product_zero(self):
        d = star_metric(2)
        assert gromov_product(d, 1, 2, 0) == 0.0

    def test_self_product_is_distance_to_base(self):
        d = path_metric(5)
        for i in range(5):
            assert gromov_product(d, i, i, 0) == d[i, 0]

    def test_path_through_base(self):
        d = path_metric(3)
        assert gromov_product(d, 0, 2, 1) == 0.0

    def test_index_out_of_range(self):
        with pytest.raises(ValidationError):
            gromov_product(path_metric(3), 0, 3, 0)

    def test_non_metric_rejected(self):
        bad = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(ValidationError):
            gromov_product(bad, 0, 1, 0)
        with pytest.raises(ValidationError):
            delta_exact(np.array([[0.5, 1.0], [1.0, 0.0]]))


class TestDeltaExact:
    def test_tree_metric_is_zero(self):
        assert delta_exact(star_metric(5)) == 0.0

    def test_line_metric_is_zero(self):
        assert delta_exact(path_metric(4)) == 0.0

    def test_four_cycle_is_one(self):
        d = cycle_metric(4)
        assert delta_exact(d) == 1.0
        assert delta_bruteforce(d) == 1.0

    def test_matches_bruteforce_exactly(self):
        """Matrix max-min equals the triple-scan oracle bit for bit, n <= 30."""
        for trial in range(12):
            n = int(RNG.integers(4, 31))
            pts = RNG.normal(size=(n, 4))
            d = pairwise_distances(pts)
            base = int(RNG.integers(0, n))
            assert delta_exact(d, base) == delta_bruteforce(d, base)
        # graph-flavored metrics too
        for n in (5, 8, 13):
            assert delta_exact(cycle_metric(n)) == delta_bruteforce(cycle_metric(n))

    def test_scaling_invariance_of_delta_rel(self):
        pts = RNG.normal(size=(40, 5))
        d = pairwise_distances(pts)
        rel = 2.0 * delta_exact(d) / d.max()
        # power-of-two scaling is exact in floating point
        d4 = 4.0 * d
        assert 2.0 * delta_exact(d4) / d4.max() == rel
        dg = 3.7 * d
        assert 2.0 * delta_exact(dg) / dg.max() == pytest.approx(rel, rel=1e-12)

    def test_delta_scales_linearly(self):
        d = cycle_metric(6)
        assert delta_exact(2.0 * d) == 2.0 * delta_exact(d)


class TestDeltaSampled:
    def test_collinear_points_flat(self):
        t = np.linspace(0, 3, 50)[:, None]
        direction = np.array([[1.0, 2.0, -0.5]])
        pts = t * direction
        report = delta_sampled(pts, batch=50, batches=3, seed=0)
        assert report.delta_rel < 1e-6

    def test_deterministic_given_seed(self):
        pts = RNG.normal(size=(64, 6))
        r1 = delta_sampled(pts, batch=32, batches=4, seed=9)
        r2 = delta_sampled(pts, batch=32, batches=4, seed=9)
        assert r1 == r2

    def test_lorentz_metric_option(self):
        pts = geo.random_points(RNG, 64, 7, radius=2.0)
        report = delta_sampled(pts, metric="lorentz", batch=64, batches=2, seed=1)
        assert report.diameter > 0
        assert 0.0 <= report.delta_rel <= 1.0

    def test_needs_four_points(self):
        with pytest.raises(ValidationError):
            delta_sampled(RNG.normal(size=(3, 2)))

    def test_report_invariant_enforced(self):
        with pytest.raises(ValidationError):
            HyperbolicityReport(delta=1.0, diameter=4.0, delta_rel=0.9,
                                sample_size=10, batches=1)
        r = HyperbolicityReport(delta=1.0, diameter=4.0, delta_rel=0.5,
                                sample_size=10, batches=1)
        assert r.delta_rel == 0.5
        flat = HyperbolicityReport(delta=0.0, diameter=0.0, delta_rel=0.0,
                                   sample_size=4, batches=1)
        assert flat.delta_rel == 0.0


def binary_tree_skeleton_cloud(n_pts, dim=15, seed=0, depth=3, edge=1.2, sigma=0.05):
    """Points scattered near the nodes of a random geodesic binary tree."""
    rng = np.random.default_rng(seed)
    o = geo.origin(dim)
    nodes = [o]
    frontier = [o]
    for _ in range(depth):
        grown = []
        for node in frontier:
            for _ in range(2):
                d = rng.normal(size=dim)
                d /= np.linalg.norm(d)
                v = np.concatenate([[0.0], edge * d])
                vt = geo.transport(o, node, v)
                child = geo.expmap(node, vt)
                grown.append(child)
                nodes.append(child)
        frontier = grown
    nodes = np.stack(nodes)
    base = nodes[rng.integers(0, len(nodes), n_pts)]
    noise = geo.project_tangent(base, rng.normal(size=base.shape) * sigma)
    return geo.expmap(base, noise)


class TestTreeLikenessDirection:
    def test_tree_cloud_below_sphere_noise_ten_seeds(self):
        """Hierarchical clouds in the hyperboloid read as more tree-like than
        uniform sphere noise, consistently over 10 seeds."""
        for seed in range(10):
            tree = binary_tree_skeleton_cloud(1024, dim=15, seed=seed)
            rep_tree = delta_sampled(tree, metric="lorentz", batch=512, batches=2, seed=seed)
            sphere = np.random.default_rng(1000 + seed).normal(size=(1024, 16))
            sphere /= np.linalg.norm(sphere, axis=1, keepdims=True)
            rep_sphere = delta_sampled(sphere, batch=512, batches=2, seed=seed)
            assert rep_tree.delta_rel < rep_sphere.delta_rel
