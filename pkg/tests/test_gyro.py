"""Gyrovector operations: closed forms vs Riemannian composites, group axioms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorentzkit import geometry as geo, gyro
from lorentzkit.geometry import LorentzPoint

RNG = np.random.default_rng(11)


def rand_point(rng=RNG, n=5, radius=2.0):
    return geo.random_points(rng, 1, n, radius=radius)[0]


class TestGyroInverse:
    def test_component_formula(self):
        p = LorentzPoint.from_ambient([math.sqrt(2.0), 1.0])
        np.testing.assert_array_equal(gyro.gyroinverse(p).ambient, [math.sqrt(2.0), -1.0])

    def test_origin_fixed(self):
        o = LorentzPoint.origin(4)
        assert gyro.gyroinverse(o) == o

    def test_involution_exact(self):
        p = LorentzPoint.from_ambient(rand_point())
        pp = gyro.gyroinverse(gyro.gyroinverse(p))
        np.testing.assert_array_equal(pp.ambient, p.ambient)


class TestGyroAddition:
    def test_left_identity(self):
        q = LorentzPoint.from_ambient(rand_point())
        o = LorentzPoint.origin(q.dim)
        assert gyro.gyroadd_riemannian(o, q).ambient == pytest.approx(q.ambient, abs=1e-12)
        np.testing.assert_array_equal(gyro.gyroadd_closed(o, q).ambient, q.ambient)

    def test_right_identity_direct_evaluation(self):
        p = LorentzPoint.from_ambient(rand_point())
        o = LorentzPoint.origin(p.dim)
        assert gyro.gyroadd_riemannian(p, o).ambient == pytest.approx(p.ambient, abs=1e-8)
        np.testing.assert_array_equal(gyro.gyroadd_closed(p, o).ambient, p.ambient)

    def test_left_inverse(self):
        p = LorentzPoint.from_ambient(rand_point())
        out = gyro.gyroadd_closed(gyro.gyroinverse(p), p)
        np.testing.assert_allclose(out.ambient, geo.origin(p.dim), atol=1e-8)

    def test_closed_matches_riemannian_1000(self):
        p = geo.random_points(RNG, 1000, 6, radius=2.0)
        q = geo.random_points(RNG, 1000, 6, radius=2.0)
        closed = gyro.gyro_add(p, q)
        composite = gyro.gyro_add_riemannian(p, q)
        assert np.max(np.abs(closed - composite)) < 1e-8

    def test_output_on_manifold(self):
        p = geo.random_points(RNG, 500, 4, radius=2.0)
        q = geo.random_points(RNG, 500, 4, radius=2.0)
        assert np.max(geo.manifold_defect(gyro.gyro_add(p, q))) < 1e-7

    @pytest.mark.parametrize("k", [-0.5, -1.0, -2.0])
    def test_other_curvatures(self, k):
        p = geo.random_points(RNG, 100, 4, radius=1.5, k=k)
        q = geo.random_points(RNG, 100, 4, radius=1.5, k=k)
        closed = gyro.gyro_add(p, q, k)
        composite = gyro.gyro_add_riemannian(p, q, k)
        assert np.max(np.abs(closed - composite)) < 1e-8


class TestGyroMultiplication:
    def test_identity_scalar(self):
        p = LorentzPoint.from_ambient(rand_point())
        np.testing.assert_allclose(gyro.gyromul_closed(1.0, p).ambient, p.ambient, atol=1e-12)

    def test_doubling_along_geodesic(self):
        p = LorentzPoint.from_ambient([math.cosh(1.0), math.sinh(1.0)])
        out = gyro.gyromul_closed(2.0, p)
        np.testing.assert_allclose(out.ambient, [math.cosh(2.0), math.sinh(2.0)], atol=1e-12)

    def test_zero_scalar_exact(self):
        p = LorentzPoint.from_ambient(rand_point())
        np.testing.assert_array_equal(gyro.gyromul_closed(0.0, p).ambient, geo.origin(p.dim))

    def test_closed_matches_riemannian_1000(self):
        worst = 0.0
        for _ in range(1000):
            t = RNG.uniform(-3.0, 3.0)
            p = rand_point(RNG, 5, 2.0)
            c = gyro.gyro_scale(t, p)
            r = gyro.gyro_scale_riemannian(t, p)
            worst = max(worst, float(np.max(np.abs(c - r))))
        assert worst < 1e-8

    def test_scalar_associativity(self):
        for _ in range(50):
            s, t = RNG.uniform(-2, 2, size=2)
            p = LorentzPoint.from_ambient(rand_point())
            lhs = gyro.gyromul_closed(s * t, p)
            rhs = gyro.gyromul_closed(s, gyro.gyromul_closed(t, p))
            np.testing.assert_allclose(lhs.ambient, rhs.ambient, atol=1e-7)


class TestGroupAxioms:
    def test_left_gyroassociativity(self):
        """p + (q + z) equals (p + q) + gyr[p,q]z on random triples."""
        for _ in range(200):
            p, q, z = (rand_point(RNG, 4, 1.5) for _ in range(3))
            lhs = gyro.gyro_add(p, gyro.gyro_add(q, z))
            rhs = gyro.gyro_add(gyro.gyro_add(p, q), gyro.gyration(p, q, z))
            np.testing.assert_allclose(lhs, rhs, atol=1e-7)

    def test_left_translation_isometry(self):
        p = geo.random_points(RNG, 300, 5, radius=1.5)
        x = geo.random_points(RNG, 300, 5, radius=1.5)
        y = geo.random_points(RNG, 300, 5, radius=1.5)
        before = geo.dist(x, y)
        after = geo.dist(gyro.gyro_add(p, x), gyro.gyro_add(p, y))
        assert np.max(np.abs(before - after)) < 1e-8

    def test_scalar_distributivity(self):
        for _ in range(100):
            s, t = RNG.uniform(-2, 2, size=2)
            p = rand_point(RNG, 4, 1.5)
            lhs = gyro.gyro_scale(s + t, p)
            rhs = gyro.gyro_add(gyro.gyro_scale(s, p), gyro.gyro_scale(t, p))
            np.testing.assert_allclose(lhs, rhs, atol=1e-7)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_inverse_cancels_everywhere(self, seed):
        rng = np.random.default_rng(seed)
        p = geo.random_points(rng, 1, 3, radius=2.0)[0]
        q = geo.random_points(rng, 1, 3, radius=2.0)[0]
        # (-p) + (p + q) = q  (left cancellation)
        out = gyro.gyro_add(gyro.gyro_inverse(p), gyro.gyro_add(p, q))
        np.testing.assert_allclose(out, q, atol=1e-7)
