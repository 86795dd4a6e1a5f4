"""Manifold core: constraints, metric, maps, transport."""

import math

import numpy as np
import pytest

from lorentzkit import geometry as geo
from lorentzkit.errors import ConstraintError, DimensionError, ValidationError
from lorentzkit.geometry import Curvature, LorentzPoint, TangentVector

RNG = np.random.default_rng(7)


def random_tangent(rng, base, scale=1.0):
    g = rng.normal(size=base.shape, scale=scale)
    return geo.project_tangent(base, g)


class TestTypes:
    def test_curvature_must_be_negative(self):
        for bad in (0.0, 1.0, float("nan")):
            with pytest.raises(ValidationError):
                Curvature(bad)
        assert Curvature(-1.0).origin_time == 1.0
        assert Curvature(-4.0).origin_time == 0.5

    def test_point_constraint_enforced(self):
        LorentzPoint(math.sqrt(2.0), np.array([1.0]))
        with pytest.raises(ConstraintError):
            LorentzPoint(2.0, np.array([1.0]))
        with pytest.raises(ConstraintError):
            LorentzPoint(-math.sqrt(2.0), np.array([1.0]))

    def test_tangent_orthogonality_enforced(self):
        p = LorentzPoint.origin(2)
        TangentVector(np.array([0.0, 1.0, -0.5]), p)
        with pytest.raises(ConstraintError):
            TangentVector(np.array([1.0, 0.0, 0.0]), p)


class TestInner:
    def test_origin_self_inner(self):
        assert geo.lorentz_inner([1.0, 0.0], [1.0, 0.0]) == -1.0

    def test_pure_space_vector(self):
        assert geo.lorentz_inner([0.0, 1.0], [0.0, 1.0]) == 1.0

    def test_hand_evaluated_point(self):
        # <[sqrt2, 1], [sqrt2, 1]> = 1 - 2
        v = [math.sqrt(2.0), 1.0]
        assert abs(geo.lorentz_inner(v, v) + 1.0) < 1e-15

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            geo.lorentz_inner([1.0, 0.0], [1.0, 0.0, 0.0])


class TestDistance:
    def test_identity_case(self):
        o = LorentzPoint.origin(3)
        assert geo.geodesic_distance(o, o) == 0.0

    def test_unit_step_along_geodesic(self):
        p = LorentzPoint.from_ambient([1.0, 0.0])
        q = LorentzPoint.from_ambient([math.cosh(1.0), math.sinh(1.0)])
        assert abs(geo.geodesic_distance(p, q) - 1.0) < 1e-12

    def test_symmetry_on_random_pairs(self):
        pts = geo.random_points(RNG, 200, 5, radius=3.0)
        d_pq = geo.dist(pts[:100], pts[100:])
        d_qp = geo.dist(pts[100:], pts[:100])
        np.testing.assert_array_equal(d_pq, d_qp)

    def test_triangle_inequality(self):
        pts = geo.random_points(RNG, 3000, 6, radius=2.5).reshape(1000, 3, 7)
        d01 = geo.dist(pts[:, 0], pts[:, 1])
        d12 = geo.dist(pts[:, 1], pts[:, 2])
        d02 = geo.dist(pts[:, 0], pts[:, 2])
        assert np.all(d02 <= d01 + d12 + 1e-9)

    def test_off_manifold_rejected(self):
        p = LorentzPoint.origin(2)
        with pytest.raises(ConstraintError):
            bad = LorentzPoint.from_ambient([1.5, 0.0, 0.0])
        # bypassing the constructor also fails at the array check
        with pytest.raises(ConstraintError):
            geo.check_on_manifold(np.array([1.5, 0.0, 0.0]))


class TestExpLog:
    def test_exp_at_origin_hand_value(self):
        out = geo.expmap(geo.origin(1), np.array([0.0, 1.0]))
        np.testing.assert_allclose(out, [math.cosh(1.0), math.sinh(1.0)], atol=1e-12)

    def test_exp_zero_vector_returns_base(self):
        p = geo.random_points(RNG, 1, 4, radius=2.0)[0]
        np.testing.assert_array_equal(geo.expmap(p, np.zeros(5)), p)

    def test_exp_output_on_manifold(self):
        out = geo.expmap(geo.origin(2), np.array([0.0, 2.0, 0.0]))
        assert abs(geo.inner(out, out) + 1.0) < 1e-12

    def test_log_at_origin_hand_value(self):
        v = geo.logmap(geo.origin(1), np.array([math.cosh(1.0), math.sinh(1.0)]))
        np.testing.assert_allclose(v, [0.0, 1.0], atol=1e-12)

    def test_log_of_base_is_zero(self):
        p = geo.random_points(RNG, 1, 4, radius=1.0)[0]
        np.testing.assert_allclose(geo.logmap(p, p), np.zeros(5), atol=1e-14)

    def test_roundtrip_1000_points(self):
        """exp(log) round trip within 1e-9 relative error, geodesic norm <= 5."""
        base = geo.random_points(RNG, 1000, 7, radius=2.0)
        target = geo.random_points(RNG, 1000, 7, radius=3.0)
        v = geo.logmap(base, target)
        back = geo.expmap(base, v)
        rel = np.abs(back - target) / np.maximum(1.0, np.abs(target))
        assert np.max(rel) < 1e-9
        # and the other composition order
        v2 = geo.logmap(base, back)
        np.testing.assert_allclose(v2, v, atol=1e-9)

    def test_typed_roundtrip(self):
        base = LorentzPoint.origin(3)
        q = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 3, radius=2.0)[0])
        v = geo.log_map(base, q)
        back = geo.exp_map(base, v)
        np.testing.assert_allclose(back.ambient, q.ambient, atol=1e-12)

    def test_exp_rejects_foreign_base(self):
        p = LorentzPoint.origin(2)
        q = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 2, radius=1.0)[0])
        v = geo.log_map(p, q)
        with pytest.raises(ValidationError):
            geo.exp_map(q, v)


class TestParallelTransport:
    def test_transport_to_same_point_is_identity(self):
        p = geo.random_points(RNG, 1, 4, radius=1.5)[0]
        v = random_tangent(RNG, p)
        np.testing.assert_allclose(geo.transport(p, p, v), v, atol=1e-12)

    def test_norm_preservation_and_tangency(self):
        """1000 random triples: Lorentz norm preserved, output tangent at target."""
        p = geo.random_points(RNG, 1000, 5, radius=2.0)
        q = geo.random_points(RNG, 1000, 5, radius=2.0)
        v = np.stack([random_tangent(RNG, pi) for pi in p])
        out = geo.transport(p, q, v)
        n_in = geo.inner(v, v)
        n_out = geo.inner(out, out)
        assert np.max(np.abs(n_in - n_out)) < 1e-9
        assert np.max(np.abs(geo.inner(q, out))) < 1e-9

    def test_typed_rebase(self):
        p = LorentzPoint.origin(3)
        q = LorentzPoint.from_ambient(geo.random_points(RNG, 1, 3, radius=1.0)[0])
        v = geo.log_map(p, q)
        moved = geo.parallel_transport(p, q, v)
        assert moved.base == q


class TestLiftAndClamp:
    def test_lift_zero_is_origin(self):
        p = geo.lift_space(np.zeros(4))
        np.testing.assert_array_equal(p.ambient, geo.origin(4))

    def test_lift_hand_value(self):
        p = geo.lift_space(np.array([1.0]))
        np.testing.assert_allclose(p.ambient, [math.sqrt(2.0), 1.0], atol=1e-15)

    def test_lift_constraint_random(self):
        for _ in range(100):
            s = RNG.normal(size=6) * 3
            p = geo.lift_space(s)
            assert abs(geo.inner(p.ambient, p.ambient) + 1.0) < 1e-12

    def test_lift_rejects_nonfinite(self):
        with pytest.raises(ValidationError):
            geo.lift_space(np.array([np.nan, 1.0]))

    def test_clamp_norm_identity_below_threshold(self):
        np.testing.assert_array_equal(geo.clamp_norm(np.array([3.0, 4.0]), 10.0), [3.0, 4.0])

    def test_clamp_norm_rescales(self):
        np.testing.assert_allclose(geo.clamp_norm(np.array([3.0, 4.0]), 1.0), [0.6, 0.8], atol=1e-15)

    def test_clamp_norm_bound_holds(self):
        s = RNG.normal(size=(50, 4)) * 10
        out = geo.clamp_space_norm(s, 2.0)
        assert np.all(np.linalg.norm(out, axis=1) <= 2.0 + 1e-12)

    def test_clamp_norm_requires_positive_bound(self):
        with pytest.raises(ValidationError):
            geo.clamp_norm(np.array([1.0]), 0.0)


class TestManifoldInvariant:
    def test_all_producers_stay_on_manifold(self):
        """exp, transport-exp chains, lift: constraint within 1e-7, time > 0."""
        k = -1.0
        base = geo.random_points(RNG, 200, 6, radius=2.0)
        target = geo.random_points(RNG, 200, 6, radius=2.0)
        out = geo.expmap(base, geo.logmap(base, target))
        assert np.max(geo.manifold_defect(out)) < 1e-7
        assert np.all(out[:, 0] > 0)
