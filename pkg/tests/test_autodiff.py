"""Reverse-mode engine: primitive gradients vs central differences."""

import math

import numpy as np
import pytest

import lorentzkit.autodiff as ad
from lorentzkit.errors import DimensionError, ValidationError

RNG = np.random.default_rng(20240901)


def fd_scalar(fn, x, step=1e-6):
    return (fn(x + step) - fn(x - step)) / (2 * step)


class TestElementwise:
    @pytest.mark.parametrize(
        "name,fn,domain",
        [
            ("exp", ad.exp, (-2, 2)),
            ("log", ad.log, (0.2, 3)),
            ("sqrt", ad.sqrt, (0.1, 4)),
            ("cosh", ad.cosh, (-2, 2)),
            ("sinh", ad.sinh, (-2, 2)),
            ("asinh", ad.asinh, (-3, 3)),
            ("sigmoid", ad.sigmoid, (-4, 4)),
            ("elu", ad.elu, (-3, 3)),
            ("acosh", ad.acosh, (1.1, 4)),
            ("abs", ad.absolute, (0.2, 3)),
        ],
    )
    def test_gradient_matches_fd(self, name, fn, domain):
        x = RNG.uniform(*domain, size=(3, 4))
        err, _ = ad.gradcheck(lambda L: fn(L[0]).sum(), [x], step=1e-6)
        assert err < 1e-6, f"{name}: {err}"

    def test_cosh_derivative_at_one(self):
        """d/dx cosh(x) at x=1 equals sinh(1)."""
        x = ad.Tensor(np.array(1.0), requires_grad=True)
        ad.cosh(x).backward()
        assert abs(float(x.grad) - math.sinh(1.0)) < 1e-9

    def test_acosh_clamped_subgradient(self):
        """Below the clamp the acosh gradient is exactly zero."""
        x = ad.Tensor(np.array([0.5, 1.0, 2.0]), requires_grad=True)
        ad.acosh(x).sum().backward()
        assert x.grad[0] == 0.0
        assert x.grad[1] == 0.0  # clamped at 1 + 1e-15, boundary excluded
        assert abs(x.grad[2] - 1 / math.sqrt(3.0)) < 1e-12

    def test_smooth_even_helpers(self):
        """cosh_sqrt/sinhc_sqrt/acosh_over_sqrtm1 are smooth through their limits."""
        for q0 in (0.0, 1e-9, 1e-5, 0.5, 4.0):
            q = np.array([q0 + 1e-3])  # keep FD window inside the domain
            err, _ = ad.gradcheck(lambda L: ad.cosh_sqrt(L[0]).sum(), [q], step=1e-7)
            assert err < 1e-5
            err, _ = ad.gradcheck(lambda L: ad.sinhc_sqrt(L[0]).sum(), [q], step=1e-7)
            assert err < 1e-5
        assert abs(float(ad.value_of(ad.cosh_sqrt(np.array(0.0)))) - 1.0) < 1e-15
        assert abs(float(ad.value_of(ad.sinhc_sqrt(np.array(0.0)))) - 1.0) < 1e-15
        x = np.array([1.0, 1.0 + 1e-9, 2.0])
        f = ad.value_of(ad.acosh_over_sqrtm1(x))
        assert abs(f[0] - 1.0) < 1e-12
        assert abs(f[2] - math.acosh(2.0) / math.sqrt(3.0)) < 1e-12

    def test_series_matches_direct_at_cutoff(self):
        """Series and direct branches agree across the switchover."""
        q = np.array([9e-7, 1.1e-6])
        v = ad.value_of(ad.sinhc_sqrt(q))
        direct = np.sinh(np.sqrt(q)) / np.sqrt(q)
        np.testing.assert_allclose(v, direct, rtol=1e-13)


class TestArithmeticAndShape:
    def test_broadcasting_grad(self):
        a = RNG.normal(size=(3, 1, 4))
        b = RNG.normal(size=(5, 1))
        err, _ = ad.gradcheck(lambda L: (L[0] * L[1] + L[0] / (2.0 + ad.sigmoid(L[1]))).sum(), [a, b])
        assert err < 1e-7

    def test_sum_gradient_is_ones(self):
        x = ad.Tensor(RNG.normal(size=(4, 5)), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((4, 5)))

    def test_matmul_vjp(self):
        a = RNG.normal(size=(3, 4))
        b = RNG.normal(size=(4, 2))
        probe = RNG.normal(size=(3, 2))
        err, _ = ad.gradcheck(lambda L: ((L[0] @ L[1]) * probe).sum(), [a, b])
        assert err < 1e-8

    def test_matmul_requires_2d(self):
        with pytest.raises(DimensionError):
            ad.matmul(ad.Tensor(np.zeros(3)), ad.Tensor(np.zeros((3, 2))))

    def test_dot_gradient_is_other_operand(self):
        w = ad.Tensor(RNG.normal(size=(1, 5)), requires_grad=True)
        x = RNG.normal(size=(5, 1))
        (w @ x).sum().backward()
        np.testing.assert_allclose(w.grad, x.T)

    def test_slice_concat_reshape_transpose(self):
        x = RNG.normal(size=(4, 6))
        def build(L):
            t = L[0]
            left, right = t[:, :2], t[:, 2:]
            merged = ad.concat([right, left], axis=1)
            return (ad.transpose(ad.reshape(merged, (2, 12))) ** 2.0).sum()
        err, _ = ad.gradcheck(build, [x])
        assert err < 1e-8

    def test_take_along_axis_scatter(self):
        x = RNG.normal(size=(5, 3))
        idx = np.argsort(x, axis=0)
        err, _ = ad.gradcheck(lambda L: (ad.take_along_axis(L[0], idx, 0) * RNG.normal(size=(5, 3))).sum() if False else (ad.take_along_axis(L[0], idx, 0) ** 2.0).sum(), [x])
        assert err < 1e-8

    def test_where_and_clamp(self):
        x = RNG.normal(size=(6,))
        cond = x > 0
        err, _ = ad.gradcheck(lambda L: (ad.where(cond, L[0] * 2.0, L[0] ** 2.0)).sum(), [x])
        assert err < 1e-7
        err, _ = ad.gradcheck(lambda L: ad.clamp(L[0], min=-0.35, max=0.35).sum(), [x])
        assert err < 1e-6

    def test_norm_gradient_and_zero_subgradient(self):
        x = RNG.normal(size=(4, 3)) + 0.5
        err, _ = ad.gradcheck(lambda L: ad.norm(L[0], axis=-1).sum(), [x])
        assert err < 1e-7
        z = ad.Tensor(np.zeros((2, 3)), requires_grad=True)
        ad.norm(z, axis=-1).sum().backward()
        np.testing.assert_array_equal(z.grad, np.zeros((2, 3)))


class TestBackwardSemantics:
    def test_double_backward_doubles_gradients(self):
        x = ad.Tensor(RNG.normal(size=(3,)), requires_grad=True)
        loss = (ad.sinh(x) * x).sum()
        loss.backward()
        g1 = x.grad.copy()
        loss.backward()
        np.testing.assert_array_equal(x.grad, 2.0 * g1)

    def test_fanout_accumulates(self):
        x = ad.Tensor(np.array(2.0), requires_grad=True)
        y = x * x + x * 3.0
        y.backward()
        assert float(x.grad) == pytest.approx(2 * 2.0 + 3.0)

    def test_backward_deterministic(self):
        def run():
            x = ad.Tensor(np.linspace(0.1, 1.0, 12).reshape(3, 4), requires_grad=True)
            ((ad.exp(x) * ad.log(x + 1.0)).sum() ** 2.0).backward()
            return x.grad
        np.testing.assert_array_equal(run(), run())

    def test_non_scalar_loss_rejected(self):
        tape = ad.Tape()
        t = tape.register("w", ad.Tensor(np.zeros(3), requires_grad=True))
        with pytest.raises(ValidationError):
            tape.backward(t * 2.0)

    def test_tape_collects_named_gradients(self):
        tape = ad.Tape()
        w = tape.register("w", ad.Tensor(np.array([1.0, 2.0]), requires_grad=True))
        x = np.array([[3.0], [4.0]])
        grads = tape.backward((ad.reshape(w, (1, 2)) @ x).sum())
        np.testing.assert_allclose(grads["w"], x[:, 0])

    def test_eval_mode_builds_no_graph(self):
        x = ad.Tensor(RNG.normal(size=(3,)))  # requires_grad False
        y = ad.cosh(x) * 2.0
        assert not y.requires_grad and y._parents == ()


class TestFusedAndConv:
    def test_softmax_cross_entropy_value_and_grad(self):
        logits = RNG.normal(size=(5, 4))
        labels = RNG.integers(0, 4, size=5)
        # value oracle: explicit log-softmax
        p = np.exp(logits - logits.max(1, keepdims=True))
        p /= p.sum(1, keepdims=True)
        expected = -np.mean(np.log(p[np.arange(5), labels]))
        got = ad.softmax_cross_entropy(logits, labels)
        assert abs(got - expected) < 1e-12
        err, _ = ad.gradcheck(lambda L: ad.softmax_cross_entropy(L[0], labels), [logits])
        assert err < 1e-8

    def test_uniform_logits_give_log_c(self):
        logits = np.zeros((7, 4))
        labels = np.array([0, 1, 2, 3, 0, 1, 2])
        assert abs(ad.softmax_cross_entropy(logits, labels) - math.log(4)) < 1e-12

    def test_conv2d_matches_naive(self):
        x = RNG.normal(size=(2, 3, 5, 7))
        w = RNG.normal(size=(4, 3, 2, 3))
        y = ad.conv2d(x, w, stride=(1, 2), padding=(1, 1, 0, 2))
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (0, 2)))
        ho = (5 + 2 - 2) // 1 + 1
        wo = (7 + 2 - 3) // 2 + 1
        naive = np.zeros((2, 4, ho, wo))
        for i in range(ho):
            for j in range(wo):
                patch = xp[:, :, i : i + 2, j * 2 : j * 2 + 3]
                naive[:, :, i, j] = np.einsum("nchw,fchw->nf", patch, w)
        np.testing.assert_allclose(y, naive, atol=1e-12)

    def test_conv2d_fft_path_matches_gemm(self):
        x = RNG.normal(size=(2, 2, 3, 50))
        w = RNG.normal(size=(4, 1, 1, 20))
        fft = ad.conv2d(x, w, padding=(0, 0, 10, 9), groups=2)
        # force the im2col path through an equivalent 2-row kernel
        w2 = np.zeros((4, 1, 2, 20))
        w2[:, :, 0, :] = w[:, :, 0, :]
        gemm = ad.conv2d(np.pad(x, ((0, 0), (0, 0), (0, 1), (0, 0))), w2,
                         padding=(0, 0, 10, 9), groups=2)
        np.testing.assert_allclose(fft, gemm, atol=1e-10)

    def test_conv_and_pool_gradients(self):
        x = RNG.normal(size=(2, 2, 4, 8))
        w = RNG.normal(size=(4, 1, 2, 3))
        probe = RNG.normal(size=(2, 4, 3, 6))
        err, _ = ad.gradcheck(
            lambda L: (ad.conv2d(L[0], L[1], groups=2) * probe).sum(), [x, w]
        )
        assert err < 1e-8
        err, _ = ad.gradcheck(lambda L: (ad.avg_pool2d(L[0], (2, 4)) ** 2.0).sum(), [x])
        assert err < 1e-8

    def test_conv_geometry_errors(self):
        with pytest.raises(DimensionError):
            ad.conv2d(np.zeros((2, 3, 4, 4)), np.zeros((4, 2, 2, 2)), groups=1)
        with pytest.raises(DimensionError):
            ad.avg_pool2d(np.zeros((1, 1, 4, 6)), (3, 4))


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        params = {"w": np.array([1.0, -2.0])}
        state = ad.adam_init(params)
        new, _ = ad.adam_step(params, {"w": np.zeros(2)}, state)
        np.testing.assert_array_equal(new["w"], params["w"])

    def test_single_step_descends(self):
        params = {"w": np.array(1.0)}
        state = ad.adam_init(params)
        new, _ = ad.adam_step(params, {"w": np.array(2.0)}, state, lr=0.1)
        assert new["w"] < 1.0

    def test_converges_on_quadratic(self):
        """200 steps on 0.5*w'Aw reach a small gradient norm."""
        rng = np.random.default_rng(3)
        m = rng.normal(size=(4, 4))
        a = m @ m.T + np.eye(4)
        params = {"w": rng.normal(size=4)}
        state = ad.adam_init(params)
        for _ in range(200):
            g = a @ params["w"]
            params, state = ad.adam_step(params, {"w": g}, state, lr=0.05)
        assert np.linalg.norm(a @ params["w"]) < 1e-3

    def test_shape_mismatch_rejected(self):
        params = {"w": np.zeros(3)}
        with pytest.raises(DimensionError):
            ad.adam_step(params, {"w": np.zeros(4)}, ad.adam_init(params))
