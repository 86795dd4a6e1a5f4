"""Neural layers: a Euclidean convolutional front end and Lorentz-model layers.

Euclidean layers follow compact EEG-decoder conventions (bias-free convs in
front of batch norm, ELU, average pooling, dropout).  Hyperbolic layers keep
every output on the hyperboloid by recomputing the time component from the
space components, so the manifold constraint holds by construction.

All forwards accept autodiff Tensors; layers hold their trainable tensors
and expose them via ``named_parameters``.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .alignment import DomainStats, HbnParams, MomentumSchedule, adapt_statistics, hdsmbn
from .errors import DimensionError, NumericError, ValidationError
from .frechet import frechet_mean_array, karcher_mean_fixed
from .geometry import expand_last, inner, lift

_EPS_DIR = 1e-12


class Layer:
    """Minimal parameter-holding base: subclasses fill self.params."""

    def __init__(self):
        self.params = {}

    def named_parameters(self, prefix=""):
        return {f"{prefix}{name}": t for name, t in self.params.items()}

    def set_parameter(self, name, tensor):
        """Swap a trainable tensor in place (used by the gradient harness)."""
        if name not in self.params:
            raise ValidationError(f"layer has no parameter {name!r}")
        self.params[name] = tensor
        setattr(self, name, tensor)

    def _param(self, name, value):
        t = ad.Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        return t


# ---------------------------------------------------------------------------
# Euclidean encoder blocks
# ---------------------------------------------------------------------------

class Conv2d(Layer):
    """Bias-free 2-D cross-correlation with channel grouping."""

    def __init__(self, in_channels, out_channels, kernel, rng, groups=1, padding="valid"):
        super().__init__()
        kh, kw = kernel
        if in_channels % groups or out_channels % groups:
            raise ValidationError("channels must divide groups")
        fan_in = (in_channels // groups) * kh * kw
        scale = 1.0 / np.sqrt(fan_in)
        self.weight = self._param(
            "weight", rng.uniform(-scale, scale, size=(out_channels, in_channels // groups, kh, kw))
        )
        self.groups = groups
        if padding == "same":
            pt, pb = ad.same_padding(kh)
            pl, pr = ad.same_padding(kw)
            self.padding = (pt, pb, pl, pr)
        elif padding == "valid":
            self.padding = (0, 0, 0, 0)
        else:
            self.padding = tuple(padding)

    def __call__(self, x):
        return ad.conv2d(x, self.weight, stride=(1, 1), padding=self.padding, groups=self.groups)


class BatchNorm2d(Layer):
    """Per-channel batch normalization with momentum running statistics."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.gamma = self._param("gamma", np.ones(channels))
        self.beta = self._param("beta", np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, train):
        if train:
            xv = ad.value_of(x)
            mean = ad.mean(x, axis=(0, 2, 3))
            var = ad.mean((x - ad.reshape(mean, (1, -1, 1, 1))) ** 2.0, axis=(0, 2, 3))
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * xv.mean(axis=(0, 2, 3))
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * xv.var(axis=(0, 2, 3))
        else:
            mean, var = self.running_mean, self.running_var
        mean_b = ad.reshape(mean, (1, -1, 1, 1)) if ad.is_tensor(mean) else mean.reshape(1, -1, 1, 1)
        var_b = ad.reshape(var, (1, -1, 1, 1)) if ad.is_tensor(var) else var.reshape(1, -1, 1, 1)
        xhat = (x - mean_b) / ad.sqrt(var_b + self.eps)
        return xhat * ad.reshape(self.gamma, (1, -1, 1, 1)) + ad.reshape(self.beta, (1, -1, 1, 1))


class Dropout:
    """Inverted dropout driven by the caller's RNG stream; identity at eval."""

    def __init__(self, p):
        if not 0.0 <= p < 1.0:
            raise ValidationError("dropout probability must be in [0, 1)")
        self.p = p

    def __call__(self, x, train, rng=None):
        if not train or self.p == 0.0:
            return x
        if rng is None:
            raise ValidationError("training-mode dropout needs an RNG")
        mask = (rng.random(ad.value_of(x).shape) >= self.p) / (1.0 - self.p)
        return x * mask


# ---------------------------------------------------------------------------
# Lorentz layers
# ---------------------------------------------------------------------------

def lorentz_elu(points, k=-1.0):
    """ELU on the space components; time recomputed to stay on-manifold."""
    space = ad.elu(points[..., 1:])
    return lift(space, k)


def hcat(points, k=-1.0):
    """Lorentz direct concatenation of the second-to-last axis (..., N, n+1).

    time = sqrt(sum_i t_i^2 + (N-1)/K), space = concatenated space parts.
    """
    shape = ad.value_of(points).shape
    if len(shape) < 2:
        raise DimensionError("hcat expects (..., N, n+1)")
    n_pts = shape[-2]
    times = points[..., 0]
    arg = ad.sum_(times * times, axis=-1, keepdims=True) + (n_pts - 1) / k
    arg_v = np.asarray(ad.value_of(arg))
    if np.any(arg_v < 0):
        raise NumericError("concatenation time argument went negative (off-manifold input)")
    time = ad.sqrt(ad.clamp(arg, min=0.0))
    space = ad.reshape(points[..., 1:], shape[:-2] + (n_pts * (shape[-1] - 1),))
    return ad.concat([time, space], axis=-1)


class LorentzLinear(Layer):
    """Fully-connected map between hyperboloids.

    Gated reading (default): direction u = W psi(p) + b, gate
    g = lambda sigmoid(<v, p> + b'), space = g u / (||u|| + eps), time
    recomputed.  The ungated reading keeps psi(W p + b) as the space part
    directly.  lambda stays positive through its log parameterization.
    """

    def __init__(self, in_dim, out_dim, rng, activation="identity", gated=True):
        super().__init__()
        if activation not in ("identity", "elu"):
            raise ValidationError(f"unsupported activation {activation!r}")
        scale = 1.0 / np.sqrt(in_dim + 1)
        self.weight = self._param("weight", rng.uniform(-scale, scale, size=(out_dim, in_dim + 1)))
        self.bias = self._param("bias", np.zeros(out_dim))
        self.log_gain = self._param("log_gain", np.zeros(()))
        self.gate_dir = self._param("gate_dir", rng.uniform(-scale, scale, size=(in_dim + 1,)))
        self.gate_bias = self._param("gate_bias", np.zeros(()))
        self.activation = activation
        self.gated = gated
        self.in_dim = in_dim
        self.out_dim = out_dim

    def __call__(self, points, k=-1.0):
        pv_shape = ad.value_of(points).shape
        if pv_shape[-1] != self.in_dim + 1:
            raise DimensionError(f"expected ambient dim {self.in_dim + 1}, got {pv_shape[-1]}")
        x = ad.elu(points) if self.activation == "elu" else points
        u = ad.matmul(x, ad.transpose(self.weight)) + self.bias
        if self.gated:
            gain = ad.exp(self.log_gain)
            gate = gain * ad.sigmoid(
                ad.sum_(points * self.gate_dir, axis=-1, keepdims=True) + self.gate_bias
            )
            direction = u / (ad.norm(u, axis=-1, keepdims=True) + _EPS_DIR)
            space = gate * direction
        else:
            space = u
        return lift(space, k)


class LorentzConv(Layer):
    """Convolution over a hyperbolic feature map: LFC of the HCat'ed window."""

    def __init__(self, in_dim, out_dim, kernel, rng, stride=(1, 1), activation="identity", gated=True):
        super().__init__()
        kh, kw = kernel
        self.kernel = (kh, kw)
        self.stride = tuple(stride)
        self.linear = LorentzLinear(in_dim * kh * kw, out_dim, rng, activation=activation, gated=gated)
        self.params = self.linear.params

    def set_parameter(self, name, tensor):
        self.linear.set_parameter(name, tensor)

    def __call__(self, fmap, k=-1.0):
        shape = ad.value_of(fmap).shape
        if len(shape) != 4:
            raise DimensionError("feature map must be (batch, height, width, ambient)")
        b, h, w, amb = shape
        kh, kw = self.kernel
        sh, sw = self.stride
        ho = (h - kh) // sh + 1
        wo = (w - kw) // sw + 1
        if ho < 1 or wo < 1:
            raise DimensionError(f"kernel {self.kernel} does not fit input {(h, w)}")
        if kh == 1 and kw == 1 and sh == 1 and sw == 1:
            out = self.linear(ad.reshape(fmap, (b * h * w, amb)), k)
            return ad.reshape(out, (b, h, w, self.linear.out_dim + 1))
        windows = []
        for i in range(ho):
            for j in range(wo):
                win = fmap[:, i * sh : i * sh + kh, j * sw : j * sw + kw, :]
                windows.append(ad.reshape(win, (b, 1, kh * kw, amb)))
        stacked = ad.concat(windows, axis=1)  # (b, ho*wo, kh*kw, ambient)
        merged = hcat(stacked, k)
        out = self.linear(ad.reshape(merged, (b * ho * wo, kh * kw * (amb - 1) + 1)), k)
        return ad.reshape(out, (b, ho, wo, self.linear.out_dim + 1))


def lorentz_avg_pool(fmap, window, k=-1.0, mode="centroid", mean_iters=15):
    """Non-overlapping pooling along the width axis of (batch, H, W, ambient).

    "centroid" (default) renormalizes the uniform ambient average back to
    the hyperboloid; "karcher" runs the iterative mean instead.
    """
    shape = ad.value_of(fmap).shape
    if len(shape) != 4:
        raise DimensionError("feature map must be (batch, height, width, ambient)")
    b, h, w, amb = shape
    if w % window:
        raise DimensionError(f"pool window {window} must divide width {w}")
    wo = w // window
    grouped = ad.reshape(fmap, (b, h, wo, window, amb))
    if mode == "centroid":
        c = ad.mean(grouped, axis=3)
        denom = ad.sqrt(ad.clamp((-k) * (-inner(c, c)), min=1e-30))
        return c / expand_last(denom)
    if mode == "karcher":
        flat = ad.reshape(grouped, (b * h * wo, window, amb))
        weights = np.full(window, 1.0 / window)
        outs = []
        for i in range(ad.value_of(flat).shape[0]):
            pts = flat[i]
            if ad.is_tensor(fmap):
                mu = karcher_mean_fixed(pts, weights, k, iterations=mean_iters)
                outs.append(ad.reshape(mu, (1, amb)))
            else:
                mu, _, _, _ = frechet_mean_array(pts, weights, k)
                outs.append(mu[None])
        stacked = ad.concat(outs, axis=0)
        return ad.reshape(stacked, (b, h, wo, amb))
    raise ValidationError(f"unknown pool mode {mode!r}")


class LorentzMlr(Layer):
    """Multinomial logistic regression from signed distances to hyperplanes.

    Per class c with offset a_c and normal z_c:
        alpha_c = cosh(r a_c) <z_c, p_s> - sinh(r a_c) ||z_c|| p_t
        beta_c  = sqrt(||cosh(r a_c) z_c||^2 - (sinh(r a_c) ||z_c||)^2)
        logit_c = beta_c asinh(r alpha_c / beta_c) / r,     r = sqrt(-K)
    (the sign(alpha)|.| form folds into asinh's oddness).
    """

    def __init__(self, in_dim, n_classes, rng):
        super().__init__()
        scale = 1.0 / np.sqrt(in_dim)
        self.normals = self._param("normals", rng.uniform(-scale, scale, size=(n_classes, in_dim)))
        self.offsets = self._param("offsets", np.zeros(n_classes))
        self.in_dim = in_dim
        self.n_classes = n_classes

    def __call__(self, points, k=-1.0):
        shape = ad.value_of(points).shape
        if shape[-1] != self.in_dim + 1:
            raise DimensionError(f"expected ambient dim {self.in_dim + 1}, got {shape[-1]}")
        single = len(shape) == 1
        if single:
            points = ad.reshape(points, (1, shape[0])) if ad.is_tensor(points) else points[None]
        r = np.sqrt(-k)
        ch = ad.cosh(r * self.offsets)
        sh = ad.sinh(r * self.offsets)
        znorm = ad.norm(self.normals, axis=-1)
        alpha = ch * ad.matmul(points[..., 1:], ad.transpose(self.normals)) - (
            sh * znorm
        ) * expand_last(points[..., 0])
        beta_sq = (ch * znorm) ** 2.0 - (sh * znorm) ** 2.0
        beta = ad.sqrt(ad.clamp(beta_sq, min=_EPS_DIR**2))
        logits = beta * ad.asinh(r * alpha / beta) / r
        return logits[0] if single else logits


class DomainBatchNorm(Layer):
    """Stage-1 alignment layer: per-domain momentum normalization.

    Wraps the functional normalization with a learnable positive scale and
    owned running statistics.  `mode` is "train", "eval", or "adapt";
    adapt mode only folds batch statistics into the test track and returns
    the input unchanged.
    """

    def __init__(self, dim, schedule=MomentumSchedule(), epsilon=1e-5, k=-1.0, mean_iters=25):
        super().__init__()
        self.log_scale = self._param("log_scale", np.zeros(()))
        self.schedule = schedule
        self.epsilon = epsilon
        self.k = k
        self.mean_iters = mean_iters
        self.stats = DomainStats(dim, k)

    def gamma(self):
        return ad.exp(self.log_scale)

    def __call__(self, points, domains, mode):
        if mode == "adapt":
            adapt_statistics(points, domains, self.stats, self.schedule, self.k, self.mean_iters)
            return points, set()
        if mode not in ("train", "eval"):
            raise ValidationError(f"unknown mode {mode!r}")
        return hdsmbn(
            points, domains, self.stats, self.schedule,
            HbnParams(epsilon=self.epsilon), train=(mode == "train"),
            k=self.k, mean_iters=self.mean_iters, gamma=self.gamma(),
        )
