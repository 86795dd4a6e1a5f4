"""Registered finite-difference checks for every differentiable layer.

Each check builds a small random configuration, runs one forward through
the layer (or the composite loss), and compares reverse-mode gradients of
all trainable inputs against central finite differences.  The CLI's
gradcheck command and the acceptance suite both run this registry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers as ly
from .alignment import DomainStats, hhsw_loss
from .frechet import karcher_mean_fixed
from .geometry import clamp_space_norm, lift, random_points
from .model import Heegnet, ModelConfig

DEFAULT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    worst_input: str
    passed: bool


def _probe(rng, shape):
    return rng.normal(size=shape)


def _check_temporal_conv(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 1, 4, 24))
    conv = ly.Conv2d(1, 4, (1, 16), rng, padding="same")
    probe = _probe(rng, (3, 4, 4, 24))
    return ad.gradcheck(
        lambda L: (ad.conv2d(L[0], L[1], padding=conv.padding) * probe).sum(),
        [x, conv.weight.value], names=["input", "weight"],
    )


def _check_depthwise_conv(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4, 5, 8))
    conv = ly.Conv2d(4, 8, (5, 1), rng, groups=4)
    probe = _probe(rng, (3, 8, 1, 8))
    return ad.gradcheck(
        lambda L: (ad.conv2d(L[0], L[1], groups=4) * probe).sum(),
        [x, conv.weight.value], names=["input", "weight"],
    )


def _check_batch_norm(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 3, 2, 6))
    bn = ly.BatchNorm2d(3)
    probe = _probe(rng, x.shape)

    def build(L):
        layer = ly.BatchNorm2d(3)
        layer.gamma, layer.beta = L[1], L[2]
        return (layer(L[0], train=True) * probe).sum()

    return ad.gradcheck(build, [x, bn.gamma.value, bn.beta.value],
                        names=["input", "gamma", "beta"])


def _check_lift(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 6)) * 3.0
    probe = _probe(rng, (5, 7))
    return ad.gradcheck(
        lambda L: (lift(clamp_space_norm(L[0], 2.5)) * probe).sum(), [x], names=["input"]
    )


def _check_lorentz_elu(seed):
    rng = np.random.default_rng(seed)
    pts = random_points(rng, 6, 5, radius=1.5)
    probe = _probe(rng, pts.shape)
    return ad.gradcheck(lambda L: (ly.lorentz_elu(L[0]) * probe).sum(), [pts], names=["input"])


def _check_lfc(seed):
    rng = np.random.default_rng(seed)
    pts = random_points(rng, 5, 4, radius=1.2)
    layer = ly.LorentzLinear(4, 6, rng)
    probe = _probe(rng, (5, 7))

    def build(L):
        m = ly.LorentzLinear(4, 6, np.random.default_rng(0))
        m.weight, m.bias, m.log_gain, m.gate_dir, m.gate_bias = L[1:]
        return (m(L[0]) * probe).sum()

    arrays = [pts, layer.weight.value, layer.bias.value, layer.log_gain.value,
              layer.gate_dir.value, layer.gate_bias.value]
    return ad.gradcheck(build, arrays,
                        names=["input", "weight", "bias", "log_gain", "gate_dir", "gate_bias"])


def _check_lorentz_conv(seed):
    rng = np.random.default_rng(seed)
    fmap = random_points(rng, 2 * 1 * 6, 4, radius=1.0).reshape(2, 1, 6, 5)
    layer = ly.LorentzConv(4, 4, (1, 2), rng, stride=(1, 2))
    probe = _probe(rng, (2, 1, 3, 5))

    def build(L):
        m = ly.LorentzConv(4, 4, (1, 2), np.random.default_rng(0), stride=(1, 2))
        m.linear.weight, m.linear.bias, m.linear.log_gain, m.linear.gate_dir, m.linear.gate_bias = L[1:]
        return (m(L[0]) * probe).sum()

    lin = layer.linear
    arrays = [fmap, lin.weight.value, lin.bias.value, lin.log_gain.value,
              lin.gate_dir.value, lin.gate_bias.value]
    return ad.gradcheck(build, arrays,
                        names=["input", "weight", "bias", "log_gain", "gate_dir", "gate_bias"])


def _check_lorentz_pool(seed):
    rng = np.random.default_rng(seed)
    fmap = random_points(rng, 2 * 8, 4, radius=1.2).reshape(2, 1, 8, 5)
    probe = _probe(rng, (2, 1, 2, 5))
    return ad.gradcheck(
        lambda L: (ly.lorentz_avg_pool(L[0], 4) * probe).sum(), [fmap], names=["input"]
    )


def _check_hcat_mlr(seed):
    rng = np.random.default_rng(seed)
    sites = random_points(rng, 3 * 4, 3, radius=1.0).reshape(3, 4, 4)
    mlr = ly.LorentzMlr(12, 3, rng)
    probe = _probe(rng, (3, 3))

    def build(L):
        m = ly.LorentzMlr(12, 3, np.random.default_rng(0))
        m.normals, m.offsets = L[1], L[2]
        return (m(ly.hcat(L[0])) * probe).sum()

    return ad.gradcheck(build, [sites, mlr.normals.value, mlr.offsets.value],
                        names=["input", "normals", "offsets"])


def _check_karcher_mean(seed):
    rng = np.random.default_rng(seed)
    pts = random_points(rng, 7, 4, radius=1.3)
    probe = _probe(rng, (5,))
    w = np.full(7, 1.0 / 7)
    return ad.gradcheck(
        lambda L: (karcher_mean_fixed(L[0], w, iterations=12) * probe).sum(),
        [pts], names=["input"],
    )


def _check_hbn(seed):
    rng = np.random.default_rng(seed)
    pts = random_points(rng, 8, 4, radius=1.2)
    domains = np.array([0] * 4 + [1] * 4)
    probe = _probe(rng, pts.shape)

    def build(L):
        layer = ly.DomainBatchNorm(4, mean_iters=12)
        layer.log_scale = L[1]
        out, _ = layer(L[0], domains, "train")
        return (out * probe).sum()

    return ad.gradcheck(build, [pts, np.zeros(())], names=["input", "log_scale"])


def _check_hhsw(seed):
    rng = np.random.default_rng(seed)
    pts = random_points(rng, 8, 4, radius=1.2)
    domains = np.array([0] * 4 + [1] * 4)

    def build(L):
        return hhsw_loss(L[0], domains, slices=8, rng=np.random.default_rng(seed + 1))

    # smaller step: the sorted transport term is only piecewise smooth and a
    # wide window can straddle an assignment change
    return ad.gradcheck(build, [pts], names=["input"], step=1e-5)


def _check_composite_loss(seed):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(
        n_channels=3, n_times=32, n_classes=3, temporal_filters=4, depth_multiplier=2,
        temporal_kernel=8, depth_kernel=4, hhsw_slices=4, mean_iters=8,
        dropout=0.0, seed=seed,
    )
    model = Heegnet(cfg)
    x = rng.normal(size=(6, 3, 32))
    labels = np.array([0, 1, 2, 0, 1, 2])
    domains = np.array([0, 0, 0, 1, 1, 1])
    names = list(model.tape.parameters().keys())
    arrays = [model.tape.parameters()[n].value for n in names]

    def build(L):
        m = Heegnet(cfg)
        for name, leaf in zip(names, L):
            layer_name, pname = name.split(".", 1)
            m._layers()[layer_name].set_parameter(pname, leaf)
        loss, _ = m.training_loss(x, labels, domains, np.random.default_rng(seed + 2))
        return loss

    return ad.gradcheck(build, arrays, names=names, step=1e-5)


REGISTRY = {
    "temporal_conv": _check_temporal_conv,
    "depthwise_conv": _check_depthwise_conv,
    "batch_norm": _check_batch_norm,
    "lift_clamp": _check_lift,
    "lorentz_elu": _check_lorentz_elu,
    "lorentz_fc": _check_lfc,
    "lorentz_conv": _check_lorentz_conv,
    "lorentz_pool": _check_lorentz_pool,
    "hcat_mlr": _check_hcat_mlr,
    "karcher_mean": _check_karcher_mean,
    "domain_batch_norm": _check_hbn,
    "hhsw_loss": _check_hhsw,
    "composite_loss": _check_composite_loss,
}


def run_gradient_suite(seeds=(0, 1, 2), tolerance=DEFAULT_TOLERANCE, names=None):
    """Run every registered check on each seed; returns a list of CheckResult."""
    results = []
    for name, fn in REGISTRY.items():
        if names is not None and name not in names:
            continue
        worst, worst_input = 0.0, ""
        for seed in seeds:
            err, which = fn(int(seed))
            if err >= worst:
                worst, worst_input = err, which
        results.append(CheckResult(name, worst, worst_input, worst < tolerance))
    return results
