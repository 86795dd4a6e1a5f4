"""Flat dotted-key run configuration with TOML file support.

Every tunable of the toolkit appears as a dotted key with a documented
default.  Unknown keys are rejected; command-line flags override file
values; the fully resolved configuration is echoed into every output
directory so runs are reproducible from their artifacts.
"""

from __future__ import annotations

import sys

import numpy as np

from .errors import DataFormatError, ValidationError
from .model import ModelConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS = {
    # synthetic dataset generation
    "data.domains": 6,
    "data.families": 2,
    "data.variants": 2,
    "data.per_cell": 40,
    "data.channels": 8,
    "data.times": 256,
    "data.sampling_rate": 128.0,
    "data.snr": 1.0,
    "data.shift_strength": 0.5,
    "data.gain_spread": 0.4,
    "data.max_latency": 4,
    "data.sensor_noise": 0.05,
    # architecture
    "model.curvature": -1.0,
    "model.temporal_filters": 8,
    "model.temporal_kernel": 64,
    "model.depth_multiplier": 2,
    "model.depth_kernel": 16,
    "model.pool1": 4,
    "model.pool2": 8,
    "model.dropout": 0.25,
    "model.max_space_norm": 32.0,
    "model.lfc_gated": True,
    "model.lfc_activation": "identity",
    "model.pool_mode": "centroid",
    "model.mean_iters": 15,
    "model.bn_momentum": 0.1,
    "model.bn_eps": 1e-5,
    # alignment
    "align.moments": True,
    "align.hhsw_weight": 0.5,
    "align.hhsw_slices": 32,
    "align.hhsw_exponent": 2,
    "align.hhsw_attach": "post_stage1",
    "align.reference": "sphere",
    "align.eta0": 1.0,
    "align.decay_rate": 0.9,
    "align.eta_min": 0.01,
    "align.eta_test": 0.1,
    "align.hbn_eps": 1e-5,
    # training / adaptation / evaluation
    "train.epochs": 100,
    "train.batch_size": 64,
    "train.lr": 1e-3,
    "train.patience": 10,
    "train.val_fraction": 0.2,
    "train.fold_policy": "auto",
    "train.adapt_passes": 10,
    "train.adapt_batch": 64,
    "train.eval_batch": 256,
    # global
    "seed": 0,
}


def _flatten(table, prefix=""):
    out = {}
    for key, value in table.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, f"{dotted}."))
        else:
            out[dotted] = value
    return out


def _coerce(key, value):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ValidationError(f"{key} expects a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            as_float = float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"{key} expects an integer, got {value!r}") from None
        if as_float != int(as_float):
            raise ValidationError(f"{key} expects an integer, got {value!r}")
        return int(as_float)
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"{key} expects a number, got {value!r}") from None
    return str(value)


class RunConfig:
    """Resolved flat configuration: defaults < file < explicit overrides."""

    def __init__(self, values=None):
        self.values = dict(DEFAULTS)
        for key, value in (values or {}).items():
            if key not in DEFAULTS:
                raise ValidationError(f"unknown configuration key {key!r}")
            self.values[key] = _coerce(key, value)

    @classmethod
    def load(cls, path=None, overrides=None):
        merged = {}
        if path is not None:
            try:
                with open(path, "rb") as fh:
                    table = tomllib.load(fh)
            except OSError as exc:
                raise DataFormatError(f"cannot read config {path}: {exc}") from exc
            except tomllib.TOMLDecodeError as exc:
                raise DataFormatError(f"malformed config {path}: {exc}") from exc
            merged.update(_flatten(table))
        if overrides:
            merged.update(overrides)
        return cls(merged)

    def __getitem__(self, key):
        if key not in self.values:
            raise ValidationError(f"unknown configuration key {key!r}")
        return self.values[key]

    def replace(self, **dotted):
        values = dict(self.values)
        values.update({k.replace("__", "."): v for k, v in dotted.items()})
        return RunConfig(values)

    def to_toml(self, header_comment=None):
        lines = []
        if header_comment:
            lines.extend(f"# {line}" for line in header_comment.splitlines())
        for key in sorted(self.values):
            value = self.values[key]
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, (int, np.integer)):
                text = str(int(value))
            elif isinstance(value, float):
                text = repr(float(value))
            else:
                text = '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'
            lines.append(f'"{key}" = {text}')
        return "\n".join(lines) + "\n"

    def model_config(self, n_channels, n_times, n_classes, seed=None):
        return ModelConfig(
            n_channels=n_channels,
            n_times=n_times,
            n_classes=n_classes,
            curvature=self["model.curvature"],
            temporal_filters=self["model.temporal_filters"],
            temporal_kernel=self["model.temporal_kernel"],
            depth_multiplier=self["model.depth_multiplier"],
            depth_kernel=self["model.depth_kernel"],
            pool1=self["model.pool1"],
            pool2=self["model.pool2"],
            dropout=self["model.dropout"],
            max_space_norm=self["model.max_space_norm"],
            lfc_gated=self["model.lfc_gated"],
            lfc_activation=self["model.lfc_activation"],
            pool_mode=self["model.pool_mode"],
            mean_iters=self["model.mean_iters"],
            align_moments=self["align.moments"],
            hhsw_weight=self["align.hhsw_weight"],
            hhsw_slices=self["align.hhsw_slices"],
            hhsw_exponent=self["align.hhsw_exponent"],
            hhsw_attach=self["align.hhsw_attach"],
            reference=self["align.reference"],
            eta0=self["align.eta0"],
            decay_rate=self["align.decay_rate"],
            eta_min=self["align.eta_min"],
            eta_test=self["align.eta_test"],
            bn_momentum=self["model.bn_momentum"],
            bn_eps=self["model.bn_eps"],
            hbn_eps=self["align.hbn_eps"],
            seed=self["seed"] if seed is None else seed,
        )


def factor_classes(n_classes):
    """families x variants factorization of a class count, closest to square."""
    if n_classes < 2:
        raise ValidationError("need at least 2 classes")
    for fam in range(int(np.sqrt(n_classes)), 0, -1):
        if n_classes % fam == 0:
            return fam, n_classes // fam
    return 1, n_classes
