"""Hybrid Euclidean/hyperbolic classifier for epoched multichannel signals.

The encoder stacks a temporal convolution, a depthwise spatial convolution,
and a depthwise temporal convolution (compact EEG-decoder style), lifts the
per-timestep feature vectors onto the hyperboloid, and mixes them with a
pointwise Lorentz convolution.  A domain-specific momentum batch norm
aligns per-domain moments; Lorentz ELU, pooling, and direct concatenation
produce one hyperbolic point per sample, classified by hyperbolic MLR.

Checkpoints are a single little-endian file: magic "HEEG1", a JSON header
(format version, config, array manifest, per-domain statistics), then the
raw float64 array payloads.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .alignment import MomentumSchedule, hhsw_loss
from .errors import DataFormatError, DimensionError, ValidationError
from .geometry import clamp_space_norm, lift
from .layers import (
    BatchNorm2d,
    Conv2d,
    DomainBatchNorm,
    Dropout,
    LorentzConv,
    LorentzMlr,
    hcat,
    lorentz_avg_pool,
    lorentz_elu,
)

CHECKPOINT_MAGIC = b"HEEG1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n_channels: int
    n_times: int
    n_classes: int
    curvature: float = -1.0
    temporal_filters: int = 8
    temporal_kernel: int = 64
    depth_multiplier: int = 2
    depth_kernel: int = 16
    pool1: int = 4
    pool2: int = 8
    dropout: float = 0.25
    max_space_norm: float = 32.0
    lfc_gated: bool = True
    lfc_activation: str = "identity"
    pool_mode: str = "centroid"
    mean_iters: int = 25
    align_moments: bool = True
    hhsw_weight: float = 0.5
    hhsw_slices: int = 64
    hhsw_exponent: int = 2
    hhsw_attach: str = "post_stage1"
    reference: str = "sphere"
    eta0: float = 1.0
    decay_rate: float = 0.9
    eta_min: float = 0.01
    eta_test: float = 0.1
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    hbn_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValidationError("need at least 2 classes")
        if self.n_channels < 1 or self.n_times < 1:
            raise ValidationError("channels and times must be positive")
        if self.curvature >= 0:
            raise ValidationError("curvature must be negative")
        if self.hhsw_weight < 0:
            raise ValidationError("hhsw_weight must be nonnegative")
        if self.hhsw_attach not in ("post_stage1", "pre_mlr"):
            raise ValidationError(f"unknown hhsw_attach {self.hhsw_attach!r}")

    @property
    def spatial_filters(self):
        return self.temporal_filters * self.depth_multiplier

    @property
    def padded_times(self):
        block = self.pool1 * self.pool2
        return ((self.n_times + block - 1) // block) * block

    @property
    def times_after_pool1(self):
        return self.padded_times // self.pool1

    @property
    def times_after_pool2(self):
        return self.padded_times // (self.pool1 * self.pool2)

    @property
    def embed_dim(self):
        """Space dimensionality of the per-timestep hyperbolic embedding."""
        return self.spatial_filters

    @property
    def flat_dim(self):
        """Space dimensionality of the concatenated pre-classifier point."""
        return self.spatial_filters * self.times_after_pool2

    def schedule(self):
        return MomentumSchedule(self.eta0, self.decay_rate, self.eta_min, self.eta_test)


@dataclass
class ForwardResult:
    logits: object
    stage1_points: object
    stage1_domains: np.ndarray
    pre_mlr: object
    unseen_domains: set


class Heegnet:
    """The full architecture with its parameters and per-domain statistics."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        k = config.curvature
        p, f1, f2 = config.n_channels, config.temporal_filters, config.spatial_filters
        self.temp_conv = Conv2d(1, f1, (1, config.temporal_kernel), rng, padding="same")
        self.bn1 = BatchNorm2d(f1, config.bn_momentum, config.bn_eps)
        self.spat_conv = Conv2d(f1, f2, (p, 1), rng, groups=f1)
        self.bn2 = BatchNorm2d(f2, config.bn_momentum, config.bn_eps)
        self.drop = Dropout(config.dropout)
        self.depth_conv = Conv2d(f2, f2, (1, config.depth_kernel), rng, groups=f2, padding="same")
        self.point_conv = LorentzConv(
            f2, f2, (1, 1), rng, activation=config.lfc_activation, gated=config.lfc_gated
        )
        self.dbn = DomainBatchNorm(
            f2, config.schedule(), config.hbn_eps, k, config.mean_iters
        ) if config.align_moments else None
        self.mlr = LorentzMlr(config.flat_dim, config.n_classes, rng)
        self.tape = ad.Tape()
        for name, layer in self._layers().items():
            for pname, tensor in layer.named_parameters(prefix=f"{name}.").items():
                self.tape.register(pname, tensor)
        self.source_domains: list = []

    def _layers(self):
        layers = {
            "temp_conv": self.temp_conv,
            "bn1": self.bn1,
            "spat_conv": self.spat_conv,
            "bn2": self.bn2,
            "depth_conv": self.depth_conv,
            "point_conv": self.point_conv,
            "mlr": self.mlr,
        }
        if self.dbn is not None:
            layers["dbn"] = self.dbn
        return layers

    # -- forward ------------------------------------------------------------
    def _pad(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != self.config.n_channels:
            raise DimensionError(
                f"epochs must be (batch, {self.config.n_channels}, times), got {x.shape}"
            )
        t = x.shape[2]
        if t > self.config.padded_times:
            raise DimensionError(f"epoch length {t} exceeds configured {self.config.n_times}")
        if t < self.config.padded_times:
            x = np.pad(x, ((0, 0), (0, 0), (0, self.config.padded_times - t)))
        return x

    def forward(self, x, domains, mode="train", rng=None):
        """Run the network; mode is "train", "eval", or "adapt".

        Adapt mode stops after folding stage-1 statistics (no logits).
        """
        cfg = self.config
        train = mode == "train"
        x = self._pad(x)
        domains = np.asarray(domains)
        if domains.shape != (x.shape[0],):
            raise DimensionError("one domain tag per epoch required")
        h = x[:, None, :, :]
        h = self.temp_conv(h)
        h = self.bn1(h, train)
        h = self.spat_conv(h)
        h = self.bn2(h, train)
        h = ad.elu(h)
        h = ad.avg_pool2d(h, (1, cfg.pool1))
        h = self.drop(h, train, rng)
        h = self.depth_conv(h)  # (B, F2, 1, T1)
        b = x.shape[0]
        t1 = cfg.times_after_pool1
        h = ad.reshape(h, (b, cfg.spatial_filters, t1))
        h = ad.transpose(h, (0, 2, 1))  # (B, T1, F2)
        h = clamp_space_norm(h, cfg.max_space_norm)
        fmap = lift(h, cfg.curvature)  # (B, T1, F2+1)
        fmap = ad.reshape(fmap, (b, 1, t1, cfg.spatial_filters + 1))
        fmap = self.point_conv(fmap, cfg.curvature)
        rows = ad.reshape(fmap, (b * t1, cfg.spatial_filters + 1))
        row_domains = np.repeat(domains, t1)
        unseen = set()
        if self.dbn is not None:
            rows, unseen = self.dbn(rows, row_domains, mode)
        if mode == "adapt":
            return ForwardResult(None, rows, row_domains, None, unseen)
        stage1_rows = rows
        fmap = ad.reshape(rows, (b, 1, t1, cfg.spatial_filters + 1))
        fmap = lorentz_elu(fmap, cfg.curvature)
        fmap = lorentz_avg_pool(fmap, cfg.pool2, cfg.curvature, mode=cfg.pool_mode)
        sites = ad.reshape(fmap, (b, cfg.times_after_pool2, cfg.spatial_filters + 1))
        flat = hcat(sites, cfg.curvature)  # (B, flat_dim + 1)
        logits = self.mlr(flat, cfg.curvature)
        return ForwardResult(logits, stage1_rows, row_domains, flat, unseen)

    def predict(self, x, domains, batch_size=256):
        """Eval-mode class predictions (deterministic)."""
        out, _ = self.predict_logits(x, domains, batch_size)
        return np.argmax(out, axis=1)

    def predict_logits(self, x, domains, batch_size=256):
        x = np.asarray(x, dtype=np.float64)
        domains = np.asarray(domains)
        chunks, unseen = [], set()
        for start in range(0, x.shape[0], batch_size):
            sl = slice(start, start + batch_size)
            res = self.forward(x[sl], domains[sl], mode="eval")
            chunks.append(ad.value_of(res.logits))
            unseen |= res.unseen_domains
        return np.concatenate(chunks, axis=0), unseen

    # -- loss -----------------------------------------------------------------
    def training_loss(self, x, labels, domains, rng):
        """Cross-entropy plus the weighted distribution-alignment penalty."""
        cfg = self.config
        res = self.forward(x, domains, mode="train", rng=rng)
        ce = ad.softmax_cross_entropy(res.logits, np.asarray(labels))
        parts = {"cross_entropy": float(ad.value_of(ce))}
        loss = ce
        if cfg.hhsw_weight > 0:
            if cfg.hhsw_attach == "post_stage1":
                pts, doms = res.stage1_points, res.stage1_domains
            else:
                pts, doms = res.pre_mlr, np.asarray(domains)
            penalty = hhsw_loss(
                pts, doms, slices=cfg.hhsw_slices, p=cfg.hhsw_exponent,
                rng=rng, k=cfg.curvature, reference=cfg.reference,
            )
            parts["hhsw"] = float(ad.value_of(penalty))
            loss = loss + cfg.hhsw_weight * penalty
        parts["total"] = float(ad.value_of(loss))
        return loss, parts

    # -- state ----------------------------------------------------------------
    def named_buffers(self):
        return {
            "bn1.running_mean": self.bn1.running_mean,
            "bn1.running_var": self.bn1.running_var,
            "bn2.running_mean": self.bn2.running_mean,
            "bn2.running_var": self.bn2.running_var,
        }

    def get_state(self):
        """Deep-copied parameter/buffer/statistics snapshot."""
        state = {
            "params": {k: t.value.copy() for k, t in self.tape.parameters().items()},
            "buffers": {k: v.copy() for k, v in self.named_buffers().items()},
            "source_domains": list(self.source_domains),
            "stats": self.dbn.stats.copy() if self.dbn is not None else None,
        }
        return state

    def set_state(self, state):
        params = self.tape.parameters()
        for k, v in state["params"].items():
            params[k].value = v.copy()
        buffers = self.named_buffers()
        for k, v in state["buffers"].items():
            buffers[k][...] = v
        self.source_domains = list(state["source_domains"])
        if self.dbn is not None and state["stats"] is not None:
            self.dbn.stats = state["stats"].copy()


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

def save_checkpoint(model: Heegnet, path, extra=None):
    from . import __version__

    arrays = {f"param/{k}": t.value for k, t in model.tape.parameters().items()}
    arrays.update({f"buffer/{k}": v for k, v in model.named_buffers().items()})
    stats_meta = None
    if model.dbn is not None:
        stats_meta = {"dim": model.dbn.stats.dim, "curvature": model.dbn.stats.curvature, "entries": {}}
        for d, e in sorted(model.dbn.stats.entries.items()):
            key = str(int(d))
            arrays[f"stats/{key}/train_mean"] = e.train_mean
            arrays[f"stats/{key}/test_mean"] = e.test_mean
            stats_meta["entries"][key] = {
                "train_var": e.train_var,
                "test_var": e.test_var,
                "steps": e.steps,
            }
    manifest, payloads, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": CHECKPOINT_VERSION,
        "toolkit_version": __version__,
        "config": asdict(model.config),
        "source_domains": [int(d) for d in model.source_domains],
        "arrays": manifest,
        "domain_stats": stats_meta,
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for chunk in payloads:
            fh.write(chunk)


def load_checkpoint(path) -> Heegnet:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise DataFormatError(f"{path} is not a model checkpoint (bad magic)")
    pos = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack("<I", raw[pos : pos + 4])
    pos += 4
    try:
        header = json.loads(raw[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"corrupt checkpoint header in {path}") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {header.get('format_version')}")
    pos += hlen
    body = raw[pos:]
    model = Heegnet(ModelConfig(**header["config"]))
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=start).reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float64)
    params = model.tape.parameters()
    for k, t in params.items():
        t.value = arrays[f"param/{k}"].copy()
    for k, buf in model.named_buffers().items():
        buf[...] = arrays[f"buffer/{k}"]
    model.source_domains = [int(d) for d in header.get("source_domains", [])]
    meta = header.get("domain_stats")
    if model.dbn is not None and meta is not None:
        for key, entry in meta["entries"].items():
            d = int(key)
            e = model.dbn.stats.get_or_create(d)
            e.train_mean = arrays[f"stats/{key}/train_mean"].copy()
            e.test_mean = arrays[f"stats/{key}/test_mean"].copy()
            e.train_var = float(entry["train_var"])
            e.test_var = float(entry["test_var"])
            e.steps = int(entry["steps"])
    return model
