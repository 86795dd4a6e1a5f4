"""Deterministic synthetic data: manifold point clouds and pseudo-EEG epochs.

Both generators are pure functions of their configuration and seed.  The
cloud generator lays class prototypes on a two-level tree of tangent
directions (zero-sum simplex arrangements, so the constellation is centered
at the origin) and shifts each domain by a fixed left gyrotranslation.  The
epoch generator synthesizes evoked-response-like waveforms (family carrier
frequency, variant phase/harmonics, Hann envelope, class-specific spatial
pattern) in 1/f noise, then applies a per-domain mixing/gain/latency shift.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .dataio import EpochDataset
from .errors import ValidationError
from .geometry import expmap, origin, project_tangent
from .gyro import gyro_add


# ---------------------------------------------------------------------------
# manifold clouds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManifoldClouds:
    points: np.ndarray      # (count, dim+1)
    labels: np.ndarray      # (count,)
    domains: np.ndarray     # (count,)
    prototypes: np.ndarray  # (n_classes, dim+1)
    shift_points: np.ndarray  # (n_domains, dim+1)


def _simplex_directions(count, dim, rng):
    """`count` unit vectors in R^dim with exact zero sum (regular simplex)."""
    if count == 1:
        v = rng.normal(size=dim)
        return (v / np.linalg.norm(v))[None]
    basis = np.eye(count) - 1.0 / count
    u, s, _ = np.linalg.svd(basis)
    verts = u[:, : count - 1] * s[: count - 1]
    verts = verts - verts.mean(axis=0)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    frame = np.linalg.qr(rng.normal(size=(dim, count - 1)))[0]
    dirs = verts @ frame.T
    return dirs - dirs.mean(axis=0)  # exact zero sum despite rounding


def gen_manifold_clouds(n_domains, n_classes, per_class, dim, spread=0.1,
                        shift=0.5, seed=0, k=-1.0,
                        parent_radius=1.0, child_radius=0.5):
    """Domain-tagged hierarchical point clouds on the hyperboloid.

    n_classes must be a perfect square b*b: b parent directions refined by
    b child offsets each.  Samples are Gaussian tangent perturbations of
    their class prototype; each domain is moved by a left gyrotranslation
    of geodesic length `shift`.
    """
    b = math.isqrt(n_classes)
    if b * b != n_classes:
        raise ValidationError(f"n_classes must be a perfect square for a 2-level tree, got {n_classes}")
    if per_class < 1 or n_domains < 1:
        raise ValidationError("need per_class >= 1 and n_domains >= 1")
    rng = np.random.default_rng(seed)
    parents = _simplex_directions(b, dim, rng) * parent_radius
    tangents = []
    for i in range(b):
        children = _simplex_directions(b, dim, rng) * child_radius
        for j in range(b):
            tangents.append(parents[i] + children[j])
    tangents = np.asarray(tangents)
    o = origin(dim, k)
    prototypes = expmap(
        np.broadcast_to(o, (n_classes, dim + 1)),
        np.concatenate([np.zeros((n_classes, 1)), tangents], axis=1),
        k,
    )
    shift_dirs = rng.normal(size=(n_domains, dim))
    shift_dirs /= np.linalg.norm(shift_dirs, axis=1, keepdims=True)
    shift_points = expmap(
        np.broadcast_to(o, (n_domains, dim + 1)),
        np.concatenate([np.zeros((n_domains, 1)), shift * shift_dirs], axis=1),
        k,
    )
    all_points, all_labels, all_domains = [], [], []
    for d in range(n_domains):
        for c in range(n_classes):
            base = np.broadcast_to(prototypes[c], (per_class, dim + 1))
            noise = rng.normal(scale=spread, size=(per_class, dim + 1))
            tang = project_tangent(base, noise, k)
            pts = expmap(base, tang, k)
            if shift > 0:
                pts = gyro_add(np.broadcast_to(shift_points[d], pts.shape), pts, k)
            all_points.append(pts)
            all_labels.append(np.full(per_class, c))
            all_domains.append(np.full(per_class, d))
    return ManifoldClouds(
        points=np.concatenate(all_points),
        labels=np.concatenate(all_labels),
        domains=np.concatenate(all_domains),
        prototypes=prototypes,
        shift_points=shift_points,
    )


# ---------------------------------------------------------------------------
# pseudo-EEG epochs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftSpec:
    """One domain's acquisition shift: channel mixing, gain, noise, latency."""

    mixing: np.ndarray
    gain: float
    noise_sigma: float
    latency_shift: int

    def __post_init__(self):
        if self.gain <= 0:
            raise ValidationError("gain must be positive")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be nonnegative")
        m = np.asarray(self.mixing, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("mixing must be a square matrix")
        object.__setattr__(self, "mixing", m)


def make_shift_specs(n_domains, n_channels, strength, rng, gain_spread=0.4,
                     max_latency=4, sensor_noise=0.05):
    """Per-domain ShiftSpecs: identity blended with a random orthogonal matrix
    by `strength`, log-normal gain, strength-scaled latency and sensor noise."""
    if not 0.0 <= strength <= 1.0:
        raise ValidationError("shift strength must be in [0, 1]")
    specs = []
    for _ in range(n_domains):
        q = np.linalg.qr(rng.normal(size=(n_channels, n_channels)))[0]
        mixing = (1.0 - strength) * np.eye(n_channels) + strength * q
        gain = float(np.exp(strength * gain_spread * rng.normal()))
        lat_cap = int(round(strength * max_latency))
        latency = int(rng.integers(-lat_cap, lat_cap + 1)) if lat_cap > 0 else 0
        specs.append(ShiftSpec(mixing, gain, strength * sensor_noise, latency))
    return specs


def class_templates(families, variants, n_times, sampling_rate):
    """Noise-free class waveforms (families*variants, n_times), unit RMS.

    Family -> carrier frequency; variant -> phase offset and second-harmonic
    weight; all windowed by a Hann envelope.
    """
    t = np.arange(n_times) / sampling_rate
    env = np.hanning(n_times)
    templates = []
    for f in range(families):
        carrier = 5.0 + 4.0 * f
        for v in range(variants):
            phase = v * np.pi / max(variants, 1)
            harm = 0.2 + 0.6 * v / max(variants - 1, 1)
            wave = np.sin(2 * np.pi * carrier * t + phase) + harm * np.sin(
                2 * np.pi * 2 * carrier * t + 2 * phase
            )
            wave = env * wave
            templates.append(wave / np.sqrt(np.mean(wave**2)))
    return np.asarray(templates)


def pink_noise(rng, shape, n_times):
    """1/f-amplitude noise along the last axis, unit variance."""
    white = rng.normal(size=shape[:-1] + (n_times,))
    spec = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(n_times)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    colored = np.fft.irfft(spec * scale, n=n_times, axis=-1)
    sd = colored.std(axis=-1, keepdims=True)
    return colored / np.where(sd == 0, 1.0, sd)


def spatial_patterns(n_classes, n_channels, rng):
    w = rng.normal(size=(n_classes, n_channels))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def _config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()


def gen_epochs(n_domains, families, variants, n_channels, n_times, per_cell,
               snr=1.0, shift_strength=0.5, seed=0, sampling_rate=128.0,
               gain_spread=0.4, max_latency=4, sensor_noise=0.05,
               shift_specs=None):
    """Balanced, domain-tagged pseudo-EEG epochs as an EpochDataset.

    Every (domain, class) cell holds exactly `per_cell` epochs.  `snr` is
    the linear signal-to-noise power ratio (inf for noise-free), applied
    before the per-domain shift.  Storage is float32; generation is float64.
    """
    if n_channels < 2 or n_times < 64:
        raise ValidationError("need n_channels >= 2 and n_times >= 64")
    if per_cell < 1 or families < 1 or variants < 1 or n_domains < 1:
        raise ValidationError("counts must be positive")
    if not (snr > 0):
        raise ValidationError("snr must be positive (use float('inf') for noise-free)")
    config = {
        "kind": "pseudo_eeg_epochs",
        "n_domains": n_domains, "families": families, "variants": variants,
        "n_channels": n_channels, "n_times": n_times, "per_cell": per_cell,
        "snr": snr, "shift_strength": shift_strength, "seed": seed,
        "sampling_rate": sampling_rate, "gain_spread": gain_spread,
        "max_latency": max_latency, "sensor_noise": sensor_noise,
    }
    rng = np.random.default_rng(seed)
    n_classes = families * variants
    templates = class_templates(families, variants, n_times, sampling_rate)
    patterns = spatial_patterns(n_classes, n_channels, rng)
    if shift_specs is None:
        shift_specs = make_shift_specs(
            n_domains, n_channels, shift_strength, rng, gain_spread, max_latency, sensor_noise
        )
    elif len(shift_specs) != n_domains:
        raise ValidationError("one ShiftSpec per domain required")
    noise_amp = 0.0 if np.isinf(snr) else 1.0 / np.sqrt(snr)
    epochs, labels, domains = [], [], []
    for d in range(n_domains):
        spec = shift_specs[d]
        for c in range(n_classes):
            for _ in range(per_cell):
                amp = rng.uniform(0.7, 1.3)
                clean = amp * np.outer(patterns[c], templates[c])
                if noise_amp > 0:
                    clean = clean + noise_amp * pink_noise(rng, (n_channels,), n_times)
                shifted = spec.mixing @ clean
                if spec.latency_shift:
                    shifted = np.roll(shifted, spec.latency_shift, axis=-1)
                shifted = spec.gain * shifted
                if spec.noise_sigma > 0:
                    shifted = shifted + spec.noise_sigma * rng.normal(size=shifted.shape)
                epochs.append(shifted.astype(np.float32))
                labels.append(c)
                domains.append(d)
    class_names = [f"f{c // variants}v{c % variants}" for c in range(n_classes)]
    domain_names = [f"domain{d}" for d in range(n_domains)]
    return EpochDataset(
        epochs=np.asarray(epochs, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        domains=np.asarray(domains, dtype=np.int64),
        class_names=class_names,
        domain_names=domain_names,
        sampling_rate=float(sampling_rate),
        provenance=_config_hash(config),
    )
