"""Two-stage hyperbolic domain alignment.

Stage 1 (moment alignment): hyperbolic batch normalization with per-domain
momentum running statistics kept on two tracks, a decaying-momentum training
track and a fixed-momentum test track.  Stage 2 (distribution alignment):
a sliced-Wasserstein penalty that matches each domain's embedding cloud to a
reference draw around the origin, using horospherical (Busemann) projections
as the slicing operator.

The normalization core and the loss accept autodiff Tensors, so both stages
are differentiable end to end; running statistics are plain arrays updated
outside the gradient path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, ValidationError
from .frechet import (
    frechet_mean_array,
    frechet_variance_array,
    karcher_mean_fixed,
    momentum_mean_update_array,
)
from .geometry import check_on_manifold, expand_last, expmap, inner, origin
from .gyro import gyro_add, gyro_inverse, gyro_scale

HBN_EPS = 1e-5
_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class MomentumSchedule:
    """Clamped exponential decay for the training momentum; fixed test momentum."""

    eta0: float = 1.0
    decay_rate: float = 0.9
    eta_min: float = 0.01
    eta_test: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.eta0 <= 1.0:
            raise ValidationError("eta0 must be in (0, 1]")
        if not 0.0 < self.decay_rate < 1.0:
            raise ValidationError("decay_rate must be in (0, 1)")
        if not 0.0 < self.eta_min <= 1.0:
            raise ValidationError("eta_min must be in (0, 1]")
        if not 0.0 < self.eta_test <= 1.0:
            raise ValidationError("eta_test must be in (0, 1]")

    def eta_train(self, step):
        return max(self.eta_min, self.eta0 * self.decay_rate**step)


@dataclass(frozen=True)
class HbnParams:
    """Learnable scale (positive) and variance floor of the normalization."""

    gamma: float = 1.0
    epsilon: float = HBN_EPS

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")


@dataclass
class DomainEntry:
    """Running first/second moments of one domain, on train and test tracks."""

    train_mean: np.ndarray
    train_var: float
    test_mean: np.ndarray
    test_var: float
    steps: int = 0

    def copy(self):
        return DomainEntry(
            self.train_mean.copy(), self.train_var, self.test_mean.copy(), self.test_var, self.steps
        )


@dataclass
class DomainStats:
    """Per-domain running Fréchet statistics, initialized at (origin, unit variance)."""

    dim: int
    curvature: float = -1.0
    entries: dict = field(default_factory=dict)

    def get_or_create(self, domain):
        entry = self.entries.get(domain)
        if entry is None:
            o = origin(self.dim, self.curvature)
            entry = DomainEntry(o.copy(), 1.0, o.copy(), 1.0)
            self.entries[domain] = entry
        return entry

    def known(self, domain):
        return domain in self.entries

    def copy(self):
        out = DomainStats(self.dim, self.curvature)
        out.entries = {d: e.copy() for d, e in self.entries.items()}
        return out


def hbn_normalize(points, mean, var, gamma, epsilon, k=-1.0):
    """Centering then scaling: (gamma/sqrt(var+eps)) (.) ((-mean) (+) p_i)."""
    centered = gyro_add(gyro_inverse(mean), points, k)
    scale = gamma / ad.sqrt(var + epsilon)
    return gyro_scale(scale, centered, k)


def hbn(points, params=HbnParams(), k=-1.0, tol=1e-8, max_iter=100):
    """Batch hyperbolic normalization with freshly computed batch statistics."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 1:
        raise ValidationError("need a (batch, dim+1) array with batch >= 1")
    w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    mu, var, _, _ = frechet_mean_array(pts, w, k, tol=tol, max_iter=max_iter)
    return hbn_normalize(pts, mu, var, params.gamma, params.epsilon, k)


def batch_statistics(points, k=-1.0, mean_iters=25):
    """Differentiable uniform-weight Fréchet mean and variance of stacked points."""
    count = ad.value_of(points).shape[0]
    w = np.full(count, 1.0 / count)
    if ad.is_tensor(points):
        mu = karcher_mean_fixed(points, w, k, iterations=mean_iters)
    else:
        mu, var, _, _ = frechet_mean_array(points, w, k)
        return mu, var
    var = frechet_variance_array(points, w, mu, k)
    return mu, var


def update_running_tracks(entry, batch_mean, batch_var, schedule, k=-1.0):
    """Advance both momentum tracks with the detached batch statistics."""
    eta_tr = schedule.eta_train(entry.steps)
    entry.train_mean = np.asarray(
        momentum_mean_update_array(entry.train_mean, batch_mean, eta_tr, k)
    )
    entry.train_var = float((1.0 - eta_tr) * entry.train_var + eta_tr * batch_var)
    entry.test_mean = np.asarray(
        momentum_mean_update_array(entry.test_mean, batch_mean, schedule.eta_test, k)
    )
    entry.test_var = float((1.0 - schedule.eta_test) * entry.test_var + schedule.eta_test * batch_var)
    entry.steps += 1
    return eta_tr


def hdsmbn(points, domains, stats, schedule=MomentumSchedule(), params=HbnParams(),
           train=True, k=-1.0, mean_iters=25, gamma=None):
    """Domain-specific momentum batch normalization.

    Train mode computes per-domain batch statistics, folds them into both
    running tracks, and normalizes with the just-updated training track
    (gradients flow through the batch-statistic contribution; the stored
    buffers are detached).  Eval mode normalizes with the test track and
    never mutates state; unseen domains fall back to origin/unit statistics
    and are reported in the returned flag set.

    `gamma` may override params.gamma with a live Tensor so a learnable
    scale stays on the tape.  Returns (normalized points, unseen domains).
    """
    values = ad.value_of(points)
    if values.ndim != 2:
        raise DimensionError("points must be (batch, dim+1)")
    domains = np.asarray(domains)
    if domains.shape != (values.shape[0],):
        raise DimensionError("domains must tag every row")
    if stats.dim != values.shape[1] - 1:
        raise DimensionError("statistics dimensionality differs from the points'")
    scale = params.gamma if gamma is None else gamma
    unseen = set()
    pieces, order = [], []
    for d in sorted(set(domains.tolist())):
        rows = np.nonzero(domains == d)[0]
        sub = points[rows] if ad.is_tensor(points) else values[rows]
        if train:
            if rows.size < 2:
                raise ValidationError(f"domain {d!r} has {rows.size} sample(s); train mode needs >= 2")
            entry = stats.get_or_create(d)
            mu_b, var_b = batch_statistics(sub, k, mean_iters)
            eta_tr = schedule.eta_train(entry.steps)
            mean_used = momentum_mean_update_array(entry.train_mean, mu_b, eta_tr, k)
            var_used = (1.0 - eta_tr) * entry.train_var + eta_tr * var_b
            update_running_tracks(
                entry, np.asarray(ad.value_of(mu_b)), float(ad.value_of(var_b)), schedule, k
            )
        else:
            if not stats.known(d):
                unseen.add(d)
                mean_used = origin(stats.dim, k)
                var_used = 1.0
            else:
                entry = stats.entries[d]
                mean_used = entry.test_mean
                var_used = entry.test_var
        pieces.append(hbn_normalize(sub, mean_used, var_used, scale, params.epsilon, k))
        order.append(rows)
    perm = np.concatenate(order)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size)
    stacked = ad.concat(pieces, axis=0) if any(ad.is_tensor(p) for p in pieces) else np.concatenate(pieces, axis=0)
    return stacked[inverse], unseen


def adapt_statistics(points, domains, stats, schedule=MomentumSchedule(), k=-1.0, mean_iters=25):
    """Fold batch statistics into the test track only (source-free adaptation).

    Labels are never involved; each represented domain needs >= 2 samples.
    """
    values = np.asarray(ad.value_of(points))
    domains = np.asarray(domains)
    if values.ndim != 2 or domains.shape != (values.shape[0],):
        raise DimensionError("points must be (batch, dim+1) with one domain tag per row")
    for d in sorted(set(domains.tolist())):
        rows = np.nonzero(domains == d)[0]
        if rows.size < 2:
            raise ValidationError(f"domain {d!r} needs >= 2 samples to adapt")
        entry = stats.get_or_create(d)
        mu_b, var_b = batch_statistics(values[rows], k, mean_iters)
        entry.test_mean = np.asarray(
            momentum_mean_update_array(entry.test_mean, mu_b, schedule.eta_test, k)
        )
        entry.test_var = float((1 - schedule.eta_test) * entry.test_var + schedule.eta_test * var_b)
        entry.steps += 1


# ---------------------------------------------------------------------------
# horospherical projections and sliced Wasserstein
# ---------------------------------------------------------------------------

def busemann_project(points, direction, k=-1.0, validate=True):
    """Signed horospherical coordinate of points along one ideal direction.

    B_v(p) = log(-sqrt(-K) <p, xi_v>_L)/sqrt(-K) with xi_v = [1, v]/sqrt(-K),
    which reduces to log(p_t - <p_s, v>)/sqrt(-K); zero at the origin and
    decreasing linearly along the geodesic toward the ideal point of v.
    The log argument is positive for on-manifold input (time dominance) and
    floored defensively anyway.
    """
    direction = np.asarray(direction, dtype=np.float64)
    if validate and abs(float(np.linalg.norm(direction)) - 1.0) > _UNIT_TOL:
        raise ValidationError("direction must be a unit vector")
    sk = np.sqrt(-k)
    arg = points[..., 0] - ad.sum_(points[..., 1:] * direction, axis=-1)
    return ad.log(ad.clamp(arg, min=1e-300)) / sk


def busemann_project_many(points, directions, k=-1.0):
    """Busemann coordinates for a bank of unit directions: (count, slices)."""
    sk = np.sqrt(-k)
    proj = ad.matmul(points[..., 1:], np.ascontiguousarray(directions.T))
    arg = expand_last(points[..., 0]) - proj
    return ad.log(ad.clamp(arg, min=1e-300)) / sk


def wasserstein_1d(a, b, p=2):
    """p-th power of the 1-D p-Wasserstein distance between equal-size samples."""
    if p < 1:
        raise ValidationError("exponent must be >= 1")
    av, bv = ad.value_of(a), ad.value_of(b)
    if av.shape != bv.shape:
        raise ValidationError(f"sample shape mismatch: {av.shape} vs {bv.shape}")
    if ad.is_tensor(a) or ad.is_tensor(b):
        ia = np.argsort(av, axis=0)
        ib = np.argsort(bv, axis=0)
        a_sorted = ad.take_along_axis(ad.as_tensor(a), ia, 0)
        b_sorted = ad.take_along_axis(ad.as_tensor(b), ib, 0)
        diff = a_sorted - b_sorted
        if p == 2:
            return ad.mean(diff * diff, axis=0)
        return ad.mean(ad.absolute(diff) ** float(p), axis=0)
    a_sorted = np.sort(av, axis=0)
    b_sorted = np.sort(bv, axis=0)
    return np.mean(np.abs(a_sorted - b_sorted) ** float(p), axis=0)


def sample_reference(count, dim, k=-1.0, rng=None, kind="sphere"):
    """Reference cloud around the origin for distribution matching.

    "sphere" (default): isotropic Gaussian rows normalized to unit length and
    exp-mapped, i.e. the geodesic sphere of radius 1.  "wrapped_normal"
    skips the normalization and wraps the raw Gaussian instead.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    z = rng.normal(size=(count, dim))
    if kind == "sphere":
        z = z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-8)
    elif kind != "wrapped_normal":
        raise ValidationError(f"unknown reference kind {kind!r}")
    tangent = np.concatenate([np.zeros((count, 1)), z], axis=1)
    o = np.broadcast_to(origin(dim, k), tangent.shape)
    return expmap(o, tangent, k)


def sample_directions(rng, slices, dim):
    v = rng.normal(size=(slices, dim))
    return v / np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-30)


def sliced_wasserstein(a, b, slices=1000, p=2, rng=None, k=-1.0):
    """Monte-Carlo sliced discrepancy between two equal-size clouds.

    Projects both clouds horospherically along `slices` uniform directions
    and averages the per-slice 1-D transport cost.  Returns (value,
    per-slice values); value is a Tensor when either input is.
    """
    av, bv = ad.value_of(a), ad.value_of(b)
    if av.shape != bv.shape:
        raise ValidationError(f"clouds must have matching shapes, got {av.shape} vs {bv.shape}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    dirs = sample_directions(rng, slices, av.shape[1] - 1)
    pa = busemann_project_many(a, dirs, k)
    pb = busemann_project_many(b, dirs, k)
    per_slice = wasserstein_1d(pa, pb, p)
    return ad.mean(per_slice), per_slice


def hhsw_loss(points, domains, slices=1000, p=2, rng=None, k=-1.0, reference="sphere"):
    """Distribution-alignment penalty summed over the domains in the batch.

    Per domain: draw a same-size reference cloud around the origin, draw
    `slices` uniform unit directions, project both clouds horospherically,
    and average the per-slice 1-D Wasserstein cost.  Gradients flow to the
    input points only; references and directions are constants of the step.
    """
    values = ad.value_of(points)
    domains = np.asarray(domains)
    if values.ndim != 2 or domains.shape != (values.shape[0],):
        raise DimensionError("points must be (batch, dim+1) with one domain tag per row")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    dim = values.shape[1] - 1
    total = None
    for d in sorted(set(domains.tolist())):
        rows = np.nonzero(domains == d)[0]
        if rows.size < 2:
            raise ValidationError(f"domain {d!r} needs >= 2 samples for distribution matching")
        sub = points[rows] if ad.is_tensor(points) else values[rows]
        ref = sample_reference(rows.size, dim, k, rng, kind=reference)
        loss_d, _ = sliced_wasserstein(sub, ref, slices=slices, p=p, rng=rng, k=k)
        total = loss_d if total is None else total + loss_d
    return total
