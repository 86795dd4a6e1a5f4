"""Lorentz-model primitives: constraints, metric, exp/log maps, transport.

Points live on the upper sheet of the hyperboloid {p : <p,p>_L = 1/K, p_t > 0}
for curvature K < 0, embedded in Minkowski space with inner product
<u,v>_L = <u_s, v_s> - u_t v_t.  The first coordinate is the time component.

Two API levels coexist:

* array functions (``inner``, ``dist``, ``expmap`` ...) act on arrays whose
  last axis holds ambient coordinates, and accept autodiff Tensors as well
  as ndarrays, so the same formulas serve plain numerics and layers;
* typed wrappers (``lorentz_inner``, ``geodesic_distance`` ...) act on
  validated ``LorentzPoint``/``TangentVector`` values and raise on
  off-manifold input.

All internal math is float64; acosh/cosh cancellation dominates error at
float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConstraintError, DimensionError, NumericError, ValidationError

TOL_MANIFOLD = 1e-7
DEFAULT_MAX_SPACE_NORM = 32.0
_PT_DENOM_GUARD = 1e-12


# ---------------------------------------------------------------------------
# array API (ndarray or Tensor, ambient coordinates on the last axis)
# ---------------------------------------------------------------------------

def inner(u, v):
    """Lorentz inner product <u,v>_L = <u_s,v_s> - u_t v_t along the last axis."""
    return ad.sum_(u[..., 1:] * v[..., 1:], axis=-1) - u[..., 0] * v[..., 0]


def origin(n, k=-1.0):
    """Origin of the n-dimensional Lorentz model, [sqrt(-1/k), 0, ..., 0]."""
    o = np.zeros(n + 1)
    o[0] = np.sqrt(-1.0 / k)
    return o


def time_part(p):
    return p[..., 0]


def space_part(p):
    return p[..., 1:]


def lift(space, k=-1.0):
    """Recompute the time component from a space vector: on-manifold by construction."""
    t = ad.sqrt(ad.sum_(space * space, axis=-1, keepdims=True) - 1.0 / k)
    return ad.concat([t, space], axis=-1)


def manifold_defect(p, k=-1.0):
    """|<p,p>_L - 1/k|, zero on the hyperboloid."""
    return np.abs(ad.value_of(inner(p, p)) - 1.0 / k)


def check_on_manifold(p, k=-1.0, tol=TOL_MANIFOLD, what="point"):
    pv = ad.value_of(p)
    defect = manifold_defect(pv, k)
    if np.any(defect > tol) or np.any(pv[..., 0] <= 0):
        worst = float(np.max(defect))
        raise ConstraintError(
            f"{what} is off the hyperboloid (curvature {k}): defect {worst:.3e} > {tol:.1e}"
        )


def dist(p, q, k=-1.0):
    """Geodesic distance acosh(K <p,q>_L)/sqrt(-K) (array path clamps at 1)."""
    arg = k * inner(p, q)
    if ad.is_tensor(arg):
        return ad.acosh(arg) / np.sqrt(-k)
    return np.arccosh(np.maximum(arg, 1.0)) / np.sqrt(-k)


def expand_last(x):
    """Append a trailing axis of size 1 (works for Tensors and ndarrays)."""
    if ad.is_tensor(x):
        return ad.reshape(x, x.shape + (1,))
    x = np.asarray(x)
    return x.reshape(x.shape + (1,))


def expmap(base, v, k=-1.0):
    """Map a tangent vector at `base` to the manifold.

    cosh(a) base + sinh(a) v / a with a = sqrt(-K) ||v||_L, evaluated through
    even functions of a^2 so the v -> 0 limit is exact and smooth.
    """
    m = expand_last((-k) * ad.clamp(inner(v, v), min=0.0))
    return ad.cosh_sqrt(m) * base + ad.sinhc_sqrt(m) * v


def logmap(base, q, k=-1.0):
    """Inverse of expmap: tangent vector at `base` pointing to q."""
    beta = ad.clamp(k * inner(base, q), min=1.0)
    f = ad.acosh_over_sqrtm1(beta)
    return expand_last(f) * (q - expand_last(beta) * base)


def transport(p, q, v, k=-1.0):
    """Parallel transport of tangent v from T_p to T_q along the geodesic."""
    num = k * inner(q, v)
    den = 1.0 + k * inner(p, q)
    den_v = np.asarray(ad.value_of(den))
    if np.any(np.abs(den_v) < _PT_DENOM_GUARD):
        raise NumericError("parallel transport denominator vanished (antipodal bases)")
    return v - expand_last(num / den) * (p + q)


def project_tangent(p, u, k=-1.0):
    """Project an ambient vector onto the tangent space at p."""
    return u - expand_last(k * inner(p, u)) * p


def clamp_space_norm(space, max_norm=DEFAULT_MAX_SPACE_NORM):
    """Rescale vectors whose Euclidean norm exceeds max_norm; identity otherwise."""
    if max_norm <= 0:
        raise ValidationError("max_norm must be positive")
    n = ad.norm(space, axis=-1, keepdims=True)
    factor = ad.clamp(max_norm / ad.clamp(n, min=1e-300), max=1.0)
    return space * factor


def tangent_norm(v, k=-1.0):
    """Lorentz norm sqrt(<v,v>_L) of a (spacelike) tangent vector."""
    return ad.sqrt(ad.clamp(inner(v, v), min=0.0))


def random_points(rng, count, n, k=-1.0, radius=1.0):
    """Points uniform-in-radius in a geodesic ball around the origin (test helper)."""
    dirs = rng.normal(size=(count, n))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=-1, keepdims=True), 1e-30)
    r = rng.uniform(0.0, radius, size=(count, 1))
    v = np.concatenate([np.zeros((count, 1)), r * dirs], axis=1)
    return expmap(np.broadcast_to(origin(n, k), (count, n + 1)), v, k)


# ---------------------------------------------------------------------------
# typed API
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Curvature:
    """Constant negative curvature of the hyperbolic space (default -1)."""

    k: float = -1.0

    def __post_init__(self):
        if not np.isfinite(self.k) or self.k >= 0:
            raise ValidationError(f"curvature must be strictly negative, got {self.k}")

    @property
    def sqrt_neg(self):
        return float(np.sqrt(-self.k))

    @property
    def origin_time(self):
        return float(np.sqrt(-1.0 / self.k))


@dataclass(frozen=True, eq=False)
class LorentzPoint:
    """Validated point on the hyperboloid, stored as time and space components."""

    time: float
    space: np.ndarray
    curvature: Curvature = field(default_factory=Curvature)

    def __eq__(self, other):
        return (
            isinstance(other, LorentzPoint)
            and self.curvature == other.curvature
            and self.time == other.time
            and np.array_equal(self.space, other.space)
        )

    def __hash__(self):
        return hash((self.time, self.space.tobytes(), self.curvature))

    def __post_init__(self):
        object.__setattr__(self, "space", np.asarray(self.space, dtype=np.float64))
        object.__setattr__(self, "time", float(self.time))
        if self.space.ndim != 1 or self.space.size < 1:
            raise DimensionError("space component must be a 1-D vector of length >= 1")
        if self.time <= 0:
            raise ConstraintError(f"time component must be positive, got {self.time}")
        check_on_manifold(self.ambient, self.curvature.k)

    @property
    def ambient(self):
        return np.concatenate([[self.time], self.space])

    @property
    def dim(self):
        return self.space.size

    @classmethod
    def from_ambient(cls, ambient, curvature=Curvature()):
        ambient = np.asarray(ambient, dtype=np.float64)
        if ambient.ndim != 1 or ambient.size < 2:
            raise DimensionError("ambient vector must be 1-D with length >= 2")
        return cls(ambient[0], ambient[1:], curvature)

    @classmethod
    def origin(cls, n, curvature=Curvature()):
        return cls.from_ambient(origin(n, curvature.k), curvature)

    def is_origin(self):
        return bool(np.all(self.space == 0.0))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Ambient vector tagged with (and orthogonal to) its base point."""

    ambient: np.ndarray
    base: LorentzPoint

    def __eq__(self, other):
        return (
            isinstance(other, TangentVector)
            and self.base == other.base
            and np.array_equal(self.ambient, other.ambient)
        )

    def __hash__(self):
        return hash((self.ambient.tobytes(), self.base))

    def __post_init__(self):
        object.__setattr__(self, "ambient", np.asarray(self.ambient, dtype=np.float64))
        if self.ambient.shape != (self.base.dim + 1,):
            raise DimensionError(
                f"tangent length {self.ambient.size} != base ambient {self.base.dim + 1}"
            )
        residual = abs(float(inner(self.base.ambient, self.ambient)))
        scale = max(1.0, float(np.linalg.norm(self.ambient)))
        if residual > TOL_MANIFOLD * scale:
            raise ConstraintError(f"vector is not tangent at base: <p,v>_L = {residual:.3e}")

    @property
    def norm(self):
        return float(tangent_norm(self.ambient, self.base.curvature.k))

    @classmethod
    def zero(cls, base):
        return cls(np.zeros(base.dim + 1), base)


def _same_geometry(p, q):
    if p.dim != q.dim:
        raise DimensionError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if p.curvature != q.curvature:
        raise ValidationError(f"curvature mismatch: {p.curvature.k} vs {q.curvature.k}")


def lorentz_inner(u, v):
    """Lorentz inner product of two raw ambient vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size < 2:
        raise DimensionError(f"operands must be equal-length vectors (>= 2), got {u.shape} and {v.shape}")
    return float(inner(u, v))


def geodesic_distance(p: LorentzPoint, q: LorentzPoint) -> float:
    _same_geometry(p, q)
    return float(dist(p.ambient, q.ambient, p.curvature.k))


def exp_map(base: LorentzPoint, v: TangentVector) -> LorentzPoint:
    if v.base != base:
        raise ValidationError("tangent vector is based at a different point")
    return LorentzPoint.from_ambient(expmap(base.ambient, v.ambient, base.curvature.k), base.curvature)


def log_map(base: LorentzPoint, q: LorentzPoint) -> TangentVector:
    _same_geometry(base, q)
    return TangentVector(logmap(base.ambient, q.ambient, base.curvature.k), base)


def parallel_transport(p: LorentzPoint, q: LorentzPoint, v: TangentVector) -> TangentVector:
    _same_geometry(p, q)
    if v.base != p:
        raise ValidationError("tangent vector is based at a different point")
    return TangentVector(transport(p.ambient, q.ambient, v.ambient, p.curvature.k), q)


def lift_space(space, curvature=Curvature()) -> LorentzPoint:
    space = np.asarray(space, dtype=np.float64)
    if not np.all(np.isfinite(space)):
        raise ValidationError("space vector must be finite")
    return LorentzPoint.from_ambient(lift(space, curvature.k), curvature)


def clamp_norm(space, max_norm=DEFAULT_MAX_SPACE_NORM):
    """Spec'd name for the space-component norm safeguard."""
    return clamp_space_norm(np.asarray(space, dtype=np.float64), max_norm)
