"""Lorentz gyrovector operations.

Two interchangeable implementations are provided: the Riemannian composites
(exp/log/transport chains, kept as the test oracle) and the closed forms
(default fast path).  Closed-form addition special-cases exact-origin
operands so the identities 0 (+) q = q and p (+) 0 = p hold bitwise.

The array functions accept ndarrays or autodiff Tensors; the Tensor path
skips the exact-origin masking (origin operands are measure-zero on a tape
and the mask would drop their gradient).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import NumericError, ValidationError
from .geometry import (
    Curvature,
    LorentzPoint,
    _same_geometry,
    check_on_manifold,
    expand_last,
    expmap,
    inner,
    logmap,
    origin,
    transport,
)

_DENOM_GUARD = 1e-12
_SCALE_SERIES_CUTOFF = 1e-8


# ---------------------------------------------------------------------------
# array API
# ---------------------------------------------------------------------------

def gyro_inverse(p):
    """[p_t, -p_s]: the gyrogroup inverse (space reflection)."""
    return ad.concat([p[..., :1], -p[..., 1:]], axis=-1)


def gyro_add_riemannian(p, q, k=-1.0):
    """exp_p(PT_{0->p}(log_0(q))): the composite definition of gyroaddition."""
    n = ad.value_of(p).shape[-1] - 1
    o = origin(n, k)
    return expmap(p, transport(o, p, logmap(o, q, k), k), k)


def gyro_scale_riemannian(t, p, k=-1.0):
    """exp_0(t log_0(p)): the composite definition of gyromultiplication."""
    n = ad.value_of(p).shape[-1] - 1
    o = origin(n, k)
    return expmap(o, t * logmap(o, p, k), k)


def _gyro_add_general(p, q, k):
    sk = np.sqrt(-k)
    a = 1.0 + sk * p[..., 0]
    b = 1.0 + sk * q[..., 0]
    n_p = ad.sum_(p[..., 1:] * p[..., 1:], axis=-1)
    n_q = ad.sum_(q[..., 1:] * q[..., 1:], axis=-1)
    s_pq = ad.sum_(p[..., 1:] * q[..., 1:], axis=-1)
    d_term = a * a * b * b - 2.0 * k * a * b * s_pq + k * k * n_p * n_q
    n_term = a * a * n_q + 2.0 * a * b * s_pq + b * b * n_p
    a_s = a * b * b - 2.0 * k * b * s_pq - k * a * n_q
    a_q = b * (a * a + k * n_p)
    den = d_term + k * n_term
    den_v = np.asarray(ad.value_of(den))
    if np.any(np.abs(den_v) < _DENOM_GUARD):
        raise NumericError("gyroaddition denominator D + K*N vanished")
    time = (d_term - k * n_term) / (sk * den)
    space = 2.0 * (expand_last(a_s) * p[..., 1:] + expand_last(a_q) * q[..., 1:]) / expand_last(den)
    return ad.concat([expand_last(time), space], axis=-1)


def gyro_add(p, q, k=-1.0):
    """Closed-form gyroaddition p (+) q.

    Exact-origin operands short-circuit on the plain-array path so the group
    identities hold bitwise.
    """
    if ad.is_tensor(p) or ad.is_tensor(q):
        return _gyro_add_general(p, q, k)
    shape = np.broadcast_shapes(np.shape(p), np.shape(q))
    p = np.broadcast_to(np.asarray(p, dtype=np.float64), shape)
    q = np.broadcast_to(np.asarray(q, dtype=np.float64), shape)
    p_origin = expand_last(np.all(p[..., 1:] == 0.0, axis=-1))
    q_origin = expand_last(np.all(q[..., 1:] == 0.0, axis=-1))
    if np.all(p_origin):
        return q.copy()
    if np.all(q_origin):
        return p.copy()
    out = _gyro_add_general(p, q, k)
    return np.where(p_origin, q, np.where(q_origin, p, out))


def gyro_scale(t, p, k=-1.0):
    """Closed-form gyromultiplication t (.) p.

    Evaluated via sinh(t a)/sinh(a) with a = sqrt(-K) d(0, p), with a series
    branch in m = sinh(a)^2 near the origin so centered points scale stably.
    """
    sk = np.sqrt(-k)
    tensor_mode = ad.is_tensor(t) or ad.is_tensor(p)
    m = (-k) * ad.sum_(p[..., 1:] * p[..., 1:], axis=-1)
    small = np.asarray(ad.value_of(m)) < _SCALE_SERIES_CUTOFF
    m_far = ad.where(small, 1.0, m)
    alpha = ad.asinh(ad.sqrt(m_far))
    ratio_far = ad.sinh(t * alpha) / ad.sinh(alpha)
    time_far = ad.cosh(t * alpha) / sk
    ratio_near = t * (1.0 + ((t * t - 1.0) / 6.0) * m)
    time_near = (1.0 + (t * t) * m / 2.0) / sk
    ratio = ad.where(small, ratio_near, ratio_far)
    time = ad.where(small, time_near, time_far)
    out = ad.concat([expand_last(time), expand_last(ratio) * p[..., 1:]], axis=-1)
    if tensor_mode:
        return out
    # exact special cases on the plain-array path: t = 0 or p = origin -> origin
    t_arr = np.asarray(t, dtype=np.float64)
    zero_rows = expand_last((np.asarray(ad.value_of(m)) == 0.0) | (t_arr == 0.0))
    if np.any(zero_rows):
        o = np.broadcast_to(origin(np.shape(p)[-1] - 1, k), out.shape)
        out = np.where(np.broadcast_to(zero_rows, out.shape), o, out)
    return out


# ---------------------------------------------------------------------------
# typed API
# ---------------------------------------------------------------------------

def gyroinverse(p: LorentzPoint) -> LorentzPoint:
    return LorentzPoint(p.time, -p.space, p.curvature)


def gyroadd_closed(p: LorentzPoint, q: LorentzPoint) -> LorentzPoint:
    _same_geometry(p, q)
    if p.is_origin():
        return q
    if q.is_origin():
        return p
    return LorentzPoint.from_ambient(gyro_add(p.ambient, q.ambient, p.curvature.k), p.curvature)


def gyroadd_riemannian(p: LorentzPoint, q: LorentzPoint) -> LorentzPoint:
    _same_geometry(p, q)
    check_on_manifold(p.ambient, p.curvature.k)
    check_on_manifold(q.ambient, q.curvature.k)
    return LorentzPoint.from_ambient(
        gyro_add_riemannian(p.ambient, q.ambient, p.curvature.k), p.curvature
    )


def gyromul_closed(t: float, p: LorentzPoint) -> LorentzPoint:
    if t == 0.0 or p.is_origin():
        return LorentzPoint.origin(p.dim, p.curvature)
    return LorentzPoint.from_ambient(gyro_scale(float(t), p.ambient, p.curvature.k), p.curvature)


def gyromul_riemannian(t: float, p: LorentzPoint) -> LorentzPoint:
    return LorentzPoint.from_ambient(
        gyro_scale_riemannian(float(t), p.ambient, p.curvature.k), p.curvature
    )


def gyration(p, q, z, k=-1.0):
    """gyr[p,q] z evaluated as (-(p+q)) (+) (p (+) (q (+) z)); never a matrix."""
    pq = gyro_add(p, q, k)
    return gyro_add(gyro_inverse(pq), gyro_add(p, gyro_add(q, z, k), k), k)
