"""Four-point-condition hyperbolicity of finite metric spaces.

delta is computed for a fixed base point w via the Gromov-product matrix
A and the (max, min) matrix product:

    delta_w = max_{p,q} [ max_z min(A[p,z], A[z,q]) - A[p,q] ]

which is the tightest additive slack for that base; by standard delta-theory
it bounds the base-free constant within a factor of two.  A brute-force
triple scanner over the same base is kept as the oracle for small inputs.
The scale-invariant summary is delta_rel = 2 delta / diameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .geometry import inner

_ORACLE_LIMIT = 60
_EXACT_LIMIT = 2000
_BLOCK_ELEMENTS = 1 << 25  # ~256 MB of float64 temporaries per block


@dataclass(frozen=True)
class HyperbolicityReport:
    """Sampled hyperbolicity summary; delta_rel = 2*delta/diameter (0 if flat)."""

    delta: float
    diameter: float
    delta_rel: float
    sample_size: int
    batches: int
    delta_std: float = 0.0
    diameter_std: float = 0.0
    delta_rel_std: float = 0.0

    def __post_init__(self):
        expected = 2.0 * self.delta / self.diameter if self.diameter > 0 else 0.0
        if abs(self.delta_rel - expected) > 1e-12 * max(1.0, abs(expected)):
            raise ValidationError("delta_rel must equal 2*delta/diameter")


def _validate_metric(distances):
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DimensionError(f"distance matrix must be square, got {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValidationError("distance matrix contains non-finite entries")
    if np.any(np.abs(np.diag(d)) > 1e-12):
        raise ValidationError("distance matrix must have a zero diagonal")
    if np.any(np.abs(d - d.T) > 1e-9 * max(1.0, float(np.max(np.abs(d))))):
        raise ValidationError("distance matrix must be symmetric")
    if np.any(d < -1e-12):
        raise ValidationError("distances must be nonnegative")
    return d


def gromov_product(distances, i, j, base):
    """(i, j)_base = (d(i,base) + d(j,base) - d(i,j)) / 2."""
    d = _validate_metric(distances)
    n = d.shape[0]
    for idx in (i, j, base):
        if not 0 <= idx < n:
            raise ValidationError(f"index {idx} out of range for {n} points")
    return 0.5 * (d[i, base] + d[j, base] - d[i, j])


def _gromov_matrix(d, base):
    row = d[base, :][None, :]
    col = d[:, base][:, None]
    return 0.5 * (row + col - d)


def delta_exact(distances, base=0):
    """Tight delta for a fixed base via the blocked (max, min) product."""
    d = _validate_metric(distances)
    n = d.shape[0]
    if n > _EXACT_LIMIT:
        raise ValidationError(f"matrix formulation limited to n <= {_EXACT_LIMIT}, got {n}")
    if not 0 <= base < n:
        raise ValidationError(f"base {base} out of range for {n} points")
    g = _gromov_matrix(d, base)
    best = -np.inf
    block = max(1, _BLOCK_ELEMENTS // (n * n))
    for start in range(0, n, block):
        stop = min(n, start + block)
        maxmin = np.max(np.minimum(g[start:stop, :, None], g[None, :, :]), axis=1)
        best = max(best, float(np.max(maxmin - g[start:stop])))
    return max(best, 0.0)


def delta_bruteforce(distances, base=0):
    """Triple-loop oracle over the same fixed-base four-point condition."""
    d = _validate_metric(distances)
    n = d.shape[0]
    if n > _ORACLE_LIMIT:
        raise ValidationError(f"brute-force oracle limited to n <= {_ORACLE_LIMIT}")
    g = _gromov_matrix(d, base)
    best = 0.0
    for p in range(n):
        for q in range(n):
            for z in range(n):
                best = max(best, min(g[p, z], g[z, q]) - g[p, q])
    return best


def pairwise_distances(points, metric="euclidean", curvature=-1.0):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise DimensionError("points must be a 2-D array")
    if metric == "euclidean":
        sq = np.sum(pts * pts, axis=1)
        d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * pts @ pts.T, 0.0)
        return np.sqrt(d2)
    if metric == "lorentz":
        gram = pts[:, 1:] @ pts[:, 1:].T - np.outer(pts[:, 0], pts[:, 0])
        arg = np.maximum(curvature * gram, 1.0)
        d = np.arccosh(arg) / np.sqrt(-curvature)
        np.fill_diagonal(d, 0.0)
        return d
    raise ValidationError(f"unknown metric {metric!r}")


def delta_sampled(points, metric="euclidean", curvature=-1.0, batch=1500, batches=10, seed=0):
    """Hyperbolicity of a point cloud estimated over random sub-batches.

    Each batch samples min(batch, n) points without replacement, builds the
    pairwise distance matrix (geodesic for Lorentz rows, Euclidean
    otherwise), and evaluates delta at the first sampled point as base.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 4:
        raise ValidationError("need at least 4 points for hyperbolicity estimation")
    if batches < 1 or batch < 4:
        raise ValidationError("need batch >= 4 and batches >= 1")
    rng = np.random.default_rng(seed)
    n = pts.shape[0]
    take = min(batch, n)
    deltas, diams, rels = [], [], []
    for _ in range(batches):
        idx = rng.choice(n, size=take, replace=False)
        d = pairwise_distances(pts[idx], metric=metric, curvature=curvature)
        delta = delta_exact(d, base=0)
        diam = float(np.max(d))
        deltas.append(delta)
        diams.append(diam)
        rels.append(2.0 * delta / diam if diam > 0 else 0.0)
    delta = float(np.mean(deltas))
    diam = float(np.mean(diams))
    return HyperbolicityReport(
        delta=delta,
        diameter=diam,
        delta_rel=2.0 * delta / diam if diam > 0 else 0.0,
        sample_size=take,
        batches=batches,
        delta_std=float(np.std(deltas)),
        diameter_std=float(np.std(diams)),
        delta_rel_std=float(np.std(rels)),
    )
