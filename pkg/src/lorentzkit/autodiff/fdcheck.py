"""Central finite-difference comparison harness for gradient checks."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def numeric_gradient(fn, arrays, step=1e-4):
    """Central-difference gradients of scalar fn(*arrays) w.r.t. each array."""
    grads = []
    for i, a in enumerate(arrays):
        a = np.asarray(a, dtype=np.float64)
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            f_plus = float(fn(*arrays))
            flat[j] = orig - step
            f_minus = float(fn(*arrays))
            flat[j] = orig
            gflat[j] = (f_plus - f_minus) / (2.0 * step)
        grads.append(g)
    return grads


def gradcheck(build_loss, arrays, step=1e-4, names=None):
    """Compare reverse-mode and finite-difference gradients.

    `build_loss` maps a list of leaf Tensors to a scalar Tensor and must be a
    deterministic function of the leaf values.  Returns the worst relative
    error across all inputs (normalized by the gradient magnitude).
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = build_loss(leaves)
    loss.backward()
    analytic = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value) for leaf in leaves
    ]

    def value_fn(*arrs):
        out = build_loss([Tensor(a) for a in arrs])
        return out.value

    numeric = numeric_gradient(value_fn, arrays, step=step)
    # Normalize by the magnitude of the full gradient vector: per-input
    # denominators turn structurally-zero gradients into pure noise ratios.
    scale = 1e-8
    for ga, gn in zip(analytic, numeric):
        scale = max(scale, float(np.max(np.abs(ga))), float(np.max(np.abs(gn))))
    worst = 0.0
    worst_name = None
    for i, (ga, gn) in enumerate(zip(analytic, numeric)):
        err = float(np.max(np.abs(ga - gn)) / scale)
        if err >= worst:
            worst = err
            worst_name = names[i] if names else f"input{i}"
    return worst, worst_name
