"""2-D cross-correlation and pooling primitives.

Convolution is im2col + GEMM: the patch matrix is materialized once in the
forward pass (contiguous, so both passes run through BLAS) and reused by the
backward closure, which scatters the column gradient back per kernel offset.
`groups` covers depthwise and standard convolutions alike.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError
from .tensor import Tensor, _node, as_tensor, value_of


def _check_geometry(xv, wv, stride, pad, groups):
    if xv.ndim != 4 or wv.ndim != 4:
        raise DimensionError("conv2d expects x:(N,C,H,W) and w:(F,C/groups,KH,KW)")
    n, c, h, w = xv.shape
    f, cg, kh, kw = wv.shape
    if c % groups or f % groups:
        raise DimensionError("channels and filters must be divisible by groups")
    if cg != c // groups:
        raise DimensionError(
            f"kernel expects {cg} channels per group, input provides {c // groups}"
        )
    pt, pb, pl, pr = pad
    ho = (h + pt + pb - kh) // stride[0] + 1
    wo = (w + pl + pr - kw) // stride[1] + 1
    if ho < 1 or wo < 1:
        raise DimensionError("kernel does not fit the padded input")
    return n, c, h, w, f, kh, kw, ho, wo


def same_padding(kernel):
    """Total padding kernel-1, the extra sample on the trailing side."""
    left = (kernel - 1) // 2
    return left, kernel - 1 - left


def _im2col(xp, groups, kh, kw, sh, sw, ho, wo):
    """(N, C, Hp, Wp) -> (groups, N*Ho*Wo, C/g*KH*KW), contiguous."""
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    # (N, C, Ho, Wo, KH, KW) -> (groups, N, Ho, Wo, C/g, KH, KW)
    win = win.reshape(n, groups, c // groups, ho, wo, kh, kw)
    cols = win.transpose(1, 0, 3, 4, 2, 5, 6).reshape(
        groups, n * ho * wo, (c // groups) * kh * kw
    )
    return np.ascontiguousarray(cols)


def conv2d(x, w, stride=(1, 1), padding=(0, 0, 0, 0), groups=1):
    """Cross-correlation of x:(N,C,H,W) with w:(F,C/groups,KH,KW).

    `padding` is (top, bottom, left, right).  Wide stride-1 kernels along W
    run through an FFT path; everything else is im2col + GEMM.
    """
    xv, wv = value_of(x), value_of(w)
    n, c, h, wi, f, kh, kw, ho, wo = _check_geometry(xv, wv, stride, padding, groups)
    pt, pb, pl, pr = padding
    sh, sw = stride
    if kh == 1 and sh == 1 and sw == 1 and kw >= 16:
        return _conv2d_fft_w(x, w, padding, groups)
    fg = f // groups
    cg = c // groups

    def fwd(xv, wv):
        xp = np.pad(xv, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if any(padding) else xv
        cols = _im2col(xp, groups, kh, kw, sh, sw, ho, wo)
        wg = wv.reshape(groups, fg, cg * kh * kw)
        y = np.matmul(cols, wg.transpose(0, 2, 1))  # (g, N*Ho*Wo, F/g)
        y = y.reshape(groups, n, ho, wo, fg).transpose(1, 0, 4, 2, 3)
        return np.ascontiguousarray(y.reshape(n, f, ho, wo)), cols

    if not (isinstance(x, Tensor) or isinstance(w, Tensor)):
        return fwd(xv, wv)[0]

    x, w = as_tensor(x), as_tensor(w)
    value, cols = fwd(x.value, w.value)

    def vjp(g):
        dyg = np.ascontiguousarray(
            g.reshape(n, groups, fg, ho, wo).transpose(1, 0, 3, 4, 2)
        ).reshape(groups, n * ho * wo, fg)
        wg = w.value.reshape(groups, fg, cg * kh * kw)
        dw = np.matmul(dyg.transpose(0, 2, 1), cols)
        dcols = np.matmul(dyg, wg)
        dcols = dcols.reshape(groups, n, ho, wo, cg, kh, kw).transpose(1, 0, 4, 2, 3, 5, 6)
        dcols = dcols.reshape(n, c, ho, wo, kh, kw)
        dxp = np.zeros((n, c, h + pt + pb, wi + pl + pr))
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw] += dcols[..., i, j]
        dx = dxp[:, :, pt : pt + h, pl : pl + wi]
        return (dx, dw.reshape(w.value.shape))

    return _node(value, (x, w), vjp)


def _conv2d_fft_w(x, w, padding, groups):
    """Stride-1 correlation with a (1, KW) kernel via FFT along the W axis.

    Cyclic transforms of length >= padded width are linear in the retained
    range, so forward, input gradient, and weight gradient are all products
    in the frequency domain.
    """
    xv, wv = value_of(x), value_of(w)
    n, c, h, wi = xv.shape
    f, cg, _, kw = wv.shape
    pt, pb, pl, pr = padding
    fg = f // groups
    wp = wi + pl + pr
    wo = wp - kw + 1
    length = 1 << (wp - 1).bit_length()
    lf = length // 2 + 1

    def transform(xv, wv):
        xp = np.pad(xv, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if any(padding) else xv
        xf = np.fft.rfft(xp, n=length, axis=-1).reshape(n, groups, cg, h + pt + pb, lf)
        wf = np.fft.rfft(wv[:, :, 0, :], n=length, axis=-1).reshape(groups, fg, cg, lf)
        return xf, wf

    def fwd(xf, wf):
        yf = np.einsum("ngchl,gfcl->ngfhl", xf, np.conj(wf))
        y = np.fft.irfft(yf, n=length, axis=-1)[..., :wo]
        return np.ascontiguousarray(y.reshape(n, f, h + pt + pb, wo))

    if not (isinstance(x, Tensor) or isinstance(w, Tensor)):
        xf, wf = transform(xv, wv)
        return fwd(xf, wf)

    x, w = as_tensor(x), as_tensor(w)
    xf, wf = transform(x.value, w.value)
    value = fwd(xf, wf)

    def vjp(g):
        gf = np.fft.rfft(g, n=length, axis=-1).reshape(n, groups, fg, h + pt + pb, lf)
        dxf = np.einsum("ngfhl,gfcl->ngchl", gf, wf)
        dxp = np.fft.irfft(dxf, n=length, axis=-1).reshape(n, c, h + pt + pb, length)
        dx = dxp[:, :, pt : pt + h, pl : pl + wi]
        dwf = np.einsum("ngchl,ngfhl->gfcl", xf, np.conj(gf))
        dw = np.fft.irfft(dwf, n=length, axis=-1)[..., :kw]
        return (np.ascontiguousarray(dx), dw.reshape(f, cg, 1, kw))

    return _node(value, (x, w), vjp)


def avg_pool2d(x, kernel):
    """Non-overlapping average pooling; spatial dims must divide the window."""
    kh, kw = kernel
    xv = value_of(x)
    if xv.ndim != 4:
        raise DimensionError("avg_pool2d expects (N,C,H,W)")
    n, c, h, w = xv.shape
    if h % kh or w % kw:
        raise DimensionError(f"pool window {kernel} must divide spatial dims {(h, w)}")

    def fwd(xv):
        return xv.reshape(n, c, h // kh, kh, w // kw, kw).mean(axis=(3, 5))

    if not isinstance(x, Tensor):
        return fwd(xv)

    def vjp(g):
        gg = g[:, :, :, None, :, None] / (kh * kw)
        return (np.broadcast_to(gg, (n, c, h // kh, kh, w // kw, kw)).reshape(n, c, h, w).copy(),)

    return _node(fwd(x.value), (x,), vjp)
