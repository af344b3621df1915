"""Layer specifications and their forward/backward kernels.

All activations flow as float64 arrays in batch-last-channel layout
(N, H, W, C), or (N, D) once flattened.  Convolutions use "same" padding
with the asymmetric convention: when the total padding is odd, the extra
cell goes to the bottom/right.  Gradients are hand-derived per layer; the
transpose convolution is implemented exactly as the adjoint of a strided
convolution, so the two share kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

# ---------------------------------------------------------------------------
# layer specs


@dataclass(frozen=True)
class Conv2d:
    kernel: tuple[int, int]
    out_maps: int
    stride: int = 1

    def __post_init__(self):
        _check_kernel(self.kernel, self.stride)
        if self.out_maps < 1:
            raise ValueError(f"out_maps must be >= 1, got {self.out_maps}")


@dataclass(frozen=True)
class TransposeConv2d:
    kernel: tuple[int, int]
    out_maps: int
    stride: int = 2

    def __post_init__(self):
        _check_kernel(self.kernel, self.stride)
        if self.out_maps < 1:
            raise ValueError(f"out_maps must be >= 1, got {self.out_maps}")


@dataclass(frozen=True)
class MaxPool2d:
    kernel: tuple[int, int] = (2, 2)
    stride: int = 2

    def __post_init__(self):
        _check_kernel(self.kernel, self.stride)
        if self.kernel[0] != self.kernel[1] or self.kernel[0] != self.stride:
            raise ValueError("max-pool supports square kernels with stride == kernel size")


@dataclass(frozen=True)
class Dense:
    out_units: int

    def __post_init__(self):
        if self.out_units < 1:
            raise ValueError(f"out_units must be >= 1, got {self.out_units}")


@dataclass(frozen=True)
class Dropout:
    drop_rate: float

    def __post_init__(self):
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError(f"drop_rate must lie in [0, 1), got {self.drop_rate!r}")


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Linear:
    """Identity activation; marks an output that is deliberately unsquashed."""


@dataclass(frozen=True)
class Reshape:
    """View a flat (N, D) activation as (N, H, W, C); D must equal H*W*C."""

    shape: tuple[int, int, int]

    def __post_init__(self):
        if any(s < 1 for s in self.shape):
            raise ValueError(f"reshape extents must be >= 1, got {self.shape}")


LayerSpec = (
    Conv2d | TransposeConv2d | MaxPool2d | Dense | Dropout | Relu | Linear | Reshape
)


def _check_kernel(kernel: tuple[int, int], stride: int) -> None:
    if len(kernel) != 2 or any(k < 1 for k in kernel):
        raise ValueError(f"kernel extents must be >= 1, got {kernel}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")


# ---------------------------------------------------------------------------
# convolution kernels
#
# Two equivalent paths: an im2col GEMM when patches are small, and a loop
# over kernel offsets (25 slim GEMMs for a 5x5 kernel) otherwise -- the
# offset loop avoids materializing the (N*OH*OW, KH*KW*C) patch matrix,
# which dominates runtime for 30x30x20 activations.

_IM2COL_MAX_PATCH = 128


def _same_geometry(h: int, w: int, kh: int, kw: int, s: int):
    oh = -(-h // s)
    ow = -(-w // s)
    ph = max((oh - 1) * s + kh - h, 0)
    pw = max((ow - 1) * s + kw - w, 0)
    return oh, ow, ph // 2, ph - ph // 2, pw // 2, pw - pw // 2


def _pad_same(x: np.ndarray, kh: int, kw: int, s: int):
    n, h, w, c = x.shape
    oh, ow, pt, pb, pl, pr = _same_geometry(h, w, kh, kw, s)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    return xp, oh, ow, pt, pl


def _im2col(xp: np.ndarray, kh: int, kw: int, s: int, oh: int, ow: int) -> np.ndarray:
    n, hp, wp, c = xp.shape
    sn, sh, sw, sc = xp.strides
    view = as_strided(xp, (n, oh, ow, kh, kw, c), (sn, s * sh, s * sw, sh, sw, sc))
    return view.reshape(n * oh * ow, kh * kw * c)


def _accumulate(xp: np.ndarray, w: np.ndarray, s: int, oh: int, ow: int) -> np.ndarray:
    """sum_{i,j} patch(i,j) @ w[i,j] over the padded input."""
    kh, kw, c, f = w.shape
    n = xp.shape[0]
    if kh * kw * c <= _IM2COL_MAX_PATCH:
        cols = _im2col(xp, kh, kw, s, oh, ow)
        return (cols @ w.reshape(-1, f)).reshape(n, oh, ow, f)
    out = np.zeros((n, oh, ow, f))
    tmp = np.empty_like(out)
    for i in range(kh):
        for j in range(kw):
            np.matmul(xp[:, i : i + s * oh : s, j : j + s * ow : s, :], w[i, j], out=tmp)
            out += tmp
    return out


def _grad_weights(xp: np.ndarray, g: np.ndarray, kh: int, kw: int, s: int) -> np.ndarray:
    n, oh, ow, f = g.shape
    c = xp.shape[3]
    if kh * kw * c <= _IM2COL_MAX_PATCH:
        cols = _im2col(xp, kh, kw, s, oh, ow)
        return (cols.T @ g.reshape(-1, f)).reshape(kh, kw, c, f)
    gw = np.empty((kh, kw, c, f))
    g2 = np.ascontiguousarray(g).reshape(n * oh * ow, f)
    patch_buf = np.empty((n, oh, ow, c))
    flat = patch_buf.reshape(n * oh * ow, c)
    for i in range(kh):
        for j in range(kw):
            np.copyto(patch_buf, xp[:, i : i + s * oh : s, j : j + s * ow : s, :])
            np.matmul(flat.T, g2, out=gw[i, j])
    return gw


def _scatter(g: np.ndarray, w: np.ndarray, s: int, padded_shape: tuple) -> np.ndarray:
    """Adjoint of _accumulate: scatter g @ w[i,j].T back onto the padded grid."""
    kh, kw, c, f = w.shape
    n, oh, ow, _ = g.shape
    gxp = np.zeros(padded_shape)
    tmp = np.empty((n, oh, ow, c))
    for i in range(kh):
        for j in range(kw):
            np.matmul(g, w[i, j].T, out=tmp)
            gxp[:, i : i + s * oh : s, j : j + s * ow : s, :] += tmp
    return gxp


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    kh, kw, _, _ = w.shape
    xp, oh, ow, pt, pl = _pad_same(x, kh, kw, stride)
    out = _accumulate(xp, w, stride, oh, ow) + b
    cache = (xp, x.shape, pt, pl)
    return out, cache


def conv2d_backward(g: np.ndarray, w: np.ndarray, cache, stride: int, need_input_grad=True):
    xp, x_shape, pt, pl = cache
    kh, kw, _, _ = w.shape
    gw = _grad_weights(xp, g, kh, kw, stride)
    gb = g.sum(axis=(0, 1, 2))
    gx = None
    if need_input_grad:
        gxp = _scatter(g, w, stride, xp.shape)
        _, h, wd, _ = x_shape
        gx = gxp[:, pt : pt + h, pl : pl + wd, :]
    return gw, gb, gx


def tconv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int):
    """Transpose convolution: the adjoint of a same-padded strided conv.

    Output spatial extents are stride times the input's.  Weights are shaped
    (KH, KW, out_maps, in_channels), mirroring the conv they are adjoint to.
    """
    kh, kw, f, c = w.shape
    n, h, wd, _ = x.shape
    out_h, out_w = stride * h, stride * wd
    oh, ow, pt, pb, pl, pr = _same_geometry(out_h, out_w, kh, kw, stride)
    padded_shape = (n, out_h + pt + pb, out_w + pl + pr, f)
    outp = _scatter(x, w, stride, padded_shape)
    out = outp[:, pt : pt + out_h, pl : pl + out_w, :] + b
    cache = (x, out_h, out_w)
    return out, cache


def tconv2d_backward(g: np.ndarray, w: np.ndarray, cache, stride: int, need_input_grad=True):
    x, out_h, out_w = cache
    kh, kw, f, c = w.shape
    gp, oh, ow, pt, pl = _pad_same(g, kh, kw, stride)
    gw = _grad_weights(gp, x, kh, kw, stride)
    gb = g.sum(axis=(0, 1, 2))
    gx = _accumulate(gp, w, stride, oh, ow) if need_input_grad else None
    return gw, gb, gx


# ---------------------------------------------------------------------------
# remaining layers


def maxpool2d_forward(x: np.ndarray, k: int):
    n, h, w, c = x.shape
    if h % k != 0 or w % k != 0:
        raise ValueError(f"max-pool requires spatial extents divisible by {k}, got {h}x{w}")
    oh, ow = h // k, w // k
    windows = (
        x.reshape(n, oh, k, ow, k, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, oh, ow, c, k * k)
    )
    # argmax keeps the first (row-major) maximum, fixing the tie rule
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2d_backward(g: np.ndarray, cache, k: int):
    idx, x_shape = cache
    n, h, w, c = x_shape
    oh, ow = h // k, w // k
    gwin = np.zeros((n, oh, ow, c, k * k))
    np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
    return gwin.reshape(n, oh, ow, c, k, k).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    x2 = x.reshape(x.shape[0], -1)
    return x2 @ w + b, (x2, x.shape)


def dense_backward(g: np.ndarray, w: np.ndarray, cache, need_input_grad=True):
    x2, x_shape = cache
    gw = x2.T @ g
    gb = g.sum(axis=0)
    gx = (g @ w.T).reshape(x_shape) if need_input_grad else None
    return gw, gb, gx


def dropout_forward(x: np.ndarray, rate: float, training: bool, rng):
    if not training:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout requires a random generator")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) >= rate) / keep  # inverted scaling
    return x * mask, mask


def dropout_backward(g: np.ndarray, mask):
    return g * mask


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0.0), x


def relu_backward(g: np.ndarray, x: np.ndarray):
    return g * (x > 0.0)


def fan_in(spec: LayerSpec, in_shape: tuple) -> int:
    if isinstance(spec, Conv2d):
        return spec.kernel[0] * spec.kernel[1] * in_shape[2]
    if isinstance(spec, TransposeConv2d):
        return spec.kernel[0] * spec.kernel[1] * in_shape[2]
    if isinstance(spec, Dense):
        return int(np.prod(in_shape))
    raise TypeError(f"{type(spec).__name__} has no parameters")


def flat_size(shape: tuple) -> int:
    return int(math.prod(shape))
