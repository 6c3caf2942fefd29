"""Differentiable layers used by the predictors.

Convolutions use ``(out, in, k, k)`` kernels for :func:`conv2d` and
``(in, out, k, k)`` kernels for :func:`conv_transpose2d`, so one kernel
array serves a convolution and its exact adjoint. Transposed-convolution
output size follows ``(H - 1) * stride - 2 * padding + k``.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, add, as_tensor, make_node, matmul, reshape, transpose

LEAKY_SLOPE = 0.01


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv_transpose_output_size(size: int, k: int, stride: int, padding: int, output_padding: int = 0) -> int:
    return (size - 1) * stride - 2 * padding + k + output_padding


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _im2col(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """Patches of ``x`` (B, C, H, W) laid out as (C, k, k, B, Ho, Wo)."""
    b, c, h, w = x.shape
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    xp = _pad(x, padding)
    cols = np.empty((c, k, k, b, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride].transpose(1, 0, 2, 3)
    return cols


def _conv_from_cols(cols: np.ndarray, w: np.ndarray) -> np.ndarray:
    _, _, _, b, ho, wo = cols.shape
    out = w.reshape(w.shape[0], -1) @ cols.reshape(-1, b * ho * wo)
    return np.ascontiguousarray(out.reshape(-1, b, ho, wo).transpose(1, 0, 2, 3))


def _kernel_grad_from_cols(cols: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gradient of a (O, C, k, k) kernel given output grad ``g`` (B, O, Ho, Wo)."""
    c, k = cols.shape[0], cols.shape[1]
    g2 = g.transpose(1, 0, 2, 3).reshape(g.shape[1], -1)
    return (g2 @ cols.reshape(c * k * k, -1).T).reshape(g.shape[1], c, k, k)


def _conv_fwd(x, w, stride, padding):
    return _conv_from_cols(_im2col(x, w.shape[2], stride, padding), w)


def _conv_input_grad(g, w, in_hw, stride, padding):
    """Adjoint of :func:`_conv_fwd` in its input (scatter-add of patch gradients)."""
    b, _, ho, wo = g.shape
    k = w.shape[2]
    h, wd = in_hw
    cols = np.tensordot(w, g, axes=([0], [1]))  # (C, k, k, B, Ho, Wo)
    dxp = np.zeros((b, w.shape[1], h + 2 * padding, wd + 2 * padding), dtype=g.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i, j].transpose(1, 0, 2, 3)
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dxp)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (B, C_in, H, W) with ``kernel`` (C_out, C_in, k, k)."""
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape}, kernel {kernel.shape}")
    k = kernel.shape[2]
    ho = conv_output_size(x.shape[2], k, stride, padding)
    wo = conv_output_size(x.shape[3], k, stride, padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output would be {ho}x{wo}")
    cols = _im2col(x.data, k, stride, padding)
    out = _conv_from_cols(cols, kernel.data)

    def backward(g):
        if x.requires_grad:
            x._accumulate(_conv_input_grad(g, kernel.data, x.shape[2:], stride, padding))
        if kernel.requires_grad:
            kernel._accumulate(_kernel_grad_from_cols(cols, g))

    y = make_node(out, (x, kernel), backward, "conv2d")
    if bias is not None:
        y = add(y, reshape(bias, (1, -1, 1, 1)))
    return y


def conv_transpose2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """Adjoint of :func:`conv2d`: ``x`` (B, C_in, H, W), ``kernel`` (C_in, C_out, k, k).

    A strided convolution maps several input sizes to the same output size;
    ``output_padding`` (below ``stride``) picks the larger ones by adding rows
    and columns at the far edge.
    """
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[0]:
        raise ValueError(f"conv_transpose2d shape mismatch: input {x.shape}, kernel {kernel.shape}")
    if not 0 <= output_padding < max(stride, 1):
        raise ValueError(f"output_padding {output_padding} must be in [0, stride={stride})")
    k = kernel.shape[2]
    ho = conv_transpose_output_size(x.shape[2], k, stride, padding, output_padding)
    wo = conv_transpose_output_size(x.shape[3], k, stride, padding, output_padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv_transpose2d output would be {ho}x{wo}")
    out = _conv_input_grad(x.data, kernel.data, (ho, wo), stride, padding)

    def backward(g):
        cols = _im2col(g, k, stride, padding)
        if x.requires_grad:
            x._accumulate(_conv_from_cols(cols, kernel.data))
        if kernel.requires_grad:
            kernel._accumulate(_kernel_grad_from_cols(cols, x.data))

    y = make_node(out, (x, kernel), backward, "conv_transpose2d")
    if bias is not None:
        y = add(y, reshape(bias, (1, -1, 1, 1)))
    return y


def leaky_relu(x: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    pos = x.data > 0
    scale = np.where(pos, 1.0, slope).astype(x.dtype)

    def backward(g):
        x._accumulate(g * scale)

    return make_node(x.data * scale, (x,), backward, "leaky_relu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax; ``-inf`` entries get exactly zero weight."""
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        x._accumulate(p * (g - np.sum(g * p, axis=axis, keepdims=True)))

    return make_node(p, (x,), backward, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        if x.requires_grad:
            d = g * gain.data
            x._accumulate(inv * (d - d.mean(axis=-1, keepdims=True) - xhat * (d * xhat).mean(axis=-1, keepdims=True)))
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0))

    return make_node(xhat * gain.data + bias.data, (x, gain, bias), backward, "layer_norm")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return add(y, b) if b is not None else y


def feed_forward(z: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor, slope: float = LEAKY_SLOPE) -> Tensor:
    """Position-wise affine, leaky ReLU, affine."""
    return linear(leaky_relu(linear(z, w1, b1), slope), w2, b2)


def causal_mask(length: int, dtype=np.float64) -> np.ndarray:
    """Additive mask: 0 on and below the diagonal, ``-inf`` above it."""
    m = np.zeros((length, length), dtype=dtype)
    m[np.triu_indices(length, k=1)] = -np.inf
    return m


def multi_head_attention(
    z: Tensor,
    params: dict[str, Tensor],
    heads: int,
    mask: np.ndarray | None = None,
    return_weights: bool = False,
):
    """Scaled dot-product self-attention over ``z`` of shape (..., L, D).

    ``params`` holds ``wq, bq, wk, bk, wv, bv, wo, bo`` with (D, D) weights.
    """
    *lead, length, d = z.shape
    if d % heads:
        raise ValueError(f"model width {d} is not divisible by {heads} heads")
    dh = d // heads

    def split(t):
        t = reshape(t, (*lead, length, heads, dh))
        nl = len(lead)
        return transpose(t, tuple(range(nl)) + (nl + 1, nl, nl + 2))

    q = split(linear(z, params["wq"], params["bq"]))
    k = split(linear(z, params["wk"], params["bk"]))
    v = split(linear(z, params["wv"], params["bv"]))
    nl = len(lead)
    kt = transpose(k, tuple(range(nl + 1)) + (nl + 2, nl + 1))
    scores = matmul(q, kt) * (1.0 / np.sqrt(dh))
    if mask is not None:
        scores = add(scores, as_tensor(np.asarray(mask, dtype=z.dtype)))
    weights = softmax(scores, axis=-1)
    ctx = matmul(weights, v)
    ctx = transpose(ctx, tuple(range(nl)) + (nl + 1, nl, nl + 2))
    ctx = reshape(ctx, (*lead, length, d))
    out = linear(ctx, params["wo"], params["bo"])
    if return_weights:
        return out, weights.data
    return out


def mse_loss(pred: Tensor, target) -> Tensor:
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.dtype)
    if t.shape != pred.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {t.shape}")
    diff = pred.data - t
    n = diff.size

    def backward(g):
        pred._accumulate(g * (2.0 / n) * diff)

    return make_node(np.asarray(np.mean(diff * diff)), (pred,), backward, "mse")
