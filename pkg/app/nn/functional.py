"""
Forward/backward kernels for every layer type.

Each `*_forward` returns (output, ctx) and the matching `*_backward` consumes that ctx.
Image tensors are NCHW; feature tensors are N x F.
"""

from typing import Any, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.errors import NumericError, ShapeError

LEAKY_SLOPE = 0.01
BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _require_4d(x: np.ndarray, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects an NCHW tensor, got shape {x.shape}")


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, Any]:
    """Stride-1 cross-correlation with (K-1)/2 zero padding, so H and W are preserved."""
    _require_4d(x, "conv2d")
    out_c, in_c, k, k_w = weight.shape
    if x.shape[1] != in_c:
        raise ShapeError(f"conv2d expects {in_c} input channels, got {x.shape[1]}")
    if k != k_w or k % 2 == 0:
        raise ShapeError(f"conv2d needs a square odd kernel, got {k}x{k_w}")
    if bias.shape != (out_c,):
        raise ShapeError(f"conv2d bias must have shape ({out_c},)")
    pad = (k - 1) // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))  # N,C,H,W,K,K
    out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3]))  # N,H,W,O
    out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
    return np.ascontiguousarray(out), (windows, weight)


def conv2d_backward(grad_out: np.ndarray, ctx: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    windows, weight = ctx
    k = weight.shape[-1]
    pad = (k - 1) // 2
    grad_w = np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))  # O,C,K,K
    grad_b = grad_out.sum(axis=(0, 2, 3))
    # input gradient is a "same" convolution of grad_out with the flipped kernel
    padded = np.pad(grad_out, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    grad_windows = sliding_window_view(padded, (k, k), axis=(2, 3))  # N,O,H,W,K,K
    flipped = weight[:, :, ::-1, ::-1]
    grad_x = np.tensordot(grad_windows, flipped, axes=([1, 4, 5], [0, 2, 3]))  # N,H,W,C
    return np.ascontiguousarray(grad_x.transpose(0, 3, 1, 2)), grad_w, grad_b


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, Any]:
    """2x2 window, stride 2; an odd last row/column is dropped."""
    _require_4d(x, "maxpool")
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    if ho == 0 or wo == 0:
        raise ShapeError(f"maxpool needs spatial size >= 2, got {h}x{w}")
    blocks = (
        x[:, :, :2 * ho, :2 * wo]
        .reshape(n, c, ho, 2, wo, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, ho, wo, 4)
    )
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg)


def maxpool2x2_backward(grad_out: np.ndarray, ctx: Any) -> np.ndarray:
    shape, arg = ctx
    n, c, ho, wo = arg.shape
    blocks = np.zeros((n, c, ho, wo, 4), dtype=grad_out.dtype)
    np.put_along_axis(blocks, arg[..., None], grad_out[..., None], axis=-1)
    grad = np.zeros(shape, dtype=grad_out.dtype)
    grad[:, :, :2 * ho, :2 * wo] = (
        blocks.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    )
    return grad


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    eps: float = BN_EPS,
    momentum: float = BN_MOMENTUM,
) -> tuple[np.ndarray, Any]:
    """Per-channel normalisation; updates the running statistics in place when training."""
    _require_4d(x, "batchnorm")
    if x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batchnorm expects {gamma.shape[0]} channels, got {x.shape[1]}")
    if training:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        m = x.size // x.shape[1]
        unbiased = var * (m / (m - 1)) if m > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * x_hat + beta[None, :, None, None]
    return out.astype(x.dtype, copy=False), (x_hat, inv_std, gamma, training)


def batchnorm_backward(grad_out: np.ndarray, ctx: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x_hat, inv_std, gamma, training = ctx
    grad_gamma = (grad_out * x_hat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    scale = (gamma * inv_std)[None, :, None, None]
    if not training:
        return grad_out * scale, grad_gamma, grad_beta
    m = grad_out.size // grad_out.shape[1]
    grad_x = scale / m * (
        m * grad_out - grad_beta[None, :, None, None] - x_hat * grad_gamma[None, :, None, None]
    )
    return grad_x.astype(grad_out.dtype, copy=False), grad_gamma, grad_beta


def _bins(size: int, out: int) -> list[tuple[int, int]]:
    return [((i * size) // out, -((-(i + 1) * size) // out)) for i in range(out)]


def adaptive_avgpool_forward(x: np.ndarray, out_size: int = 2) -> tuple[np.ndarray, Any]:
    """Average over floor/ceil bins, so any input side (even 1) maps to out_size."""
    _require_4d(x, "adaptive_avgpool")
    n, c, h, w = x.shape
    out = np.empty((n, c, out_size, out_size), dtype=x.dtype)
    for i, (h0, h1) in enumerate(_bins(h, out_size)):
        for j, (w0, w1) in enumerate(_bins(w, out_size)):
            out[:, :, i, j] = x[:, :, h0:h1, w0:w1].mean(axis=(2, 3))
    return out, (x.shape, out_size)


def adaptive_avgpool_backward(grad_out: np.ndarray, ctx: Any) -> np.ndarray:
    shape, out_size = ctx
    _, _, h, w = shape
    grad = np.zeros(shape, dtype=grad_out.dtype)
    for i, (h0, h1) in enumerate(_bins(h, out_size)):
        for j, (w0, w1) in enumerate(_bins(w, out_size)):
            area = (h1 - h0) * (w1 - w0)
            grad[:, :, h0:h1, w0:w1] += grad_out[:, :, i, j][:, :, None, None] / area
    return grad


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> tuple[np.ndarray, Any]:
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear expects N x {weight.shape[1]}, got {x.shape}")
    return x @ weight.T + bias, (x, weight)


def linear_backward(grad_out: np.ndarray, ctx: Any) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, weight = ctx
    return grad_out @ weight, grad_out.T @ x, grad_out.sum(axis=0)


def dropout_mask(shape: tuple[int, ...], p: float, rng: np.random.Generator, dtype: Any) -> np.ndarray:
    """Inverted-dropout mask: kept units are scaled by 1/(1-p)."""
    return ((rng.random(shape) >= p) / (1.0 - p)).astype(dtype)


def dropout_forward(x: np.ndarray, mask: Optional[np.ndarray]) -> tuple[np.ndarray, Any]:
    if mask is None:
        return x, None
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, ctx: Any) -> np.ndarray:
    return grad_out if ctx is None else grad_out * ctx


def activation_forward(x: np.ndarray, name: str) -> tuple[np.ndarray, Any]:
    if name == "tanh":
        out = np.tanh(x)
        return out, (name, out)
    if name == "relu":
        return np.maximum(x, 0), (name, x)
    if name == "leaky_relu":
        return np.where(x > 0, x, LEAKY_SLOPE * x).astype(x.dtype, copy=False), (name, x)
    raise ValueError(f"unknown activation {name!r}")


def activation_backward(grad_out: np.ndarray, ctx: Any) -> np.ndarray:
    name, saved = ctx
    if name == "tanh":
        return grad_out * (1 - saved * saved)
    if name == "relu":
        return grad_out * (saved > 0)
    return grad_out * np.where(saved > 0, 1.0, LEAKY_SLOPE).astype(grad_out.dtype, copy=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, targets: np.ndarray, class_weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """
    Weighted categorical cross-entropy averaged over the batch.

    Args:
        logits: N x C scores
        targets: N class indices
        class_weights: C positive multipliers

    Returns:
        Tuple of (loss, gradient w.r.t. logits)
    """
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    targets = np.asarray(targets, dtype=np.int64)
    weights = np.asarray(class_weights, dtype=logits.dtype)
    n = logits.shape[0]
    rows = np.arange(n)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    w = weights[targets]
    loss = float(-(w * log_probs[rows, targets]).sum() / n)
    grad = np.exp(log_probs)
    grad[rows, targets] -= 1
    grad *= (w / n)[:, None]
    return loss, grad.astype(logits.dtype, copy=False)
