"""From-scratch layer math: dense, strided 1-D convolution, max pooling,
and softmax cross-entropy, each with an exact backward pass.

All forwards take a batch-major input, keep the dtype they are given
(float32 in training, float64 in gradient checks), and return the cache
their backward needs. Gradients are per-batch sums; mini-batch averaging
happens in the training loop.
"""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("relu", "sigmoid", "identity")


def activate(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-pre))
    if name == "identity":
        return pre
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, out: np.ndarray) -> np.ndarray:
    """Derivative w.r.t. the pre-activation, expressed through the output."""
    if name == "relu":
        return (out > 0.0).astype(out.dtype)
    if name == "sigmoid":
        return out * (1.0 - out)
    if name == "identity":
        return np.ones_like(out)
    raise ValueError(f"unknown activation {name!r}")


def dense_forward(x, weights, bias, activation="relu"):
    """h = act(x @ W.T + b) for x of shape (batch, in_dim), W of (out, in_dim)."""
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[1]:
        raise ValueError(f"dense shape mismatch: x {x.shape} vs weights {weights.shape}")
    out = activate(activation, x @ weights.T + bias)
    return out, (x, out, activation)


def dense_backward(d_out, cache, weights):
    """Returns (d_x, d_weights, d_bias) for the cached dense forward."""
    x, out, activation = cache
    d_pre = d_out * activation_grad(activation, out)
    return d_pre @ weights, d_pre.T @ x, d_pre.sum(axis=0)


def conv_output_len(in_len: int, kernel_len: int, stride: int) -> int:
    return (in_len - kernel_len) // stride + 1


def _conv_windows(x: np.ndarray, kernel_len: int, stride: int) -> np.ndarray:
    """(batch, L_out, streams * kernel_len) view-copy of the valid windows."""
    view = np.lib.stride_tricks.sliding_window_view(x, kernel_len, axis=2)
    view = view[:, :, ::stride, :]  # (batch, streams, L_out, m)
    return view.transpose(0, 2, 1, 3).reshape(x.shape[0], view.shape[2], -1)


def conv1d_forward(x, weights, bias, stride=1, activation="relu"):
    """Valid multi-stream 1-D convolution with stride.

    x: (batch, streams, L_in); weights: (filters, streams, kernel_len);
    output h[b, n, s] = act(sum_{r,i} w[n, r, i] * x[b, r, s*stride + i] + b[n]).
    """
    batch, streams, in_len = x.shape
    filters, w_streams, kernel_len = weights.shape
    if w_streams != streams:
        raise ValueError(f"weights expect {w_streams} streams, input has {streams}")
    if kernel_len > in_len:
        raise ValueError(f"kernel length {kernel_len} exceeds input length {in_len}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    windows = _conv_windows(x, kernel_len, stride)
    pre = windows @ weights.reshape(filters, -1).T + bias  # (batch, L_out, filters)
    out = activate(activation, pre).transpose(0, 2, 1)
    return np.ascontiguousarray(out), (windows, out, x.shape, stride, activation)


def conv1d_backward(d_out, cache, weights):
    """Returns (d_x, d_weights, d_bias) for the cached conv forward."""
    windows, out, x_shape, stride, activation = cache
    filters, streams, kernel_len = weights.shape
    batch, _, out_len = d_out.shape
    d_pre = (d_out * activation_grad(activation, out)).transpose(0, 2, 1)  # (b, L_out, n)
    flat = d_pre.reshape(-1, filters)
    d_weights = (flat.T @ windows.reshape(-1, streams * kernel_len)).reshape(weights.shape)
    d_bias = flat.sum(axis=0)
    d_windows = d_pre @ weights.reshape(filters, -1)  # (b, L_out, streams*m)
    d_windows = d_windows.reshape(batch, out_len, streams, kernel_len)
    d_x = np.zeros(x_shape, dtype=d_out.dtype)
    positions = stride * np.arange(out_len)
    for i in range(kernel_len):
        d_x[:, :, positions + i] += d_windows[:, :, :, i].transpose(0, 2, 1)
    return d_x, d_weights, d_bias


def maxpool1d_forward(x, width):
    """Non-overlapping window maxima over the last axis; remainder dropped."""
    if width < 1:
        raise ValueError(f"pool width must be >= 1, got {width}")
    batch, channels, in_len = x.shape
    out_len = in_len // width
    blocks = x[:, :, : out_len * width].reshape(batch, channels, out_len, width)
    argmax = blocks.argmax(axis=3)
    out = np.take_along_axis(blocks, argmax[..., None], axis=3)[..., 0]
    return out, (argmax, x.shape, width)


def maxpool1d_backward(d_out, cache):
    argmax, x_shape, width = cache
    batch, channels, in_len = x_shape
    out_len = in_len // width
    d_blocks = np.zeros((batch, channels, out_len, width), dtype=d_out.dtype)
    np.put_along_axis(d_blocks, argmax[..., None], d_out[..., None], axis=3)
    d_x = np.zeros(x_shape, dtype=d_out.dtype)
    d_x[:, :, : out_len * width] = d_blocks.reshape(batch, channels, out_len * width)
    return d_x


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, class_index):
    """Loss, gradient w.r.t. logits, and probabilities for one sample.

    `class_index` is the zero-based true class.
    """
    logits = np.asarray(logits)
    probs = softmax(logits)
    loss = -np.log(probs[class_index])
    grad = probs.copy()
    grad[class_index] -= 1.0
    return float(loss), grad, probs


def softmax_cross_entropy_batch(logits, class_indices):
    """Per-sample losses (batch,), gradients (batch, classes), probabilities."""
    probs = softmax(logits)
    rows = np.arange(logits.shape[0])
    losses = -np.log(probs[rows, class_indices])
    grads = probs.copy()
    grads[rows, class_indices] -= 1.0
    return losses, grads, probs
