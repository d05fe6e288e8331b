"""Layer primitives with hand-written backward passes (float64 throughout).

Each ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
consumes exactly that cache. Inputs are batched: sequences are (B, L, 4),
dense activations are (B, D).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BCE_EPS = 1e-12


def glorot_uniform(rng, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[1] != self.bias.shape[0]:
            raise ValueError(f"weights {self.weights.shape} and bias {self.bias.shape} disagree")

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng) -> "DenseLayer":
        return cls(glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim), np.zeros(out_dim))

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class ConvLayer:
    kernels: np.ndarray  # (F, M, 4)
    bias: np.ndarray  # (F,)

    def __post_init__(self):
        self.kernels = np.asarray(self.kernels, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.kernels.ndim != 3 or self.kernels.shape[0] != self.bias.shape[0]:
            raise ValueError(f"kernels {self.kernels.shape} and bias {self.bias.shape} disagree")
        if self.kernels.shape[0] < 1 or self.kernels.shape[1] < 1:
            raise ValueError("need at least one filter of width >= 1")

    @classmethod
    def init(cls, num_filters: int, width: int, rng, channels: int = 4) -> "ConvLayer":
        shape = (num_filters, width, channels)
        return cls(glorot_uniform(rng, shape, width * channels, width * num_filters), np.zeros(num_filters))

    @property
    def num_filters(self) -> int:
        return self.kernels.shape[0]

    @property
    def width(self) -> int:
        return self.kernels.shape[1]


def _windows(x: np.ndarray, width: int) -> np.ndarray:
    """(B, L, C) -> (B, W, width*C) with W = L - width + 1, row-major over (m, c)."""
    B, L, C = x.shape
    W = L - width + 1
    cols = np.empty((B, W, width, C))
    for m in range(width):
        cols[:, :, m, :] = x[:, m:m + W, :]
    return cols.reshape(B, W, width * C)


def conv1d_forward(layer: ConvLayer, x):
    """Valid cross-correlation: out[b, f, j] = sum_{m,c} K[f,m,c] x[b, j+m, c] + bias[f]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    F, M, C = layer.kernels.shape
    if x.shape[1] < M:
        raise ValueError(f"sequence length {x.shape[1]} shorter than filter width {M}")
    if x.shape[2] != C:
        raise ValueError(f"expected {C} channels, got {x.shape[2]}")
    cols = _windows(x, M)
    out = cols @ layer.kernels.reshape(F, M * C).T + layer.bias  # (B, W, F)
    return out.transpose(0, 2, 1), (cols, x.shape)


def conv1d_backward(layer: ConvLayer, dout, cache, input_grad: bool = True):
    cols, x_shape = cache
    F, M, C = layer.kernels.shape
    dz = dout.transpose(0, 2, 1)  # (B, W, F)
    B, W, _ = dz.shape
    dk = dz.reshape(-1, F).T @ cols.reshape(-1, M * C)
    grads = {"kernels": dk.reshape(F, M, C), "bias": dz.sum(axis=(0, 1))}
    dx = None
    if input_grad:
        dcols = (dz @ layer.kernels.reshape(F, M * C)).reshape(B, W, M, C)
        dx = np.zeros(x_shape)
        for m in range(M):
            dx[:, m:m + W, :] += dcols[:, :, m, :]
    return dx, grads


def relu_forward(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0), x > 0


def relu_backward(dout, mask):
    return np.where(mask, dout, 0.0)


def relu(x):
    return relu_forward(x)[0]


def global_max_pool_forward(fmap):
    """(B, F, W) -> (B, F); ties go to the lowest position."""
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.shape[-1] < 1:
        raise ValueError("cannot pool an empty map")
    idx = np.argmax(fmap, axis=-1)
    return np.take_along_axis(fmap, idx[..., None], axis=-1)[..., 0], (idx, fmap.shape)


def global_max_pool_backward(dout, cache):
    idx, shape = cache
    dmap = np.zeros(shape)
    np.put_along_axis(dmap, idx[..., None], np.asarray(dout)[..., None], axis=-1)
    return dmap


def global_max_pool(fmap):
    return global_max_pool_forward(fmap)[0]


def dense_forward(layer: DenseLayer, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layer.in_dim:
        raise ValueError(f"input shape {x.shape} does not match layer input dim {layer.in_dim}")
    return x @ layer.weights + layer.bias, x


def dense_backward(layer: DenseLayer, dout, cache, input_grad: bool = True):
    x = cache
    grads = {"weights": x.T @ dout, "bias": dout.sum(axis=0)}
    dx = dout @ layer.weights.T if input_grad else None
    return dx, grads


def softmax(v, axis: int = -1):
    v = np.asarray(v, dtype=np.float64)
    z = np.exp(v - v.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)


def softmax_backward(dout, probs):
    """Row-wise Jacobian-vector product of softmax."""
    return probs * (dout - (dout * probs).sum(axis=-1, keepdims=True))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def bce_loss(pred, label) -> float:
    p = np.clip(np.asarray(pred, dtype=np.float64).reshape(-1), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(label, dtype=np.float64).reshape(-1)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def bce_logit_grad(logit, label):
    """d(mean BCE(sigmoid(logit), y)) / d logit, shape (B, 1)."""
    logit = np.asarray(logit, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(label, dtype=np.float64).reshape(-1, 1)
    return (sigmoid(logit) - y) / len(y)


def numeric_gradient(f, x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. ``x``, perturbing ``x`` in place."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def finite_difference_check(f, x: np.ndarray, analytic, eps: float = 1e-4) -> float:
    """Max relative error between ``analytic`` and central differences of ``f``.

    ``f`` takes no arguments and reads ``x``, which is perturbed in place and
    restored afterwards.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    return relative_error(analytic, numeric_gradient(f, x, eps))
