"""Standard network layers with explicit forward and backward passes.

Convolution is plain cross-correlation (no kernel flip) computed through an
im2col reshape and one matmul per batch; the backward pass recomputes the
column view and scatters through the same index map, so gradients are exact
adjoints of the forward arithmetic. Batch norm uses biased (population)
variance for normalization and the unbiased estimate only for the running
variance. None of the convolutions carry a bias: every conv output in the
architectures built here is followed by a normalization layer.

Gradients accumulate (+=) into the parameter bundles; callers zero them
between steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor4


@dataclass
class ParamTensor:
    """One learnable array with its gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray
    bias_like: bool = False  # biases and BN scale/shift; excludable from decay


@dataclass
class ConvParams:
    weights: np.ndarray  # (c_out, c_in, kh, kw)
    stride: int = 1
    padding: int = 0
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ValueError(f"conv weights must be (c_out, c_in, k, k), got {w.shape}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be >= 1 and padding >= 0")
        self.weights = w
        if self.grad is None:
            self.grad = np.zeros_like(w)

    def tensors(self) -> list[ParamTensor]:
        return [ParamTensor("weights", self.weights, self.grad)]


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1
    ggamma: np.ndarray = field(default=None, repr=False)
    gbeta: np.ndarray = field(default=None, repr=False)

    @classmethod
    def create(cls, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        return cls(
            gamma=np.ones(channels, dtype=np.float64),
            beta=np.zeros(channels, dtype=np.float64),
            running_mean=np.zeros(channels, dtype=np.float64),
            running_var=np.ones(channels, dtype=np.float64),
            eps=eps,
            momentum=momentum,
        )

    def __post_init__(self):
        c = self.gamma.shape[0]
        for arr, nm in [(self.beta, "beta"), (self.running_mean, "running_mean"),
                        (self.running_var, "running_var")]:
            if arr.shape != (c,):
                raise ValueError(f"{nm} must have length {c}")
        if np.any(self.running_var < 0):
            raise ValueError("running_var must be >= 0")
        if not (0.0 < self.momentum < 1.0):
            raise ValueError("momentum must lie in (0, 1)")
        if self.ggamma is None:
            self.ggamma = np.zeros_like(self.gamma)
        if self.gbeta is None:
            self.gbeta = np.zeros_like(self.beta)

    def tensors(self) -> list[ParamTensor]:
        return [
            ParamTensor("gamma", self.gamma, self.ggamma, bias_like=True),
            ParamTensor("beta", self.beta, self.gbeta, bias_like=True),
        ]

    def state(self) -> list[tuple[str, np.ndarray]]:
        """Non-learnable arrays that still belong in a checkpoint."""
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]


@dataclass
class LinearParams:
    weights: np.ndarray  # (classes, features)
    bias: np.ndarray  # (classes,)
    gw: np.ndarray = field(default=None, repr=False)
    gb: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("linear expects weights (classes, features), bias (classes,)")
        if self.gw is None:
            self.gw = np.zeros_like(self.weights)
        if self.gb is None:
            self.gb = np.zeros_like(self.bias)

    def tensors(self) -> list[ParamTensor]:
        return [
            ParamTensor("weights", self.weights, self.gw),
            ParamTensor("bias", self.bias, self.gb, bias_like=True),
        ]


# ---------------------------------------------------------------------------
# convolution


def conv_output_hw(h: int, w: int, k: int, stride: int, padding: int) -> tuple[int, int]:
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(
            f"non-positive conv output dims for input {h}x{w}, k={k}, "
            f"stride={stride}, pad={padding}"
        )
    return ho, wo


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # xp: padded input (n, c, hp, wp) -> columns (n, ho*wo, c*k*k)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # (n, c, ho, wo, k, k)
    n, c = xp.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n, ho * wo, c * k * k)


def conv2d_forward(x: Tensor4, p: ConvParams) -> Tensor4:
    c_out, c_in, k, _ = p.weights.shape
    n, c, h, w = x.shape
    if c != c_in:
        raise ValueError(f"conv expects {c_in} input channels, got {c}")
    ho, wo = conv_output_hw(h, w, k, p.stride, p.padding)
    pad = p.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, k, p.stride, ho, wo)
    y = cols @ p.weights.reshape(c_out, -1).T  # (n, ho*wo, c_out)
    return np.ascontiguousarray(y.transpose(0, 2, 1).reshape(n, c_out, ho, wo))


def conv2d_backward(x: Tensor4, p: ConvParams, dy: Tensor4) -> Tensor4:
    """Returns dL/dx; accumulates dL/dweights into p.grad."""
    c_out, c_in, k, _ = p.weights.shape
    n, c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, k, p.stride, p.padding)
    if dy.shape != (n, c_out, ho, wo):
        raise ValueError(f"dy shape {dy.shape} != forward output {(n, c_out, ho, wo)}")
    pad = p.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, k, p.stride, ho, wo)
    dy_mat = dy.reshape(n, c_out, ho * wo).transpose(0, 2, 1)  # (n, ho*wo, c_out)
    p.grad += np.tensordot(dy_mat, cols, axes=([0, 1], [0, 1])).reshape(p.weights.shape)
    dcols = dy_mat @ p.weights.reshape(c_out, -1)  # (n, ho*wo, c_in*k*k)
    dcols = dcols.reshape(n, ho, wo, c_in, k, k).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c_in, h + 2 * pad, w + 2 * pad))
    s = p.stride
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, i, j]
    return dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp


# ---------------------------------------------------------------------------
# batch normalization


@dataclass
class BnCache:
    xhat: np.ndarray
    inv_std: np.ndarray  # per channel, 1/sqrt(var + eps)
    m: int  # reduction size n*h*w


def batchnorm_forward(
    x: Tensor4, p: BatchNormParams, mode: str, update_running: bool = True
) -> tuple[Tensor4, BnCache | None]:
    """Per-channel normalization. Returns (y, cache); cache is None in eval mode."""
    n, c, h, w = x.shape
    if c != p.gamma.shape[0]:
        raise ValueError(f"batchnorm expects {p.gamma.shape[0]} channels, got {c}")
    g = p.gamma[None, :, None, None]
    b = p.beta[None, :, None, None]
    if mode == "eval":
        inv = 1.0 / np.sqrt(p.running_var + p.eps)
        return (x - p.running_mean[None, :, None, None]) * inv[None, :, None, None] * g + b, None
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    m = n * h * w
    if m < 2:
        raise ValueError("train-mode batchnorm needs n*h*w >= 2 per channel")
    mu = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))  # biased
    inv_std = 1.0 / np.sqrt(var + p.eps)
    xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
    if update_running:
        mom = p.momentum
        p.running_mean[:] = (1 - mom) * p.running_mean + mom * mu
        p.running_var[:] = (1 - mom) * p.running_var + mom * var * (m / (m - 1))
    return xhat * g + b, BnCache(xhat=xhat, inv_std=inv_std, m=m)


def batchnorm_backward(p: BatchNormParams, dy: Tensor4, cache: BnCache | None) -> Tensor4:
    """Exact gradient of the train-mode forward; accumulates gamma/beta grads."""
    if cache is None:
        raise ValueError("batchnorm_backward requires the cache from a train-mode forward")
    dgamma = (dy * cache.xhat).sum(axis=(0, 2, 3))
    dbeta = dy.sum(axis=(0, 2, 3))
    p.ggamma += dgamma
    p.gbeta += dbeta
    dxhat = dy * p.gamma[None, :, None, None]
    m = cache.m
    inv = cache.inv_std[None, :, None, None]
    sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
    sum_dxhat_xhat = (dxhat * cache.xhat).sum(axis=(0, 2, 3), keepdims=True)
    return (inv / m) * (m * dxhat - sum_dxhat - cache.xhat * sum_dxhat_xhat)


# ---------------------------------------------------------------------------
# activations and pooling


def relu(x: Tensor4) -> Tensor4:
    return np.maximum(x, 0.0)


def relu_backward(x: Tensor4, dy: Tensor4) -> Tensor4:
    if x.shape != dy.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {dy.shape}")
    return np.where(x > 0, dy, 0.0)


@dataclass
class PoolCache:
    x_shape: tuple
    k: int
    stride: int
    padding: int
    argmax: np.ndarray  # (n, c, ho, wo) flat index into each k*k window


def maxpool_forward(
    x: Tensor4, k: int = 3, stride: int = 2, padding: int = 1
) -> tuple[Tensor4, PoolCache]:
    n, c, h, w = x.shape
    ho, wo = conv_output_hw(h, w, k, stride, padding)
    neg = -np.inf
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                constant_values=neg) if padding else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride].reshape(n, c, ho, wo, k * k)
    # argmax picks the first maximum in row-major window order (fixed tie-break)
    idx = np.argmax(win, axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return y, PoolCache((n, c, h, w), k, stride, padding, idx)


def maxpool_backward(cache: PoolCache, dy: Tensor4) -> Tensor4:
    n, c, h, w = cache.x_shape
    k, s, pad = cache.k, cache.stride, cache.padding
    ho, wo = dy.shape[2], dy.shape[3]
    if dy.shape != cache.argmax.shape:
        raise ValueError(f"dy shape {dy.shape} != pooled shape {cache.argmax.shape}")
    rows = cache.argmax // k + s * np.arange(ho)[None, None, :, None]
    cols = cache.argmax % k + s * np.arange(wo)[None, None, None, :]
    hp, wp = h + 2 * pad, w + 2 * pad
    dxp = np.zeros((n, c, hp, wp))
    flat = ((np.arange(n)[:, None, None, None] * c
             + np.arange(c)[None, :, None, None]) * hp + rows) * wp + cols
    np.add.at(dxp.reshape(-1), flat.ravel(), dy.ravel())
    return dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp


def global_avg_pool(x: Tensor4) -> Tensor4:
    return x.mean(axis=(2, 3), keepdims=True)


def global_avg_pool_backward(x_shape: tuple, dy: Tensor4) -> Tensor4:
    n, c, h, w = x_shape
    if dy.shape != (n, c, 1, 1):
        raise ValueError(f"dy shape {dy.shape} != pooled shape {(n, c, 1, 1)}")
    return np.broadcast_to(dy / (h * w), x_shape).copy()


# ---------------------------------------------------------------------------
# classifier head


def linear_forward(x: np.ndarray, p: LinearParams) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != p.weights.shape[1]:
        raise ValueError(
            f"linear expects (n, {p.weights.shape[1]}) features, got {x.shape}"
        )
    return x @ p.weights.T + p.bias


def linear_backward(x: np.ndarray, p: LinearParams, dy: np.ndarray) -> np.ndarray:
    if dy.shape != (x.shape[0], p.weights.shape[0]):
        raise ValueError(f"dy shape {dy.shape} mismatches logits shape")
    p.gw += dy.T @ x
    p.gb += dy.sum(axis=0)
    return dy @ p.weights


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, num_classes = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n
