"""4-D tensor conventions and seeded randomness.

Every feature map in this package is a C-contiguous float64 numpy array of
shape (n, c, h, w): batch, channels, height, width, row-major in that order.
The helpers here construct and validate such arrays; kernels elsewhere assume
the convention and never re-check it internally.

Randomness comes from numpy's PCG64 via `make_rng`. PCG64 is a documented,
versioned generator, so a fixed seed yields the same draw sequence on every
platform and numpy release that ships it.
"""

from __future__ import annotations

import numpy as np

Tensor4 = np.ndarray  # (n, c, h, w) float64, C-contiguous
Rng = np.random.Generator


def make_rng(seed: int, *stream: int) -> Rng:
    """Seeded PCG64 generator; extra ints select independent substreams."""
    return np.random.default_rng((int(seed),) + tuple(int(s) for s in stream))


def check_shape4(shape) -> tuple[int, int, int, int]:
    shape = tuple(int(d) for d in shape)
    if len(shape) != 4:
        raise ValueError(f"expected 4 dimensions (n, c, h, w), got {shape}")
    if any(d < 1 for d in shape):
        raise ValueError(f"all dimensions must be >= 1, got {shape}")
    n = 1
    for d in shape:
        n *= d
    if n > 2**40:
        raise ValueError(f"shape {shape} overflows the supported element count")
    return shape


def check_tensor4(x: np.ndarray, name: str = "tensor") -> Tensor4:
    """Validate/coerce an array to the (n, c, h, w) float64 convention."""
    x = np.asarray(x)
    if x.ndim != 4:
        raise ValueError(f"{name}: expected a 4-D array, got ndim={x.ndim}")
    check_shape4(x.shape)
    if x.dtype != np.float64:
        x = x.astype(np.float64)
    return np.ascontiguousarray(x)


def new_tensor(shape, fill: float = 0.0) -> Tensor4:
    """Tensor of the given 4-D shape with every element equal to `fill`."""
    return np.full(check_shape4(shape), float(fill), dtype=np.float64)


def randn(shape, mean: float, std: float, rng: Rng) -> Tensor4:
    """I.i.d. normal draws; std = 0 degenerates to a constant tensor."""
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    shape = check_shape4(shape)
    if std == 0:
        return np.full(shape, float(mean), dtype=np.float64)
    return rng.normal(float(mean), float(std), size=shape)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: Tensor4, b: Tensor4) -> Tensor4:
    _check_same_shape(a, b)
    return a + b


def sub(a: Tensor4, b: Tensor4) -> Tensor4:
    _check_same_shape(a, b)
    return a - b


def mul(a: Tensor4, b: Tensor4) -> Tensor4:
    _check_same_shape(a, b)
    return a * b


def scale(a: Tensor4, s: float) -> Tensor4:
    return a * float(s)
