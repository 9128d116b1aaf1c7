"""Rank-4 feature-map arithmetic, reference operators, and a gradient oracle.

Feature maps are double-precision numpy arrays laid out as
``(batch, channels, height, width)``.  Every operator here is a pure
function: inputs are never mutated and repeated calls produce bit-identical
results.

Summation order matters for the tight oracle comparisons used throughout
the test suite, so the reference convolution accumulates its terms in a
fixed, documented order: kernel positions ``(p, q)`` in row-major order on
the outside, input channels ascending on the inside.  A separately written
direct loop that follows the same order reproduces the results bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class ShapeError(ValueError):
    """Raised when an operand's shape does not fit an operator's contract."""


def as_feature_map(x, name: str = "input") -> np.ndarray:
    """Coerce ``x`` to a float64 (batch, channels, height, width) array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ShapeError(
            f"{name} must be rank-4 (batch, channels, height, width); "
            f"got shape {arr.shape}"
        )
    return arr


def require_finite(arr: np.ndarray, name: str = "array") -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class ConvKernel:
    """Convolution weights shaped (out_channels, in_channels, k, k), k odd.

    ``tap(p, q)`` returns the (out_channels, in_channels) matrix sitting at
    kernel position ``(p, q)``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 4:
            raise ShapeError(f"kernel must be rank-4; got shape {w.shape}")
        if w.shape[2] != w.shape[3]:
            raise ShapeError(f"kernel window must be square; got {w.shape[2:]} ")
        if w.shape[2] < 1 or w.shape[2] % 2 == 0:
            raise ShapeError(f"kernel size must be odd and >= 1; got {w.shape[2]}")
        object.__setattr__(self, "weights", w)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def k(self) -> int:
        return self.weights.shape[2]

    def tap(self, p: int, q: int) -> np.ndarray:
        """Weight matrix at kernel position (p, q)."""
        return self.weights[:, :, p, q]


def _coerce_kernel(kernel) -> ConvKernel:
    return kernel if isinstance(kernel, ConvKernel) else ConvKernel(kernel)


def conv2d_reference(feature, kernel) -> np.ndarray:
    """Direct stride-1 convolution with zero padding ("same" output size).

    out[b, o, i, j] = sum over kernel positions (p, q) and channels c of
    weights[o, c, p, q] * feature[b, c, i + p - k//2, j + q - k//2], with
    out-of-range reads treated as zero.  Accumulation runs (p, q)-major with
    channels innermost so that independently coded direct loops match
    bit for bit.
    """
    f = as_feature_map(feature)
    kern = _coerce_kernel(kernel)
    if f.shape[1] != kern.in_channels:
        raise ShapeError(
            f"feature has {f.shape[1]} channels but kernel expects "
            f"{kern.in_channels}"
        )
    b, c_in, h, w = f.shape
    k = kern.k
    m = k // 2
    padded = np.pad(f, ((0, 0), (0, 0), (m, m), (m, m)))
    out = np.zeros((b, kern.out_channels, h, w))
    for p in range(k):
        for q in range(k):
            window = padded[:, :, p : p + h, q : q + w]
            for c in range(c_in):
                tap_col = kern.weights[:, c, p, q]  # (out_channels,)
                out += tap_col[None, :, None, None] * window[:, c][:, None]
    return out


def pointwise_conv(feature, weight) -> np.ndarray:
    """Per-pixel matrix product: out[b, :, i, j] = weight @ feature[b, :, i, j].

    Equivalent to a 1x1 convolution; channels accumulate in ascending order,
    matching ``conv2d_reference`` with the weight viewed as a k=1 kernel.
    """
    f = as_feature_map(feature)
    wmat = np.asarray(weight, dtype=np.float64)
    if wmat.ndim != 2:
        raise ShapeError(f"weight must be a matrix; got shape {wmat.shape}")
    if wmat.shape[1] != f.shape[1]:
        raise ShapeError(
            f"weight has {wmat.shape[1]} columns but feature has "
            f"{f.shape[1]} channels"
        )
    b, c_in, h, w = f.shape
    out = np.zeros((b, wmat.shape[0], h, w))
    for c in range(c_in):
        out += wmat[:, c][None, :, None, None] * f[:, c][:, None]
    return out


def softmax_over_set(logits) -> np.ndarray:
    """Numerically stable softmax of a 1-d logit vector.

    Subtracts the maximum before exponentiating, so arbitrarily large finite
    logits do not overflow.  The result is nonnegative and sums to one.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        z = z.reshape(-1)
    if z.size == 0:
        raise ValueError("softmax requires at least one logit")
    require_finite(z, "logits")
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def finite_difference_grad(
    fn: Callable[[np.ndarray], float], point, epsilon: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``point``.

    Perturbs one coordinate at a time: (f(x + eps*e) - f(x - eps*e)) / (2 eps).
    ``point`` may have any shape (scalars included); the result matches it.
    Raises if the function returns a non-finite value, reporting which
    coordinate was being probed.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.array(point, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        saved = flat[idx]
        flat[idx] = saved + epsilon
        f_plus = float(fn(x))
        flat[idx] = saved - epsilon
        f_minus = float(fn(x))
        flat[idx] = saved
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            coord = np.unravel_index(idx, x.shape) if x.shape else ()
            raise ValueError(
                f"function returned a non-finite value while perturbing "
                f"coordinate {coord}"
            )
        gflat[idx] = (f_plus - f_minus) / (2.0 * epsilon)
    return grad
