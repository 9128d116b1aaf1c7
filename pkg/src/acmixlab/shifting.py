"""Spatial shifts, their depthwise-convolution equivalents, and the
two-stage decomposition of dense convolution.

A k x k convolution splits into k^2 pointwise projections (one per kernel
tap) followed by per-tap spatial shifts and a summation.  The shift itself
can be realised as a depthwise convolution whose kernel holds a single 1,
and the whole shift-and-sum as one grouped depthwise convolution over the
k^2 projected maps.  Everything here is stride 1 with zero fill.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import ConvKernel, ShapeError, as_feature_map, pointwise_conv


@dataclass(frozen=True)
class ShiftSpec:
    """Displacement (dx, dy): out[i, j] reads from in[i + dx, j + dy]."""

    dx: int
    dy: int

    def __post_init__(self):
        if not (isinstance(self.dx, (int, np.integer)) and isinstance(self.dy, (int, np.integer))):
            raise TypeError("shift displacements must be integers")


def _coerce_spec(spec) -> ShiftSpec:
    if isinstance(spec, ShiftSpec):
        return spec
    dx, dy = spec
    return ShiftSpec(int(dx), int(dy))


def shift(feature, spec) -> np.ndarray:
    """Translate a feature map: out[..., i, j] = in[..., i+dx, j+dy].

    Positions whose source falls outside the map are zero-filled.  The
    displacement magnitudes must stay below the spatial extent.
    """
    f = as_feature_map(feature)
    s = _coerce_spec(spec)
    h, w = f.shape[2], f.shape[3]
    if abs(s.dx) >= h or abs(s.dy) >= w:
        raise ValueError(
            f"displacement ({s.dx}, {s.dy}) out of range for a {h}x{w} map"
        )
    out = np.zeros_like(f)
    r0, r1 = max(0, -s.dx), min(h, h - s.dx)
    c0, c1 = max(0, -s.dy), min(w, w - s.dy)
    if r0 < r1 and c0 < c1:
        out[:, :, r0:r1, c0:c1] = f[:, :, r0 + s.dx : r1 + s.dx, c0 + s.dy : c1 + s.dy]
    return out


def shift_kernel(spec, k: int) -> np.ndarray:
    """One-hot k x k kernel whose depthwise convolution equals shift(spec).

    The single 1 sits at tap (dx + k//2, dy + k//2); a (-1, -1) shift with
    k = 3 therefore puts it in the top-left corner.
    """
    s = _coerce_spec(spec)
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1; got {k}")
    m = k // 2
    if abs(s.dx) > m or abs(s.dy) > m:
        raise ValueError(
            f"displacement ({s.dx}, {s.dy}) exceeds the reach of a "
            f"{k}x{k} kernel"
        )
    kern = np.zeros((k, k))
    kern[s.dx + m, s.dy + m] = 1.0
    return kern


def depthwise_conv(feature, kernels) -> np.ndarray:
    """Per-channel stride-1 convolution with zero padding.

    ``kernels`` has shape (channels, k, k): channel c of the output is the
    convolution of channel c of the input with kernels[c].  Taps accumulate
    in row-major (p, q) order.
    """
    f = as_feature_map(feature)
    kerns = np.asarray(kernels, dtype=np.float64)
    if kerns.ndim != 3 or kerns.shape[1] != kerns.shape[2]:
        raise ShapeError(f"depthwise kernels must be (channels, k, k); got {kerns.shape}")
    if kerns.shape[0] != f.shape[1]:
        raise ShapeError(
            f"{kerns.shape[0]} depthwise kernels for {f.shape[1]} channels"
        )
    k = kerns.shape[1]
    if k % 2 == 0:
        raise ShapeError(f"kernel size must be odd; got {k}")
    m = k // 2
    b, c, h, w = f.shape
    padded = np.pad(f, ((0, 0), (0, 0), (m, m), (m, m)))
    out = np.zeros_like(f)
    for p in range(k):
        for q in range(k):
            out += kerns[:, p, q][None, :, None, None] * padded[:, :, p : p + h, q : q + w]
    return out


def shift_via_depthwise(feature, spec, k: int) -> np.ndarray:
    """Shift implemented as a depthwise convolution with a one-hot kernel.

    Exactly reproduces ``shift(feature, spec)``: the one-hot tap contributes
    the shifted element and every other tap contributes a zero.
    """
    f = as_feature_map(feature)
    kern = shift_kernel(spec, k)
    per_channel = np.broadcast_to(kern, (f.shape[1], k, k))
    return depthwise_conv(f, per_channel)


def _bank_kernels_from_shifts(k: int, channels: int) -> np.ndarray:
    kernels = np.zeros((k * k * channels, 1, k, k))
    for g in range(k * k):
        p, q = divmod(g, k)
        kern = shift_kernel((p - k // 2, q - k // 2), k)
        kernels[g * channels : (g + 1) * channels, 0] = kern
    return kernels


@dataclass
class ShiftKernelBank:
    """Per-channel depthwise kernels for the grouped shift-and-sum.

    The bank holds k^2 groups of ``channels`` kernels each, stored as a
    (k^2 * channels, 1, k, k) array; group g corresponds to kernel tap
    (p, q) = divmod(g, k).  In fixed mode every kernel is the one-hot
    pattern for its group's displacement; in learnable mode the same
    pattern serves as the initialization and the weights may be updated
    between passes.
    """

    kernels: np.ndarray
    k: int
    channels: int
    learnable: bool = False

    def __post_init__(self):
        kerns = np.asarray(self.kernels, dtype=np.float64)
        expected = (self.k * self.k * self.channels, 1, self.k, self.k)
        if kerns.shape != expected:
            raise ShapeError(f"bank kernels must have shape {expected}; got {kerns.shape}")
        self.kernels = kerns

    @classmethod
    def fixed(cls, k: int, channels: int) -> "ShiftKernelBank":
        return cls(_bank_kernels_from_shifts(k, channels), k, channels, learnable=False)

    @classmethod
    def learnable_init(cls, k: int, channels: int) -> "ShiftKernelBank":
        return cls(_bank_kernels_from_shifts(k, channels), k, channels, learnable=True)

    @property
    def groups(self) -> int:
        return self.k * self.k

    def group_kernels(self, g: int) -> np.ndarray:
        """(channels, k, k) kernels of group g."""
        return self.kernels[g * self.channels : (g + 1) * self.channels, 0]

    def displacement(self, g: int) -> tuple[int, int]:
        p, q = divmod(g, self.k)
        return p - self.k // 2, q - self.k // 2

    def is_one_hot(self) -> bool:
        """True when every kernel matches its group's shift pattern."""
        return bool(np.array_equal(self.kernels, _bank_kernels_from_shifts(self.k, self.channels)))


def shift_sum_group_conv(features: Sequence[np.ndarray], bank: ShiftKernelBank) -> np.ndarray:
    """Grouped depthwise convolution over k^2 feature maps, groups summed.

    Conceptually the k^2 maps are concatenated along channels, each
    concatenated channel is convolved with its own bank kernel, and the k^2
    group outputs are added.  With a one-hot bank this equals shifting each
    map by its group displacement and summing.
    """
    maps = [as_feature_map(f, f"features[{i}]") for i, f in enumerate(features)]
    if len(maps) != bank.groups:
        raise ShapeError(f"expected {bank.groups} feature maps, got {len(maps)}")
    shape = maps[0].shape
    for i, f in enumerate(maps):
        if f.shape != shape:
            raise ShapeError(
                f"feature {i} has shape {f.shape}, expected {shape}"
            )
    if shape[1] != bank.channels:
        raise ShapeError(
            f"features have {shape[1]} channels but the bank was built for "
            f"{bank.channels}"
        )
    out = np.zeros(shape)
    for g, f in enumerate(maps):
        out += depthwise_conv(f, bank.group_kernels(g))
    return out


def conv2d_decomposed(feature, kernel) -> np.ndarray:
    """Convolution as pointwise projections, per-tap shifts, and a sum.

    For every kernel tap (p, q): project the input with the tap matrix,
    shift the projection by (p - k//2, q - k//2), and accumulate.  Agrees
    with ``conv2d_reference`` up to floating-point regrouping.
    """
    f = as_feature_map(feature)
    kern = kernel if isinstance(kernel, ConvKernel) else ConvKernel(kernel)
    if f.shape[1] != kern.in_channels:
        raise ShapeError(
            f"feature has {f.shape[1]} channels but kernel expects "
            f"{kern.in_channels}"
        )
    k = kern.k
    m = k // 2
    out = np.zeros((f.shape[0], kern.out_channels, f.shape[2], f.shape[3]))
    for p in range(k):
        for q in range(k):
            projected = pointwise_conv(f, kern.tap(p, q))
            out += shift(projected, (p - m, q - m))
    return out
