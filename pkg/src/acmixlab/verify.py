"""Equivalence matrix: every exact-agreement claim the library makes,
run as one suite with per-check deviations.

Each check pits an implementation against an independent route to the same
values (direct convolution vs. its two-stage decomposition, tensor shifts
vs. one-hot depthwise kernels, grouped aggregation vs. explicit
shift-and-sum, blended operator vs. its standalone paths) and records the
worst absolute deviation.  A fault-injection mode flips one kernel weight
to prove the harness actually fails when the routes disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .acmix import (
    AcmixConfig,
    AcmixParams,
    acmix_forward,
    attention_path,
    conv_path,
    stage1_project,
)
from .attention import AttentionParams, attention_aggregate, local_mode
from .shifting import (
    ShiftKernelBank,
    conv2d_decomposed,
    shift,
    shift_sum_group_conv,
    shift_via_depthwise,
)
from .tensor import ConvKernel, conv2d_reference

DEFAULT_SIZES = (8, 16)
DEFAULT_KERNELS = (1, 3, 5)
DEFAULT_CHANNELS = (4, 8, 16)

CONV_TOL = 1e-10
SHIFT_TOL = 1e-12
GROUP_TOL = 1e-10
BLEND_TOL = 1e-12
SOFTMAX_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    passed: bool
    deviation: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "deviation": self.deviation,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


def _max_abs(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def conv_decomposition_checks(
    seed: int = 0,
    kernels: Sequence[int] = DEFAULT_KERNELS,
    channels: Sequence[int] = DEFAULT_CHANNELS,
    sizes: Sequence[int] = DEFAULT_SIZES,
    batch: int = 2,
    tol: float = CONV_TOL,
    inject_fault: bool = False,
) -> list[CheckResult]:
    """Two-stage decomposition vs. direct convolution over a size matrix."""
    rng = np.random.default_rng(seed)
    results = []
    pairs = [(c, c) for c in channels] + [
        (channels[i], channels[(i + 1) % len(channels)]) for i in range(len(channels))
    ]
    for k in kernels:
        for c_in, c_out in pairs:
            for hw in sizes:
                f = rng.standard_normal((batch, c_in, hw, hw))
                weights = rng.standard_normal((c_out, c_in, k, k))
                reference = conv2d_reference(f, ConvKernel(weights))
                if inject_fault:
                    weights = weights.copy()
                    weights[0, 0, 0, 0] += 1.0
                decomposed = conv2d_decomposed(f, ConvKernel(weights))
                dev = _max_abs(reference, decomposed)
                results.append(
                    CheckResult(
                        f"conv-decomposition k={k} c={c_in}->{c_out} hw={hw}",
                        dev <= tol,
                        dev,
                        tol,
                        detail=f"seed={seed}",
                    )
                )
    return results


def shift_depthwise_checks(
    seed: int = 0, kernels: Sequence[int] = (3, 5), tol: float = SHIFT_TOL
) -> list[CheckResult]:
    """Every in-reach displacement: one-hot depthwise conv vs. plain shift."""
    rng = np.random.default_rng(seed)
    results = []
    for k in kernels:
        f = rng.standard_normal((2, 5, 9, 9))
        m = k // 2
        for dx in range(-m, m + 1):
            for dy in range(-m, m + 1):
                via_kernel = shift_via_depthwise(f, (dx, dy), k)
                direct = shift(f, (dx, dy))
                dev = _max_abs(via_kernel, direct)
                results.append(
                    CheckResult(
                        f"shift-depthwise k={k} d=({dx},{dy})",
                        dev <= tol,
                        dev,
                        tol,
                        detail=f"seed={seed}",
                    )
                )
    return results


def group_conv_checks(
    seed: int = 0,
    kernels: Sequence[int] = (3, 5),
    channels: Sequence[int] = (4, 8),
    sizes: Sequence[int] = DEFAULT_SIZES,
    tol: float = GROUP_TOL,
) -> list[CheckResult]:
    """Grouped one-hot aggregation vs. explicit per-map shift and sum."""
    rng = np.random.default_rng(seed)
    results = []
    for k in kernels:
        for c in channels:
            for hw in sizes:
                maps = [rng.standard_normal((2, c, hw, hw)) for _ in range(k * k)]
                bank = ShiftKernelBank.fixed(k, c)
                grouped = shift_sum_group_conv(maps, bank)
                explicit = np.zeros_like(maps[0])
                for g, fmap in enumerate(maps):
                    explicit += shift(fmap, bank.displacement(g))
                dev = _max_abs(grouped, explicit)
                results.append(
                    CheckResult(
                        f"group-conv-shift-sum k={k} c={c} hw={hw}",
                        dev <= tol,
                        dev,
                        tol,
                        detail=f"seed={seed}",
                    )
                )
    return results


def acmix_limit_checks(seed: int = 0, tol: float = BLEND_TOL) -> list[CheckResult]:
    """Blend scalars at their limits reproduce the standalone paths."""
    rng = np.random.default_rng(seed)
    config = AcmixConfig(c_in=4, c_out=8, heads=2, k_att=3, k_conv=3)
    params = AcmixParams.initialize(config, rng)
    f = rng.standard_normal((2, 4, 6, 6))
    feats = stage1_project(f, params, config)
    att = attention_path(feats, params, config)
    conv = conv_path(feats, params, config)
    results = []

    params.alpha, params.beta = 1.0, 0.0
    dev = _max_abs(acmix_forward(f, params, config), att)
    results.append(CheckResult("acmix-limit alpha=1,beta=0", dev == 0.0, dev, 0.0))

    params.alpha, params.beta = 0.0, 1.0
    dev = _max_abs(acmix_forward(f, params, config), conv)
    results.append(CheckResult("acmix-limit alpha=0,beta=1", dev == 0.0, dev, 0.0))

    params.alpha, params.beta = 1.0, 1.0
    dev = _max_abs(acmix_forward(f, params, config), att + conv)
    results.append(CheckResult("acmix-limit alpha=1,beta=1", dev <= tol, dev, tol))
    return results


def attention_sanity_checks(seed: int = 0, tol: float = SOFTMAX_TOL) -> list[CheckResult]:
    """Convexity of the softmax aggregation on a constant-value field."""
    rng = np.random.default_rng(seed)
    params = AttentionParams.random(4, 8, 2, rng, pos_extent=3)
    f = rng.standard_normal((1, 4, 6, 6))
    results = []
    # constant values: make w_v rank deficient so every pixel projects alike
    const = AttentionParams(
        params.w_q, params.w_k, np.zeros_like(params.w_v), pos_table=params.pos_table
    )
    out = attention_aggregate(f, const, local_mode(3))
    dev = float(np.max(np.abs(out)))
    results.append(CheckResult("attention-zero-values", dev == 0.0, dev, 0.0))

    out = attention_aggregate(f, params, local_mode(3))
    results.append(
        CheckResult(
            "attention-finite-output",
            bool(np.isfinite(out).all()),
            0.0,
            0.0,
        )
    )
    return results


def run_equivalence_suite(
    seed: int = 0,
    kernels: Sequence[int] = DEFAULT_KERNELS,
    channels: Sequence[int] = DEFAULT_CHANNELS,
    sizes: Sequence[int] = DEFAULT_SIZES,
    conv_tol: float = CONV_TOL,
    inject_fault: bool = False,
) -> list[CheckResult]:
    """The full matrix; ``inject_fault`` perturbs one conv weight so the
    decomposition checks must report a failure."""
    results = []
    results += conv_decomposition_checks(
        seed, kernels, channels, sizes, tol=conv_tol, inject_fault=inject_fault
    )
    results += shift_depthwise_checks(seed)
    results += group_conv_checks(seed, sizes=sizes)
    results += acmix_limit_checks(seed)
    results += attention_sanity_checks(seed)
    return results
