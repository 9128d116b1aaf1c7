"""Micro-benchmark of the shift-and-sum implementations.

Three routes compute the same aggregation of k^2 feature maps:

* ``tensor-shift``  - explicit per-map spatial shifts, summed;
* ``fixed-kernel``  - grouped depthwise convolution with one-hot kernels;
* ``learnable``     - the same grouped convolution with a learnable bank
  (initialised to the one-hot patterns, so outputs stay identical).

Outputs are checked for agreement before anything is timed; timings are
wall-clock and reported with relative speedups, never asserted: the
ordering depends on the host.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .shifting import ShiftKernelBank, shift, shift_sum_group_conv

EQUIVALENCE_TOL = 1e-10


@dataclass
class BenchTiming:
    name: str
    mean_ms: float
    std_ms: float
    best_ms: float
    reps: int
    speedup_vs_first: float = 1.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mean_ms": self.mean_ms,
            "std_ms": self.std_ms,
            "best_ms": self.best_ms,
            "reps": self.reps,
            "speedup_vs_first": self.speedup_vs_first,
        }


@dataclass
class BenchReport:
    channels: int
    size: int
    k: int
    seed: int
    equivalence_passed: bool
    max_deviation: float
    params_touched: dict = field(default_factory=dict)
    timings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "channels": self.channels,
            "size": self.size,
            "k": self.k,
            "seed": self.seed,
            "equivalence_passed": self.equivalence_passed,
            "max_deviation": self.max_deviation,
            "params_touched": self.params_touched,
            "timings": [t.to_dict() for t in self.timings],
        }


def _shift_sum_explicit(maps, bank: ShiftKernelBank) -> np.ndarray:
    out = np.zeros_like(maps[0])
    for g, fmap in enumerate(maps):
        out += shift(fmap, bank.displacement(g))
    return out


def _time_call(fn, reps: int, warmup: int) -> tuple[float, float, float]:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1e3)
    arr = np.asarray(samples)
    return float(arr.mean()), float(arr.std()), float(arr.min())


def run_shift_benchmark(
    seed: int = 0,
    channels: int = 64,
    size: int = 56,
    k: int = 3,
    batch: int = 1,
    reps: int = 20,
    warmup: int = 3,
) -> BenchReport:
    """Check the three implementations agree, then time them.

    Timings appear in the report only when the pre-timing equivalence gate
    passes; otherwise the report carries the deviation and no numbers.
    """
    rng = np.random.default_rng(seed)
    maps = [rng.standard_normal((batch, channels, size, size)) for _ in range(k * k)]
    fixed = ShiftKernelBank.fixed(k, channels)
    learnable = ShiftKernelBank.learnable_init(k, channels)

    routes = [
        ("tensor-shift", lambda: _shift_sum_explicit(maps, fixed)),
        ("fixed-kernel group conv", lambda: shift_sum_group_conv(maps, fixed)),
        ("learnable group conv", lambda: shift_sum_group_conv(maps, learnable)),
    ]
    outputs = [fn() for _, fn in routes]
    deviation = max(
        float(np.max(np.abs(outputs[0] - out))) for out in outputs[1:]
    )
    report = BenchReport(
        channels=channels,
        size=size,
        k=k,
        seed=seed,
        equivalence_passed=deviation <= EQUIVALENCE_TOL,
        max_deviation=deviation,
        params_touched={
            "tensor-shift": 0,
            "fixed-kernel group conv": int(fixed.kernels.size),
            "learnable group conv": int(learnable.kernels.size),
        },
    )
    if not report.equivalence_passed:
        return report

    baseline_mean = None
    for name, fn in routes:
        mean, std, best = _time_call(fn, reps, warmup)
        if baseline_mean is None:
            baseline_mean = mean
        report.timings.append(
            BenchTiming(name, mean, std, best, reps, speedup_vs_first=baseline_mean / mean)
        )
    return report
