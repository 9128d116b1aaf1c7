"""Finite-difference verification of the hybrid operator's analytic
gradients, parameter group by parameter group.

For a random upstream gradient g the scalar objective is
``sum(g * forward(x))``; its analytic gradient for each group must match
central differences coordinate for coordinate.  Relative error per group is
``max|analytic - numeric| / max(|analytic|_inf, |numeric|_inf)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .acmix import AcmixConfig, AcmixParams, acmix_backward, acmix_forward
from .attention import PatchwiseScorer, RelPosTable
from .shifting import ShiftKernelBank
from .tensor import finite_difference_grad

DEFAULT_EPSILON = 1e-5
DEFAULT_TOLERANCE = 1e-5


@dataclass
class GradCheckResult:
    case: str
    group: str
    rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "group": self.group,
            "rel_error": self.rel_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class GradCheckCase:
    """One operator instance to verify, with its input geometry."""

    label: str
    config: AcmixConfig
    height: int = 6
    width: int = 6
    batch: int = 1
    zero_input: bool = False
    pos_extent: Optional[int] = None


def default_cases() -> tuple[GradCheckCase, ...]:
    return (
        GradCheckCase(
            "local-2head",
            AcmixConfig(c_in=4, c_out=8, heads=2, k_att=3, k_conv=3, attention_kind="local"),
        ),
        GradCheckCase(
            "window-2head",
            AcmixConfig(c_in=6, c_out=6, heads=2, k_att=3, k_conv=3, attention_kind="window"),
        ),
        GradCheckCase(
            "local-padded-border",
            AcmixConfig(
                c_in=3, c_out=4, heads=1, k_att=3, k_conv=3,
                attention_kind="local", border="padded-keys",
            ),
            height=5,
            width=5,
        ),
    )


def _params_with(params: AcmixParams, group: str, value: np.ndarray, config: AcmixConfig) -> AcmixParams:
    kw = dict(
        w_q=params.w_q, w_k=params.w_k, w_v=params.w_v, fc=params.fc,
        bank=params.bank, alpha=params.alpha, beta=params.beta,
        pos_table=params.pos_table, scorer=params.scorer,
    )
    if group in ("w_q", "w_k", "w_v", "fc"):
        kw[group] = value
    elif group == "bank":
        kw["bank"] = ShiftKernelBank(value, config.k_conv, config.c_out, learnable=True)
    elif group == "alpha":
        kw["alpha"] = float(value)
    elif group == "beta":
        kw["beta"] = float(value)
    elif group == "pos_table":
        kw["pos_table"] = RelPosTable(value)
    elif group == "scorer_w1":
        kw["scorer"] = PatchwiseScorer(value, params.scorer.w2)
    elif group == "scorer_w2":
        kw["scorer"] = PatchwiseScorer(params.scorer.w1, value)
    else:
        raise KeyError(group)
    return AcmixParams(**kw)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = float(np.max(np.abs(analytic - numeric))) if analytic.size else 0.0
    scale = max(
        float(np.max(np.abs(analytic))) if analytic.size else 0.0,
        float(np.max(np.abs(numeric))) if numeric.size else 0.0,
    )
    if diff == 0.0:
        return 0.0
    return diff / max(scale, 1e-12)


def gradcheck_case(
    case: GradCheckCase,
    seed: int = 0,
    epsilon: float = DEFAULT_EPSILON,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[GradCheckResult]:
    """Check every parameter group of one case against central differences."""
    rng = np.random.default_rng(seed)
    config = case.config
    params = AcmixParams.initialize(config, rng, pos_extent=case.pos_extent)
    if params.pos_table is not None:
        # exercise a nonzero bias so its gradient path is not a no-op
        params.pos_table.table[...] = 0.1 * rng.standard_normal(params.pos_table.table.shape)
    feature = rng.standard_normal((case.batch, config.c_in, case.height, case.width))
    if case.zero_input:
        feature = np.zeros_like(feature)
    out = acmix_forward(feature, params, config)
    upstream = rng.standard_normal(out.shape)
    grads = acmix_backward(feature, params, config, upstream)

    def loss_for(group: str):
        def fn(value: np.ndarray) -> float:
            if group == "input":
                return float(np.sum(upstream * acmix_forward(value, params, config)))
            trial = _params_with(params, group, value, config)
            return float(np.sum(upstream * acmix_forward(feature, trial, config)))

        return fn

    checks: list[tuple[str, np.ndarray, np.ndarray]] = [
        ("input", feature, grads.input),
        ("w_q", params.w_q, grads.w_q),
        ("w_k", params.w_k, grads.w_k),
        ("w_v", params.w_v, grads.w_v),
        ("fc", params.fc, grads.fc),
        ("bank", params.bank.kernels, grads.bank),
        ("alpha", np.array(params.alpha), np.array(grads.alpha)),
        ("beta", np.array(params.beta), np.array(grads.beta)),
    ]
    if params.pos_table is not None:
        checks.append(("pos_table", params.pos_table.table, grads.pos_table))
    if params.scorer is not None:
        checks.append(("scorer_w1", params.scorer.w1, grads.scorer_w1))
        checks.append(("scorer_w2", params.scorer.w2, grads.scorer_w2))

    results = []
    for group, point, analytic in checks:
        numeric = finite_difference_grad(loss_for(group), point, epsilon)
        rel = _relative_error(analytic, numeric)
        results.append(GradCheckResult(case.label, group, rel, tolerance))
    return results


def run_gradcheck(
    seed: int = 0,
    epsilon: float = DEFAULT_EPSILON,
    tolerance: float = DEFAULT_TOLERANCE,
    cases: Optional[tuple[GradCheckCase, ...]] = None,
) -> list[GradCheckResult]:
    results = []
    for case in cases or default_cases():
        results += gradcheck_case(case, seed=seed, epsilon=epsilon, tolerance=tolerance)
    return results
