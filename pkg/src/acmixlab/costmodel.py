"""Symbolic FLOPs and parameter accounting for convolution, self-attention,
and hybrid layers, with architecture-level aggregation.

Conventions (also spelled out in the README):

* one multiply-accumulate counts as one FLOP;
* stage one is the pointwise projection phase (quadratic in channels),
  stage two the aggregation phase (linear in channels);
* softmax, rectifier, and positional-bias additions are not tallied;
* a layer that downsamples runs its projection and attention aggregation
  at (h, w) and its grouped convolution aggregation at (h_out, w_out).

Per pixel, with C channels in and out, conv kernel k_c, attention field
k_a, and N heads:

    kind            stage 1 FLOPs / params     stage 2 FLOPs / params
    conv            k_c^2 C^2   k_c^2 C^2      k_c^2 C            0
    self-attention  3 C^2       3 C^2          2 k_a^2 C          0
    acmix           3 C^2       3 C^2          (k_c^2 + 2 k_a^2) C
                                               + (3 k_c^2 + k_c^4) C
                                                          3 k_c^2 N + k_c^4 C

Optional knobs cover the architecture families whose attention blocks
deviate from the plain pattern: reduced q/k/v projection widths, an output
projection counted in stage two, global attention over a reduced key set,
and a narrower convolution-path width for reduced-value designs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .acmix import AcmixParams
from .attention import AttentionParams
from .tensor import ConvKernel

LAYER_KINDS = ("conv", "self-attention", "acmix", "pointwise", "pooling", "fc")


@dataclass(frozen=True)
class LayerSpec:
    """One layer position for the cost model.

    ``h``/``w`` is the resolution where the projections (and any attention
    aggregation) run; for plain convolution it is the output resolution.
    ``h_out``/``w_out`` (defaulting to ``h``/``w``) is where the grouped
    convolution aggregation lands when the layer downsamples.
    """

    kind: str
    c_in: int
    c_out: int
    h: int = 1
    w: int = 1
    k_conv: int = 3
    k_att: int = 7
    heads: int = 1
    repeat: int = 1
    label: str = ""
    h_out: Optional[int] = None
    w_out: Optional[int] = None
    # attention projection widths; default to c_out
    qk_channels: Optional[int] = None
    v_channels: Optional[int] = None
    with_output_projection: bool = False
    attention_mode: str = "local"  # local | window | global
    kv_divisor: int = 1  # global mode: key/value token reduction
    # hybrid conv-path accounting
    conv_path_channels: Optional[int] = None
    fc_sources: int = 3
    count_shift_sum: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        for name in ("c_in", "c_out", "h", "w", "repeat"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def hw(self) -> int:
        return self.h * self.w

    @property
    def hw_out(self) -> int:
        return (self.h_out or self.h) * (self.w_out or self.w)


@dataclass(frozen=True)
class CostReport:
    """Stage-wise FLOPs/parameter tallies with derived totals and fractions."""

    label: str
    stage1_flops: int
    stage2_flops: int
    stage1_params: int
    stage2_params: int

    @property
    def total_flops(self) -> int:
        return self.stage1_flops + self.stage2_flops

    @property
    def total_params(self) -> int:
        return self.stage1_params + self.stage2_params

    def flops_fraction(self, stage: int) -> float:
        """Stage share of total FLOPs, in percent."""
        total = self.total_flops
        if total == 0:
            return 0.0
        part = self.stage1_flops if stage == 1 else self.stage2_flops
        return 100.0 * part / total

    def params_fraction(self, stage: int) -> float:
        total = self.total_params
        if total == 0:
            return 0.0
        part = self.stage1_params if stage == 1 else self.stage2_params
        return 100.0 * part / total

    def __add__(self, other: "CostReport") -> "CostReport":
        return CostReport(
            self.label,
            self.stage1_flops + other.stage1_flops,
            self.stage2_flops + other.stage2_flops,
            self.stage1_params + other.stage1_params,
            self.stage2_params + other.stage2_params,
        )

    def scaled(self, times: int) -> "CostReport":
        return CostReport(
            self.label,
            self.stage1_flops * times,
            self.stage2_flops * times,
            self.stage1_params * times,
            self.stage2_params * times,
        )

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "stage1_flops": self.stage1_flops,
            "stage2_flops": self.stage2_flops,
            "total_flops": self.total_flops,
            "stage1_params": self.stage1_params,
            "stage2_params": self.stage2_params,
            "total_params": self.total_params,
            "stage1_flops_pct": self.flops_fraction(1),
            "stage2_flops_pct": self.flops_fraction(2),
        }


def _attention_stage1(spec: LayerSpec) -> tuple[int, int]:
    qk = spec.qk_channels or spec.c_out
    v = spec.v_channels or spec.c_out
    if spec.attention_mode == "global" and spec.kv_divisor > 1:
        kv_hw = spec.hw // spec.kv_divisor**2
        flops = qk * spec.c_in * spec.hw  # queries at full resolution
        flops += (qk + v) * spec.c_in * kv_hw  # keys/values on reduced tokens
        flops += spec.c_in * spec.c_in * spec.hw  # the reduction convolution
        params = (2 * qk + v) * spec.c_in + spec.kv_divisor**2 * spec.c_in * spec.c_in
        return flops, params
    flops = (2 * qk + v) * spec.c_in * spec.hw
    params = (2 * qk + v) * spec.c_in
    return flops, params


def _attention_field(spec: LayerSpec) -> int:
    if spec.attention_mode == "global":
        return spec.hw // spec.kv_divisor**2
    return spec.k_att**2


def layer_cost(spec: LayerSpec) -> CostReport:
    """Stage-wise FLOPs/params of one layer position (repeat applied)."""
    kc2 = spec.k_conv**2
    if spec.kind == "conv":
        s1f = kc2 * spec.c_in * spec.c_out * spec.hw
        s1p = kc2 * spec.c_in * spec.c_out
        s2f = kc2 * spec.c_out * spec.hw
        report = CostReport(spec.label, s1f, s2f, s1p, 0)
    elif spec.kind == "pointwise":
        report = CostReport(
            spec.label, spec.c_in * spec.c_out * spec.hw, 0, spec.c_in * spec.c_out, 0
        )
    elif spec.kind == "pooling":
        report = CostReport(spec.label, 0, 0, 0, 0)
    elif spec.kind == "fc":
        report = CostReport(
            spec.label, spec.c_in * spec.c_out * spec.hw, 0, spec.c_in * spec.c_out, 0
        )
    elif spec.kind == "self-attention":
        s1f, s1p = _attention_stage1(spec)
        s2f = 2 * _attention_field(spec) * spec.c_out * spec.hw
        s2p = 0
        if spec.with_output_projection:
            s2f += spec.c_out * spec.c_out * spec.hw
            s2p += spec.c_out * spec.c_out
        report = CostReport(spec.label, s1f, s2f, s1p, s2p)
    elif spec.kind == "acmix":
        s1f, s1p = _attention_stage1(spec)
        width = spec.conv_path_channels or spec.c_out
        s2f = 2 * _attention_field(spec) * spec.c_out * spec.hw
        s2f += spec.fc_sources * kc2 * width * spec.hw
        agg = kc2 * kc2 + (kc2 if spec.count_shift_sum else 0)
        s2f += agg * width * spec.hw_out
        s2p = spec.fc_sources * kc2 * spec.heads + kc2 * kc2 * width
        if spec.with_output_projection:
            s2f += spec.c_out * spec.c_out * spec.hw
            s2p += spec.c_out * spec.c_out
        report = CostReport(spec.label, s1f, s2f, s1p, s2p)
    else:  # pragma: no cover - guarded by LayerSpec validation
        raise ValueError(spec.kind)
    return report.scaled(spec.repeat)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Named layer stack: the aggregation-module positions plus everything
    else needed for whole-model totals."""

    name: str
    operator: str  # conv | attn | acmix
    modules: tuple[LayerSpec, ...]
    support_layers: tuple[LayerSpec, ...] = ()

    def all_layers(self) -> tuple[LayerSpec, ...]:
        return self.modules + self.support_layers


@dataclass(frozen=True)
class ArchitectureCostReport:
    name: str
    operator: str
    modules: CostReport
    model_flops: int
    model_params: int

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "operator": self.operator,
            "modules": self.modules.to_dict(),
            "model_flops": self.model_flops,
            "model_params": self.model_params,
            "model_gflops": self.model_flops / 1e9,
            "model_mparams": self.model_params / 1e6,
        }
        return d


def architecture_cost(arch: ArchitectureSpec) -> ArchitectureCostReport:
    """Module-level stage tallies plus whole-model totals.

    The module report sums the aggregation-module positions only; the model
    totals add stems, downsampling, MLPs, and the classifier head.
    """
    if not arch.modules:
        raise ValueError(f"architecture {arch.name!r} lists no modules")
    total = CostReport(arch.name, 0, 0, 0, 0)
    for spec in arch.modules:
        total = total + layer_cost(spec)
    model_flops = total.total_flops
    model_params = total.total_params
    for spec in arch.support_layers:
        extra = layer_cost(spec)
        model_flops += extra.total_flops
        model_params += extra.total_params
    return ArchitectureCostReport(arch.name, arch.operator, total, model_flops, model_params)


@dataclass(frozen=True)
class ParamCount:
    """Stored-weight tally of an instantiated parameter object.

    ``core`` covers the stage-one and stage-two weights that the symbolic
    model predicts; the positional table, patchwise scorer, and the two
    blend scalars are flagged separately.
    """

    stage1: int
    stage2: int
    positional: int = 0
    scalars: int = 0
    scorer: int = 0

    @property
    def core(self) -> int:
        return self.stage1 + self.stage2


def count_params_live(obj) -> ParamCount:
    """Count the weights actually stored in a parameter object."""
    if isinstance(obj, ConvKernel):
        return ParamCount(stage1=int(obj.weights.size), stage2=0)
    if isinstance(obj, AttentionParams):
        pos = int(obj.pos_table.table.size) if obj.pos_table is not None else 0
        scorer = (
            int(obj.scorer.w1.size + obj.scorer.w2.size) if obj.scorer is not None else 0
        )
        return ParamCount(
            stage1=int(obj.w_q.size + obj.w_k.size + obj.w_v.size),
            stage2=0,
            positional=pos,
            scorer=scorer,
        )
    if isinstance(obj, AcmixParams):
        pos = int(obj.pos_table.table.size) if obj.pos_table is not None else 0
        scorer = (
            int(obj.scorer.w1.size + obj.scorer.w2.size) if obj.scorer is not None else 0
        )
        return ParamCount(
            stage1=int(obj.w_q.size + obj.w_k.size + obj.w_v.size),
            stage2=int(obj.fc.size + obj.bank.kernels.size),
            positional=pos,
            scalars=2,
            scorer=scorer,
        )
    raise TypeError(f"cannot count parameters of {type(obj).__name__}")


def architecture_from_dict(payload: dict) -> ArchitectureSpec:
    """Build an architecture from the documented JSON schema."""

    def build(entries: Sequence[dict]) -> tuple[LayerSpec, ...]:
        specs = []
        for entry in entries:
            try:
                specs.append(LayerSpec(**entry))
            except TypeError as exc:
                raise ValueError(f"malformed layer entry {entry}: {exc}") from exc
        return tuple(specs)

    try:
        name = payload["name"]
        modules = payload["modules"]
    except KeyError as exc:
        raise ValueError(f"architecture spec missing field {exc}") from exc
    return ArchitectureSpec(
        name=name,
        operator=payload.get("operator", "custom"),
        modules=build(modules),
        support_layers=build(payload.get("support_layers", [])),
    )


def architecture_to_dict(arch: ArchitectureSpec) -> dict:
    def dump(specs: Sequence[LayerSpec]) -> list[dict]:
        out = []
        for s in specs:
            d = {
                "kind": s.kind,
                "c_in": s.c_in,
                "c_out": s.c_out,
                "h": s.h,
                "w": s.w,
            }
            defaults = LayerSpec(kind=s.kind, c_in=s.c_in, c_out=s.c_out, h=s.h, w=s.w)
            for name in (
                "k_conv",
                "k_att",
                "heads",
                "repeat",
                "label",
                "h_out",
                "w_out",
                "qk_channels",
                "v_channels",
                "with_output_projection",
                "attention_mode",
                "kv_divisor",
                "conv_path_channels",
                "fc_sources",
                "count_shift_sum",
            ):
                value = getattr(s, name)
                if value != getattr(defaults, name):
                    d[name] = value
            out.append(d)
        return out

    return {
        "name": arch.name,
        "operator": arch.operator,
        "modules": dump(arch.modules),
        "support_layers": dump(arch.support_layers),
    }
