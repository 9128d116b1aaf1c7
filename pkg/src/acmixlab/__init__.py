"""Dense-tensor operators for hybrid convolution/attention blocks, their
exact-equivalence verification, analytic gradients, and a symbolic
FLOPs/parameter cost model."""

from .acmix import (
    AcmixConfig,
    AcmixGrads,
    AcmixParams,
    acmix_backward,
    acmix_forward,
    attention_path,
    conv_path,
    stage1_project,
)
from .attention import (
    AttentionMode,
    AttentionParams,
    PatchwiseScorer,
    RelPosTable,
    attention_aggregate,
    attention_weights,
    global_mode,
    local_mode,
    patchwise_mode,
    project_qkv,
    window_mode,
)
from .costmodel import (
    ArchitectureSpec,
    CostReport,
    LayerSpec,
    architecture_cost,
    architecture_from_dict,
    count_params_live,
    layer_cost,
)
from .presets import get_preset, preset_names, preset_operators
from .shifting import (
    ShiftKernelBank,
    ShiftSpec,
    conv2d_decomposed,
    depthwise_conv,
    shift,
    shift_kernel,
    shift_sum_group_conv,
    shift_via_depthwise,
)
from .tensor import (
    ConvKernel,
    ShapeError,
    conv2d_reference,
    finite_difference_grad,
    pointwise_conv,
    softmax_over_set,
)

__all__ = [
    "AcmixConfig",
    "AcmixGrads",
    "AcmixParams",
    "ArchitectureSpec",
    "AttentionMode",
    "AttentionParams",
    "ConvKernel",
    "CostReport",
    "LayerSpec",
    "PatchwiseScorer",
    "RelPosTable",
    "ShapeError",
    "ShiftKernelBank",
    "ShiftSpec",
    "acmix_backward",
    "acmix_forward",
    "architecture_cost",
    "architecture_from_dict",
    "attention_aggregate",
    "attention_path",
    "attention_weights",
    "conv2d_decomposed",
    "conv2d_reference",
    "conv_path",
    "count_params_live",
    "depthwise_conv",
    "finite_difference_grad",
    "get_preset",
    "global_mode",
    "layer_cost",
    "local_mode",
    "patchwise_mode",
    "pointwise_conv",
    "preset_names",
    "preset_operators",
    "project_qkv",
    "shift",
    "shift_kernel",
    "shift_sum_group_conv",
    "shift_via_depthwise",
    "softmax_over_set",
    "stage1_project",
    "window_mode",
]

__version__ = "0.1.0"
