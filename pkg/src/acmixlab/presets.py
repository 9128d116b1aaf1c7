"""Built-in architecture layouts for the cost model.

Every preset fixes a 224x224 input.  The ``modules`` list holds the
aggregation positions (the 3x3 convolution / attention / hybrid slots
whose stage split the reports compare); ``support_layers`` add the stems,
pointwise bottleneck legs, MLPs, downsampling, and classifier needed for
whole-model totals.

Family-specific counting conventions (see also the README):

* residual bottleneck family: a downsampling block's attention module runs
  at its input resolution and hands the grouped aggregation the output
  resolution; plain convolution is always costed at the output resolution.
* stand-alone attention family: queries/keys project to C/16 and values to
  C/4; the hybrid conv path works at the value width, generating maps from
  the value piece alone, with the shift-sum folded into the grouped kernel.
* window-attention family: blocks carry an output projection, costed in
  stage two.
* pyramid family: global attention over spatially reduced keys/values.
"""

from __future__ import annotations

from .costmodel import ArchitectureSpec, LayerSpec

INPUT_RESOLUTION = 224

_RESNET_BLOCKS = {"resnet26": (1, 2, 4, 1), "resnet38": (2, 3, 5, 2), "resnet50": (3, 4, 6, 3)}
_SAN_BLOCKS = {"san10": (2, 1, 2, 4, 1), "san15": (3, 2, 3, 5, 2), "san19": (3, 3, 4, 6, 3)}
_SWIN_DEPTHS = {"swin-t": (2, 2, 6, 2), "swin-s": (2, 2, 18, 2)}
_PVT_DEPTHS = {"pvt-t": (2, 2, 2, 2), "pvt-s": (3, 4, 6, 3)}

RESNET_ATTENTION_HEADS = 8
RESNET_ACMIX_HEADS = 4
SAN_HEADS = 8
K_ATT = 7
K_CONV = 3


def _resnet(name: str, operator: str) -> ArchitectureSpec:
    blocks = _RESNET_BLOCKS[name]
    widths = (64, 128, 256, 512)
    res = (56, 28, 14, 7)
    modules: list[LayerSpec] = []
    support: list[LayerSpec] = [
        LayerSpec("conv", 3, 64, 112, 112, k_conv=7, label="stem"),
        LayerSpec("pooling", 64, 64, 56, 56, label="maxpool"),
    ]
    c_in = 64
    for s, (width, r, n) in enumerate(zip(widths, res, blocks)):
        c_out = width * 4
        for b in range(n):
            downsamples = s > 0 and b == 0
            r_in = r * 2 if downsamples else r
            label = f"stage{s + 2}.block{b}"
            if operator == "conv":
                modules.append(
                    LayerSpec("conv", width, width, r, r, k_conv=K_CONV, label=label)
                )
            elif operator == "attn":
                modules.append(
                    LayerSpec(
                        "self-attention", width, width, r_in, r_in, k_att=K_ATT,
                        heads=RESNET_ATTENTION_HEADS, label=label,
                    )
                )
            else:
                modules.append(
                    LayerSpec(
                        "acmix", width, width, r_in, r_in, k_att=K_ATT, k_conv=K_CONV,
                        heads=RESNET_ACMIX_HEADS, h_out=r, w_out=r, label=label,
                    )
                )
            support.append(LayerSpec("pointwise", c_in, width, r_in, r_in, label=f"{label}.reduce"))
            support.append(LayerSpec("pointwise", width, c_out, r, r, label=f"{label}.expand"))
            if b == 0:
                support.append(LayerSpec("pointwise", c_in, c_out, r, r, label=f"{label}.skip"))
            c_in = c_out
    support.append(LayerSpec("pooling", c_in, c_in, 1, 1, label="avgpool"))
    support.append(LayerSpec("fc", c_in, 1000, label="classifier"))
    return ArchitectureSpec(name, operator, tuple(modules), tuple(support))


def _san(name: str, operator: str) -> ArchitectureSpec:
    blocks = _SAN_BLOCKS[name]
    widths = (64, 256, 512, 1024, 2048)
    res = (112, 56, 28, 14, 7)
    modules: list[LayerSpec] = []
    support: list[LayerSpec] = [
        LayerSpec("pointwise", 3, 64, 112, 112, label="stem"),
        LayerSpec("pooling", 3, 3, 112, 112, label="stem.pool"),
    ]
    prev = 64
    for s, (c, r, n) in enumerate(zip(widths, res, blocks)):
        if c != prev:
            support.append(LayerSpec("pooling", prev, prev, r, r, label=f"stage{s}.pool"))
            support.append(LayerSpec("pointwise", prev, c, r, r, label=f"stage{s}.transition"))
        for b in range(n):
            label = f"stage{s}.block{b}"
            if operator == "attn":
                modules.append(
                    LayerSpec(
                        "self-attention", c, c, r, r, k_att=K_ATT, heads=SAN_HEADS,
                        qk_channels=c // 16, v_channels=c // 4, label=label,
                    )
                )
            else:
                modules.append(
                    LayerSpec(
                        "acmix", c, c, r, r, k_att=K_ATT, k_conv=K_CONV, heads=SAN_HEADS,
                        qk_channels=c // 16, v_channels=c // 4,
                        conv_path_channels=c // 4, fc_sources=1, count_shift_sum=False,
                        label=label,
                    )
                )
            support.append(LayerSpec("pointwise", c // 4, c, r, r, label=f"{label}.expand"))
        prev = c
    support.append(LayerSpec("pooling", prev, prev, 1, 1, label="avgpool"))
    support.append(LayerSpec("fc", prev, 1000, label="classifier"))
    return ArchitectureSpec(name, operator, tuple(modules), tuple(support))


def _swin(name: str, operator: str) -> ArchitectureSpec:
    depths = _SWIN_DEPTHS[name]
    dims = (96, 192, 384, 768)
    heads = (3, 6, 12, 24)
    res = (56, 28, 14, 7)
    modules: list[LayerSpec] = []
    support: list[LayerSpec] = [
        LayerSpec("conv", 3, dims[0], res[0], res[0], k_conv=4, label="patch-embed")
    ]
    for s, (c, r, n, nh) in enumerate(zip(dims, res, depths, heads)):
        for b in range(n):
            label = f"stage{s}.block{b}"
            if operator == "conv":
                modules.append(LayerSpec("conv", c, c, r, r, k_conv=K_CONV, label=label))
            elif operator == "attn":
                modules.append(
                    LayerSpec(
                        "self-attention", c, c, r, r, k_att=K_ATT, heads=nh,
                        attention_mode="window", with_output_projection=True, label=label,
                    )
                )
            else:
                modules.append(
                    LayerSpec(
                        "acmix", c, c, r, r, k_att=K_ATT, k_conv=K_CONV, heads=nh,
                        attention_mode="window", with_output_projection=True, label=label,
                    )
                )
            support.append(LayerSpec("pointwise", c, 4 * c, r, r, label=f"{label}.mlp1"))
            support.append(LayerSpec("pointwise", 4 * c, c, r, r, label=f"{label}.mlp2"))
        if s < 3:
            support.append(
                LayerSpec(
                    "pointwise", 4 * c, 2 * c, res[s + 1], res[s + 1],
                    label=f"stage{s}.merge",
                )
            )
    support.append(LayerSpec("fc", dims[-1], 1000, label="classifier"))
    return ArchitectureSpec(name, operator, tuple(modules), tuple(support))


def _pvt(name: str, operator: str) -> ArchitectureSpec:
    depths = _PVT_DEPTHS[name]
    dims = (64, 128, 320, 512)
    heads = (1, 2, 5, 8)
    sr = (8, 4, 2, 1)
    mlp_ratio = (8, 8, 4, 4)
    res = (56, 28, 14, 7)
    modules: list[LayerSpec] = []
    support: list[LayerSpec] = []
    prev = 3
    for s, (c, r, n, nh, div, ratio) in enumerate(zip(dims, res, depths, heads, sr, mlp_ratio)):
        embed_k = 4 if s == 0 else 2
        support.append(
            LayerSpec("conv", prev, c, r, r, k_conv=embed_k, label=f"stage{s}.embed")
        )
        for b in range(n):
            label = f"stage{s}.block{b}"
            if operator == "attn":
                modules.append(
                    LayerSpec(
                        "self-attention", c, c, r, r, heads=nh,
                        attention_mode="global", kv_divisor=div,
                        with_output_projection=True, label=label,
                    )
                )
            else:
                modules.append(
                    LayerSpec(
                        "acmix", c, c, r, r, k_conv=K_CONV, heads=nh,
                        attention_mode="global", kv_divisor=div,
                        with_output_projection=True, label=label,
                    )
                )
            support.append(LayerSpec("pointwise", c, ratio * c, r, r, label=f"{label}.mlp1"))
            support.append(LayerSpec("pointwise", ratio * c, c, r, r, label=f"{label}.mlp2"))
        prev = c
    support.append(LayerSpec("fc", dims[-1], 1000, label="classifier"))
    return ArchitectureSpec(name, operator, tuple(modules), tuple(support))


_FAMILIES = {
    "resnet26": (_resnet, ("conv", "attn", "acmix")),
    "resnet38": (_resnet, ("conv", "attn", "acmix")),
    "resnet50": (_resnet, ("conv", "attn", "acmix")),
    "san10": (_san, ("attn", "acmix")),
    "san15": (_san, ("attn", "acmix")),
    "san19": (_san, ("attn", "acmix")),
    "swin-t": (_swin, ("conv", "attn", "acmix")),
    "swin-s": (_swin, ("conv", "attn", "acmix")),
    "pvt-t": (_pvt, ("attn", "acmix")),
    "pvt-s": (_pvt, ("attn", "acmix")),
}


def preset_names() -> tuple[str, ...]:
    return tuple(_FAMILIES)


def preset_operators(name: str) -> tuple[str, ...]:
    if name not in _FAMILIES:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(_FAMILIES)}")
    return _FAMILIES[name][1]


def get_preset(name: str, operator: str) -> ArchitectureSpec:
    if name not in _FAMILIES:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(_FAMILIES)}")
    builder, operators = _FAMILIES[name]
    if operator not in operators:
        raise KeyError(
            f"preset {name!r} supports operators {operators}, not {operator!r}"
        )
    return builder(name, operator)
