"""The hybrid convolution/attention operator.

One shared projection stage feeds two aggregation paths.  Stage one projects
the input with three pointwise maps and reshapes each result into per-head
pieces.  The attention path runs multi-head weighted aggregation on those
pieces; the convolution path mixes each head's (q, k, v) triple through a
small per-head fully connected map into k_conv^2 feature maps and aggregates
them with the grouped shift kernels.  The two paths are blended as
``alpha * attention + beta * convolution`` with learnable scalars.

``acmix_backward`` returns analytic gradients for the input and every
parameter group; the test suite checks each one against central finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attention import (
    AttentionMode,
    AttentionParams,
    PatchwiseScorer,
    RelPosTable,
    aggregate_heads_backward,
    aggregate_heads_forward,
    merge_heads,
    split_heads,
)
from .shifting import ShiftKernelBank, depthwise_conv
from .tensor import ShapeError, as_feature_map, pointwise_conv

ATTENTION_KIND_CHOICES = ("local", "window", "global", "patchwise")


@dataclass(frozen=True)
class AcmixConfig:
    """Static description of one hybrid operator instance."""

    c_in: int
    c_out: int
    heads: int
    k_att: int = 3
    k_conv: int = 3
    attention_kind: str = "local"
    border: str = "truncate"
    window_origin: tuple[int, int] = (0, 0)
    use_pos_bias: bool = True

    def __post_init__(self):
        if self.c_out % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide c_out ({self.c_out})")
        if self.k_conv < 1 or self.k_conv % 2 == 0:
            raise ValueError(f"k_conv must be odd; got {self.k_conv}")
        if self.attention_kind not in ATTENTION_KIND_CHOICES:
            raise ValueError(f"unknown attention kind {self.attention_kind!r}")
        if self.attention_kind in ("local", "patchwise") and (
            self.k_att < 1 or self.k_att % 2 == 0
        ):
            raise ValueError(f"k_att must be odd for {self.attention_kind}; got {self.k_att}")

    @property
    def head_dim(self) -> int:
        return self.c_out // self.heads

    def mode(self) -> AttentionMode:
        if self.attention_kind == "global":
            return AttentionMode("global")
        return AttentionMode(self.attention_kind, self.k_att, self.window_origin)


@dataclass
class AcmixParams:
    """Learnable state: shared projections, per-head mixers, shift bank,
    blend scalars, and optional positional table / patchwise scorer.

    ``fc`` has shape (heads, k_conv^2, 3): row t of head l maps that head's
    (q, k, v) values at a pixel to the t-th generated feature map.  The bank
    holds k_conv^2 groups of c_out per-channel kernels and starts as one-hot
    shift kernels.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    fc: np.ndarray
    bank: ShiftKernelBank
    alpha: float = 1.0
    beta: float = 1.0
    pos_table: Optional[RelPosTable] = None
    scorer: Optional[PatchwiseScorer] = None

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v", "fc"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.w_q.shape != self.w_k.shape or self.w_q.shape != self.w_v.shape:
            raise ShapeError("projection matrices must share one shape")
        if self.fc.ndim != 3 or self.fc.shape[2] != 3:
            raise ShapeError(f"fc must be (heads, k_conv^2, 3); got {self.fc.shape}")
        self.alpha = float(self.alpha)
        self.beta = float(self.beta)

    @classmethod
    def initialize(
        cls,
        config: AcmixConfig,
        rng: np.random.Generator,
        pos_extent: Optional[int] = None,
    ) -> "AcmixParams":
        """Random projections and mixer, one-hot bank, alpha = beta = 1."""
        scale = 1.0 / np.sqrt(config.c_in)
        w_q, w_k, w_v = (
            rng.standard_normal((config.c_out, config.c_in)) * scale for _ in range(3)
        )
        fc = rng.standard_normal((config.heads, config.k_conv**2, 3)) / np.sqrt(3.0)
        bank = ShiftKernelBank.learnable_init(config.k_conv, config.c_out)
        table = None
        if config.use_pos_bias:
            if pos_extent is None:
                if config.attention_kind == "global":
                    raise ValueError(
                        "global attention needs an explicit pos_extent covering the map"
                    )
                pos_extent = config.k_att
            table = RelPosTable.zeros(config.heads, pos_extent)
        scorer = None
        if config.attention_kind == "patchwise":
            scorer = PatchwiseScorer.random(
                config.heads, config.head_dim, config.k_att**2, rng
            )
        return cls(w_q, w_k, w_v, fc, bank, 1.0, 1.0, table, scorer)

    @property
    def c_out(self) -> int:
        return self.w_q.shape[0]

    @property
    def c_in(self) -> int:
        return self.w_q.shape[1]

    def head_view(self, heads: int) -> AttentionParams:
        """The shared projections, reshaped into per-head attention params."""
        d = self.c_out // heads
        return AttentionParams(
            self.w_q.reshape(heads, d, self.c_in),
            self.w_k.reshape(heads, d, self.c_in),
            self.w_v.reshape(heads, d, self.c_in),
            pos_table=self.pos_table,
            scorer=self.scorer,
        )


@dataclass
class Stage1Features:
    """Per-head pieces of the three shared projections, (B, N, d, H, W)."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray


def stage1_project(feature, params: AcmixParams, config: AcmixConfig) -> Stage1Features:
    """Three pointwise projections, each split into contiguous head pieces."""
    f = as_feature_map(feature)
    if f.shape[1] != config.c_in:
        raise ShapeError(
            f"feature has {f.shape[1]} channels but the operator expects {config.c_in}"
        )
    q = split_heads(pointwise_conv(f, params.w_q), config.heads)
    k = split_heads(pointwise_conv(f, params.w_k), config.heads)
    v = split_heads(pointwise_conv(f, params.w_v), config.heads)
    return Stage1Features(q, k, v)


def attention_path(feats: Stage1Features, params: AcmixParams, config: AcmixConfig) -> np.ndarray:
    """Multi-head weighted aggregation of the stage-one pieces."""
    headed, _ = aggregate_heads_forward(
        feats.q,
        feats.k,
        feats.v,
        config.mode(),
        border=config.border,
        table=params.pos_table,
        scorer=params.scorer,
    )
    return merge_heads(headed)


def _generate_conv_maps(feats: Stage1Features, params: AcmixParams, config: AcmixConfig):
    """Mix each head's (q, k, v) triple into k_conv^2 full-width maps."""
    stacked = np.stack([feats.q, feats.k, feats.v])  # (3, B, N, d, H, W)
    maps = np.einsum("nts,sbndhw->tbndhw", params.fc, stacked)
    b, _, _, h, w = feats.q.shape
    flat = [maps[t].reshape(b, config.c_out, h, w) for t in range(config.k_conv**2)]
    return stacked, flat


def conv_path(feats: Stage1Features, params: AcmixParams, config: AcmixConfig) -> np.ndarray:
    """Convolution-style aggregation of the stage-one pieces.

    The per-head mixer generates k_conv^2 feature maps; the grouped
    depthwise bank shifts and sums them.
    """
    _, flat = _generate_conv_maps(feats, params, config)
    out = np.zeros_like(flat[0])
    for g, f in enumerate(flat):
        out += depthwise_conv(f, params.bank.group_kernels(g))
    return out


def acmix_forward(feature, params: AcmixParams, config: AcmixConfig) -> np.ndarray:
    """alpha * attention path + beta * convolution path."""
    feats = stage1_project(feature, params, config)
    return params.alpha * attention_path(feats, params, config) + params.beta * conv_path(
        feats, params, config
    )


@dataclass
class AcmixGrads:
    """Gradients for the input and every learnable group."""

    input: np.ndarray
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    fc: np.ndarray
    bank: np.ndarray
    alpha: float
    beta: float
    pos_table: Optional[np.ndarray] = None
    scorer_w1: Optional[np.ndarray] = None
    scorer_w2: Optional[np.ndarray] = None


@dataclass
class _ForwardCache:
    feature: np.ndarray
    feats: Stage1Features
    att_out: np.ndarray
    conv_out: np.ndarray
    att_cache: object
    stacked: np.ndarray
    conv_maps: list
    out: np.ndarray


def acmix_forward_cached(feature, params: AcmixParams, config: AcmixConfig):
    f = as_feature_map(feature)
    feats = stage1_project(f, params, config)
    headed, att_cache = aggregate_heads_forward(
        feats.q,
        feats.k,
        feats.v,
        config.mode(),
        border=config.border,
        table=params.pos_table,
        scorer=params.scorer,
    )
    att_out = merge_heads(headed)
    stacked, conv_maps = _generate_conv_maps(feats, params, config)
    conv_out = np.zeros_like(conv_maps[0])
    for g, m in enumerate(conv_maps):
        conv_out += depthwise_conv(m, params.bank.group_kernels(g))
    out = params.alpha * att_out + params.beta * conv_out
    return out, _ForwardCache(f, feats, att_out, conv_out, att_cache, stacked, conv_maps, out)


def _depthwise_backward(feature: np.ndarray, kernels: np.ndarray, dout: np.ndarray):
    """Gradients of ``depthwise_conv`` w.r.t. its input and kernels."""
    b, c, h, w = feature.shape
    k = kernels.shape[1]
    m = k // 2
    padded = np.pad(feature, ((0, 0), (0, 0), (m, m), (m, m)))
    dpad = np.zeros_like(padded)
    dkern = np.zeros_like(kernels)
    for p in range(k):
        for q in range(k):
            window = padded[:, :, p : p + h, q : q + w]
            dkern[:, p, q] = np.einsum("bchw,bchw->c", dout, window)
            dpad[:, :, p : p + h, q : q + w] += kernels[:, p, q][None, :, None, None] * dout
    return dpad[:, :, m : m + h, m : m + w], dkern


def acmix_backward(feature, params: AcmixParams, config: AcmixConfig, upstream) -> AcmixGrads:
    """Analytic gradients of ``sum(upstream * acmix_forward(...))``.

    The scalar gradients are inner products with the path outputs:
    d/dalpha = <upstream, attention path>, d/dbeta = <upstream, conv path>.
    """
    out, cache = acmix_forward_cached(feature, params, config)
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != out.shape:
        raise ShapeError(f"upstream gradient shape {g.shape} != output shape {out.shape}")

    d_alpha = float(np.sum(g * cache.att_out))
    d_beta = float(np.sum(g * cache.conv_out))

    # attention path
    d_att = params.alpha * g
    att_grads = aggregate_heads_backward(cache.att_cache, split_heads(d_att, config.heads))
    dq, dk, dv = att_grads.q, att_grads.k, att_grads.v

    # convolution path
    d_conv = params.beta * g
    d_bank = np.zeros_like(params.bank.kernels)
    c = config.c_out
    k2 = config.k_conv**2
    dmaps = np.empty((k2,) + cache.conv_maps[0].shape)
    for g_idx in range(k2):
        dmap, dkern = _depthwise_backward(
            cache.conv_maps[g_idx], params.bank.group_kernels(g_idx), d_conv
        )
        dmaps[g_idx] = dmap
        d_bank[g_idx * c : (g_idx + 1) * c, 0] = dkern
    b, _, h, w = cache.feature.shape
    dmaps_headed = dmaps.reshape(k2, b, config.heads, config.head_dim, h, w)
    d_fc = np.einsum("tbndhw,sbndhw->nts", dmaps_headed, cache.stacked)
    d_stacked = np.einsum("nts,tbndhw->sbndhw", params.fc, dmaps_headed)
    dq = dq + d_stacked[0]
    dk = dk + d_stacked[1]
    dv = dv + d_stacked[2]

    # shared stage-one projections
    dq_flat = merge_heads(dq)
    dk_flat = merge_heads(dk)
    dv_flat = merge_heads(dv)
    f = cache.feature
    d_wq = np.einsum("bohw,bchw->oc", dq_flat, f)
    d_wk = np.einsum("bohw,bchw->oc", dk_flat, f)
    d_wv = np.einsum("bohw,bchw->oc", dv_flat, f)
    d_input = (
        np.einsum("oc,bohw->bchw", params.w_q, dq_flat)
        + np.einsum("oc,bohw->bchw", params.w_k, dk_flat)
        + np.einsum("oc,bohw->bchw", params.w_v, dv_flat)
    )

    return AcmixGrads(
        input=d_input,
        w_q=d_wq,
        w_k=d_wk,
        w_v=d_wv,
        fc=d_fc,
        bank=d_bank,
        alpha=d_alpha,
        beta=d_beta,
        pos_table=att_grads.pos_table,
        scorer_w1=att_grads.scorer_w1,
        scorer_w2=att_grads.scorer_w2,
    )


def count_parameters(params: AcmixParams) -> dict:
    """Stored-weight tally per group (scalars and bias table flagged apart)."""
    counts = {
        "stage1": int(params.w_q.size + params.w_k.size + params.w_v.size),
        "stage2": int(params.fc.size + params.bank.kernels.size),
        "scalars": 2,
        "positional": int(params.pos_table.table.size) if params.pos_table else 0,
        "scorer": int(params.scorer.w1.size + params.scorer.w2.size) if params.scorer else 0,
    }
    counts["core"] = counts["stage1"] + counts["stage2"]
    return counts
