"""Multi-head self-attention split into pointwise projections and
weighted aggregation, with local, patchwise, window, and global weight
variants plus a learnable relative-position bias.

Layout conventions: projected tensors carry an explicit head axis,
``(batch, heads, head_dim, height, width)``; concatenating heads restores
``(batch, c_out, height, width)`` with head l owning the contiguous channel
block ``[l*d, (l+1)*d)``.

Border handling for the local field is a documented switch:

* ``"truncate"`` (default) - out-of-bounds neighbours are excluded and the
  softmax renormalises over the keys that exist;
* ``"padded-keys"`` - out-of-bounds neighbours participate as zero vectors
  (their logits reduce to the positional bias alone and their values
  contribute nothing).

Patchwise weights always use the padded field so that the scoring network
sees a fixed-width input; its two linear layers with a rectifier in
between produce one weight per field position with no normalisation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import (
    ShapeError,
    as_feature_map,
    pointwise_conv,
    require_finite,
    softmax_over_set,
)

SOFTMAX_KINDS = ("local", "window", "global")
ATTENTION_KINDS = SOFTMAX_KINDS + ("patchwise",)
BORDER_MODES = ("truncate", "padded-keys")


@dataclass(frozen=True)
class AttentionMode:
    """Weight-computation variant plus its receptive-field geometry.

    ``field_size`` is the local/patchwise neighbourhood size or the window
    edge; it is ignored for global attention.  ``window_origin`` anchors the
    window partition grid (edge windows are truncated).
    """

    kind: str
    field_size: int = 0
    window_origin: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind not in ATTENTION_KINDS:
            raise ValueError(f"unknown attention kind {self.kind!r}")
        if self.kind in ("local", "patchwise"):
            if self.field_size < 1 or self.field_size % 2 == 0:
                raise ValueError(
                    f"{self.kind} attention needs an odd field size; got {self.field_size}"
                )
        if self.kind == "window" and self.field_size < 1:
            raise ValueError("window attention needs a positive window size")


def local_mode(field_size: int) -> AttentionMode:
    return AttentionMode("local", field_size)


def patchwise_mode(field_size: int) -> AttentionMode:
    return AttentionMode("patchwise", field_size)


def window_mode(field_size: int, origin: tuple[int, int] = (0, 0)) -> AttentionMode:
    return AttentionMode("window", field_size, origin)


def global_mode() -> AttentionMode:
    return AttentionMode("global")


@dataclass
class RelPosTable:
    """Learnable bias indexed by the (di, dj) offset from query to key.

    ``table`` has shape (heads, 2*extent - 1, 2*extent - 1) and covers
    offsets up to extent - 1 in magnitude; the zero offset sits at the
    centre.  A zero-initialised table leaves the attention weights untouched.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.ndim != 3 or t.shape[1] != t.shape[2] or t.shape[1] % 2 == 0:
            raise ShapeError(
                f"positional table must be (heads, 2e-1, 2e-1); got {t.shape}"
            )
        self.table = t

    @classmethod
    def zeros(cls, heads: int, extent: int) -> "RelPosTable":
        if extent < 1:
            raise ValueError("extent must be >= 1")
        return cls(np.zeros((heads, 2 * extent - 1, 2 * extent - 1)))

    @property
    def heads(self) -> int:
        return self.table.shape[0]

    @property
    def extent(self) -> int:
        return (self.table.shape[1] + 1) // 2

    def bias(self, head: int, di: int, dj: int) -> float:
        e = self.extent
        if abs(di) > e - 1 or abs(dj) > e - 1:
            raise ValueError(
                f"offset ({di}, {dj}) outside the table range +-{e - 1}"
            )
        return float(self.table[head, di + e - 1, dj + e - 1])


@dataclass
class PatchwiseScorer:
    """Two per-head linear layers with a rectifier for patchwise weights.

    Input: the query concatenated with the n field keys, flattened to
    (n + 1) * head_dim values.  Hidden width equals the field size n, the
    output is one weight per field position, and no normalisation follows.
    """

    w1: np.ndarray  # (heads, n, (n + 1) * head_dim)
    w2: np.ndarray  # (heads, n, n)

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        if w1.ndim != 3 or w2.ndim != 3:
            raise ShapeError("scorer weights must be rank-3 (per head)")
        if w2.shape[1] != w2.shape[2] or w2.shape[1] != w1.shape[1]:
            raise ShapeError(
                f"scorer shapes inconsistent: w1 {w1.shape}, w2 {w2.shape}"
            )
        self.w1, self.w2 = w1, w2

    @classmethod
    def random(cls, heads: int, head_dim: int, field: int, rng: np.random.Generator) -> "PatchwiseScorer":
        fan_in = (field + 1) * head_dim
        w1 = rng.standard_normal((heads, field, fan_in)) / np.sqrt(fan_in)
        w2 = rng.standard_normal((heads, field, field)) / np.sqrt(field)
        return cls(w1, w2)

    @property
    def field(self) -> int:
        return self.w2.shape[1]

    def score(self, head: int, q_pixel: np.ndarray, keys: np.ndarray) -> np.ndarray:
        z = np.concatenate([q_pixel.reshape(1, -1), keys], axis=0).reshape(-1)
        hidden = np.maximum(self.w1[head] @ z, 0.0)
        return self.w2[head] @ hidden


@dataclass
class AttentionParams:
    """Per-head projection matrices plus optional bias table and scorer.

    ``w_q``, ``w_k``, ``w_v`` each have shape (heads, head_dim, c_in); the
    output channel count is heads * head_dim.
    """

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    pos_table: Optional[RelPosTable] = None
    scorer: Optional[PatchwiseScorer] = None

    def __post_init__(self):
        mats = []
        for name in ("w_q", "w_k", "w_v"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 3:
                raise ShapeError(f"{name} must be (heads, head_dim, c_in); got {m.shape}")
            require_finite(m, name)
            mats.append(m)
        if not (mats[0].shape == mats[1].shape == mats[2].shape):
            raise ShapeError("q/k/v projections must share one shape")
        self.w_q, self.w_k, self.w_v = mats
        if self.pos_table is not None and self.pos_table.heads != self.heads:
            raise ShapeError("positional table head count mismatch")

    @classmethod
    def random(
        cls,
        c_in: int,
        c_out: int,
        heads: int,
        rng: np.random.Generator,
        pos_extent: Optional[int] = None,
    ) -> "AttentionParams":
        if c_out % heads != 0:
            raise ValueError(f"heads ({heads}) must divide c_out ({c_out})")
        d = c_out // heads
        scale = 1.0 / np.sqrt(c_in)
        mats = [rng.standard_normal((heads, d, c_in)) * scale for _ in range(3)]
        table = RelPosTable.zeros(heads, pos_extent) if pos_extent else None
        return cls(*mats, pos_table=table)

    @property
    def heads(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.w_q.shape[1]

    @property
    def c_in(self) -> int:
        return self.w_q.shape[2]

    @property
    def c_out(self) -> int:
        return self.heads * self.head_dim


def project_qkv(feature, params: AttentionParams):
    """Stage-one projections: per-head query/key/value maps.

    Returns three arrays of shape (batch, heads, head_dim, height, width),
    each head's slice being the pointwise projection with its matrix.
    """
    f = as_feature_map(feature)
    if f.shape[1] != params.c_in:
        raise ShapeError(
            f"feature has {f.shape[1]} channels but projections expect {params.c_in}"
        )
    b, _, h, w = f.shape
    shape = (b, params.heads, params.head_dim, h, w)
    q = np.empty(shape)
    k = np.empty(shape)
    v = np.empty(shape)
    for l in range(params.heads):
        q[:, l] = pointwise_conv(f, params.w_q[l])
        k[:, l] = pointwise_conv(f, params.w_k[l])
        v[:, l] = pointwise_conv(f, params.w_v[l])
    return q, k, v


def attention_weights(
    q_pixel,
    keys,
    mode: AttentionMode,
    pos_bias=None,
    scorer: Optional[PatchwiseScorer] = None,
    head: int = 0,
) -> np.ndarray:
    """Weights of one query against its field of keys.

    Softmax variants compute softmax((q . k_i + b_i) / sqrt(d)); the
    patchwise variant feeds [q, keys] through the scorer and returns its
    raw outputs.
    """
    q = np.asarray(q_pixel, dtype=np.float64).reshape(-1)
    ks = np.asarray(keys, dtype=np.float64)
    if ks.ndim != 2 or ks.shape[0] == 0:
        raise ValueError("keys must be a nonempty (n, d) array")
    if ks.shape[1] != q.size:
        raise ShapeError(f"keys have dim {ks.shape[1]}, query has {q.size}")
    if mode.kind == "patchwise":
        if scorer is None:
            raise ValueError("patchwise weights need a scorer")
        return scorer.score(head, q, ks)
    logits = ks @ q
    if pos_bias is not None:
        bias = np.asarray(pos_bias, dtype=np.float64).reshape(-1)
        if bias.size != ks.shape[0]:
            raise ShapeError("one bias per key required")
        logits = logits + bias
    return softmax_over_set(logits / np.sqrt(q.size))


# ---------------------------------------------------------------------------
# vectorised forward/backward cores (shared with the hybrid operator)
# ---------------------------------------------------------------------------


def _padded_windows(x: np.ndarray, ka: int) -> np.ndarray:
    """(B, N, d, H, W) -> zero-padded (B, N, d, H, W, ka, ka) windows."""
    m = ka // 2
    xp = np.pad(x, ((0, 0), (0, 0), (0, 0), (m, m), (m, m)))
    return sliding_window_view(xp, (ka, ka), axis=(3, 4))


def _scatter_windows(dwin: np.ndarray, h: int, w: int, ka: int) -> np.ndarray:
    """Adjoint of ``_padded_windows``: fold window grads back to the map."""
    m = ka // 2
    b, n, d = dwin.shape[:3]
    dpad = np.zeros((b, n, d, h + 2 * m, w + 2 * m))
    for p in range(ka):
        for q in range(ka):
            dpad[:, :, :, p : p + h, q : q + w] += dwin[..., p, q]
    return dpad[:, :, :, m : m + h, m : m + w]


def _field_validity(h: int, w: int, ka: int) -> np.ndarray:
    """(H, W, ka, ka) mask of neighbours that fall inside the map."""
    m = ka // 2
    rows = (np.arange(h)[:, None] + np.arange(ka)[None, :] - m)
    cols = (np.arange(w)[:, None] + np.arange(ka)[None, :] - m)
    row_ok = (rows >= 0) & (rows < h)
    col_ok = (cols >= 0) & (cols < w)
    return row_ok[:, None, :, None] & col_ok[None, :, None, :]


def _local_bias_block(table: RelPosTable, ka: int) -> tuple[np.ndarray, int]:
    """Centre (heads, ka, ka) slice covering offsets -k//2 .. k//2."""
    m = ka // 2
    e = table.extent
    if e - 1 < m:
        raise ValueError(
            f"positional table extent {e} too small for field size {ka}"
        )
    lo = e - 1 - m
    return table.table[:, lo : lo + ka, lo : lo + ka], lo


def _softmax_field(logits: np.ndarray) -> np.ndarray:
    amax = logits.max(axis=(-2, -1), keepdims=True)
    e = np.exp(logits - amax)
    return e / e.sum(axis=(-2, -1), keepdims=True)


@dataclass
class _LocalCache:
    q: np.ndarray
    k_win: np.ndarray
    v_win: np.ndarray
    weights: np.ndarray
    ka: int
    scale: float
    truncated: bool
    table: Optional[RelPosTable]


def _local_forward(q, k, v, ka, border, table):
    b, n, d, h, w = q.shape
    k_win = _padded_windows(k, ka)
    v_win = _padded_windows(v, ka)
    raw = np.einsum("bndhw,bndhwpq->bnhwpq", q, k_win)
    if table is not None:
        block, _ = _local_bias_block(table, ka)
        raw = raw + block[None, :, None, None]
    scale = float(np.sqrt(d))
    logits = raw / scale
    truncated = border == "truncate"
    if truncated:
        valid = _field_validity(h, w, ka)
        logits = np.where(valid[None, None], logits, -np.inf)
    weights = _softmax_field(logits)
    out = np.einsum("bnhwpq,bndhwpq->bndhw", weights, v_win)
    cache = _LocalCache(q, k_win, v_win, weights, ka, scale, truncated, table)
    return out, cache


def _local_backward(cache: _LocalCache, dout):
    q, k_win, v_win = cache.q, cache.k_win, cache.v_win
    a = cache.weights
    b, n, d, h, w = q.shape
    da = np.einsum("bndhw,bndhwpq->bnhwpq", dout, v_win)
    dv_win = np.einsum("bnhwpq,bndhw->bndhwpq", a, dout)
    inner = (a * da).sum(axis=(-2, -1), keepdims=True)
    dlogits = a * (da - inner)
    draw = dlogits / cache.scale
    dq = np.einsum("bnhwpq,bndhwpq->bndhw", draw, k_win)
    dk_win = np.einsum("bnhwpq,bndhw->bndhwpq", draw, q)
    dk = _scatter_windows(dk_win, h, w, cache.ka)
    dv = _scatter_windows(dv_win, h, w, cache.ka)
    dtable = None
    if cache.table is not None:
        dtable = np.zeros_like(cache.table.table)
        _, lo = _local_bias_block(cache.table, cache.ka)
        block = draw.sum(axis=(0, 2, 3))  # (heads, ka, ka)
        dtable[:, lo : lo + cache.ka, lo : lo + cache.ka] += block
    return dq, dk, dv, dtable


def _axis_partition(length: int, size: int, origin: int) -> list[tuple[int, int]]:
    o = origin % size
    starts = list(range(o, length, size))
    if not starts or starts[0] != 0:
        starts = [0] + starts
    stops = starts[1:] + [length]
    return [(a, b) for a, b in zip(starts, stops) if a < b]


@dataclass
class _WindowBlock:
    rows: tuple[int, int]
    cols: tuple[int, int]
    qb: np.ndarray
    kb: np.ndarray
    vb: np.ndarray
    weights: np.ndarray
    di: np.ndarray
    dj: np.ndarray


@dataclass
class _WindowCache:
    blocks: list
    scale: float
    table: Optional[RelPosTable]
    shape: tuple


def _window_partition(mode: AttentionMode, h: int, w: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    if mode.kind == "global":
        return [((0, h), (0, w))]
    orow, ocol = mode.window_origin
    rows = _axis_partition(h, mode.field_size, orow)
    cols = _axis_partition(w, mode.field_size, ocol)
    return [(r, c) for r in rows for c in cols]


def _window_forward(q, k, v, mode, table):
    b, n, d, h, w = q.shape
    scale = float(np.sqrt(d))
    out = np.empty_like(q)
    blocks = []
    for (r0, r1), (c0, c1) in _window_partition(mode, h, w):
        th, tw = r1 - r0, c1 - c0
        t = th * tw
        qb = q[:, :, :, r0:r1, c0:c1].reshape(b, n, d, t)
        kb = k[:, :, :, r0:r1, c0:c1].reshape(b, n, d, t)
        vb = v[:, :, :, r0:r1, c0:c1].reshape(b, n, d, t)
        logits = np.einsum("bndt,bnds->bnts", qb, kb)
        ii, jj = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
        coords_i = ii.reshape(-1)
        coords_j = jj.reshape(-1)
        di = coords_i[None, :] - coords_i[:, None]
        dj = coords_j[None, :] - coords_j[:, None]
        if table is not None:
            e = table.extent
            span = max(int(np.abs(di).max(initial=0)), int(np.abs(dj).max(initial=0)))
            if span > e - 1:
                raise ValueError(
                    f"positional table extent {e} too small for offsets up to {span}"
                )
            bias = table.table[:, di + e - 1, dj + e - 1]  # (heads, t, t)
            logits = logits + bias[None]
        logits = logits / scale
        amax = logits.max(axis=-1, keepdims=True)
        ex = np.exp(logits - amax)
        weights = ex / ex.sum(axis=-1, keepdims=True)
        ob = np.einsum("bnts,bnds->bndt", weights, vb)
        out[:, :, :, r0:r1, c0:c1] = ob.reshape(b, n, d, th, tw)
        blocks.append(_WindowBlock((r0, r1), (c0, c1), qb, kb, vb, weights, di, dj))
    return out, _WindowCache(blocks, scale, table, q.shape)


def _window_backward(cache: _WindowCache, dout):
    b, n, d, h, w = cache.shape
    dq = np.zeros(cache.shape)
    dk = np.zeros(cache.shape)
    dv = np.zeros(cache.shape)
    dtable = None if cache.table is None else np.zeros_like(cache.table.table)
    for blk in cache.blocks:
        (r0, r1), (c0, c1) = blk.rows, blk.cols
        t = blk.weights.shape[-1]
        dob = dout[:, :, :, r0:r1, c0:c1].reshape(b, n, d, t)
        da = np.einsum("bndt,bnds->bnts", dob, blk.vb)
        dvb = np.einsum("bnts,bndt->bnds", blk.weights, dob)
        inner = (blk.weights * da).sum(axis=-1, keepdims=True)
        dlogits = blk.weights * (da - inner)
        draw = dlogits / cache.scale
        dqb = np.einsum("bnts,bnds->bndt", draw, blk.kb)
        dkb = np.einsum("bnts,bndt->bnds", draw, blk.qb)
        dq[:, :, :, r0:r1, c0:c1] += dqb.reshape(b, n, d, r1 - r0, c1 - c0)
        dk[:, :, :, r0:r1, c0:c1] += dkb.reshape(b, n, d, r1 - r0, c1 - c0)
        dv[:, :, :, r0:r1, c0:c1] += dvb.reshape(b, n, d, r1 - r0, c1 - c0)
        if dtable is not None:
            e = cache.table.extent
            per_head = draw.sum(axis=0)  # (heads, t, t)
            for head in range(n):
                np.add.at(dtable[head], (blk.di + e - 1, blk.dj + e - 1), per_head[head])
    return dq, dk, dv, dtable


@dataclass
class _PatchwiseCache:
    z: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    weights: np.ndarray
    v_flat: np.ndarray
    ka: int
    scorer: PatchwiseScorer
    shape: tuple


def _patchwise_forward(q, k, v, ka, scorer):
    b, n, d, h, w = q.shape
    if scorer is None:
        raise ValueError("patchwise attention needs a scorer")
    if scorer.field != ka * ka:
        raise ShapeError(
            f"scorer built for field {scorer.field}, mode uses {ka * ka}"
        )
    k_win = _padded_windows(k, ka)
    v_win = _padded_windows(v, ka)
    # (B, N, H, W, n_field, d), field positions in row-major tap order
    k_flat = k_win.transpose(0, 1, 3, 4, 5, 6, 2).reshape(b, n, h, w, ka * ka, d)
    v_flat = v_win.transpose(0, 1, 3, 4, 5, 6, 2).reshape(b, n, h, w, ka * ka, d)
    q_t = q.transpose(0, 1, 3, 4, 2)
    z = np.concatenate([q_t[..., None, :], k_flat], axis=-2)
    z = z.reshape(b, n, h, w, (ka * ka + 1) * d)
    pre = np.einsum("nmz,bnijz->bnijm", scorer.w1, z)
    hidden = np.maximum(pre, 0.0)
    weights = np.einsum("nom,bnijm->bnijo", scorer.w2, hidden)
    out_t = np.einsum("bnijo,bnijod->bnijd", weights, v_flat)
    out = out_t.transpose(0, 1, 4, 2, 3)
    cache = _PatchwiseCache(z, pre, hidden, weights, v_flat, ka, scorer, q.shape)
    return out, cache


def _patchwise_backward(cache: _PatchwiseCache, dout):
    b, n, d, h, w = cache.shape
    ka = cache.ka
    dout_t = dout.transpose(0, 1, 3, 4, 2)
    dweights = np.einsum("bnijd,bnijod->bnijo", dout_t, cache.v_flat)
    dv_flat = np.einsum("bnijo,bnijd->bnijod", cache.weights, dout_t)
    dhidden = np.einsum("nom,bnijo->bnijm", cache.scorer.w2, dweights)
    dw2 = np.einsum("bnijo,bnijm->nom", dweights, cache.hidden)
    dpre = dhidden * (cache.pre > 0.0)
    dw1 = np.einsum("bnijm,bnijz->nmz", dpre, cache.z)
    dz = np.einsum("nmz,bnijm->bnijz", cache.scorer.w1, dpre)
    dz = dz.reshape(b, n, h, w, ka * ka + 1, d)
    dq = dz[..., 0, :].transpose(0, 1, 4, 2, 3)
    dk_flat = dz[..., 1:, :]
    dk_win = dk_flat.reshape(b, n, h, w, ka, ka, d).transpose(0, 1, 6, 2, 3, 4, 5)
    dv_win = dv_flat.reshape(b, n, h, w, ka, ka, d).transpose(0, 1, 6, 2, 3, 4, 5)
    dk = _scatter_windows(dk_win, h, w, ka)
    dv = _scatter_windows(dv_win, h, w, ka)
    return dq, dk, dv, dw1, dw2


@dataclass
class AttentionGrads:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    pos_table: Optional[np.ndarray] = None
    scorer_w1: Optional[np.ndarray] = None
    scorer_w2: Optional[np.ndarray] = None


def aggregate_heads_forward(q, k, v, mode: AttentionMode, border: str = "truncate",
                            table: Optional[RelPosTable] = None,
                            scorer: Optional[PatchwiseScorer] = None):
    """Weighted value aggregation on projected (B, N, d, H, W) tensors.

    Returns the per-head output (same shape as ``v``) and an opaque cache
    consumed by :func:`aggregate_heads_backward`.
    """
    if border not in BORDER_MODES:
        raise ValueError(f"border must be one of {BORDER_MODES}; got {border!r}")
    if mode.kind == "local":
        return _local_forward(q, k, v, mode.field_size, border, table)
    if mode.kind == "patchwise":
        return _patchwise_forward(q, k, v, mode.field_size, scorer)
    return _window_forward(q, k, v, mode, table)


def aggregate_heads_backward(cache, dout) -> AttentionGrads:
    if isinstance(cache, _LocalCache):
        dq, dk, dv, dtable = _local_backward(cache, dout)
        return AttentionGrads(dq, dk, dv, pos_table=dtable)
    if isinstance(cache, _PatchwiseCache):
        dq, dk, dv, dw1, dw2 = _patchwise_backward(cache, dout)
        return AttentionGrads(dq, dk, dv, scorer_w1=dw1, scorer_w2=dw2)
    dq, dk, dv, dtable = _window_backward(cache, dout)
    return AttentionGrads(dq, dk, dv, pos_table=dtable)


def merge_heads(headed: np.ndarray) -> np.ndarray:
    """(B, N, d, H, W) -> (B, N*d, H, W), head l owning block [l*d, (l+1)*d)."""
    b, n, d, h, w = headed.shape
    return headed.reshape(b, n * d, h, w)


def split_heads(flat: np.ndarray, heads: int) -> np.ndarray:
    b, c, h, w = flat.shape
    if c % heads != 0:
        raise ShapeError(f"{c} channels not divisible into {heads} heads")
    return flat.reshape(b, heads, c // heads, h, w)


def attention_aggregate(feature, params: AttentionParams, mode: AttentionMode,
                        border: str = "truncate") -> np.ndarray:
    """Full attention operator: project, weight, aggregate, concatenate heads."""
    q, k, v = project_qkv(feature, params)
    headed, _ = aggregate_heads_forward(
        q, k, v, mode, border=border, table=params.pos_table, scorer=params.scorer
    )
    return merge_heads(headed)
