"""Self-describing JSON formats for tensors and operator checkpoints.

Tensor files carry a shape header plus the flat row-major data::

    {"format": "tensor-v1", "shape": [b, c, h, w], "dtype": "float64",
     "data": [ ... b*c*h*w numbers ... ]}

Values round-trip exactly: python serialises float64 via repr, which is
lossless.  Checkpoints bundle an operator config with named arrays; the
field-by-field layout is documented in the README.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .acmix import AcmixConfig, AcmixParams
from .attention import PatchwiseScorer, RelPosTable
from .shifting import ShiftKernelBank
from .tensor import ShapeError

TENSOR_FORMAT = "tensor-v1"
CHECKPOINT_FORMAT = "acmix-checkpoint-v1"


def array_to_payload(arr: np.ndarray) -> dict:
    a = np.asarray(arr, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def array_from_payload(payload: dict) -> np.ndarray:
    shape = tuple(int(s) for s in payload["shape"])
    data = np.asarray(payload["data"], dtype=np.float64)
    expected = int(np.prod(shape)) if shape else 1
    if data.size != expected:
        raise ShapeError(
            f"payload data length {data.size} does not match shape {shape}"
        )
    return data.reshape(shape)


def save_tensor(path, arr) -> None:
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 4:
        raise ShapeError(f"tensor files hold rank-4 arrays; got shape {a.shape}")
    payload = {"format": TENSOR_FORMAT, "dtype": "float64", **array_to_payload(a)}
    Path(path).write_text(json.dumps(payload))


def load_tensor(path) -> np.ndarray:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != TENSOR_FORMAT:
        raise ValueError(f"not a {TENSOR_FORMAT} file: {path}")
    arr = array_from_payload(payload)
    if arr.ndim != 4:
        raise ShapeError(f"tensor file holds rank-{arr.ndim} data")
    return arr


def _config_to_dict(config: AcmixConfig) -> dict:
    d = asdict(config)
    d["window_origin"] = list(d["window_origin"])
    return d


def _config_from_dict(d: dict) -> AcmixConfig:
    d = dict(d)
    d["window_origin"] = tuple(d.get("window_origin", (0, 0)))
    return AcmixConfig(**d)


def save_checkpoint(path, params: AcmixParams, config: AcmixConfig) -> None:
    arrays = {
        "w_q": array_to_payload(params.w_q),
        "w_k": array_to_payload(params.w_k),
        "w_v": array_to_payload(params.w_v),
        "fc": array_to_payload(params.fc),
        "bank_kernels": array_to_payload(params.bank.kernels),
    }
    if params.pos_table is not None:
        arrays["pos_table"] = array_to_payload(params.pos_table.table)
    if params.scorer is not None:
        arrays["scorer_w1"] = array_to_payload(params.scorer.w1)
        arrays["scorer_w2"] = array_to_payload(params.scorer.w2)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": _config_to_dict(config),
        "alpha": params.alpha,
        "beta": params.beta,
        "bank_learnable": params.bank.learnable,
        "arrays": arrays,
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> tuple[AcmixParams, AcmixConfig]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} file: {path}")
    config = _config_from_dict(payload["config"])
    arrays = payload["arrays"]
    bank = ShiftKernelBank(
        array_from_payload(arrays["bank_kernels"]),
        config.k_conv,
        config.c_out,
        learnable=bool(payload.get("bank_learnable", True)),
    )
    table: Optional[RelPosTable] = None
    if "pos_table" in arrays:
        table = RelPosTable(array_from_payload(arrays["pos_table"]))
    scorer: Optional[PatchwiseScorer] = None
    if "scorer_w1" in arrays:
        scorer = PatchwiseScorer(
            array_from_payload(arrays["scorer_w1"]),
            array_from_payload(arrays["scorer_w2"]),
        )
    params = AcmixParams(
        w_q=array_from_payload(arrays["w_q"]),
        w_k=array_from_payload(arrays["w_k"]),
        w_v=array_from_payload(arrays["w_v"]),
        fc=array_from_payload(arrays["fc"]),
        bank=bank,
        alpha=float(payload["alpha"]),
        beta=float(payload["beta"]),
        pos_table=table,
        scorer=scorer,
    )
    return params, config
