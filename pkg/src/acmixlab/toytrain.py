"""Desk-scale training of a two-layer residual stack of hybrid operators.

The task is synthetic regression on a fixed batch of small random images:
``"lowpass"`` targets a 3x3 box-filtered copy of the input (realisable by
the convolution path), ``"zero"`` targets the zero tensor.  Optimisation is
plain full-batch gradient descent on the mean squared error.

Every step records each layer's |alpha|, |beta|, and log(|alpha/beta|);
the trajectory round-trips through JSON and CSV.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acmix import AcmixConfig, AcmixParams, acmix_backward, acmix_forward
from .tensor import ConvKernel, conv2d_reference


class DivergenceError(RuntimeError):
    """Loss became non-finite; carries the step and seed for reproduction."""

    def __init__(self, step: int, seed: int):
        super().__init__(f"training diverged at step {step} (seed {seed})")
        self.step = step
        self.seed = seed


@dataclass(frozen=True)
class ToyTrainConfig:
    seed: int = 0
    steps: int = 500
    lr: float = 0.02
    image_size: int = 8
    channels: int = 4
    batch: int = 4
    heads: int = 2
    k_att: int = 3
    k_conv: int = 3
    attention_kind: str = "local"
    border: str = "truncate"
    layers: int = 2
    task: str = "lowpass"  # lowpass | zero
    freeze_alpha: bool = False
    freeze_beta: bool = False


@dataclass
class TrajectoryRecord:
    """Per-step losses and per-layer blend scalars.

    ``alpha[s][l]`` is |alpha| of layer l after step s (step 0 = initial
    state); ``log_ratio`` holds log(|alpha/beta|).
    """

    steps: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    log_ratio: list = field(default_factory=list)

    @property
    def layers(self) -> int:
        return len(self.alpha[0]) if self.alpha else 0

    def append(self, step: int, loss: float, alphas, betas) -> None:
        self.steps.append(int(step))
        self.loss.append(float(loss))
        self.alpha.append([abs(float(a)) for a in alphas])
        self.beta.append([abs(float(b)) for b in betas])
        self.log_ratio.append(
            [
                math.log(abs(float(a)) / abs(float(b))) if b != 0 else float("nan")
                for a, b in zip(alphas, betas)
            ]
        )

    def smoothed_loss(self, index: int, window: int = 10) -> float:
        """Mean loss over the ``window`` steps starting at ``index`` (clipped)."""
        lo = max(0, min(index, len(self.loss) - 1))
        hi = min(len(self.loss), lo + window)
        return float(np.mean(self.loss[lo:hi]))

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "loss": self.loss,
            "alpha": self.alpha,
            "beta": self.beta,
            "log_ratio": self.log_ratio,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrajectoryRecord":
        rec = cls()
        rec.steps = [int(s) for s in payload["steps"]]
        rec.loss = [float(x) for x in payload["loss"]]
        rec.alpha = [[float(x) for x in row] for row in payload["alpha"]]
        rec.beta = [[float(x) for x in row] for row in payload["beta"]]
        rec.log_ratio = [[float(x) for x in row] for row in payload["log_ratio"]]
        return rec

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load_json(cls, path) -> "TrajectoryRecord":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save_csv(self, path) -> None:
        layers = self.layers
        header = ["step", "loss"]
        for l in range(layers):
            header += [f"alpha_{l}", f"beta_{l}", f"log_ratio_{l}"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, step in enumerate(self.steps):
                row = [step, repr(self.loss[i])]
                for l in range(layers):
                    row += [
                        repr(self.alpha[i][l]),
                        repr(self.beta[i][l]),
                        repr(self.log_ratio[i][l]),
                    ]
                writer.writerow(row)

    @classmethod
    def load_csv(cls, path) -> "TrajectoryRecord":
        rec = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            layers = (len(header) - 2) // 3
            for row in reader:
                rec.steps.append(int(row[0]))
                rec.loss.append(float(row[1]))
                rec.alpha.append([float(row[2 + 3 * l]) for l in range(layers)])
                rec.beta.append([float(row[3 + 3 * l]) for l in range(layers)])
                rec.log_ratio.append([float(row[4 + 3 * l]) for l in range(layers)])
        return rec


class ResidualAcmixStack:
    """Plain residual wrapper around a stack of hybrid operators:
    x_{l+1} = x_l + op_l(x_l).  Channel counts are preserved so the
    residual add is well formed."""

    def __init__(self, config: ToyTrainConfig, rng: np.random.Generator):
        self.layer_config = AcmixConfig(
            c_in=config.channels,
            c_out=config.channels,
            heads=config.heads,
            k_att=config.k_att,
            k_conv=config.k_conv,
            attention_kind=config.attention_kind,
            border=config.border,
        )
        self.layers = [
            AcmixParams.initialize(self.layer_config, rng) for _ in range(config.layers)
        ]

    def forward(self, x: np.ndarray):
        activations = [x]
        for params in self.layers:
            x = x + acmix_forward(x, params, self.layer_config)
            activations.append(x)
        return x, activations

    def backward(self, activations, upstream: np.ndarray):
        grads = []
        for params, x_in in zip(reversed(self.layers), reversed(activations[:-1])):
            g = acmix_backward(x_in, params, self.layer_config, upstream)
            grads.append(g)
            upstream = upstream + g.input  # residual: dL/dx_l flows both ways
        grads.reverse()
        return grads

    def apply_gradients(self, grads, lr: float, freeze_alpha: bool, freeze_beta: bool):
        for params, g in zip(self.layers, grads):
            params.w_q -= lr * g.w_q
            params.w_k -= lr * g.w_k
            params.w_v -= lr * g.w_v
            params.fc -= lr * g.fc
            params.bank.kernels -= lr * g.bank
            if not freeze_alpha:
                params.alpha -= lr * g.alpha
            if not freeze_beta:
                params.beta -= lr * g.beta
            if params.pos_table is not None and g.pos_table is not None:
                params.pos_table.table -= lr * g.pos_table


def build_toy_task(config: ToyTrainConfig, rng: np.random.Generator):
    x = rng.standard_normal((config.batch, config.channels, config.image_size, config.image_size))
    if config.task == "zero":
        return x, np.zeros_like(x)
    if config.task == "lowpass":
        c = config.channels
        weights = np.zeros((c, c, 3, 3))
        for ch in range(c):
            weights[ch, ch] = 1.0 / 9.0
        return x, conv2d_reference(x, ConvKernel(weights))
    raise ValueError(f"unknown task {config.task!r}")


def train_toy(config: ToyTrainConfig):
    """Run the loop; returns the trajectory record and the trained stack."""
    rng = np.random.default_rng(config.seed)
    net = ResidualAcmixStack(config, rng)
    x, target = build_toy_task(config, rng)

    record = TrajectoryRecord()

    def snapshot(step: int, loss: float):
        record.append(
            step,
            loss,
            [p.alpha for p in net.layers],
            [p.beta for p in net.layers],
        )

    def mse(out: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.mean((out - target) ** 2))

    out, activations = net.forward(x)
    loss = mse(out)
    snapshot(0, loss)
    for step in range(1, config.steps + 1):
        if not np.isfinite(loss):
            raise DivergenceError(step - 1, config.seed)
        upstream = 2.0 * (out - target) / out.size
        grads = net.backward(activations, upstream)
        net.apply_gradients(grads, config.lr, config.freeze_alpha, config.freeze_beta)
        out, activations = net.forward(x)
        loss = mse(out)
        snapshot(step, loss)
    if not np.isfinite(loss):
        raise DivergenceError(config.steps, config.seed)
    return record, net
