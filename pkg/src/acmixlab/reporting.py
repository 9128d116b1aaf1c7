"""Report rendering: aligned text tables, JSON payloads, and figures.

Figures are written straight to files (Agg backend); the delimited data the
plots are drawn from always lands next to them, so every figure is
reproducible from its JSON/CSV sibling.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def format_table(headers, rows) -> str:
    """Monospace table with left-aligned first column."""
    cells = [list(map(str, headers))] + [list(map(str, r)) for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = []
    for r, row in enumerate(cells):
        padded = [
            row[i].ljust(widths[i]) if i == 0 else row[i].rjust(widths[i])
            for i in range(len(row))
        ]
        lines.append("  ".join(padded).rstrip())
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def ensure_outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def check_table(results) -> str:
    rows = [
        (
            r.name,
            "pass" if r.passed else "FAIL",
            f"{r.deviation:.3e}",
            f"{r.tolerance:.1e}",
        )
        for r in results
    ]
    return format_table(("check", "status", "max deviation", "tolerance"), rows)


def gradcheck_table(results) -> str:
    rows = [
        (
            f"{r.case}/{r.group}",
            "pass" if r.passed else "FAIL",
            f"{r.rel_error:.3e}",
            f"{r.tolerance:.1e}",
        )
        for r in results
    ]
    return format_table(("parameter group", "status", "rel error", "tolerance"), rows)


def architecture_table(report) -> str:
    m = report.modules
    rows = [
        (
            "stage I",
            f"{m.stage1_flops / 1e9:.3f}",
            f"{m.flops_fraction(1):.1f}%",
            f"{m.stage1_params / 1e6:.3f}",
            f"{m.params_fraction(1):.1f}%",
        ),
        (
            "stage II",
            f"{m.stage2_flops / 1e9:.3f}",
            f"{m.flops_fraction(2):.1f}%",
            f"{m.stage2_params / 1e6:.3f}",
            f"{m.params_fraction(2):.1f}%",
        ),
        (
            "modules total",
            f"{m.total_flops / 1e9:.3f}",
            "100.0%",
            f"{m.total_params / 1e6:.3f}",
            "100.0%",
        ),
        (
            "whole model",
            f"{report.model_flops / 1e9:.3f}",
            "",
            f"{report.model_params / 1e6:.3f}",
            "",
        ),
    ]
    title = f"{report.name} ({report.operator})"
    table = format_table((title, "GFLOPs", "share", "Mparams", "share"), rows)
    return table


def bench_table(report) -> str:
    rows = [
        (
            t.name,
            f"{t.mean_ms:.3f}",
            f"{t.std_ms:.3f}",
            f"{t.best_ms:.3f}",
            f"{t.speedup_vs_first:.2f}x",
        )
        for t in report.timings
    ]
    return format_table(("implementation", "mean ms", "std ms", "best ms", "speedup"), rows)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def save_loss_figure(record, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(record.steps, record.loss, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_trajectory_figure(record, path) -> None:
    layers = record.layers
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    alpha = np.asarray(record.alpha)
    beta = np.asarray(record.beta)
    ratio = np.asarray(record.log_ratio)
    for l in range(layers):
        axes[0].plot(record.steps, alpha[:, l], label=f"layer {l}")
        axes[1].plot(record.steps, beta[:, l], label=f"layer {l}")
        axes[2].plot(record.steps, ratio[:, l], label=f"layer {l}")
    for ax, title in zip(axes, ("|alpha|", "|beta|", "log(|alpha/beta|)")):
        ax.set_xlabel("step")
        ax.set_title(title)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_cost_figure(reports, path) -> None:
    """Stacked stage-share bars, one per operator variant."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [f"{r.name}\n({r.operator})" for r in reports]
    stage1 = [r.modules.stage1_flops / 1e9 for r in reports]
    stage2 = [r.modules.stage2_flops / 1e9 for r in reports]
    x = np.arange(len(reports))
    ax.bar(x, stage1, label="stage I")
    ax.bar(x, stage2, bottom=stage1, label="stage II")
    ax.set_xticks(x, labels, fontsize=8)
    ax.set_ylabel("module GFLOPs")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_bench_figure(report, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [t.name for t in report.timings]
    means = [t.mean_ms for t in report.timings]
    stds = [t.std_ms for t in report.timings]
    x = np.arange(len(names))
    ax.bar(x, means, yerr=stds, capsize=3)
    ax.set_xticks(x, names, fontsize=8)
    ax.set_ylabel("ms per call")
    ax.set_title(f"shift-and-sum at C={report.channels}, {report.size}x{report.size}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
