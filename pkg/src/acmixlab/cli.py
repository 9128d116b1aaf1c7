"""Command-line entry point.

Subcommands: ``verify`` (equivalence matrix), ``gradcheck`` (analytic vs.
numeric gradients), ``cost`` (FLOPs/parameter reports for presets or a JSON
spec), ``bench`` (shift implementation timings), ``train-toy`` (residual
stack on a synthetic task with alpha/beta trajectory export).

Every command exits 0 exactly when all of its assertions passed.  With
``--out`` the machine-readable report (and figures, where applicable) are
written into the given directory; ``--format`` selects what is printed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import bench as bench_mod
from . import gradcheck as gradcheck_mod
from . import reporting
from . import toytrain
from . import verify as verify_mod
from .costmodel import architecture_cost, architecture_from_dict
from .presets import get_preset, preset_names, preset_operators


@dataclass
class RunConfig:
    command: str
    seed: int = 0
    sizes: tuple = (8, 16)
    tol: Optional[float] = None
    out: Optional[Path] = None
    fmt: str = "text"
    arch: str = ""
    operator: Optional[str] = None
    border: str = "truncate"
    steps: int = 500
    lr: float = 0.02
    inject_fault: bool = False
    reps: int = 20
    task: str = "lowpass"
    freeze_alpha: bool = False
    freeze_beta: bool = False


def _parse_sizes(text: str) -> tuple:
    try:
        sizes = tuple(int(s) for s in text.split(",") if s)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from exc
    if not sizes or any(s <= 0 for s in sizes):
        raise argparse.ArgumentTypeError(f"bad size list {text!r}")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acmixlab",
        description="verification and cost reporting for hybrid convolution/attention operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=None, help="directory for report files")
        p.add_argument("--format", dest="fmt", choices=("json", "text"), default="text")

    p = sub.add_parser("verify", help="run the exact-equivalence matrix")
    common(p)
    p.add_argument("--tol", type=float, default=None, help="override the conv-equivalence tolerance")
    p.add_argument("--sizes", type=_parse_sizes, default=(8, 16), help="comma-separated map sizes")
    p.add_argument("--inject-fault", action="store_true", help="flip one kernel weight; the run must fail")

    p = sub.add_parser("gradcheck", help="analytic gradients vs. central differences")
    common(p)
    p.add_argument("--tol", type=float, default=None, help="relative-error threshold (default 1e-5)")

    p = sub.add_parser("cost", help="FLOPs/parameter report for an architecture")
    common(p)
    p.add_argument("--arch", required=True, help=f"preset name ({', '.join(preset_names())}) or JSON spec file")
    p.add_argument("--operator", choices=("conv", "attn", "acmix"), default=None,
                   help="operator variant; default reports all variants of a preset")

    p = sub.add_parser("bench", help="time the shift-and-sum implementations")
    common(p)
    p.add_argument("--sizes", type=_parse_sizes, default=(56,), help="map sizes to benchmark")
    p.add_argument("--reps", type=int, default=20)

    p = sub.add_parser("train-toy", help="train the two-layer residual stack on a synthetic task")
    common(p)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.02)
    p.add_argument("--border", choices=("truncate", "padded-keys"), default="truncate")
    p.add_argument("--task", choices=("lowpass", "zero"), default="lowpass")
    p.add_argument("--freeze-alpha", action="store_true")
    p.add_argument("--freeze-beta", action="store_true")
    return parser


def _check_tolerance(tol: Optional[float]) -> None:
    if tol is not None and tol < np.finfo(np.float64).eps:
        raise SystemExit(f"tolerance {tol} is below machine epsilon")


def cmd_verify(cfg: RunConfig) -> int:
    _check_tolerance(cfg.tol)
    tol = cfg.tol if cfg.tol is not None else verify_mod.CONV_TOL
    results = verify_mod.run_equivalence_suite(
        seed=cfg.seed, sizes=cfg.sizes, conv_tol=tol, inject_fault=cfg.inject_fault
    )
    passed = all(r.passed for r in results)
    payload = {
        "command": "verify",
        "seed": cfg.seed,
        "sizes": list(cfg.sizes),
        "passed": passed,
        "checks": [r.to_dict() for r in results],
    }
    text = reporting.check_table(results)
    summary = f"\n{sum(r.passed for r in results)}/{len(results)} checks passed"
    if not passed:
        worst = max((r for r in results if not r.passed), key=lambda r: r.deviation)
        summary += f"; first failure: {worst.name} deviation {worst.deviation:.3e} ({worst.detail})"
    print(payload_text(payload, text + summary, cfg.fmt))
    if cfg.out:
        outdir = reporting.ensure_outdir(cfg.out)
        reporting.write_json(outdir / "verify_report.json", payload)
        (outdir / "verify_report.txt").write_text(text + summary + "\n")
    return 0 if passed else 1


def cmd_gradcheck(cfg: RunConfig) -> int:
    _check_tolerance(cfg.tol)
    tol = cfg.tol if cfg.tol is not None else gradcheck_mod.DEFAULT_TOLERANCE
    results = gradcheck_mod.run_gradcheck(seed=cfg.seed, tolerance=tol)
    passed = all(r.passed for r in results)
    worst: dict = {}
    for r in results:
        worst[r.group] = max(worst.get(r.group, 0.0), r.rel_error)
    payload = {
        "command": "gradcheck",
        "seed": cfg.seed,
        "tolerance": tol,
        "passed": passed,
        "worst_per_group": worst,
        "checks": [r.to_dict() for r in results],
    }
    text = reporting.gradcheck_table(results)
    print(payload_text(payload, text, cfg.fmt))
    if cfg.out:
        outdir = reporting.ensure_outdir(cfg.out)
        reporting.write_json(outdir / "gradcheck_report.json", payload)
        (outdir / "gradcheck_report.txt").write_text(text + "\n")
    return 0 if passed else 1


def _load_architectures(cfg: RunConfig):
    path = Path(cfg.arch)
    if path.suffix == ".json" or path.exists():
        payload = json.loads(path.read_text())
        return [architecture_from_dict(payload)]
    if cfg.arch not in preset_names():
        raise ValueError(
            f"unknown architecture {cfg.arch!r}; presets: {', '.join(preset_names())}"
        )
    operators = (cfg.operator,) if cfg.operator else preset_operators(cfg.arch)
    return [get_preset(cfg.arch, op) for op in operators]


def cmd_cost(cfg: RunConfig) -> int:
    try:
        archs = _load_architectures(cfg)
        reports = [architecture_cost(a) for a in archs]
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    payload = {
        "command": "cost",
        "arch": cfg.arch,
        "reports": [r.to_dict() for r in reports],
    }
    text = "\n\n".join(reporting.architecture_table(r) for r in reports)
    print(payload_text(payload, text, cfg.fmt))
    if cfg.out:
        outdir = reporting.ensure_outdir(cfg.out)
        stem = Path(cfg.arch).stem
        reporting.write_json(outdir / f"cost_{stem}.json", payload)
        (outdir / f"cost_{stem}.txt").write_text(text + "\n")
        reporting.save_cost_figure(reports, outdir / f"cost_{stem}.png")
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    reports = [
        bench_mod.run_shift_benchmark(seed=cfg.seed, size=size, reps=cfg.reps)
        for size in cfg.sizes
    ]
    passed = all(r.equivalence_passed for r in reports)
    payload = {
        "command": "bench",
        "seed": cfg.seed,
        "passed": passed,
        "reports": [r.to_dict() for r in reports],
    }
    parts = []
    for r in reports:
        head = (
            f"size {r.size} c={r.channels} k={r.k}: equivalence "
            f"{'passed' if r.equivalence_passed else 'FAILED'} "
            f"(max deviation {r.max_deviation:.3e})"
        )
        parts.append(head + ("\n" + reporting.bench_table(r) if r.timings else ""))
    text = "\n\n".join(parts)
    print(payload_text(payload, text, cfg.fmt))
    if cfg.out:
        outdir = reporting.ensure_outdir(cfg.out)
        reporting.write_json(outdir / "bench_report.json", payload)
        (outdir / "bench_report.txt").write_text(text + "\n")
        for r in reports:
            if r.timings:
                reporting.save_bench_figure(r, outdir / f"bench_{r.size}.png")
    return 0 if passed else 1


def cmd_train_toy(cfg: RunConfig) -> int:
    train_cfg = toytrain.ToyTrainConfig(
        seed=cfg.seed,
        steps=cfg.steps,
        lr=cfg.lr,
        border=cfg.border,
        task=cfg.task,
        freeze_alpha=cfg.freeze_alpha,
        freeze_beta=cfg.freeze_beta,
    )
    try:
        record, _ = toytrain.train_toy(train_cfg)
    except toytrain.DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    first = record.smoothed_loss(0)
    last = record.smoothed_loss(len(record.loss) - 10)
    payload = {
        "command": "train-toy",
        "seed": cfg.seed,
        "steps": cfg.steps,
        "lr": cfg.lr,
        "task": cfg.task,
        "smoothed_first": first,
        "smoothed_last": last,
        "trajectory": record.to_dict(),
    }
    text = (
        f"trained {cfg.steps} steps (lr={cfg.lr}, seed={cfg.seed}, task={cfg.task})\n"
        f"smoothed loss: {first:.6f} -> {last:.6f} "
        f"({100.0 * (1.0 - last / first):.1f}% decrease)"
    )
    print(payload_text(payload, text, cfg.fmt))
    if cfg.out:
        outdir = reporting.ensure_outdir(cfg.out)
        record.save_json(outdir / "trajectory.json")
        record.save_csv(outdir / "trajectory.csv")
        reporting.write_json(outdir / "train_toy_report.json", payload)
        reporting.save_loss_figure(record, outdir / "loss.png")
        reporting.save_trajectory_figure(record, outdir / "trajectories.png")
    return 0


def payload_text(payload: dict, text: str, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True)
    return text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(command=args.command)
    for name in (
        "seed", "out", "fmt", "tol", "sizes", "arch", "operator", "border",
        "steps", "lr", "inject_fault", "reps", "task", "freeze_alpha", "freeze_beta",
    ):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    handler = {
        "verify": cmd_verify,
        "gradcheck": cmd_gradcheck,
        "cost": cmd_cost,
        "bench": cmd_bench,
        "train-toy": cmd_train_toy,
    }[cfg.command]
    return handler(cfg)


if __name__ == "__main__":
    sys.exit(main())
