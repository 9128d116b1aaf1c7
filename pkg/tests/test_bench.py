import acmixlab.bench as bench_mod
from acmixlab.bench import run_shift_benchmark


def test_report_carries_timings_after_equivalence():
    report = run_shift_benchmark(seed=0, channels=8, size=16, reps=3, warmup=1)
    assert report.equivalence_passed
    assert report.max_deviation <= bench_mod.EQUIVALENCE_TOL
    assert len(report.timings) == 3
    names = [t.name for t in report.timings]
    assert names[0] == "tensor-shift"
    assert all(t.mean_ms > 0 for t in report.timings)
    assert report.timings[0].speedup_vs_first == 1.0


def test_group_conv_variants_touch_equal_parameters():
    report = run_shift_benchmark(seed=0, channels=8, size=16, reps=2, warmup=0)
    touched = report.params_touched
    assert touched["fixed-kernel group conv"] == touched["learnable group conv"] == 8 * 9 * 9


def test_gate_blocks_timings_when_equivalence_fails(monkeypatch):
    monkeypatch.setattr(bench_mod, "EQUIVALENCE_TOL", -1.0)
    report = run_shift_benchmark(seed=0, channels=4, size=8, reps=2, warmup=0)
    assert not report.equivalence_passed
    assert report.timings == []
