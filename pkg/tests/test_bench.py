import pytest

from powertrace.benchmark import BenchResult, BenchRun, calibrate_busy_loop, run_bench
from powertrace.errors import ValidationError
from powertrace.sources import open_source


def test_derived_columns_by_hand():
    r = BenchResult(0.1, 10.0, False, BenchRun("baseline", 10.0),
                    BenchRun("monitored(0.1)", 10.05, 100, 0.2, 1.5), ("synthetic",))
    assert r.time_overhead_pct == pytest.approx(0.5)
    assert r.per_sample_ms == pytest.approx(0.5)  # 50 ms over 100 samples
    assert r.monitor_cpu_per_sample_ms == pytest.approx(2.0)
    assert r.monitor_cpu_pct == pytest.approx(0.2 / 10.05 * 100)
    table = r.format_table()
    assert "0.50%" in table and "0.500ms" in table and "1.50MB" in table


def test_no_samples_renders_dashes():
    r = BenchResult(1.0, 5.0, True, BenchRun("baseline", 5.0), BenchRun("monitored(1)", 5.0), ("synthetic",))
    assert r.per_sample_ms is None and "---" in r.format_table()


def test_rejects_short_duration_and_bad_interval():
    with pytest.raises(ValidationError):
        run_bench(0.1, 1.0)
    with pytest.raises(ValidationError):
        run_bench(0.001, 5.0)


def test_calibration_scales():
    n = calibrate_busy_loop(0.5, probe_s=0.05)
    assert n > 0


def test_idle_bench_with_synthetic_source():
    r = run_bench(0.1, 5.0, source_factory=lambda: [open_source("synthetic")])
    assert r.sources == ("synthetic",)
    assert 45 <= r.monitored.samples <= 51
    assert r.baseline.elapsed_s == pytest.approx(5.0, abs=0.1)
    assert r.per_sample_ms is not None
