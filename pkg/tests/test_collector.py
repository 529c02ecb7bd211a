import math
import threading
import time

import pytest

from powertrace.collector import align_tick, plan_session, run_offline, start
from powertrace.errors import AlreadyStopped, ConfigurationError, StartError
from powertrace.model import HOST, SamplingConfig, gpu
from powertrace.persistence import SessionWriter, read_session
from powertrace.sources import Reading, SyntheticSource, constant_spec
from powertrace.sources.base import Source, SourceDescriptor


def _cfg(tmp_path, **kw):
    kw.setdefault("interval_s", 0.1)
    return SamplingConfig(output_dir=tmp_path, **kw)


def _run(cfg, sources, seconds, **kw):
    s = start(cfg, sources, **kw)
    time.sleep(seconds)
    return s, s.stop()


def test_one_second_run(tmp_path):
    _, data = _run(_cfg(tmp_path), [SyntheticSource(constant_spec(60))], 1.0)
    assert 9 <= len(data.ticks) <= 11
    assert data.dropped_tick_count == 0
    assert len(data.ticks) <= math.floor(1.0 / 0.1) + 1


def test_ticks_on_grid(tmp_path):
    _, data = _run(_cfg(tmp_path), [SyntheticSource(constant_spec(60))], 1.0)
    for t in data.ticks:
        k = round(t.mono_elapsed_s / 0.1)
        assert k >= 1 and t.mono_elapsed_s == k * 0.1
        assert t.wall_time_ms == data.start_wall_ms + round(k * 0.1 * 1000)
    elapsed = [t.mono_elapsed_s for t in data.ticks]
    assert elapsed == sorted(set(elapsed))


def test_streamed_before_stop(tmp_path):
    s = start(_cfg(tmp_path), [SyntheticSource(constant_spec(60))])
    time.sleep(1.5)  # the writer flushes at least once per second
    rows = (s.root / "samples.csv").read_text().count("\n") - 1
    data = s.stop()
    assert rows >= 1 and len(data.ticks) >= rows


def test_uncollected_metrics_listed(tmp_path):
    basic = SyntheticSource(constant_spec(60), metrics=["power_draw_w", "gpu_utilization_pct"], name="basic")
    cfg = _cfg(tmp_path, selected_metrics="power_draw_w,tensor_active_pct")
    _, data = _run(cfg, [basic], 0.3)
    assert data.uncollected == ["tensor_active_pct"]
    assert all(t.get(gpu(0), "tensor_active_pct") is None for t in data.ticks)
    assert read_session(tmp_path / data.id).uncollected == ["tensor_active_pct"]


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "plain-file"
    blocker.write_text("")
    with pytest.raises(StartError):
        start(SamplingConfig(output_dir=blocker / "out"), [SyntheticSource(constant_spec(60))])


def test_no_selected_metric_served(tmp_path):
    src = SyntheticSource(constant_spec(60), metrics=["cpu_usage_pct"])
    with pytest.raises(StartError):
        start(_cfg(tmp_path, selected_metrics="power_draw_w"), [src])


def test_overlapping_sources_rejected(tmp_path):
    a = SyntheticSource(constant_spec(60), metrics=["power_draw_w"], name="a")
    b = SyntheticSource(constant_spec(60), metrics=["power_draw_w"], name="b")
    with pytest.raises(ConfigurationError):
        plan_session(_cfg(tmp_path), [a, b])


def test_stop_twice(tmp_path):
    s, data = _run(_cfg(tmp_path), [SyntheticSource(constant_spec(60))], 0.3)
    n = len(data.ticks)
    with pytest.raises(AlreadyStopped):
        s.stop()
    assert len(data.ticks) == n


def test_dead_source_mid_session(tmp_path):
    fine = SyntheticSource(constant_spec(60), metrics=["tensor_active_pct", "dram_active_pct"],
                           name="fine", fail_after_s=0.5)
    basic = SyntheticSource(constant_spec(60), metrics=["power_draw_w"], name="basic")
    _, data = _run(_cfg(tmp_path), [fine, basic], 1.2)
    n = data.dead_sources["fine"]
    assert 3 <= n <= 5
    for i, t in enumerate(data.ticks):
        has_fine = t.get(gpu(0), "tensor_active_pct") is not None
        assert has_fine == (t.mono_elapsed_s < 0.5 - 1e-9)
        assert t.get(gpu(0), "power_draw_w") is not None
    assert read_session(tmp_path / data.id).dead_sources == {"fine": n}


def test_merge_disjoint_sources():
    a = [Reading(gpu(0), "power_draw_w", 1.0, 0)]
    b = [Reading(HOST, "cpu_usage_pct", 2.0, 0)]
    tick = align_tick([a, b], 5, 0.5)
    assert tick.values == {(gpu(0), "power_draw_w"): 1.0, (HOST, "cpu_usage_pct"): 2.0}


def test_alignment_uses_scheduled_time():
    readings = [[Reading(gpu(0), "power_draw_w", 1.0, 100_030)], [Reading(HOST, "cpu_usage_pct", 2.0, 100_070)]]
    tick = align_tick(readings, 100_000, 100.0)
    assert tick.wall_time_ms == 100_000 and tick.mono_elapsed_s == 100.0


def test_duplicate_readings_rejected():
    r = Reading(gpu(0), "power_draw_w", 1.0, 0)
    with pytest.raises(ConfigurationError):
        align_tick([[r], [r]], 0, 0.0)


def test_timed_out_source_absent(tmp_path):
    slow = SyntheticSource(constant_spec(60), metrics=["tensor_active_pct"], name="slow", poll_delay_s=0.25)
    fast = SyntheticSource(constant_spec(60), metrics=["power_draw_w"], name="fast")
    _, data = _run(_cfg(tmp_path), [slow, fast], 1.0)
    assert all(t.get(gpu(0), "power_draw_w") is not None for t in data.ticks)
    assert all(t.get(gpu(0), "tensor_active_pct") is None for t in data.ticks)
    assert "slow" not in data.dead_sources


class SlowWriter(SessionWriter):
    def append_tick(self, tick):
        time.sleep(0.2)
        return super().append_tick(tick)


def test_slow_writer_drops_instead_of_blocking(tmp_path):
    s, data = _run(_cfg(tmp_path, interval_s=0.05), [SyntheticSource(constant_spec(60))], 1.5,
                   queue_capacity=2, writer_factory=SlowWriter)
    produced = s.tick_count
    assert produced >= 25  # cadence held at 20 Hz while the writer manages 5 rows/s
    assert data.dropped_tick_count > 0
    assert len(data.ticks) + data.dropped_tick_count == produced


class ConstantSource(Source):
    """Minimal hand-written source: one host metric, always 1.0."""

    def __init__(self):
        super().__init__()
        self.descriptor = SourceDescriptor("constant", frozenset({(HOST, "cpu_usage_pct")}))

    def _poll(self, elapsed_s):
        return [Reading(HOST, "cpu_usage_pct", 1.0, 0)]


def test_overrun_skips_slots(tmp_path, monkeypatch):
    import powertrace.collector as col

    real = col.align_tick
    state = {"n": 0}

    def slow_align(*a, **kw):  # the third tick takes 3.5 intervals to assemble
        state["n"] += 1
        if state["n"] == 3:
            time.sleep(0.35)
        return real(*a, **kw)

    monkeypatch.setattr(col, "align_tick", slow_align)
    _, data = _run(_cfg(tmp_path), [ConstantSource()], 1.2)
    assert data.overrun_count >= 1
    ks = [round(t.mono_elapsed_s / 0.1) for t in data.ticks]
    assert all(t.mono_elapsed_s == k * 0.1 for t, k in zip(data.ticks, ks))
    gaps = [b - a for a, b in zip(ks, ks[1:])]
    assert max(gaps) >= 3  # missed slots were skipped, not replayed late


def test_intensity_resolved_without_blocking(tmp_path):
    gate = threading.Event()

    def slow_resolver(cfg, at_ms):
        gate.wait(2)
        return None, "provider down"

    from powertrace.intensity import CarbonConfig

    cfg = _cfg(tmp_path, carbon=CarbonConfig(mode="static", value=1.0))
    s = start(cfg, [SyntheticSource(constant_spec(60))], resolve_intensity=slow_resolver)
    time.sleep(0.5)
    assert s.tick_count >= 3  # sampling runs while the lookup is pending
    gate.set()
    data = s.stop()
    assert data.intensity is None and data.carbon_note == "provider down"
    assert data.totals is not None and data.totals.carbon_kg is None


def test_run_offline_grid(tmp_path):
    cfg = _cfg(tmp_path)
    data = run_offline(cfg, [SyntheticSource(constant_spec(60))], range(1, 11), start_wall_ms=5000)
    assert [t.mono_elapsed_s for t in data.ticks] == [k * 0.1 for k in range(1, 11)]
    assert data.ticks[0].wall_time_ms == 5100
    assert read_session(tmp_path / data.id).ticks == data.ticks
