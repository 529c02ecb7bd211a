"""Self-overhead measurement: the same workload with and without a running session."""

from __future__ import annotations

import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import psutil

from .collector import start
from .errors import ValidationError
from .model import SamplingConfig
from .sources import HARDWARE_KINDS, Source, open_available, open_source

MIN_DURATION_S = 5.0


def _spin(iterations: int) -> int:
    acc = 0
    for i in range(iterations):
        acc = (acc + i * i) % 1000003
    return acc


def calibrate_busy_loop(target_s: float, probe_s: float = 0.3) -> int:
    """Iterations of the busy loop that take roughly ``target_s`` on this machine."""
    n = 10000
    while True:
        t0 = time.perf_counter()
        _spin(n)
        dt = time.perf_counter() - t0
        if dt >= probe_s:
            return max(1, int(n * target_s / dt))
        n *= 2


@dataclass(frozen=True)
class BenchRun:
    label: str
    elapsed_s: float
    samples: int = 0
    monitor_cpu_s: float = 0.0
    rss_delta_mb: float = 0.0


@dataclass(frozen=True)
class BenchResult:
    interval_s: float
    duration_s: float
    with_load: bool
    baseline: BenchRun
    monitored: BenchRun
    sources: tuple[str, ...]

    @property
    def time_overhead_pct(self) -> float:
        return (self.monitored.elapsed_s - self.baseline.elapsed_s) / self.baseline.elapsed_s * 100.0

    @property
    def per_sample_ms(self) -> Optional[float]:
        if not self.monitored.samples:
            return None
        return (self.monitored.elapsed_s - self.baseline.elapsed_s) / self.monitored.samples * 1000.0

    @property
    def monitor_cpu_pct(self) -> float:
        return self.monitored.monitor_cpu_s / self.monitored.elapsed_s * 100.0

    @property
    def monitor_cpu_per_sample_ms(self) -> Optional[float]:
        if not self.monitored.samples:
            return None
        return self.monitored.monitor_cpu_s / self.monitored.samples * 1000.0

    def format_table(self) -> str:
        load = "busy-loop" if self.with_load else "idle (sleep)"
        head = [
            f"workload: {load}, {self.duration_s:g} s; interval {self.interval_s:g} s; "
            f"sources: {', '.join(self.sources)}",
            "CPU util. is the monitor's own threads only, not workload + monitor.",
            "",
            f"{'run':<14}{'elapsed':>10}{'overhead':>11}{'time/sample':>13}{'cpu/sample':>12}"
            f"{'CPU util.':>11}{'mem delta':>11}",
        ]
        b, m = self.baseline, self.monitored
        per = self.per_sample_ms
        cpu_per = self.monitor_cpu_per_sample_ms
        rows = [
            f"{b.label:<14}{b.elapsed_s:>9.3f}s{'---':>11}{'---':>13}{'---':>12}{'0.00%':>11}{'---':>11}",
            f"{m.label:<14}{m.elapsed_s:>9.3f}s{self.time_overhead_pct:>10.2f}%"
            f"{(f'{per:.3f}ms' if per is not None else '---'):>13}"
            f"{(f'{cpu_per:.3f}ms' if cpu_per is not None else '---'):>12}"
            f"{self.monitor_cpu_pct:>10.2f}%{m.rss_delta_mb:>9.2f}MB",
        ]
        return "\n".join(head + rows)


def _other_threads_cpu(proc: psutil.Process, main_id: int) -> float:
    return sum(t.user_time + t.system_time for t in proc.threads() if t.id != main_id)


def run_bench(
    interval_s: float = 0.1,
    duration_s: float = 15.0,
    *,
    with_load: bool = False,
    repeats: int = 1,
    source_factory: Optional[Callable[[], Sequence[Source]]] = None,
) -> BenchResult:
    """Run the workload without and with monitoring, ``repeats`` times each.

    The fastest run of each kind is kept, which filters out scheduler noise
    from unrelated processes. With ``with_load`` the workload is a calibrated
    pure-Python busy loop on the main thread; otherwise it sleeps.
    """
    if duration_s < MIN_DURATION_S:
        raise ValidationError(f"bench duration must be >= {MIN_DURATION_S:g} s, got {duration_s:g}")
    SamplingConfig(interval_s=interval_s)  # validates the interval
    iterations = calibrate_busy_loop(duration_s) if with_load else 0

    def workload():
        if with_load:
            _spin(iterations)
        else:
            time.sleep(duration_s)

    if source_factory is None:
        def source_factory():
            opened, _ = open_available(HARDWARE_KINDS)
            return opened or [open_source("synthetic")]

    proc = psutil.Process()
    main_id = threading.main_thread().native_id
    baselines, monitored = [], []
    source_names: tuple[str, ...] = ()
    with tempfile.TemporaryDirectory(prefix="powertrace-bench-") as tmp:
        for _ in range(max(1, repeats)):
            t0 = time.perf_counter()
            workload()
            baselines.append(BenchRun("baseline", time.perf_counter() - t0))

            sources = list(source_factory())
            source_names = tuple(s.name for s in sources)
            cfg = SamplingConfig(interval_s=interval_s, output_dir=Path(tmp))
            rss0 = proc.memory_info().rss
            cpu0 = _other_threads_cpu(proc, main_id)
            t0 = time.perf_counter()
            session = start(cfg, sources)
            workload()
            cpu1 = _other_threads_cpu(proc, main_id)  # pool threads exit during stop
            data = session.stop()
            elapsed = time.perf_counter() - t0
            rss1 = proc.memory_info().rss
            for s in sources:
                s.close()
            monitored.append(BenchRun(
                f"monitored({interval_s:g})", elapsed, len(data.ticks),
                max(0.0, cpu1 - cpu0), (rss1 - rss0) / 2**20,
            ))
    return BenchResult(
        interval_s, duration_s, with_load,
        min(baselines, key=lambda r: r.elapsed_s),
        min(monitored, key=lambda r: r.elapsed_s),
        source_names,
    )
