"""Hardware-free metric generator driven by a piecewise-constant phase spec."""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from ..errors import SourceError, ValidationError
from ..model import HOST, DeviceId, Tick, catalog_ids, descriptor, gpu, schema_columns
from .base import Reading, Source, SourceDescriptor

# Levels used for any metric a phase does not mention. Counters are in bytes/s.
DEFAULT_LEVELS: dict[str, float] = {
    "power_draw_w": 60.0,
    "temperature_gpu_c": 35.0,
    "cpu_power_w": 120.0,
    "dram_power_w": 9.0,
    "gpu_utilization_pct": 0.0,
    "sm_active_pct": 0.0,
    "sm_occupancy_pct": 0.0,
    "tensor_active_pct": 0.0,
    "fp64_active_pct": 0.0,
    "fp32_active_pct": 0.0,
    "fp16_active_pct": 0.0,
    "graphics_clock_mhz": 1410.0,
    "sm_clock_mhz": 1410.0,
    "memory_utilization_pct": 0.0,
    "dram_active_pct": 0.0,
    "memory_usage_pct": 10.0,
    "temperature_memory_c": 38.0,
    "memory_clock_mhz": 1512.0,
    "pcie_link_gen": 4.0,
    "pcie_link_width": 16.0,
    "pcie_tx_bytes": 0.0,
    "pcie_rx_bytes": 0.0,
    "nvlink_tx_bytes": 0.0,
    "nvlink_rx_bytes": 0.0,
    "cpu_usage_pct": 3.0,
    "dram_usage_pct": 4.0,
}

_EPS = 1e-9


def _domain(metric_id: str) -> tuple[float, float]:
    return (0.0, 100.0) if descriptor(metric_id).unit == "%" else (0.0, math.inf)


@dataclass(frozen=True)
class Phase:
    duration_s: float
    levels: Mapping[str, float] = field(default_factory=dict)
    noise: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValidationError(f"phase duration must be positive, got {self.duration_s}")
        for mid, level in self.levels.items():
            lo, hi = _domain(mid)
            if not lo <= level <= hi:
                raise ValidationError(f"level {level} for {mid} outside [{lo}, {hi}]")
        for mid, amp in self.noise.items():
            descriptor(mid)
            if not amp >= 0:
                raise ValidationError(f"noise amplitude for {mid} must be >= 0")

    def level(self, metric_id: str) -> float:
        return float(self.levels.get(metric_id, DEFAULT_LEVELS[metric_id]))


@dataclass(frozen=True)
class SyntheticTraceSpec:
    """Ordered phases; counters take their level as a rate in bytes per second."""

    phases: tuple[Phase, ...]
    seed: int = 0

    def __post_init__(self):
        phases = tuple(self.phases)
        if not phases:
            raise ValidationError("synthetic trace needs at least one phase")
        object.__setattr__(self, "phases", phases)

    @property
    def boundaries(self) -> list[float]:
        out, acc = [], 0.0
        for p in self.phases:
            acc += p.duration_s
            out.append(acc)
        return out

    @property
    def duration_s(self) -> float:
        return self.boundaries[-1]

    def phase_index(self, t: float) -> int:
        """Index of the phase covering ``t``; past the end the last phase holds."""
        i = bisect.bisect_right(self.boundaries, t + _EPS)
        return min(i, len(self.phases) - 1)

    def counter_total(self, metric_id: str, t: float) -> float:
        """Exact integral of a counter's rate level over ``[0, t]``."""
        total, start = 0.0, 0.0
        for p in self.phases:
            end = start + p.duration_s
            if t <= start:
                break
            total += p.level(metric_id) * (min(t, end) - start)
            start = end
        if t > start:
            total += self.phases[-1].level(metric_id) * (t - start)
        return total


def _value(spec: SyntheticTraceSpec, metric_id: str, t: float, u: float) -> float:
    if descriptor(metric_id).is_counter:
        return spec.counter_total(metric_id, t)
    phase = spec.phases[spec.phase_index(t)]
    lo, hi = _domain(metric_id)
    v = phase.level(metric_id) + phase.noise.get(metric_id, 0.0) * u
    return min(max(v, lo), hi)


def _devices(gpus: int) -> list[DeviceId]:
    return [HOST] + [gpu(i) for i in range(gpus)]


def generate_synthetic(
    spec: SyntheticTraceSpec,
    interval_s: float,
    *,
    gpus: int = 1,
    metrics: Optional[Iterable[str]] = None,
    start_wall_ms: int = 0,
) -> list[Tick]:
    """Deterministic tick table sampled at ``k * interval_s`` over the spec's duration.

    Values are ``level + U(-amp, amp)`` clamped to the unit domain; noise is
    drawn from ``numpy.random.default_rng(spec.seed)`` in row-major column order.
    """
    if not interval_s > 0:
        raise ValidationError("interval must be positive")
    cols = schema_columns(metrics if metrics is not None else catalog_ids(), _devices(gpus))
    n = int(math.floor(spec.duration_s / interval_s + _EPS))
    noise = np.random.default_rng(spec.seed).uniform(-1.0, 1.0, size=(n, len(cols)))
    ticks = []
    for k in range(n):
        t = k * interval_s
        values = {(dev, mid): _value(spec, mid, t, noise[k, j]) for j, (dev, mid) in enumerate(cols)}
        ticks.append(Tick(start_wall_ms + round(t * 1000), t, values))
    return ticks


class SyntheticSource(Source):
    """Live source that evaluates a trace spec at each tick's scheduled time."""

    def __init__(
        self,
        spec: SyntheticTraceSpec,
        *,
        gpus: int = 1,
        metrics: Optional[Iterable[str]] = None,
        name: str = "synthetic",
        fail_after_s: Optional[float] = None,
        poll_delay_s: float = 0.0,
    ):
        super().__init__()
        self.spec = spec
        self.columns = schema_columns(metrics if metrics is not None else catalog_ids(), _devices(gpus))
        self.descriptor = SourceDescriptor(name, frozenset(self.columns), "fast")
        self.inventory = {f"gpu{i}": "Synthetic GPU" for i in range(gpus)}
        self.fail_after_s = fail_after_s
        self.poll_delay_s = poll_delay_s
        self._rng = np.random.default_rng(spec.seed)
        self._dead = False

    def kill(self) -> None:
        """Simulate the device disappearing; later polls raise SourceError."""
        self._dead = True

    def _poll(self, elapsed_s: float) -> list[Reading]:
        if self._dead or (self.fail_after_s is not None and elapsed_s >= self.fail_after_s):
            self._dead = True
            raise SourceError(f"{self.name}: device lost")
        if self.poll_delay_s:
            time.sleep(self.poll_delay_s)
        now = int(time.time() * 1000)
        u = self._rng.uniform(-1.0, 1.0, size=len(self.columns))
        return [
            Reading(dev, mid, _value(self.spec, mid, elapsed_s, u[j]), now)
            for j, (dev, mid) in enumerate(self.columns)
        ]


def constant_spec(duration_s: float, levels: Optional[Mapping[str, float]] = None, seed: int = 0):
    """Single zero-noise phase; convenient for tests and idle baselines."""
    return SyntheticTraceSpec((Phase(duration_s, dict(levels or {})),), seed)
