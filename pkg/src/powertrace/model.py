"""Metric catalog and the time-aligned data model shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional

from .errors import ValidationError
from .intensity import CarbonConfig, IntensityRecord

CATEGORIES = ("energy", "compute", "memory", "communication", "system")
UNITS = ("W", "J", "°C", "%", "MHz", "bytes", "GB/s", "count")

# Marker for cumulative counters that never roll over.
UNBOUNDED = math.inf


@dataclass(frozen=True)
class MetricDescriptor:
    id: str
    display_name: str
    unit: str
    kind: str  # "gauge" | "cumulative_counter"
    category: str
    device_scope: str  # "per_gpu" | "host"
    # Counters only: value at which the source counter rolls over, or UNBOUNDED.
    wrap_range: Optional[float] = None
    # Counters only: how the derived rate is labelled in reports and plots.
    rate_display_name: Optional[str] = None

    @property
    def is_counter(self) -> bool:
        return self.kind == "cumulative_counter"

    @property
    def report_name(self) -> str:
        return self.rate_display_name if self.is_counter else self.display_name

    @property
    def report_unit(self) -> str:
        return "GB/s" if self.is_counter else self.unit


def _gauge(id, name, unit, category, scope="per_gpu"):
    return MetricDescriptor(id, name, unit, "gauge", category, scope)


def _counter(id, name, rate_name, category):
    return MetricDescriptor(
        id, name, "bytes", "cumulative_counter", category, "per_gpu",
        wrap_range=UNBOUNDED, rate_display_name=rate_name,
    )


_CATALOG: tuple[MetricDescriptor, ...] = (
    # energy
    _gauge("power_draw_w", "Power Draw [W]", "W", "energy"),
    _gauge("temperature_gpu_c", "GPU Temp. [°C]", "°C", "energy"),
    _gauge("cpu_power_w", "CPU Power [W]", "W", "energy", "host"),
    _gauge("dram_power_w", "DRAM Power [W]", "W", "energy", "host"),
    # compute
    _gauge("gpu_utilization_pct", "GPU Utilization [%]", "%", "compute"),
    _gauge("sm_active_pct", "SM Active [%]", "%", "compute"),
    _gauge("sm_occupancy_pct", "SM Occupancy [%]", "%", "compute"),
    _gauge("tensor_active_pct", "Tensor Active [%]", "%", "compute"),
    _gauge("fp64_active_pct", "FP64 Active [%]", "%", "compute"),
    _gauge("fp32_active_pct", "FP32 Active [%]", "%", "compute"),
    _gauge("fp16_active_pct", "FP16 Active [%]", "%", "compute"),
    _gauge("graphics_clock_mhz", "Graphics Clock [MHz]", "MHz", "compute"),
    _gauge("sm_clock_mhz", "SM Clock [MHz]", "MHz", "compute"),
    # memory
    _gauge("memory_utilization_pct", "Mem. Utilization [%]", "%", "memory"),
    _gauge("dram_active_pct", "DRAM Active (Cycles) [%]", "%", "memory"),
    _gauge("memory_usage_pct", "Mem. Usage Total [%]", "%", "memory"),
    _gauge("temperature_memory_c", "Mem. Temp. [°C]", "°C", "memory"),
    _gauge("memory_clock_mhz", "Mem. Clock [MHz]", "MHz", "memory"),
    # communication
    _gauge("pcie_link_gen", "PCIe Link Gen", "count", "communication"),
    _gauge("pcie_link_width", "PCIe Width", "count", "communication"),
    _counter("pcie_tx_bytes", "PCIe TX Bytes", "PCIe TX [GB/s]", "communication"),
    _counter("pcie_rx_bytes", "PCIe RX Bytes", "PCIe RX [GB/s]", "communication"),
    _counter("nvlink_tx_bytes", "NVLink TX Bytes", "NVLink TX [GB/s]", "communication"),
    _counter("nvlink_rx_bytes", "NVLink RX Bytes", "NVLink RX [GB/s]", "communication"),
    # system
    _gauge("cpu_usage_pct", "CPU Usage [%]", "%", "system", "host"),
    _gauge("dram_usage_pct", "DRAM Usage [%]", "%", "system", "host"),
)

_BY_ID = {d.id: d for d in _CATALOG}

# Vendor-tool spellings accepted by resolve_selection.
ALIASES = {
    "power.draw": "power_draw_w",
    "temperature.gpu": "temperature_gpu_c",
    "cpu_power": "cpu_power_w",
    "dram_power": "dram_power_w",
    "utilization.gpu": "gpu_utilization_pct",
    "sm_active": "sm_active_pct",
    "sm_occupancy": "sm_occupancy_pct",
    "tensor_active": "tensor_active_pct",
    "fp64_active": "fp64_active_pct",
    "fp32_active": "fp32_active_pct",
    "fp16_active": "fp16_active_pct",
    "clocks.current.graphics": "graphics_clock_mhz",
    "clocks.current.sm": "sm_clock_mhz",
    "utilization.memory": "memory_utilization_pct",
    "dram_active": "dram_active_pct",
    "usage.memory": "memory_usage_pct",
    "temperature.memory": "temperature_memory_c",
    "clocks.current.memory": "memory_clock_mhz",
    "pcie.link.gen.current": "pcie_link_gen",
    "pcie.link.width.current": "pcie_link_width",
    "cpu_usage": "cpu_usage_pct",
    "dram_usage": "dram_usage_pct",
}


def metric_catalog() -> list[MetricDescriptor]:
    """Return the fixed 26-entry catalog, ordered by category then vendor-table order."""
    return list(_CATALOG)


def descriptor(metric_id: str) -> MetricDescriptor:
    try:
        return _BY_ID[metric_id]
    except KeyError:
        raise ValidationError(f"unknown metric id: {metric_id!r}") from None


def catalog_ids() -> list[str]:
    return [d.id for d in _CATALOG]


def resolve_selection(spec: str | Iterable[str]) -> frozenset[str]:
    """Expand a selection expression into a set of catalog ids.

    ``spec`` is ``"all"``, a category name, a comma-separated mix of ids,
    categories and vendor aliases, or an already-resolved iterable of ids.
    Unknown tokens raise :class:`ValidationError` naming every offender.
    """
    if isinstance(spec, str):
        tokens = [t.strip() for t in spec.split(",")]
    else:
        tokens = [str(t).strip() for t in spec]
    tokens = [t for t in tokens if t]
    if not tokens:
        raise ValidationError("empty metric selection")

    selected: set[str] = set()
    unknown: list[str] = []
    for tok in tokens:
        if tok == "all":
            selected.update(_BY_ID)
        elif tok in CATEGORIES:
            selected.update(d.id for d in _CATALOG if d.category == tok)
        elif tok in _BY_ID:
            selected.add(tok)
        elif tok in ALIASES:
            selected.add(ALIASES[tok])
        else:
            unknown.append(tok)
    if unknown:
        raise ValidationError("unknown metric or category: " + ", ".join(unknown))
    return frozenset(selected)


@dataclass(frozen=True, order=True)
class DeviceId:
    cls: str  # "gpu" | "host"
    index: Optional[int] = None

    def __post_init__(self):
        if self.cls == "host":
            if self.index is not None:
                raise ValidationError("host device takes no index")
        elif self.cls == "gpu":
            if self.index is None or self.index < 0:
                raise ValidationError("gpu device needs a non-negative index")
        else:
            raise ValidationError(f"unknown device class {self.cls!r}")

    @property
    def label(self) -> str:
        return "host" if self.cls == "host" else f"gpu{self.index}"

    @classmethod
    def parse(cls, label: str) -> "DeviceId":
        if label == "host":
            return HOST
        if label.startswith("gpu") and label[3:].isdigit():
            return gpu(int(label[3:]))
        raise ValidationError(f"bad device label {label!r}")

    def __str__(self):
        return self.label


HOST = DeviceId("host")


def gpu(index: int) -> DeviceId:
    return DeviceId("gpu", index)


def column_name(device: DeviceId, metric_id: str) -> str:
    return metric_id if device.cls == "host" else f"g{device.index}_{metric_id}"


def parse_column(name: str) -> tuple[DeviceId, str]:
    if name.startswith("g") and "_" in name:
        head, rest = name.split("_", 1)
        if head[1:].isdigit() and rest in _BY_ID:
            return gpu(int(head[1:])), rest
    if name in _BY_ID and _BY_ID[name].device_scope == "host":
        return HOST, name
    raise ValidationError(f"column {name!r} does not name a catalog metric")


def schema_columns(metrics: Iterable[str], devices: Iterable[DeviceId]) -> list[tuple[DeviceId, str]]:
    """Canonical column order: host metrics, then one catalog-ordered block per GPU."""
    metrics = set(metrics)
    gpus = sorted(d for d in set(devices) if d.cls == "gpu")
    cols = [(HOST, d.id) for d in _CATALOG if d.id in metrics and d.device_scope == "host"]
    for g in gpus:
        cols.extend((g, d.id) for d in _CATALOG if d.id in metrics and d.device_scope == "per_gpu")
    return cols


Key = tuple[DeviceId, str]


@dataclass(frozen=True)
class Tick:
    """One time-aligned row. Absent values are simply missing from ``values``."""

    wall_time_ms: int
    mono_elapsed_s: float
    values: Mapping[Key, float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for key, v in self.values.items():
            if v is None:
                continue
            v = float(v)
            if not math.isfinite(v):
                raise ValidationError(f"non-finite value for {column_name(*key)}: {v}")
            clean[key] = v
        object.__setattr__(self, "values", clean)

    def get(self, device: DeviceId, metric_id: str) -> Optional[float]:
        return self.values.get((device, metric_id))


@dataclass(frozen=True)
class SamplingConfig:
    interval_s: float = 0.1
    selected_metrics: frozenset[str] = field(default_factory=lambda: frozenset(_BY_ID))
    # Empty means "whatever devices the sources expose".
    devices: frozenset[DeviceId] = frozenset()
    output_dir: Path = Path("sessions")
    carbon: CarbonConfig = field(default_factory=CarbonConfig)

    def __post_init__(self):
        if not (self.interval_s >= 0.05):
            raise ValidationError(f"interval_s must be >= 0.05, got {self.interval_s}")
        sel = self.selected_metrics
        if isinstance(sel, str):
            sel = resolve_selection(sel)
        sel = frozenset(sel)
        bad = sorted(sel - _BY_ID.keys())
        if bad:
            raise ValidationError("unknown metric or category: " + ", ".join(bad))
        object.__setattr__(self, "selected_metrics", sel)
        object.__setattr__(self, "devices", frozenset(self.devices))
        object.__setattr__(self, "output_dir", Path(self.output_dir))


@dataclass
class SessionData:
    id: str
    config: SamplingConfig
    columns: list[Key]
    device_inventory: dict[str, str] = field(default_factory=dict)
    ticks: list[Tick] = field(default_factory=list)
    overrun_count: int = 0
    dropped_tick_count: int = 0
    start_wall_ms: int = 0
    end_wall_ms: Optional[int] = None
    uncollected: list[str] = field(default_factory=list)
    # source name -> index of the first tick after which it was dead
    dead_sources: dict[str, int] = field(default_factory=dict)
    intensity: Optional[IntensityRecord] = None
    carbon_note: Optional[str] = None
    totals: Optional["EnergyTotals"] = None  # noqa: F821 - filled by processing
    corrupt_rows: int = 0

    @property
    def devices(self) -> list[DeviceId]:
        return sorted({d for d, _ in self.columns})

    @property
    def gpus(self) -> list[DeviceId]:
        return [d for d in self.devices if d.cls == "gpu"]

    @property
    def achieved_interval_s(self) -> Optional[float]:
        if len(self.ticks) < 2:
            return None
        span = self.ticks[-1].mono_elapsed_s - self.ticks[0].mono_elapsed_s
        return span / (len(self.ticks) - 1)

    def series(self, device: DeviceId, metric_id: str) -> list[Optional[float]]:
        return [t.get(device, metric_id) for t in self.ticks]

    def times(self) -> list[float]:
        return [t.mono_elapsed_s for t in self.ticks]

    def iter_columns(self) -> Iterator[tuple[DeviceId, MetricDescriptor]]:
        for dev, mid in self.columns:
            yield dev, _BY_ID[mid]
