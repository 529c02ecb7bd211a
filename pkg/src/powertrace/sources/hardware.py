"""Adapters for real hosts: NVML / nvidia-smi, DCGM, powercap RAPL counters, OS stats.

Each adapter probes in its constructor and raises SourceUnavailable with the
probe result when the host cannot serve it. Native units are converted here so
every Reading leaving an adapter is already in catalog units.
"""

from __future__ import annotations

import glob
import os
import shutil
import subprocess
import time
from pathlib import Path
from typing import Callable, Optional

from ..errors import SourceError, SourceUnavailable
from ..model import HOST, gpu
from ..processing import counter_to_power
from .base import Reading, Source, SourceDescriptor

Runner = Callable[[list[str], float], str]


def _run(cmd: list[str], timeout: float) -> str:
    return subprocess.run(cmd, capture_output=True, text=True, check=True, timeout=timeout).stdout


def _now_ms() -> int:
    return int(time.time() * 1000)


def _num(text: str) -> Optional[float]:
    try:
        v = float(text.strip())
    except ValueError:  # "N/A", "[Not Supported]", ...
        return None
    return v


# --- coarse GPU metrics ---------------------------------------------------------

SMI_FIELDS = (
    "index", "name", "power.draw", "temperature.gpu", "utilization.gpu",
    "clocks.current.graphics", "clocks.current.sm", "utilization.memory",
    "memory.used", "memory.total", "temperature.memory", "clocks.current.memory",
    "pcie.link.gen.current", "pcie.link.width.current",
)

_SMI_DIRECT = {
    "power.draw": "power_draw_w",
    "temperature.gpu": "temperature_gpu_c",
    "utilization.gpu": "gpu_utilization_pct",
    "clocks.current.graphics": "graphics_clock_mhz",
    "clocks.current.sm": "sm_clock_mhz",
    "utilization.memory": "memory_utilization_pct",
    "temperature.memory": "temperature_memory_c",
    "clocks.current.memory": "memory_clock_mhz",
    "pcie.link.gen.current": "pcie_link_gen",
    "pcie.link.width.current": "pcie_link_width",
}

BASIC_METRICS = tuple(_SMI_DIRECT.values()) + ("memory_usage_pct",)


def parse_smi_csv(text: str) -> dict[int, dict[str, object]]:
    """Parse ``nvidia-smi --query-gpu=<SMI_FIELDS> --format=csv,noheader,nounits``."""
    out: dict[int, dict[str, object]] = {}
    for line in text.strip().splitlines():
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(SMI_FIELDS):
            continue
        row = dict(zip(SMI_FIELDS, cells))
        try:
            idx = int(row["index"])
        except ValueError:
            continue
        vals: dict[str, object] = {"name": row["name"]}
        for field, mid in _SMI_DIRECT.items():
            v = _num(row[field])
            if v is not None:
                vals[mid] = v
        used, total = _num(row["memory.used"]), _num(row["memory.total"])
        if used is not None and total:
            vals["memory_usage_pct"] = 100.0 * used / total
        out[idx] = vals
    return out


class SmiBasicSource(Source):
    """Coarse GPU metrics through the ``nvidia-smi`` query interface."""

    def __init__(self, *, runner: Runner = _run, timeout_s: float = 2.0):
        super().__init__()
        self._runner = runner
        self._timeout = timeout_s
        if runner is _run and shutil.which("nvidia-smi") is None:
            raise SourceUnavailable("gpu_basic", "nvidia-smi not found on PATH")
        try:
            rows = self._query()
        except (OSError, subprocess.SubprocessError) as exc:
            raise SourceUnavailable("gpu_basic", f"nvidia-smi probe failed: {exc}") from exc
        if not rows:
            raise SourceUnavailable("gpu_basic", "nvidia-smi reported no GPUs")
        self.inventory = {f"gpu{i}": str(r["name"]) for i, r in rows.items()}
        provided = frozenset((gpu(i), m) for i in rows for m in BASIC_METRICS)
        self.descriptor = SourceDescriptor("gpu_basic", provided, "slow")

    def _query(self):
        cmd = ["nvidia-smi", "--query-gpu=" + ",".join(SMI_FIELDS), "--format=csv,noheader,nounits"]
        return parse_smi_csv(self._runner(cmd, self._timeout))

    def _poll(self, elapsed_s):
        try:
            rows = self._query()
        except (OSError, subprocess.SubprocessError) as exc:
            raise SourceError(f"nvidia-smi failed: {exc}") from exc
        now = _now_ms()
        return [
            Reading(gpu(i), mid, float(v), now)
            for i, vals in rows.items()
            for mid, v in vals.items()
            if mid != "name"
        ]


class NvmlBasicSource(Source):
    """Coarse GPU metrics through the NVML bindings (``nvidia-ml-py``)."""

    def __init__(self, *, nvml=None):
        super().__init__()
        if nvml is None:
            try:
                import pynvml as nvml  # type: ignore[no-redef]
            except ImportError as exc:
                raise SourceUnavailable("gpu_basic", "pynvml not installed") from exc
        self.nvml = nvml
        try:
            nvml.nvmlInit()
            count = nvml.nvmlDeviceGetCount()
            self._handles = [nvml.nvmlDeviceGetHandleByIndex(i) for i in range(count)]
        except Exception as exc:  # noqa: BLE001 - NVMLError hierarchy is dynamic
            raise SourceUnavailable("gpu_basic", f"NVML init failed: {exc}") from exc
        if not self._handles:
            raise SourceUnavailable("gpu_basic", "NVML reported no GPUs")
        self.inventory = {}
        for i, h in enumerate(self._handles):
            name = nvml.nvmlDeviceGetName(h)
            self.inventory[f"gpu{i}"] = name.decode() if isinstance(name, bytes) else str(name)
        metrics = [m for m in BASIC_METRICS if m != "temperature_memory_c"]
        provided = frozenset((gpu(i), m) for i in range(count) for m in metrics)
        self.descriptor = SourceDescriptor("gpu_basic", provided, "fast")

    def _readers(self, h):
        n = self.nvml
        util = lambda: n.nvmlDeviceGetUtilizationRates(h)  # noqa: E731
        mem = lambda: n.nvmlDeviceGetMemoryInfo(h)  # noqa: E731
        return {
            "power_draw_w": lambda: n.nvmlDeviceGetPowerUsage(h) / 1000.0,
            "temperature_gpu_c": lambda: n.nvmlDeviceGetTemperature(h, n.NVML_TEMPERATURE_GPU),
            "gpu_utilization_pct": lambda: util().gpu,
            "memory_utilization_pct": lambda: util().memory,
            "graphics_clock_mhz": lambda: n.nvmlDeviceGetClockInfo(h, n.NVML_CLOCK_GRAPHICS),
            "sm_clock_mhz": lambda: n.nvmlDeviceGetClockInfo(h, n.NVML_CLOCK_SM),
            "memory_clock_mhz": lambda: n.nvmlDeviceGetClockInfo(h, n.NVML_CLOCK_MEM),
            "memory_usage_pct": lambda: 100.0 * mem().used / mem().total,
            "pcie_link_gen": lambda: n.nvmlDeviceGetCurrPcieLinkGeneration(h),
            "pcie_link_width": lambda: n.nvmlDeviceGetCurrPcieLinkWidth(h),
        }

    def _poll(self, elapsed_s):
        now = _now_ms()
        out = []
        for i, h in enumerate(self._handles):
            for mid, read in self._readers(h).items():
                try:
                    out.append(Reading(gpu(i), mid, float(read()), now))
                except Exception:  # noqa: BLE001 - a failing metric is omitted
                    continue
        return out


def open_gpu_basic(**params) -> Source:
    try:
        return NvmlBasicSource(**{k: v for k, v in params.items() if k == "nvml"})
    except SourceUnavailable as nvml_exc:
        try:
            return SmiBasicSource(**{k: v for k, v in params.items() if k in ("runner", "timeout_s")})
        except SourceUnavailable as smi_exc:
            raise SourceUnavailable("gpu_basic", f"{nvml_exc.reason}; {smi_exc.reason}") from smi_exc


# --- fine-grained GPU metrics (DCGM profiling fields) ---------------------------

# DCGM field id -> (catalog id, scale). Ratios come as 0..1; byte fields as bytes/s.
DCGM_FIELDS = {
    1002: ("sm_active_pct", 100.0),
    1003: ("sm_occupancy_pct", 100.0),
    1004: ("tensor_active_pct", 100.0),
    1005: ("dram_active_pct", 100.0),
    1006: ("fp64_active_pct", 100.0),
    1007: ("fp32_active_pct", 100.0),
    1008: ("fp16_active_pct", 100.0),
    1009: ("pcie_tx_bytes", 1.0),
    1010: ("pcie_rx_bytes", 1.0),
    1011: ("nvlink_tx_bytes", 1.0),
    1012: ("nvlink_rx_bytes", 1.0),
}
FINE_METRICS = tuple(m for m, _ in DCGM_FIELDS.values())


def parse_dmon(text: str) -> dict[int, dict[int, Optional[float]]]:
    """Parse ``dcgmi dmon -e <ids> -c 1`` output into gpu -> field id -> value."""
    ids = list(DCGM_FIELDS)
    out: dict[int, dict[int, Optional[float]]] = {}
    for line in text.splitlines():
        parts = line.split()
        if len(parts) < 2 + len(ids) or parts[0] != "GPU" or not parts[1].isdigit():
            continue
        out[int(parts[1])] = {fid: _num(cell) for fid, cell in zip(ids, parts[2:])}
    return out


class DcgmFineSource(Source):
    """Profiling-level activity metrics via ``dcgmi dmon``.

    DCGM reports PCIe/NVLink traffic as rates; the adapter integrates them into
    running byte totals so the catalog's cumulative-counter contract holds.
    On hosts without NVLink the NVLink counters stay at 0.
    """

    def __init__(self, *, runner: Runner = _run, timeout_s: float = 3.0, clock=time.monotonic):
        super().__init__()
        self._runner = runner
        self._timeout = timeout_s
        self._clock = clock
        if runner is _run and shutil.which("dcgmi") is None:
            raise SourceUnavailable("gpu_fine", "dcgmi not found on PATH (DCGM host engine absent)")
        try:
            rows = self._query()
        except (OSError, subprocess.SubprocessError) as exc:
            raise SourceUnavailable("gpu_fine", f"dcgmi probe failed: {exc}") from exc
        if not rows:
            raise SourceUnavailable("gpu_fine", "dcgmi returned no GPU rows")
        self._totals = {(i, m): 0.0 for i in rows for m in FINE_METRICS if m.endswith("_bytes")}
        self._last = self._clock()
        provided = frozenset((gpu(i), m) for i in rows for m in FINE_METRICS)
        self.descriptor = SourceDescriptor("gpu_fine", provided, "slow")

    def _query(self):
        cmd = ["dcgmi", "dmon", "-e", ",".join(map(str, DCGM_FIELDS)), "-c", "1"]
        return parse_dmon(self._runner(cmd, self._timeout))

    def _poll(self, elapsed_s):
        try:
            rows = self._query()
        except (OSError, subprocess.SubprocessError) as exc:
            raise SourceError(f"dcgmi failed: {exc}") from exc
        t = self._clock()
        dt, self._last = t - self._last, t
        now = _now_ms()
        out = []
        for i, fields in rows.items():
            for fid, raw in fields.items():
                mid, scale = DCGM_FIELDS[fid]
                key = (i, mid)
                if key in self._totals:
                    if raw is not None and dt > 0:
                        self._totals[key] += raw * dt
                    out.append(Reading(gpu(i), mid, self._totals[key], now))
                elif raw is not None:
                    out.append(Reading(gpu(i), mid, raw * scale, now))
        return out


# --- CPU / DRAM energy counters (powercap) --------------------------------------


class RaplSource(Source):
    """CPU package and DRAM power from powercap cumulative energy counters.

    Counters are differenced between consecutive polls and converted to watts,
    so the first poll after opening returns nothing. The rollover range comes
    from ``max_energy_range_uj`` unless ``wrap_range_j`` overrides it.
    """

    def __init__(self, *, root: str | Path = "/sys/class/powercap", wrap_range_j: Optional[float] = None):
        super().__init__()
        self._zones: dict[str, list[tuple[Path, Optional[float]]]] = {"cpu_power_w": [], "dram_power_w": []}
        for zone in sorted(glob.glob(os.path.join(str(root), "intel-rapl:*"))):
            zone = Path(zone)
            try:
                name = (zone / "name").read_text().strip()
            except OSError:
                continue
            if name.startswith("package"):
                metric = "cpu_power_w"
            elif name == "dram":
                metric = "dram_power_w"
            else:
                continue
            try:
                (zone / "energy_uj").read_text()
            except PermissionError as exc:
                raise SourceUnavailable("cpu_energy", f"permission denied reading {zone}/energy_uj") from exc
            except OSError:
                continue
            wrap = wrap_range_j
            if wrap is None:
                try:
                    wrap = int((zone / "max_energy_range_uj").read_text()) / 1e6
                except (OSError, ValueError):
                    wrap = None
            self._zones[metric].append((zone / "energy_uj", wrap))
        if not any(self._zones.values()):
            raise SourceUnavailable("cpu_energy", f"no readable RAPL zones under {root}")
        self._prev: dict[Path, tuple[float, int]] = {}
        provided = frozenset((HOST, m) for m, zs in self._zones.items() if zs)
        self.descriptor = SourceDescriptor("cpu_energy", provided, "fast")
        self._sample()

    def _sample(self):
        now = _now_ms()
        powers: dict[str, Optional[float]] = {}
        for metric, zones in self._zones.items():
            total: Optional[float] = 0.0
            for path, wrap in zones:
                try:
                    joules = int(path.read_text()) / 1e6
                except (OSError, ValueError):
                    total = None
                    continue
                prev = self._prev.get(path)
                self._prev[path] = (joules, now)
                if prev is None or now <= prev[1]:
                    total = None
                    continue
                w = counter_to_power(prev, (joules, now), wrap)
                if w is None or total is None:
                    total = None
                else:
                    total += w
            if zones:
                powers[metric] = total
        return now, powers

    def _poll(self, elapsed_s):
        now, powers = self._sample()
        return [Reading(HOST, m, w, now) for m, w in powers.items() if w is not None]


# --- host utilisation -------------------------------------------------------------


class SystemSource(Source):
    """Host CPU and memory utilisation from OS accounting (psutil)."""

    def __init__(self, *, psutil_module=None):
        super().__init__()
        if psutil_module is None:
            try:
                import psutil as psutil_module  # type: ignore[no-redef]
            except ImportError as exc:
                raise SourceUnavailable("system", "psutil not installed") from exc
        self._ps = psutil_module
        self._ps.cpu_percent(interval=None)  # first call only primes the counters
        self.descriptor = SourceDescriptor(
            "system", frozenset({(HOST, "cpu_usage_pct"), (HOST, "dram_usage_pct")}), "fast"
        )

    def _poll(self, elapsed_s):
        now = _now_ms()
        out = []
        try:
            out.append(Reading(HOST, "cpu_usage_pct", float(self._ps.cpu_percent(interval=None)), now))
        except Exception:  # noqa: BLE001
            pass
        try:
            out.append(Reading(HOST, "dram_usage_pct", float(self._ps.virtual_memory().percent), now))
        except Exception:  # noqa: BLE001
            pass
        return out
