"""Counter normalization, energy integration, unit conversion and carbon estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .intensity import IntensityRecord
from .model import HOST, SessionData

J_PER_WH = 3600.0
J_PER_KWH = 3.6e6


@dataclass(frozen=True)
class EnergyTotals:
    duration_s: float
    # "cpu", "dram", "gpu0", ... -> joules, or None when the power series was missing
    component_energy_j: dict[str, Optional[float]]
    total_energy_j: float
    total_energy_wh: float
    carbon_kg: Optional[float] = None
    intensity_used: Optional[IntensityRecord] = None
    absent_components: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if (self.carbon_kg is None) != (self.intensity_used is None):
            raise ValidationError("carbon_kg must be present exactly when intensity_used is")

    def to_json(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "component_energy_j": dict(self.component_energy_j),
            "total_energy_j": self.total_energy_j,
            "total_energy_wh": self.total_energy_wh,
            "carbon_kg": self.carbon_kg,
            "intensity_used": self.intensity_used.to_json() if self.intensity_used else None,
            "absent_components": list(self.absent_components),
        }


def _wrapped_delta(prev: float, curr: float, wrap_range: Optional[float]) -> Optional[float]:
    if curr >= prev:
        return curr - prev
    if wrap_range is None or math.isinf(wrap_range):
        return None
    return (wrap_range - prev) + curr


def counter_to_power(
    prev: tuple[float, int], curr: tuple[float, int], wrap_range_j: Optional[float] = None
) -> Optional[float]:
    """Average watts between two ``(joules, epoch_ms)`` counter readings.

    A backwards counter is treated as a single rollover at ``wrap_range_j``;
    without a wrap range it is an anomaly and yields ``None``.
    """
    (e0, t0), (e1, t1) = prev, curr
    if not t1 > t0:
        raise ValidationError(f"counter timestamps must increase ({t0} -> {t1})")
    delta = _wrapped_delta(e0, e1, wrap_range_j)
    if delta is None:
        return None
    return delta / ((t1 - t0) / 1000.0)


def counter_to_rate(
    prev_bytes: float, curr_bytes: float, dt_s: float, wrap_range: Optional[float] = None
) -> Optional[float]:
    """Byte-counter difference as GB/s (decimal gigabytes)."""
    if not dt_s > 0:
        raise ValidationError(f"rate interval must be positive, got {dt_s}")
    delta = _wrapped_delta(prev_bytes, curr_bytes, wrap_range)
    if delta is None:
        return None
    return delta / dt_s / 1e9


def integrate_energy(series: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal integral of ``(seconds, watts)`` points, in joules."""
    if len(series) < 2:
        raise ValidationError("energy integration needs at least two points")
    arr = np.asarray(series, dtype=float)
    t, w = arr[:, 0], arr[:, 1]
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValidationError("energy series timestamps must be strictly increasing")
    return float(np.sum(dt * (w[1:] + w[:-1])) / 2.0)


def joules_to_wh(j: float) -> float:
    if j < 0:
        raise ValidationError(f"energy must be non-negative, got {j}")
    return j / J_PER_WH


def estimate_carbon(energy_j: float, intensity: IntensityRecord | float) -> float:
    """Operational emissions in kg CO2eq: energy (kWh) times intensity (g/kWh)."""
    value = intensity.value if isinstance(intensity, IntensityRecord) else float(intensity)
    if energy_j < 0:
        raise ValidationError(f"energy must be non-negative, got {energy_j}")
    if not value >= 0:
        raise ValidationError(f"intensity must be non-negative, got {value}")
    return energy_j / J_PER_KWH * value / 1000.0


def _power_points(session: SessionData, device, metric_id) -> list[tuple[float, float]]:
    return [
        (t.mono_elapsed_s, v)
        for t in session.ticks
        if (v := t.get(device, metric_id)) is not None
    ]


def compute_totals(
    session: SessionData, intensity: Optional[IntensityRecord] = None
) -> EnergyTotals:
    """Session energy per component, grand total, and carbon when an intensity is given.

    Components whose power series has fewer than two present samples are
    reported as ``None`` and left out of the sum.
    """
    if len(session.ticks) < 2:
        raise ValidationError("energy totals need at least two ticks")
    components: list[tuple[str, object, str]] = [
        ("cpu", HOST, "cpu_power_w"),
        ("dram", HOST, "dram_power_w"),
    ]
    components += [(g.label, g, "power_draw_w") for g in session.gpus]

    energies: dict[str, Optional[float]] = {}
    for name, dev, mid in components:
        pts = _power_points(session, dev, mid)
        energies[name] = integrate_energy(pts) if len(pts) >= 2 else None

    present = [e for e in energies.values() if e is not None]
    total = math.fsum(present)
    carbon = estimate_carbon(total, intensity) if intensity is not None else None
    return EnergyTotals(
        duration_s=session.ticks[-1].mono_elapsed_s - session.ticks[0].mono_elapsed_s,
        component_energy_j=energies,
        total_energy_j=total,
        total_energy_wh=joules_to_wh(total),
        carbon_kg=carbon,
        intensity_used=intensity,
        absent_components=tuple(k for k, v in energies.items() if v is None),
    )


def rate_series(
    times: Sequence[float], counter: Sequence[Optional[float]], wrap_range: Optional[float] = None
) -> list[Optional[float]]:
    """Convert a per-tick byte counter into GB/s aligned with the same ticks.

    Each value covers the interval ending at its tick; the first tick, and any
    tick whose predecessor is absent, has no rate.
    """
    out: list[Optional[float]] = [None] * len(counter)
    for i in range(1, len(counter)):
        a, b = counter[i - 1], counter[i]
        if a is None or b is None:
            continue
        out[i] = counter_to_rate(a, b, times[i] - times[i - 1], wrap_range)
    return out
