"""Summary statistics, pairwise Pearson correlation and bottleneck classification."""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import AnalysisUnavailable, ValidationError
from .model import DeviceId, SessionData

Series = Sequence[Optional[float]]


@dataclass(frozen=True)
class SummaryStats:
    avg: float
    max: float
    min: float
    mode: float
    sample_count: int
    absent_count: int


def summarize(series: Series) -> Optional[SummaryStats]:
    """Avg/Max/Min/Mode over present values; ``None`` when nothing is present.

    The mode is taken over values rounded to 2 decimals (the report's display
    precision); ties go to the smallest value.
    """
    present = [float(v) for v in series if v is not None]
    if not present:
        return None
    lo, hi = min(present), max(present)
    # fmean can land one ulp outside [min, max] on near-constant data
    avg = min(max(statistics.fmean(present), lo), hi)
    counts = Counter(round(v, 2) for v in present)
    top = max(counts.values())
    mode = min(v for v, c in counts.items() if c == top)
    return SummaryStats(avg, hi, lo, mode, len(present), len(series) - len(present))


def pearson(x: Series, y: Series) -> Optional[float]:
    """Pearson r with pairwise deletion.

    ``None`` when fewer than three complete pairs survive or either side has
    zero variance over those pairs.
    """
    if len(x) != len(y):
        raise ValidationError(f"series lengths differ ({len(x)} vs {len(y)})")
    pairs = [(a, b) for a, b in zip(x, y) if a is not None and b is not None]
    if len(pairs) < 3:
        return None
    arr = np.asarray(pairs, dtype=float)
    a, b = arr[:, 0], arr[:, 1]
    if np.all(a == a[0]) or np.all(b == b[0]):
        return None
    da, db = a - a.mean(), b - b.mean()
    denom = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denom == 0.0:
        return None
    return max(-1.0, min(1.0, float(np.dot(da, db)) / denom))


@dataclass(frozen=True)
class CorrelationPair:
    metric_a: str
    metric_b: str
    coefficient: float


def correlation_matrix(series: Mapping[str, Series]) -> dict[tuple[str, str], float]:
    """Pearson r for every unordered pair of series with a defined coefficient.

    Keys are ``(a, b)`` in the mapping's iteration order, so output is deterministic.
    """
    names = list(series)
    out: dict[tuple[str, str], float] = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            r = pearson(series[a], series[b])
            if r is not None:
                out[(a, b)] = r
    return out


def top_pairs(
    matrix: Mapping[tuple[str, str], Optional[float]], k: int = 5
) -> tuple[list[CorrelationPair], list[CorrelationPair]]:
    """Strongest positive (descending) and negative (ascending) pairs, at most ``k`` each."""
    seen: set[frozenset] = set()
    pairs: list[CorrelationPair] = []
    for (a, b), r in matrix.items():
        key = frozenset((a, b))
        if a == b or r is None or key in seen:
            continue
        seen.add(key)
        pairs.append(CorrelationPair(a, b, r))
    pos = sorted((p for p in pairs if p.coefficient > 0), key=lambda p: -p.coefficient)
    neg = sorted((p for p in pairs if p.coefficient < 0), key=lambda p: p.coefficient)
    return pos[:k], neg[:k]


@dataclass(frozen=True)
class BottleneckPolicy:
    """Heuristic thresholds (percent activity) for window labelling."""

    idle_below: float = 10.0
    memory_floor: float = 30.0
    sm_busy: float = 50.0
    dominance: float = 2.0


@dataclass(frozen=True)
class BottleneckLabel:
    window: tuple[float, float]
    label: str  # compute_bound | memory_bound | mixed | idle
    tensor_active: Optional[float]
    sm_active: Optional[float]
    dram_active: Optional[float]


def label_window(
    tensor: Optional[float], sm: Optional[float], dram: Optional[float],
    policy: BottleneckPolicy = BottleneckPolicy(),
) -> str:
    """Label one window from its mean activities; missing means count as 0."""
    if dram is None or (tensor is None and sm is None):
        return "mixed"
    t = tensor or 0.0
    s = sm if sm is not None else t
    d = dram
    if max(s, d) < policy.idle_below:
        return "idle"
    if t >= policy.dominance * d or (s >= policy.sm_busy and d < policy.memory_floor):
        return "compute_bound"
    if d >= policy.dominance * t and d >= policy.memory_floor:
        return "memory_bound"
    return "mixed"


def _mean(values: list[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return statistics.fmean(present) if present else None


def classify_bottlenecks(
    session: SessionData,
    window_s: float = 1.0,
    *,
    device: Optional[DeviceId] = None,
    policy: BottleneckPolicy = BottleneckPolicy(),
    duration_s: Optional[float] = None,
) -> list[BottleneckLabel]:
    """Tile ``[0, duration)`` into windows and label each from mean GPU activity.

    ``duration_s`` defaults to the last tick time plus one sampling interval,
    i.e. the end of the interval the last tick represents.
    """
    if not window_s > 0:
        raise ValidationError("window must be positive")
    gpus = session.gpus
    if device is None:
        if not gpus:
            raise AnalysisUnavailable("bottleneck classification needs a GPU device")
        device = gpus[0]
    cols = set(session.columns)
    has = {m: (device, m) in cols for m in ("tensor_active_pct", "sm_active_pct", "dram_active_pct")}
    if not has["dram_active_pct"] or not (has["tensor_active_pct"] or has["sm_active_pct"]):
        raise AnalysisUnavailable(
            "bottleneck classification needs dram_active_pct plus tensor_active_pct or sm_active_pct"
        )
    if not session.ticks:
        return []
    if duration_s is None:
        duration_s = session.ticks[-1].mono_elapsed_s + session.config.interval_s
    n = max(1, math.ceil(duration_s / window_s - 1e-9))

    buckets: list[list] = [[] for _ in range(n)]
    for tick in session.ticks:
        i = math.floor(tick.mono_elapsed_s / window_s + 1e-9)
        if 0 <= i < n:
            buckets[i].append(tick)

    labels = []
    for i, ticks in enumerate(buckets):
        start, end = i * window_s, min((i + 1) * window_s, duration_s)
        t = _mean([x.get(device, "tensor_active_pct") for x in ticks])
        s = _mean([x.get(device, "sm_active_pct") for x in ticks])
        d = _mean([x.get(device, "dram_active_pct") for x in ticks])
        label = label_window(t, s, d, policy) if ticks else "idle"
        labels.append(BottleneckLabel((start, end), label, t, s, d))
    return labels
