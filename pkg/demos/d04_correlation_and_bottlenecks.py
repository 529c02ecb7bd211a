"""
Correlations and bottleneck phases
==================================

Find which metrics move together in a trace, then label each window of the
run as compute bound, memory bound, mixed or idle.
"""

import random

from powertrace import (
    Phase, SamplingConfig, SessionData, SyntheticTraceSpec, Tick, classify_bottlenecks, correlation_matrix,
    generate_synthetic, pearson, top_pairs,
)
from powertrace.model import gpu, schema_columns
from powertrace.reporting.report import session_series

# Occupancy and tensor activity trade off against each other.
rng = random.Random(0)
occupancy = [rng.uniform(5, 95) for _ in range(500)]
tensor = [100 - o + rng.uniform(-3, 3) for o in occupancy]
print(f"r(occupancy, tensor) = {pearson(occupancy, tensor):.3f}")

# Absent samples are dropped pairwise rather than imputed.
print(pearson([1, 2, None, 4, 5], [2, 4, 100, None, 10]))

# A two-phase trace: prefill-like then decode-like.
spec = SyntheticTraceSpec((
    Phase(5.0, {"tensor_active_pct": 60, "sm_active_pct": 90, "dram_active_pct": 15}),
    Phase(5.0, {"tensor_active_pct": 8, "sm_active_pct": 60, "dram_active_pct": 70}),
), seed=1)
ticks = generate_synthetic(spec, 0.1)
metrics = sorted({m for t in ticks for _, m in t.values})
session = SessionData(id="demo", config=SamplingConfig(interval_s=0.1), columns=schema_columns(metrics, [gpu(0)]),
                      device_inventory={"gpu0": "Synthetic GPU"}, ticks=ticks)

series = session_series(session)
pos, neg = top_pairs(correlation_matrix(series), k=3)
print("strongest positive:", [(p.metric_a, p.metric_b, round(p.coefficient, 3)) for p in pos])
print("strongest negative:", [(p.metric_a, p.metric_b, round(p.coefficient, 3)) for p in neg])

for label in classify_bottlenecks(session, window_s=1.0):
    lo, hi = label.window
    print(f"{lo:4.1f}-{hi:4.1f} s  {label.label}")
