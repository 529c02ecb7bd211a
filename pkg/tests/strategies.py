"""Hypothesis strategies for randomized sessions."""

from hypothesis import strategies as st

from powertrace.intensity import IntensityRecord
from powertrace.model import HOST, SamplingConfig, SessionData, Tick, catalog_ids, gpu, schema_columns

finite = st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False)


@st.composite
def sessions(draw, max_ticks=40):
    ngpu = draw(st.integers(0, 2))
    metrics = draw(st.sets(st.sampled_from(catalog_ids()), min_size=1, max_size=8))
    cols = schema_columns(metrics, [HOST] + [gpu(i) for i in range(ngpu)])
    if not cols:
        cols = [(HOST, "cpu_usage_pct")]
    interval = draw(st.sampled_from([0.05, 0.1, 0.2, 1.0]))
    n = draw(st.integers(0, max_ticks))
    start = draw(st.integers(0, 2**41))
    ks = sorted(draw(st.sets(st.integers(1, 10 * max_ticks), min_size=n, max_size=n)))
    ticks = []
    for k in ks:
        elapsed = k * interval
        values = {c: draw(finite) for c in cols if draw(st.booleans())}
        ticks.append(Tick(start + round(elapsed * 1000), elapsed, values))
    intensity = draw(st.none() | st.builds(
        IntensityRecord, value=st.floats(0, 2000), kind=st.sampled_from(["marginal", "average"]),
        zone=st.sampled_from(["static", "CA-SK", "DE"]), valid_at=st.just(start), source=st.just("static"),
    ))
    return SessionData(
        id=f"s{draw(st.integers(0, 10**6))}", config=SamplingConfig(interval_s=interval), columns=cols,
        device_inventory={g.label: "Synthetic GPU" for g in (gpu(i) for i in range(ngpu))},
        ticks=ticks, start_wall_ms=start, end_wall_ms=start + 1000 * (len(ticks) + 1),
        intensity=intensity, carbon_note=None if intensity else "carbon accounting disabled",
        overrun_count=draw(st.integers(0, 3)), dropped_tick_count=draw(st.integers(0, 3)),
    )
