"""Energy, performance and carbon telemetry for a workload run on GPU/CPU hosts.

Typical library use::

    from powertrace import SamplingConfig, open_source, start
    session = start(SamplingConfig(interval_s=0.1), [open_source("synthetic")])
    ...
    data = session.stop()
"""

__version__ = "0.1.0"

from .analytics import (
    BottleneckLabel, BottleneckPolicy, SummaryStats, classify_bottlenecks, correlation_matrix,
    label_window, pearson, summarize, top_pairs,
)
from .collector import Session, SessionHandle, align_tick, run_offline, start, stop
from .errors import (
    AlreadyStopped, AnalysisUnavailable, ConfigurationError, FormatError, IntensityError, ParseError,
    PowertraceError, ProviderError, SourceError, SourceUnavailable, StartError, ValidationError,
)
from .intensity import (
    CarbonConfig, GeoCoordinate, IntensityRecord, lookup_intensity, provider_fetch, resolve_intensity,
)
from .model import (
    HOST, DeviceId, MetricDescriptor, SamplingConfig, SessionData, Tick, column_name, descriptor,
    metric_catalog, resolve_selection, schema_columns,
)
from .persistence import read_session, write_session
from .processing import (
    EnergyTotals, compute_totals, counter_to_power, counter_to_rate, estimate_carbon, integrate_energy,
    joules_to_wh,
)
from .reporting import build_report, render_exposition, render_markdown, render_plot, serve_exposition, write_report
from .sources import (
    Phase, ReplaySource, Source, SyntheticSource, SyntheticTraceSpec, generate_synthetic, open_available,
    open_source,
)
