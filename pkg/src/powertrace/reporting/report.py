"""Execution report: summary model built from a session, rendered to markdown or console text."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..analytics import CorrelationPair, SummaryStats, correlation_matrix, summarize, top_pairs
from ..errors import ValidationError
from ..model import HOST, DeviceId, SessionData, column_name, descriptor
from ..processing import EnergyTotals, compute_totals, rate_series

GPU_CATEGORIES = ("energy", "compute", "memory", "communication")
# Host rows as (component, metric id, row label), in report order.
HOST_ROWS = (
    ("CPU", "cpu_usage_pct", "Usage [%]"),
    ("CPU", "cpu_power_w", "Power [W]"),
    ("DRAM", "dram_usage_pct", "Usage [%]"),
    ("DRAM", "dram_power_w", "Power [W]"),
)
ABSENT = "—"


@dataclass(frozen=True)
class StatRow:
    group: str  # component (host) or category (GPU)
    column: str
    label: str
    stats: Optional[SummaryStats]


@dataclass(frozen=True)
class GpuSection:
    title: str
    rows: tuple[StatRow, ...]


@dataclass(frozen=True)
class ReportModel:
    duration_s: float
    totals: EnergyTotals
    energy_rows: tuple[tuple[str, Optional[float]], ...]
    carbon_g: Optional[float]
    carbon_unavailable: Optional[str]
    intensity_line: Optional[str]
    host_rows: tuple[StatRow, ...]
    gpu_sections: tuple[GpuSection, ...]
    positive: tuple[CorrelationPair, ...]
    negative: tuple[CorrelationPair, ...]
    labels: dict = field(default_factory=dict)  # series column -> display label
    notes: tuple[str, ...] = ()


def session_series(session: SessionData) -> dict[str, list[Optional[float]]]:
    """Per-column series in report units: counters become GB/s rates."""
    times = session.times()
    out = {}
    for dev, desc in session.iter_columns():
        raw = session.series(dev, desc.id)
        out[column_name(dev, desc.id)] = rate_series(times, raw, desc.wrap_range) if desc.is_counter else raw
    return out


def _label(dev: DeviceId, metric_id: str, multi_gpu: bool) -> str:
    name = descriptor(metric_id).report_name
    return f"GPU {dev.index} {name}" if dev.cls == "gpu" and multi_gpu else name


def build_report(session: SessionData, k: int = 5) -> ReportModel:
    """Collect every number the rendered report shows; renderers only format."""
    if len(session.ticks) < 2:
        raise ValidationError("report needs a session with at least two ticks")
    totals = compute_totals(session, session.intensity)
    series = session_series(session)
    gpus = session.gpus
    multi = len(gpus) > 1
    labels = {column_name(d, m): _label(d, m, multi) for d, m in session.columns}

    host_rows = tuple(
        StatRow(comp, mid, label, summarize(series[mid]))
        for comp, mid, label in HOST_ROWS
        if (HOST, mid) in session.columns
    )
    sections = []
    for g in gpus:
        rows = []
        for cat in GPU_CATEGORIES:
            for dev, desc in session.iter_columns():
                if dev == g and desc.category == cat:
                    col = column_name(dev, desc.id)
                    rows.append(StatRow(cat.capitalize(), col, desc.report_name, summarize(series[col])))
        model = session.device_inventory.get(g.label)
        title = f"GPU {g.index} Detailed Statistics" + (f" ({model})" if model else "")
        sections.append(GpuSection(title, tuple(rows)))

    pos, neg = top_pairs(correlation_matrix(series), k)

    energy_rows = [("CPU Energy [J]", totals.component_energy_j.get("cpu")),
                   ("DRAM Energy [J]", totals.component_energy_j.get("dram"))]
    energy_rows += [(f"GPU {g.index} Energy [J]", totals.component_energy_j.get(g.label)) for g in gpus]

    notes = []
    if session.uncollected:
        notes.append("Uncollected metrics (no source available): " + ", ".join(session.uncollected))
    for name, idx in sorted(session.dead_sources.items()):
        notes.append(f"Source {name} died at tick {idx}; its metrics are absent from then on")
    absent = list(totals.absent_components)
    if absent:
        notes.append("Energy components without a power series (excluded from total): " + ", ".join(absent))
    if session.dropped_tick_count or session.overrun_count:
        notes.append(f"Dropped ticks: {session.dropped_tick_count}; schedule overruns: {session.overrun_count}")
    if session.corrupt_rows:
        notes.append(f"Corrupt trailing rows skipped on load: {session.corrupt_rows}")

    intensity = totals.intensity_used
    intensity_line = None
    carbon_unavailable = None
    if intensity is not None:
        intensity_line = (f"{intensity.value:.2f} gCO2eq/kWh ({intensity.kind}, zone {intensity.zone}, "
                          f"source {intensity.source})")
    else:
        carbon_unavailable = session.carbon_note or "no carbon intensity available"
        notes.append(f"Carbon unavailable: {carbon_unavailable}")

    return ReportModel(
        duration_s=totals.duration_s,
        totals=totals,
        energy_rows=tuple(energy_rows),
        carbon_g=totals.carbon_kg * 1000.0 if totals.carbon_kg is not None else None,
        carbon_unavailable=carbon_unavailable,
        intensity_line=intensity_line,
        host_rows=host_rows,
        gpu_sections=tuple(sections),
        positive=tuple(pos),
        negative=tuple(neg),
        labels=labels,
        notes=tuple(notes),
    )


def _f(v: Optional[float], digits: int = 2) -> str:
    return ABSENT if v is None else f"{v:.{digits}f}"


def _stat_cells(s: Optional[SummaryStats]) -> str:
    if s is None:
        return f"{ABSENT} | {ABSENT} | {ABSENT} | {ABSENT}"
    return f"{_f(s.avg)} | {_f(s.max)} | {_f(s.min)} | {_f(s.mode)}"


def render_markdown(model: ReportModel) -> str:
    """Render the report. Output depends only on ``model``."""
    t = model.totals
    out = ["# Execution Report", "", "## Overall Performance Metric", "",
           "| Metric | Value |", "|---|---:|",
           f"| Total Time [s] | {_f(model.duration_s)} |"]
    out += [f"| {name} | {_f(v)} |" for name, v in model.energy_rows]
    out.append(f"| Total Energy [J] | {_f(t.total_energy_j)} |")
    out.append(f"| Total Energy [Wh] | {_f(t.total_energy_wh)} |")
    if t.carbon_kg is not None:
        out.append(f"| Carbon Emissions [kg CO2eq] | {_f(t.carbon_kg, 4)} |")
        out.append(f"| Carbon Emissions [g CO2eq] | {_f(model.carbon_g)} |")
    out.append("")
    if model.carbon_unavailable is not None:
        out += [f"Carbon Emissions: unavailable ({model.carbon_unavailable})", ""]
    else:
        out += [f"Carbon intensity: {model.intensity_line}", ""]

    if model.host_rows:
        out += ["## Host", "", "| Component | Metric | Avg | Max | Min | Mode |", "|---|---|---:|---:|---:|---:|"]
        out += [f"| {r.group} | {r.label} | {_stat_cells(r.stats)} |" for r in model.host_rows]
        out.append("")

    for sec in model.gpu_sections:
        out += [f"## {sec.title}", "", "| Category | Metric | Avg | Max | Min | Mode |",
                "|---|---|---:|---:|---:|---:|"]
        out += [f"| {r.group} | {r.label} | {_stat_cells(r.stats)} |" for r in sec.rows]
        out.append("")

    out += ["## Top Positively and Negatively Correlated Metric Pairs", ""]
    for title, pairs in (("Positive", model.positive), ("Negative", model.negative)):
        out += [f"### {title}", ""]
        if not pairs:
            out += ["No defined correlations.", ""]
            continue
        out += ["| Metric A | Metric B | Coeff. |", "|---|---|---:|"]
        out += [f"| {model.labels.get(p.metric_a, p.metric_a)} | {model.labels.get(p.metric_b, p.metric_b)} "
                f"| {p.coefficient:.3f} |" for p in pairs]
        out.append("")

    if model.notes:
        out += ["## Notes", ""]
        out += [f"- {n}" for n in model.notes]
        out.append("")
    return "\n".join(out)


def render_console(model: ReportModel) -> str:
    """Plain-text view derived from the markdown (table pipes and headings stripped)."""
    lines = []
    for line in render_markdown(model).splitlines():
        if line.startswith("|---"):
            continue
        if line.startswith("|"):
            line = "  ".join(c.strip() for c in line.strip("|").split("|"))
        lines.append(line.lstrip("#").strip() if line.startswith("#") else line)
    return "\n".join(lines)


def write_report(session: SessionData, root: str | Path) -> Path:
    """Render ``session`` to ``<root>/report.md`` and return the path."""
    from ..persistence import REPORT_FILE

    path = Path(root) / REPORT_FILE
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_markdown(build_report(session)))
    return path
