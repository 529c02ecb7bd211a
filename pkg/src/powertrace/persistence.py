"""On-disk session layout: ``meta.json`` + ``samples.csv`` under ``<output_dir>/<session_id>/``.

``samples.csv`` columns are ``wall_time_ms,mono_elapsed_s`` followed by host
metrics and then one ``g{i}_<metric_id>`` block per GPU, all in catalog order.
Floats are written with their shortest round-trip representation and absent
values as empty cells. ``meta.json`` declares the column list; the CSV header
must match it exactly.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import secrets
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .errors import FormatError, StartError, ValidationError
from .intensity import CarbonConfig, IntensityRecord
from .model import DeviceId, Key, SamplingConfig, SessionData, Tick, column_name, parse_column

log = logging.getLogger(__name__)

META_FILE = "meta.json"
SAMPLES_FILE = "samples.csv"
REPORT_FILE = "report.md"
PLOTS_DIR = "plots"
FORMAT_VERSION = 1
TIME_COLUMNS = ("wall_time_ms", "mono_elapsed_s")

FLUSH_ROWS = 50
FLUSH_SECONDS = 1.0


def new_session_id(start_wall_ms: Optional[int] = None) -> str:
    if start_wall_ms is None:
        start_wall_ms = int(time.time() * 1000)
    ts = datetime.fromtimestamp(start_wall_ms / 1000, tz=timezone.utc)
    return ts.strftime("%Y%m%dT%H%M%SZ") + "-" + secrets.token_hex(2)


def header_for(columns: list[Key]) -> list[str]:
    return list(TIME_COLUMNS) + [column_name(d, m) for d, m in columns]


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def config_to_json(config: SamplingConfig) -> dict:
    return {
        "interval_s": config.interval_s,
        "selected_metrics": sorted(config.selected_metrics),
        "devices": [d.label for d in sorted(config.devices)],
        "output_dir": str(config.output_dir),
        "carbon": config.carbon.to_json(),
    }


def config_from_json(d: dict) -> SamplingConfig:
    return SamplingConfig(
        interval_s=d["interval_s"],
        selected_metrics=frozenset(d["selected_metrics"]),
        devices=frozenset(DeviceId.parse(x) for x in d.get("devices", [])),
        output_dir=Path(d.get("output_dir", ".")),
        carbon=CarbonConfig.from_json(d.get("carbon", {})),
    )


def session_meta(session: SessionData) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "session_id": session.id,
        "start_wall_ms": session.start_wall_ms,
        "end_wall_ms": session.end_wall_ms,
        "achieved_interval_s": session.achieved_interval_s,
        "tick_count": len(session.ticks),
        "config": config_to_json(session.config),
        "columns": header_for(session.columns),
        "device_inventory": dict(session.device_inventory),
        "uncollected_metrics": list(session.uncollected),
        "dead_sources": dict(session.dead_sources),
        "overrun_count": session.overrun_count,
        "dropped_tick_count": session.dropped_tick_count,
        "intensity": session.intensity.to_json() if session.intensity else None,
        "carbon_note": session.carbon_note,
        "totals": session.totals.to_json() if session.totals else None,
    }


def write_meta(root: Path, session: SessionData) -> None:
    tmp = root / (META_FILE + ".tmp")
    tmp.write_text(json.dumps(session_meta(session), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    os.replace(tmp, root / META_FILE)


def create_session_dir(output_dir: Path, session_id: str) -> Path:
    """Create ``<output_dir>/<session_id>`` in one step, refusing to reuse a directory."""
    output_dir = Path(output_dir)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        root = output_dir / session_id
        root.mkdir()
    except OSError as exc:
        raise StartError(f"cannot create session directory under {output_dir}: {exc}") from exc
    if not os.access(root, os.W_OK):
        raise StartError(f"session directory {root} is not writable")
    return root


class SessionWriter:
    """Appends ticks to ``samples.csv``; after an I/O error it refuses further rows."""

    def __init__(self, root: Path, columns: list[Key]):
        self.root = Path(root)
        self.columns = list(columns)
        self.failed: Optional[str] = None
        self.rows_written = 0
        self._unflushed = 0
        self._last_flush = time.monotonic()
        self._fh = open(self.root / SAMPLES_FILE, "w", encoding="utf-8", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(header_for(self.columns))
        self._fh.flush()

    def append_tick(self, tick: Tick) -> bool:
        """Write one row. Returns False (row dropped) if the writer has failed."""
        if self.failed is not None:
            return False
        row = [str(int(tick.wall_time_ms)), repr(float(tick.mono_elapsed_s))]
        row += [_fmt(tick.values.get(key)) for key in self.columns]
        try:
            self._csv.writerow(row)
            self.rows_written += 1
            self._unflushed += 1
            if self._unflushed >= FLUSH_ROWS or time.monotonic() - self._last_flush >= FLUSH_SECONDS:
                self.flush()
        except (OSError, ValueError) as exc:
            self.failed = str(exc)
            log.error("sample writer failed, further ticks will be dropped: %s", exc)
            return False
        return True

    def flush(self) -> None:
        self._fh.flush()
        self._unflushed = 0
        self._last_flush = time.monotonic()

    def close(self) -> None:
        try:
            if not self._fh.closed:
                self._fh.flush()
                self._fh.close()
        except OSError as exc:
            self.failed = self.failed or str(exc)


def append_tick(writer: SessionWriter, tick: Tick) -> bool:
    return writer.append_tick(tick)


def write_session(session: SessionData, output_dir: Path) -> Path:
    """Persist a complete in-memory session (used for fixtures and replays)."""
    root = create_session_dir(output_dir, session.id)
    writer = SessionWriter(root, session.columns)
    for tick in session.ticks:
        writer.append_tick(tick)
    writer.close()
    write_meta(root, session)
    return root


def _parse_row(cells: list[str], columns: list[Key]) -> Tick:
    if len(cells) != len(columns) + 2:
        raise ValueError(f"expected {len(columns) + 2} fields, got {len(cells)}")
    values = {key: float(c) for key, c in zip(columns, cells[2:]) if c != ""}
    return Tick(int(cells[0]), float(cells[1]), values)


def read_session(path: str | Path) -> SessionData:
    """Load a session directory written by the collector or :func:`write_session`."""
    root = Path(path)
    meta_path, csv_path = root / META_FILE, root / SAMPLES_FILE
    if not meta_path.is_file():
        raise FormatError(f"{root}: {META_FILE} not found")
    if not csv_path.is_file():
        raise FormatError(f"{root}: {SAMPLES_FILE} not found")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        declared = list(meta["columns"])
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{meta_path}: unreadable metadata: {exc}") from exc

    text = csv_path.read_text(encoding="utf-8")
    lines = text.split("\n")
    torn_tail = lines[-1] != ""  # last row not LF-terminated: interrupted write
    if not torn_tail:
        lines.pop()
    if not lines:
        raise FormatError(f"{csv_path}: missing header row")
    header = next(csv.reader([lines[0]]))
    if header != declared:
        only_csv = [c for c in header if c not in declared]
        only_meta = [c for c in declared if c not in header]
        detail = f"csv-only={only_csv} meta-only={only_meta}"
        if not only_csv and not only_meta:
            detail = "same columns in a different order"
        raise FormatError(f"{root}: header does not match meta.json columns ({detail})")
    if tuple(header[:2]) != TIME_COLUMNS:
        raise FormatError(f"{csv_path}: first columns must be {', '.join(TIME_COLUMNS)}")
    try:
        columns = [parse_column(c) for c in header[2:]]
    except ValueError as exc:
        raise FormatError(f"{csv_path}: {exc}") from exc

    body = lines[1:]
    ticks: list[Tick] = []
    corrupt = 0
    for i, line in enumerate(body):
        last = i == len(body) - 1
        try:
            if last and torn_tail:
                raise ValueError("row is not newline-terminated")
            cells = next(csv.reader(io.StringIO(line)))
            tick = _parse_row(cells, columns)
        except (ValueError, StopIteration) as exc:
            if not last:
                raise FormatError(f"{csv_path}: corrupt row {i + 2}: {exc}") from exc
            corrupt += 1
            log.warning("%s: skipping corrupt trailing row %d: %s", csv_path, i + 2, exc)
            continue
        if ticks and not tick.mono_elapsed_s > ticks[-1].mono_elapsed_s:
            raise FormatError(f"{csv_path}: row {i + 2} is out of order")
        ticks.append(tick)

    intensity = IntensityRecord.from_json(meta["intensity"]) if meta.get("intensity") else None
    session = SessionData(
        id=meta.get("session_id", root.name),
        config=config_from_json(meta["config"]),
        columns=columns,
        device_inventory=dict(meta.get("device_inventory", {})),
        ticks=ticks,
        overrun_count=int(meta.get("overrun_count", 0)),
        dropped_tick_count=int(meta.get("dropped_tick_count", 0)),
        start_wall_ms=int(meta.get("start_wall_ms", 0)),
        end_wall_ms=meta.get("end_wall_ms"),
        uncollected=list(meta.get("uncollected_metrics", [])),
        dead_sources={k: int(v) for k, v in meta.get("dead_sources", {}).items()},
        intensity=intensity,
        carbon_note=meta.get("carbon_note"),
        corrupt_rows=corrupt,
    )
    if len(ticks) >= 2:
        from .processing import compute_totals

        try:
            session.totals = compute_totals(session, intensity)
        except ValidationError as exc:  # e.g. negative power samples
            log.warning("%s: energy totals unavailable: %s", root, exc)
    return session
