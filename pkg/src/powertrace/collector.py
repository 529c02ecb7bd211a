"""Measurement sessions: fixed-rate tick schedule, parallel source fan-out, streamed persistence.

Threads per session: one scheduler driving the tick clock, one pool worker per
source (a source is never polled twice concurrently), and one writer draining
a bounded queue into ``samples.csv``. The writer never blocks the scheduler:
on overflow the oldest queued tick is dropped and counted.
"""

from __future__ import annotations

import collections
import logging
import math
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .errors import AlreadyStopped, ConfigurationError, SourceError, StartError
from .intensity import IntensityRecord, try_resolve_intensity
from .model import HOST, DeviceId, Key, SamplingConfig, SessionData, Tick, schema_columns
from .persistence import SessionWriter, create_session_dir, new_session_id, write_meta
from .processing import compute_totals
from .sources.base import Reading, Source, check_disjoint

log = logging.getLogger(__name__)

QUEUE_CAPACITY = 1024
POLL_TIMEOUT_FRACTION = 0.8


def align_tick(
    readings: Iterable[Sequence[Reading]],
    wall_time_ms: int,
    mono_elapsed_s: float,
    columns: Optional[Iterable[Key]] = None,
) -> Tick:
    """Merge per-source reading lists into one Tick stamped with the scheduled time.

    Readings outside ``columns`` (when given) are ignored. A (device, metric)
    reported by two sources means the disjointness check was bypassed and is
    raised as a ConfigurationError.
    """
    allowed = set(columns) if columns is not None else None
    values: dict[Key, float] = {}
    for batch in readings:
        for r in batch:
            key = (r.device, r.metric)
            if allowed is not None and key not in allowed:
                continue
            if key in values:
                raise ConfigurationError(f"duplicate reading for {r.device.label}/{r.metric}")
            values[key] = r.raw_value
    return Tick(int(wall_time_ms), float(mono_elapsed_s), values)


@dataclass
class _Plan:
    columns: list[Key]
    uncollected: list[str]
    inventory: dict[str, str]


def plan_session(config: SamplingConfig, sources: Sequence[Source]) -> _Plan:
    """Work out the column schema and which selected metrics no source can serve."""
    check_disjoint(sources)
    provided: set[Key] = set()
    inventory: dict[str, str] = {}
    for src in sources:
        provided |= src.descriptor.provided_metrics
        inventory.update(getattr(src, "inventory", {}) or {})
    devices: set[DeviceId] = set(config.devices)
    if not any(d.cls == "gpu" for d in devices):
        devices |= {d for d, _ in provided if d.cls == "gpu"}
    devices.add(HOST)
    columns = schema_columns(config.selected_metrics, devices)
    if not provided.intersection(columns):
        raise StartError("no source provides any of the selected metrics")
    column_set = set(columns)
    served = {m for d, m in provided if (d, m) in column_set}
    uncollected = sorted(config.selected_metrics - served)
    inventory = {k: v for k, v in inventory.items() if DeviceId.parse(k) in devices}
    return _Plan(columns, uncollected, inventory)


class Session:
    """Handle on a running measurement session (see :func:`start`)."""

    def __init__(
        self,
        config: SamplingConfig,
        sources: Sequence[Source],
        *,
        session_id: Optional[str] = None,
        queue_capacity: int = QUEUE_CAPACITY,
        writer_factory: Callable[[Path, list[Key]], SessionWriter] = SessionWriter,
        resolve_intensity: Callable = try_resolve_intensity,
    ):
        self.config = config
        self.sources = list(sources)
        plan = plan_session(config, self.sources)
        self.columns = plan.columns
        self._column_set = set(plan.columns)

        self.start_wall_ms = int(time.time() * 1000)
        self.id = session_id or new_session_id(self.start_wall_ms)
        self.root = create_session_dir(config.output_dir, self.id)
        try:
            self._writer = writer_factory(self.root, self.columns)
        except OSError as exc:
            raise StartError(f"cannot open sample file in {self.root}: {exc}") from exc

        self.data = SessionData(
            id=self.id, config=config, columns=self.columns,
            device_inventory=plan.inventory, start_wall_ms=self.start_wall_ms,
            uncollected=plan.uncollected,
        )
        write_meta(self.root, self.data)

        self.overrun_count = 0
        self.dropped_tick_count = 0
        self.tick_count = 0  # ticks produced by the scheduler
        self.latest_tick: Optional[Tick] = None
        self._queue: collections.deque[Tick] = collections.deque()
        self._capacity = queue_capacity
        self._cond = threading.Condition()
        self._closing = False
        self._stop_event = threading.Event()
        self._stop_lock = threading.Lock()
        self._stopped = False
        self._dead: set[str] = set()
        self._inflight: dict[str, Future] = {}
        self._pool = ThreadPoolExecutor(max_workers=max(1, len(self.sources)), thread_name_prefix="poll")

        self._intensity: Optional[IntensityRecord] = None
        self._carbon_note: Optional[str] = None
        self._intensity_thread = threading.Thread(
            target=self._resolve_intensity, args=(resolve_intensity,), name="intensity", daemon=True
        )
        self._intensity_thread.start()

        self.start_mono = time.monotonic()
        self._writer_thread = threading.Thread(target=self._write_loop, name="writer", daemon=True)
        self._scheduler = threading.Thread(target=self._schedule_loop, name="scheduler", daemon=True)
        self._writer_thread.start()
        self._scheduler.start()

    # -- intensity -------------------------------------------------------------

    def _resolve_intensity(self, resolver):
        if self.config.carbon.mode == "off":
            self._carbon_note = "carbon accounting disabled"
            return
        record, reason = resolver(self.config.carbon, self.start_wall_ms)
        self._intensity, self._carbon_note = record, reason

    # -- scheduling ------------------------------------------------------------

    @property
    def running(self) -> bool:
        return not self._stopped

    def _schedule_loop(self):
        interval = self.config.interval_s
        k = 1
        while True:
            target = self.start_mono + k * interval
            if self._stop_event.wait(max(0.0, target - time.monotonic())):
                break
            elapsed = k * interval
            try:
                readings = self._fan_out(elapsed, target + POLL_TIMEOUT_FRACTION * interval)
                tick = align_tick(readings, self.start_wall_ms + round(elapsed * 1000), elapsed, self._column_set)
            except Exception:  # noqa: BLE001 - keep sampling; the tick is lost
                log.exception("tick %d failed", k)
                with self._cond:
                    self.dropped_tick_count += 1
            else:
                self._enqueue(tick)
            now = time.monotonic()
            nxt = k + 1
            if now > self.start_mono + nxt * interval:
                # Overrun: skip the missed slots so timestamps stay on the k*interval grid.
                self.overrun_count += 1
                nxt = math.floor((now - self.start_mono) / interval) + 1
            k = nxt

    def _fan_out(self, elapsed: float, deadline: float) -> list[list[Reading]]:
        pending: dict[Future, Source] = {}
        for src in self.sources:
            if src.name in self._dead:
                continue
            prev = self._inflight.get(src.name)
            if prev is not None:
                if not prev.done():
                    continue  # still stuck in last tick's poll
                self._check_late(src, prev)
                del self._inflight[src.name]
                if src.name in self._dead:
                    continue
            pending[self._pool.submit(src.poll, elapsed)] = src

        done, not_done = wait(pending, timeout=max(0.0, deadline - time.monotonic()))
        batches = []
        for fut in done:
            src = pending[fut]
            try:
                batches.append(fut.result())
            except SourceError as exc:
                self._mark_dead(src, exc)
            except Exception as exc:  # noqa: BLE001 - one bad poll must not stop the session
                log.warning("source %s poll failed: %r", src.name, exc)
        for fut in not_done:
            self._inflight[pending[fut].name] = fut  # late results are discarded
        return batches

    def _check_late(self, src: Source, fut: Future):
        exc = fut.exception()
        if isinstance(exc, SourceError):
            self._mark_dead(src, exc)

    def _mark_dead(self, src: Source, exc: Exception):
        if src.name not in self._dead:
            log.warning("source %s is dead from tick %d: %s", src.name, self.tick_count, exc)
            self._dead.add(src.name)
            self.data.dead_sources[src.name] = self.tick_count

    def _enqueue(self, tick: Tick):
        with self._cond:
            if len(self._queue) >= self._capacity:
                self._queue.popleft()
                self.dropped_tick_count += 1
            self._queue.append(tick)
            self.tick_count += 1
            self.latest_tick = tick
            self._cond.notify()

    # -- writer ----------------------------------------------------------------

    def _write_loop(self):
        while True:
            with self._cond:
                while not self._queue and not self._closing:
                    self._cond.wait()
                if not self._queue:
                    return
                tick = self._queue.popleft()
            if self._writer.append_tick(tick):
                self.data.ticks.append(tick)
            else:
                with self._cond:
                    self.dropped_tick_count += 1

    # -- shutdown --------------------------------------------------------------

    def stop(self) -> SessionData:
        with self._stop_lock:
            if self._stopped:
                raise AlreadyStopped(f"session {self.id} already stopped")
            self._stopped = True
        self._stop_event.set()
        self._scheduler.join()
        self._pool.shutdown(wait=False, cancel_futures=True)
        with self._cond:
            self._closing = True
            self._cond.notify_all()
        self._writer_thread.join()
        self._writer.close()
        self._intensity_thread.join(timeout=self.config.carbon.timeout_s + 1.0)
        if self._intensity_thread.is_alive():
            self._carbon_note = "intensity lookup timed out"

        data = self.data
        data.end_wall_ms = int(time.time() * 1000)
        data.overrun_count = self.overrun_count
        data.dropped_tick_count = self.dropped_tick_count
        data.intensity = self._intensity
        data.carbon_note = self._carbon_note if self._intensity is None else None
        if len(data.ticks) >= 2:
            data.totals = compute_totals(data, data.intensity)
        write_meta(self.root, data)
        return data

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if not self._stopped:
            self.stop()


SessionHandle = Session


def start(config: SamplingConfig, sources: Sequence[Source], **kwargs) -> Session:
    """Start sampling ``sources`` per ``config``; the loop is running on return."""
    return Session(config, sources, **kwargs)


def stop(handle: Session) -> SessionData:
    return handle.stop()


def run_offline(
    config: SamplingConfig,
    sources: Sequence[Source],
    ticks: Iterable[int],
    *,
    start_wall_ms: int,
    session_id: Optional[str] = None,
    intensity: Optional[IntensityRecord] = None,
    carbon_note: Optional[str] = None,
    inventory: Optional[dict[str, str]] = None,
) -> SessionData:
    """Drive the same pipeline on a virtual clock, one tick per index in ``ticks``.

    Used by replay: every tick is polled at ``k * interval`` with no wall-clock
    waiting, so a replayed session reproduces the original tick grid exactly.
    """
    plan = plan_session(config, sources)
    sid = session_id or new_session_id(start_wall_ms)
    root = create_session_dir(config.output_dir, sid)
    data = SessionData(
        id=sid, config=config, columns=plan.columns,
        device_inventory=inventory if inventory is not None else plan.inventory,
        start_wall_ms=start_wall_ms, uncollected=plan.uncollected,
    )
    writer = SessionWriter(root, plan.columns)
    cols = set(plan.columns)
    dead: set[str] = set()
    for n, k in enumerate(ticks):
        elapsed = k * config.interval_s
        batches = []
        for src in sources:
            if src.name in dead:
                continue
            try:
                batches.append(src.poll(elapsed))
            except SourceError:
                dead.add(src.name)
                data.dead_sources[src.name] = n
        tick = align_tick(batches, start_wall_ms + round(elapsed * 1000), elapsed, cols)
        if writer.append_tick(tick):
            data.ticks.append(tick)
        else:
            data.dropped_tick_count += 1
    writer.close()
    data.end_wall_ms = data.ticks[-1].wall_time_ms if data.ticks else start_wall_ms
    data.intensity = intensity
    data.carbon_note = carbon_note if intensity is None else None
    if len(data.ticks) >= 2:
        data.totals = compute_totals(data, intensity)
    write_meta(root, data)
    return data
