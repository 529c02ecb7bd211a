from __future__ import annotations

import bisect
import time
from pathlib import Path

from ..model import SessionData
from .base import Reading, Source, SourceDescriptor

_EPS = 1e-9


class ReplaySource(Source):
    """Replays a persisted session as a step function of elapsed time.

    A poll at ``t`` returns the present values of the latest row whose
    ``mono_elapsed_s`` is at or before ``t``; before the first row it returns nothing.
    """

    def __init__(self, session: SessionData | str | Path, *, name: str = "replay"):
        super().__init__()
        if not isinstance(session, SessionData):
            from ..persistence import read_session

            session = read_session(session)
        self.session = session
        self._times = [t.mono_elapsed_s for t in session.ticks]
        self.descriptor = SourceDescriptor(name, frozenset(session.columns), "fast")
        self.inventory = dict(session.device_inventory)

    def row_at(self, elapsed_s: float):
        i = bisect.bisect_right(self._times, elapsed_s + _EPS) - 1
        return self.session.ticks[i] if i >= 0 else None

    def _poll(self, elapsed_s: float) -> list[Reading]:
        row = self.row_at(elapsed_s)
        if row is None:
            return []
        now = int(time.time() * 1000)
        return [Reading(dev, mid, v, now) for (dev, mid), v in row.values.items()]
