from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from ..errors import ConfigurationError, SourceError, ValidationError
from ..model import DeviceId, Key, descriptor


@dataclass(frozen=True)
class Reading:
    device: DeviceId
    metric: str
    raw_value: float  # already in catalog units
    read_time_ms: int

    def __post_init__(self):
        descriptor(self.metric)
        if not math.isfinite(self.raw_value):
            raise ValidationError(f"non-finite reading for {self.metric}")


@dataclass(frozen=True)
class SourceDescriptor:
    name: str
    provided_metrics: frozenset[Key]
    latency_class: str = "fast"  # "fast" | "slow"

    def __post_init__(self):
        if not self.provided_metrics:
            raise ValidationError(f"source {self.name} provides no metrics")


class Source:
    """A metric provider polled once per tick.

    Subclasses set ``self.descriptor`` and implement :meth:`_poll`. ``poll``
    receives the tick's scheduled elapsed time; hardware sources ignore it,
    synthetic and replay sources use it as their clock.
    """

    descriptor: SourceDescriptor
    inventory: dict[str, str] = {}

    def __init__(self):
        self.closed = False

    @property
    def name(self) -> str:
        return self.descriptor.name

    def poll(self, elapsed_s: float) -> list[Reading]:
        if self.closed:
            raise SourceError(f"source {self.name} is closed")
        provided = self.descriptor.provided_metrics
        return [r for r in self._poll(elapsed_s) if (r.device, r.metric) in provided]

    def _poll(self, elapsed_s: float) -> list[Reading]:
        raise NotImplementedError

    def close(self) -> None:
        self.closed = True


def check_disjoint(sources: Iterable[Source]) -> None:
    """Reject configurations where two sources claim the same (device, metric)."""
    owner: dict[Key, str] = {}
    for src in sources:
        for key in src.descriptor.provided_metrics:
            if key in owner:
                dev, mid = key
                raise ConfigurationError(
                    f"{dev.label}/{mid} is provided by both {owner[key]} and {src.name}"
                )
            owner[key] = src.name
