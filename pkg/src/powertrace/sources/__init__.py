"""Metric sources: hardware adapters plus synthetic and replay providers.

All sources share one contract (:class:`Source`), so the collector cannot tell
a GPU from a generator.
"""

from __future__ import annotations

import logging
from typing import Iterable

from ..errors import SourceUnavailable, ValidationError
from .base import Reading, Source, SourceDescriptor, check_disjoint
from .hardware import DcgmFineSource, NvmlBasicSource, RaplSource, SmiBasicSource, SystemSource, open_gpu_basic
from .replay import ReplaySource
from .synthetic import (
    DEFAULT_LEVELS,
    Phase,
    SyntheticSource,
    SyntheticTraceSpec,
    constant_spec,
    generate_synthetic,
)

log = logging.getLogger(__name__)

SOURCE_KINDS = ("gpu_basic", "gpu_fine", "cpu_energy", "system", "synthetic", "replay")
HARDWARE_KINDS = ("gpu_basic", "gpu_fine", "cpu_energy", "system")


def open_source(kind: str, **params) -> Source:
    """Open one source. Hardware kinds probe the host and may raise SourceUnavailable."""
    if kind == "gpu_basic":
        return open_gpu_basic(**params)
    if kind == "gpu_fine":
        return DcgmFineSource(**params)
    if kind == "cpu_energy":
        return RaplSource(**params)
    if kind == "system":
        return SystemSource(**params)
    if kind == "synthetic":
        spec = params.pop("spec", None) or constant_spec(3600.0)
        return SyntheticSource(spec, **params)
    if kind == "replay":
        return ReplaySource(params.pop("path"), **params)
    raise ValidationError(f"unknown source kind {kind!r}; expected one of {', '.join(SOURCE_KINDS)}")


def open_available(kinds: Iterable[str] = HARDWARE_KINDS) -> tuple[list[Source], dict[str, str]]:
    """Open every kind that probes successfully; return the rest with their reasons."""
    opened, missing = [], {}
    for kind in kinds:
        try:
            opened.append(open_source(kind))
        except SourceUnavailable as exc:
            log.info("source %s unavailable: %s", kind, exc.reason)
            missing[kind] = exc.reason
    return opened, missing


__all__ = [
    "DEFAULT_LEVELS", "DcgmFineSource", "NvmlBasicSource", "Phase", "RaplSource", "Reading",
    "ReplaySource", "SOURCE_KINDS", "SmiBasicSource", "Source", "SourceDescriptor",
    "SyntheticSource", "SyntheticTraceSpec", "SystemSource", "check_disjoint", "constant_spec",
    "generate_synthetic", "open_available", "open_source",
]
