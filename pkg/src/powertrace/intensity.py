"""Carbon-intensity resolution: static override, local cache file, HTTP provider."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import requests

from .errors import IntensityError, ParseError, ProviderError, ValidationError

log = logging.getLogger(__name__)

KINDS = ("marginal", "average")
DEFAULT_STALENESS_S = 3600.0
DEFAULT_TIMEOUT_S = 5.0


@dataclass(frozen=True)
class GeoCoordinate:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValidationError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValidationError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class IntensityRecord:
    """Grid carbon intensity in gCO2eq/kWh."""

    value: float
    kind: str
    zone: str
    valid_at: int  # epoch ms
    source: str  # "static", "cache" or a provider name

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValidationError(f"intensity must be finite and >= 0, got {self.value}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown intensity kind {self.kind!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "IntensityRecord":
        return cls(float(d["value"]), d["kind"], d["zone"], int(d["valid_at"]), d["source"])


@dataclass(frozen=True)
class Provider:
    """Shape of one provider's latest-intensity endpoint."""

    name: str
    base_url: str
    path: str
    value_field: str
    zone_field: str
    native_kind: str
    # Providers that accept a ``kind`` query parameter and echo it back.
    distinguishes_kind: bool = False
    # Header carrying the API key; "{key}" is substituted.
    auth_header: tuple[str, str] = ("Authorization", "Bearer {key}")


PROVIDERS = {
    "electricitymaps": Provider(
        "electricitymaps", "https://api.electricitymap.org", "/v3/carbon-intensity/latest",
        value_field="carbonIntensity", zone_field="zone", native_kind="average",
        auth_header=("auth-token", "{key}"),
    ),
    # Minimal JSON contract {"value", "zone", "kind"}; used by self-hosted relays and tests.
    "generic": Provider(
        "generic", "http://127.0.0.1:8080", "/intensity/latest",
        value_field="value", zone_field="zone", native_kind="marginal",
        distinguishes_kind=True,
    ),
}


@dataclass(frozen=True)
class CarbonConfig:
    mode: str = "off"  # "off" | "static" | "lookup"
    value: Optional[float] = None  # static mode
    kind: str = "marginal"
    coord: Optional[GeoCoordinate] = None
    provider: str = "electricitymaps"
    base_url: Optional[str] = None  # overrides the provider default
    api_key_env: str = "POWERTRACE_INTENSITY_API_KEY"
    cache_path: Optional[Path] = None
    staleness_s: float = DEFAULT_STALENESS_S
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self):
        if self.mode not in ("off", "static", "lookup"):
            raise ValidationError(f"unknown carbon mode {self.mode!r}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown intensity kind {self.kind!r}")
        if self.mode == "static" and (self.value is None or not self.value >= 0):
            raise ValidationError("static carbon mode needs an intensity value >= 0")
        if self.mode == "lookup":
            if self.coord is None:
                raise ValidationError("lookup carbon mode needs coordinates")
            if self.provider not in PROVIDERS:
                raise ValidationError(f"unknown intensity provider {self.provider!r}")
        if not self.staleness_s > 0:
            raise ValidationError("staleness limit must be > 0")
        if self.cache_path is not None:
            object.__setattr__(self, "cache_path", Path(self.cache_path))

    def to_json(self) -> dict:
        # The key itself is never persisted, only the variable name.
        d = asdict(self)
        d["cache_path"] = str(self.cache_path) if self.cache_path else None
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CarbonConfig":
        d = dict(d)
        if d.get("coord"):
            d["coord"] = GeoCoordinate(**d["coord"])
        return cls(**d)


def _cache_key(config: CarbonConfig) -> dict:
    return {
        "provider": config.provider,
        "coord": [config.coord.lat, config.coord.lon],
        "kind": config.kind,
    }


def read_cache(path: Path, key: dict) -> Optional[tuple[IntensityRecord, int]]:
    """Return ``(record, fetched_at_ms)`` if the cache file holds ``key``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("key") != key:
            return None
        return IntensityRecord.from_json(doc["record"]), int(doc["fetched_at_ms"])
    except FileNotFoundError:
        return None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        log.warning("ignoring unreadable intensity cache %s: %s", path, exc)
        return None


def write_cache(path: Path, key: dict, record: IntensityRecord, fetched_at_ms: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    doc = {"key": key, "record": record.to_json(), "fetched_at_ms": fetched_at_ms}
    tmp.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def provider_fetch(
    provider: Provider | str,
    coord: GeoCoordinate,
    kind: str = "marginal",
    *,
    api_key: Optional[str],
    base_url: Optional[str] = None,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    now_ms: Optional[int] = None,
) -> IntensityRecord:
    """One GET against the provider's latest-intensity endpoint."""
    if isinstance(provider, str):
        provider = PROVIDERS[provider]
    if not api_key:
        raise ProviderError(f"no API key for provider {provider.name}")
    url = (base_url or provider.base_url).rstrip("/") + provider.path
    params = {"lat": coord.lat, "lon": coord.lon}
    if provider.distinguishes_kind:
        params["kind"] = kind
    name, template = provider.auth_header
    try:
        resp = requests.get(
            url, params=params, timeout=timeout_s,
            headers={name: template.format(key=api_key), "Accept": "application/json"},
        )
    except requests.RequestException as exc:
        raise ProviderError(f"{provider.name} unreachable: {exc}") from exc
    if not 200 <= resp.status_code < 300:
        raise ProviderError(f"{provider.name} returned HTTP {resp.status_code}")

    try:
        body = resp.json()
        raw = body[provider.value_field]
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise TypeError(f"{provider.value_field}={raw!r} is not a number")
        zone = str(body.get(provider.zone_field) or "")
        native = body.get("kind") if provider.distinguishes_kind else None
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"malformed {provider.name} response: {exc}") from exc

    record_kind = native if native in KINDS else (kind if provider.distinguishes_kind else provider.native_kind)
    try:
        return IntensityRecord(
            value=float(raw), kind=record_kind, zone=zone,
            valid_at=now_ms if now_ms is not None else int(time.time() * 1000),
            source=provider.name,
        )
    except ValidationError as exc:
        raise ParseError(str(exc)) from exc


Fetcher = Callable[..., IntensityRecord]


def lookup_intensity(
    config: CarbonConfig, at_ms: int, *, fetch: Fetcher = provider_fetch
) -> Optional[IntensityRecord]:
    """Strict variant of :func:`resolve_intensity`: raises IntensityError on failure."""
    if config.mode == "off":
        return None
    if config.mode == "static":
        return IntensityRecord(float(config.value), config.kind, "static", at_ms, "static")

    key = _cache_key(config)
    cached = read_cache(config.cache_path, key) if config.cache_path else None
    if cached is not None:
        record, fetched_at = cached
        if 0 <= at_ms - fetched_at < config.staleness_s * 1000:
            return IntensityRecord(record.value, record.kind, record.zone, record.valid_at, "cache")

    record = fetch(
        config.provider, config.coord, config.kind,
        api_key=os.environ.get(config.api_key_env),
        base_url=config.base_url, timeout_s=config.timeout_s, now_ms=at_ms,
    )
    if config.cache_path:
        try:
            write_cache(config.cache_path, key, record, at_ms)
        except OSError as exc:
            log.warning("could not refresh intensity cache %s: %s", config.cache_path, exc)
    return record


def try_resolve_intensity(
    config: CarbonConfig, at_ms: Optional[int] = None, *, fetch: Fetcher = provider_fetch
) -> tuple[Optional[IntensityRecord], Optional[str]]:
    """Resolve, returning ``(record, None)`` or ``(None, reason)``. Never raises."""
    if at_ms is None:
        at_ms = int(time.time() * 1000)
    if config.mode == "off":
        return None, "carbon accounting disabled"
    try:
        return lookup_intensity(config, at_ms, fetch=fetch), None
    except IntensityError as exc:
        log.warning("carbon intensity unavailable: %s", exc)
        return None, str(exc)
    except Exception as exc:  # noqa: BLE001 - lookup must never abort a session
        log.warning("carbon intensity unavailable: %r", exc)
        return None, f"unexpected lookup failure: {exc!r}"


def resolve_intensity(
    config: CarbonConfig, at_ms: Optional[int] = None, *, fetch: Fetcher = provider_fetch
) -> Optional[IntensityRecord]:
    """Resolve the intensity record for a session, or ``None`` when unavailable."""
    return try_resolve_intensity(config, at_ms, fetch=fetch)[0]
