"""Read-only HTTP endpoint publishing the latest tick in Prometheus text format 0.0.4."""

from __future__ import annotations

import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

from ..errors import StartError
from ..model import Tick, catalog_ids, descriptor

log = logging.getLogger(__name__)

CONTENT_TYPE = "text/plain; version=0.0.4; charset=utf-8"
PREFIX = "woa_"


def _value(v: float) -> str:
    if v != v:
        return "NaN"
    if v in (float("inf"), float("-inf")):
        return "+Inf" if v > 0 else "-Inf"
    return repr(float(v))


def render_exposition(tick: Optional[Tick]) -> str:
    """Exposition text for one tick: a ``woa_up`` heartbeat plus one sample per present value."""
    lines = [
        "# HELP woa_up 1 while the collector is serving samples.",
        "# TYPE woa_up gauge",
        "woa_up 1",
    ]
    if tick is not None:
        by_metric: dict[str, list] = {}
        for (dev, mid), v in tick.values.items():
            by_metric.setdefault(mid, []).append((dev, v))
        for mid in catalog_ids():
            if mid not in by_metric:
                continue
            desc = descriptor(mid)
            name = PREFIX + mid
            kind = "counter" if desc.is_counter else "gauge"
            lines.append(f"# HELP {name} {desc.display_name} ({desc.unit}).")
            lines.append(f"# TYPE {name} {kind}")
            for dev, v in sorted(by_metric[mid]):
                lines.append(f'{name}{{device="{dev.label}"}} {_value(v)}')
        lines.append("# TYPE woa_tick_elapsed_seconds gauge")
        lines.append(f"woa_tick_elapsed_seconds {_value(tick.mono_elapsed_s)}")
    return "\n".join(lines) + "\n"


class _Handler(BaseHTTPRequestHandler):
    latest: Callable[[], Optional[Tick]]

    def do_GET(self):  # noqa: N802
        if self.path.split("?", 1)[0] != "/metrics":
            self._send(404, "not found\n", "text/plain; charset=utf-8")
            return
        try:
            body = render_exposition(self.server.latest())
        except Exception as exc:  # noqa: BLE001 - endpoint faults stay inside the endpoint
            log.warning("exposition render failed: %r", exc)
            self._send(500, "internal error\n", "text/plain; charset=utf-8")
            return
        self._send(200, body, CONTENT_TYPE)

    def do_POST(self):  # noqa: N802
        self._send(405, "read-only endpoint\n", "text/plain; charset=utf-8")

    do_PUT = do_DELETE = do_POST

    def _send(self, code: int, body: str, ctype: str):
        data = body.encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):
        log.debug("exposition: " + fmt, *args)


class ExpositionServer:
    """Serves ``GET /metrics`` on a daemon thread until :meth:`close`."""

    def __init__(self, latest: Callable[[], Optional[Tick]], host: str = "127.0.0.1", port: int = 0):
        try:
            self._httpd = ThreadingHTTPServer((host, port), _Handler)
        except OSError as exc:
            raise StartError(f"cannot listen on {host}:{port}: {exc}") from exc
        self._httpd.daemon_threads = True
        self._httpd.latest = latest
        self._thread = threading.Thread(target=self._httpd.serve_forever, name="exposition", daemon=True)
        self._thread.start()

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}/metrics"

    def close(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=2)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return (host or "127.0.0.1"), int(port)


def serve_exposition(session, listen: str | tuple[str, int] = "127.0.0.1:0") -> ExpositionServer:
    """Expose ``session.latest_tick`` (any object with that attribute) over HTTP."""
    host, port = parse_address(listen) if isinstance(listen, str) else listen
    return ExpositionServer(lambda: session.latest_tick, host, port)
