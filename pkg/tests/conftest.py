import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from powertrace.intensity import CarbonConfig, IntensityRecord
from powertrace.model import HOST, SamplingConfig, SessionData, Tick, gpu, schema_columns
from powertrace.sources import Phase, SyntheticTraceSpec, generate_synthetic

# Component energies of the reference run, in joules (cpu, dram, gpu0).
REF_ENERGY = {"cpu": 6348.88, "dram": 388.74, "gpu0": 8918.24}
REF_DURATION_S = 43.0
REF_INTERVAL_S = 0.1


def make_session(ticks, *, metrics=None, gpus=1, interval=0.1, sid="fixture", intensity=None,
                 carbon_note=None, inventory=None, output_dir="unused"):
    if metrics is None:
        metrics = {m for t in ticks for _, m in t.values}
    cols = schema_columns(metrics, [HOST] + [gpu(i) for i in range(gpus)])
    return SessionData(
        id=sid, config=SamplingConfig(interval_s=interval, output_dir=output_dir),
        columns=cols, ticks=list(ticks), start_wall_ms=ticks[0].wall_time_ms if ticks else 0,
        device_inventory=inventory or {"gpu0": "Synthetic GPU"},
        intensity=intensity, carbon_note=carbon_note,
    )


def reference_session(intensity=None):
    """Constant powers over 43 s whose component energies match REF_ENERGY."""
    n = round(REF_DURATION_S / REF_INTERVAL_S)
    powers = {k: e / REF_DURATION_S for k, e in REF_ENERGY.items()}
    ticks = []
    for k in range(n + 1):
        t = k * REF_INTERVAL_S
        ticks.append(Tick(1_700_000_000_000 + round(t * 1000), t, {
            (HOST, "cpu_power_w"): powers["cpu"],
            (HOST, "dram_power_w"): powers["dram"],
            (gpu(0), "power_draw_w"): powers["gpu0"],
        }))
    return make_session(ticks, metrics=["cpu_power_w", "dram_power_w", "power_draw_w"],
                        sid="reference", intensity=intensity,
                        carbon_note=None if intensity else "carbon accounting disabled")


@pytest.fixture
def ref_session():
    return reference_session()


@pytest.fixture
def two_phase_spec():
    compute = Phase(5.0, {"tensor_active_pct": 60, "sm_active_pct": 90, "dram_active_pct": 15})
    memory = Phase(5.0, {"tensor_active_pct": 8, "sm_active_pct": 60, "dram_active_pct": 70})
    return SyntheticTraceSpec((compute, memory), seed=1)


@pytest.fixture
def synthetic_session(two_phase_spec):
    ticks = generate_synthetic(two_phase_spec, 0.1, start_wall_ms=1_700_000_000_000)
    return make_session(ticks, metrics=None, sid="synthetic")


def static_record(value=460.0):
    return IntensityRecord(value, "marginal", "static", 1_700_000_000_000, "static")


class StubProvider:
    """Local HTTP server standing in for an intensity provider."""

    def __init__(self, status=200, body=None):
        self.status = status
        self.body = body if body is not None else {"value": 495.4, "zone": "CA-SK", "kind": "marginal"}
        self.calls = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802
                stub.calls.append((self.path, dict(self.headers)))
                data = json.dumps(stub.body).encode()
                self.send_response(stub.status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *a):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def stub_provider():
    stubs = []

    def factory(**kw):
        s = StubProvider(**kw)
        stubs.append(s)
        return s

    yield factory
    for s in stubs:
        s.close()


@pytest.fixture
def lookup_config(tmp_path, monkeypatch):
    from powertrace.intensity import GeoCoordinate

    monkeypatch.setenv("POWERTRACE_TEST_KEY", "secret-token")

    def make(url, **kw):
        kw.setdefault("cache_path", tmp_path / "intensity-cache.json")
        kw.setdefault("timeout_s", 2.0)
        return CarbonConfig(mode="lookup", coord=GeoCoordinate(52.1, -106.6), provider="generic",
                            base_url=url, api_key_env="POWERTRACE_TEST_KEY", **kw)

    return make


# --- acceptance summary -------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {n:>2}. {title}" + (f" ({detail})" if detail else ""))
