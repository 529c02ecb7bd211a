"""
Scraping a live session
=======================

Serve the latest tick over HTTP in the text exposition format and scrape it
while sampling continues.
"""

import tempfile
import time
import urllib.request
from pathlib import Path

from powertrace import SamplingConfig, SyntheticSource, render_exposition, serve_exposition, start
from powertrace.sources import constant_spec

session = start(SamplingConfig(interval_s=0.1, output_dir=Path(tempfile.mkdtemp())),
                [SyntheticSource(constant_spec(30, {"power_draw_w": 250, "sm_active_pct": 70, "pcie_tx_bytes": 1e9}),
                                 metrics=["power_draw_w", "sm_active_pct", "pcie_tx_bytes"])])
server = serve_exposition(session, "127.0.0.1:0")
print("serving", server.url)

time.sleep(0.5)
with urllib.request.urlopen(server.url) as resp:
    print(resp.headers["Content-Type"])
    print(resp.read().decode())

server.close()
session.stop()

# Before the first tick only the heartbeat is published.
print(render_exposition(None))
