import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import pytest

from powertrace.cli import main
from powertrace.persistence import read_session, write_session
from powertrace.reporting import build_report
from powertrace.sources import constant_spec, generate_synthetic

from conftest import make_session

CLI = [sys.executable, "-m", "powertrace"]


def _session_dirs(out):
    return sorted(p for p in Path(out).iterdir() if p.is_dir())


def _cli(*args, **kw):
    return subprocess.run(CLI + list(args), capture_output=True, text=True, timeout=60, **kw)


def test_run_sleep(tmp_path):
    r = _cli("run", "--interval", "0.1", "--sources", "synthetic", "--out", str(tmp_path), "--", "sleep", "1")
    assert r.returncode == 0, r.stderr
    [d] = _session_dirs(tmp_path)
    data = read_session(d)
    assert 8 <= len(data.ticks) <= 12
    assert (d / "report.md").is_file()
    assert "session written to" in r.stderr and r.stdout == ""


def test_run_propagates_child_failure(tmp_path):
    r = _cli("run", "--sources", "synthetic", "--out", str(tmp_path), "--", "sh", "-c", "sleep 0.4; exit 3")
    assert r.returncode == 3
    [d] = _session_dirs(tmp_path)
    assert (d / "report.md").is_file() and len(read_session(d).ticks) >= 2


def test_run_false(tmp_path):
    r = _cli("run", "--sources", "synthetic", "--out", str(tmp_path), "--", "false")
    assert r.returncode != 0
    assert len(_session_dirs(tmp_path)) == 1


def test_bad_metrics_never_spawn(tmp_path):
    marker = tmp_path / "spawned"
    rc = main(["run", "--metrics", "bogus", "--out", str(tmp_path / "s"), "--", "touch", str(marker)])
    assert rc == 1 and not marker.exists() and not (tmp_path / "s").exists()


def test_missing_child_command(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path)]) == 1
    assert main(["run", "--out", str(tmp_path), "--", "definitely-not-a-command-xyz"]) == 127


def test_invalid_flags_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--carbon", "sometimes", "--", "true"])
    assert exc.value.code == 1
    assert main(["run", "--interval", "0.001", "--", "true"]) == 1
    assert main(["run", "--carbon", "lookup", "--", "true"]) == 1  # no coordinates


def test_stdio_and_env_pass_through(tmp_path):
    env = dict(os.environ, PT_TEST_VAR="kept")
    r = subprocess.run(
        CLI + ["run", "--sources", "synthetic", "--out", str(tmp_path), "--quiet", "--",
               "sh", "-c", 'cat; printf "%s\\n" "$PT_TEST_VAR"; echo err >&2'],
        input="hello\n", capture_output=True, text=True, timeout=60, env=env,
    )
    assert r.returncode == 0
    assert r.stdout == "hello\nkept\n"
    assert r.stderr.startswith("err\n")


def test_interrupt_stops_child_then_flushes(tmp_path):
    p = subprocess.Popen(CLI + ["run", "--sources", "synthetic", "--out", str(tmp_path), "--quiet", "--",
                                sys.executable, "-c", "import time; time.sleep(30)"],
                         start_new_session=True, stderr=subprocess.PIPE, text=True)
    time.sleep(2.0)
    os.killpg(p.pid, signal.SIGINT)  # what a terminal Ctrl-C does: the whole foreground group
    p.communicate(timeout=30)
    assert p.returncode == 128 + signal.SIGINT
    [d] = _session_dirs(tmp_path)
    data = read_session(d)
    assert data.corrupt_rows <= 1 and len(data.ticks) >= 10
    assert (d / "report.md").is_file()


def test_sigterm_forwarded_to_child(tmp_path):
    p = subprocess.Popen(CLI + ["run", "--sources", "synthetic", "--out", str(tmp_path), "--quiet", "--",
                                "sleep", "30"], stderr=subprocess.PIPE, text=True)
    time.sleep(1.5)
    p.send_signal(signal.SIGTERM)
    p.communicate(timeout=30)
    assert p.returncode == 128 + signal.SIGTERM
    [d] = _session_dirs(tmp_path)
    assert (d / "report.md").is_file()


def test_measurement_failure_does_not_fail_workload(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    rc = main(["run", "--sources", "synthetic", "--out", str(blocker / "sub"), "--", "true"])
    assert rc == 0
    assert "warning" in capsys.readouterr().err


def _written_session(tmp_path):
    ticks = generate_synthetic(constant_spec(2.0, {"sm_active_pct": 50}), 0.1, start_wall_ms=1_700_000_000_000)
    return write_session(make_session(ticks, sid="cli-fixture"), tmp_path / "sessions")


def test_report_is_byte_identical(tmp_path):
    root = _written_session(tmp_path)
    assert main(["report", str(root)]) == 0
    first = (root / "report.md").read_bytes()
    assert main(["report", str(root)]) == 0
    assert (root / "report.md").read_bytes() == first


def test_report_missing_session(tmp_path):
    assert main(["report", str(tmp_path / "nowhere")]) == 1


def test_replay_reproduces_report_model(tmp_path, capsys):
    root = _written_session(tmp_path)
    assert main(["replay", str(root), "--out", str(tmp_path / "replays")]) == 0
    [replayed] = _session_dirs(tmp_path / "replays")
    assert build_report(read_session(replayed)) == build_report(read_session(root))


def test_plot_command(tmp_path, capsys):
    root = _written_session(tmp_path)
    assert main(["plot", str(root), "--metrics", "power_draw_w,sm_active_pct"]) == 0
    assert sorted(p.name for p in (root / "plots").iterdir()) == ["power_draw_w.svg", "sm_active_pct.svg"]
    assert main(["plot", str(root), "--metrics", "nonexistent"]) == 1


def test_catalog_26_lines(capsys):
    assert main(["catalog"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 26


def test_bench_short_duration_rejected(capsys):
    assert main(["bench", "--duration", "1"]) == 1


def test_serve_during_run(tmp_path):
    import socket
    import urllib.request

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    p = subprocess.Popen(CLI + ["run", "--sources", "synthetic", "--out", str(tmp_path), "--quiet",
                                "--serve", f"127.0.0.1:{port}", "--", "sleep", "3"],
                         stderr=subprocess.PIPE, text=True)
    try:
        time.sleep(1.5)
        with urllib.request.urlopen(f"http://127.0.0.1:{port}/metrics", timeout=5) as r:
            body = r.read().decode()
        assert "woa_up 1" in body and 'woa_power_draw_w{device="gpu0"}' in body
    finally:
        p.communicate(timeout=30)
    assert p.returncode == 0
