"""Command line: ``powertrace {run,report,plot,replay,bench,catalog}``.

Exit codes: 0 success (``run`` returns the child's code), 1 invalid input,
127 child could not be spawned. Measurement problems during ``run`` only warn.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import shutil
import signal
import subprocess
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .benchmark import run_bench
from .collector import run_offline, start
from .errors import PowertraceError, ValidationError
from .intensity import PROVIDERS, CarbonConfig, GeoCoordinate
from .model import SamplingConfig, catalog_ids, metric_catalog, resolve_selection
from .persistence import PLOTS_DIR, read_session
from .reporting import build_report, render_console, render_plot, serve_exposition, write_report
from .reporting.plot import resolve_plot_columns
from .sources import HARDWARE_KINDS, SOURCE_KINDS, ReplaySource, SyntheticSource, constant_spec, open_available

log = logging.getLogger("powertrace")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SPAWN = 127


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be a positive number: {text!r}")
    return v


def _add_carbon_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("carbon accounting")
    g.add_argument("--carbon", choices=("off", "static", "lookup"), default="off")
    g.add_argument("--intensity", type=float, help="static intensity in gCO2eq/kWh")
    g.add_argument("--intensity-kind", choices=("marginal", "average"), default="marginal")
    g.add_argument("--lat", type=float)
    g.add_argument("--lon", type=float)
    g.add_argument("--provider", choices=sorted(PROVIDERS), default="electricitymaps")
    g.add_argument("--provider-url", help="override the provider base URL")
    g.add_argument("--api-key-env", default="POWERTRACE_INTENSITY_API_KEY",
                   help="environment variable holding the provider API key")
    g.add_argument("--intensity-cache", type=Path, help="cache file for looked-up intensity")
    g.add_argument("--staleness", type=_positive_float, default=3600.0, help="cache staleness limit [s]")


def _carbon_config(args) -> CarbonConfig:
    coord = None
    if args.lat is not None or args.lon is not None:
        if args.lat is None or args.lon is None:
            raise ValidationError("--lat and --lon must be given together")
        coord = GeoCoordinate(args.lat, args.lon)
    return CarbonConfig(
        mode=args.carbon, value=args.intensity, kind=args.intensity_kind, coord=coord,
        provider=args.provider, base_url=args.provider_url, api_key_env=args.api_key_env,
        cache_path=args.intensity_cache, staleness_s=args.staleness,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="powertrace", description="Measure energy, performance and carbon of a workload.",
                     epilog=__doc__.split("\n\n", 1)[1])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="measure a child command: run [flags] -- CMD [ARGS...]")
    run.add_argument("--interval", type=float, default=0.1, help="sampling interval [s] (>= 0.05)")
    run.add_argument("--metrics", default="all", help="'all', a category, or comma-separated ids")
    run.add_argument("--out", type=Path, default=Path("sessions"), help="output directory")
    run.add_argument("--sources", default=",".join(HARDWARE_KINDS),
                     help=f"comma-separated source kinds to try ({', '.join(k for k in SOURCE_KINDS if k != 'replay')})")
    run.add_argument("--gpus", type=int, default=1, help="GPU count for the synthetic source")
    run.add_argument("--serve", metavar="HOST:PORT", help="serve live /metrics while running")
    run.add_argument("--quiet", action="store_true", help="no summary on stderr")
    run.add_argument("--plain", action="store_true", help="ASCII-only summary (also set by NO_COLOR)")
    _add_carbon_flags(run)

    rep = sub.add_parser("report", help="regenerate report.md for a session directory")
    rep.add_argument("path", type=Path)
    rep.add_argument("--print", action="store_true", help="also print the report")

    plot = sub.add_parser("plot", help="write SVG line charts for a session")
    plot.add_argument("path", type=Path)
    plot.add_argument("--metrics", default=None, help="metric ids or columns (default: every metric)")

    rp = sub.add_parser("replay", help="re-run the pipeline with a recorded session as the source")
    rp.add_argument("path", type=Path)
    rp.add_argument("--interval", type=float, help="replay interval [s] (default: recorded interval)")
    rp.add_argument("--out", type=Path, help="output directory (default: next to the input)")

    b = sub.add_parser("bench", help="measure the monitor's own overhead")
    b.add_argument("--interval", type=float, default=0.1)
    b.add_argument("--duration", type=float, default=15.0)
    b.add_argument("--with-load", action="store_true", help="busy-loop workload instead of sleep")
    b.add_argument("--repeats", type=int, default=1)

    sub.add_parser("catalog", help="list the metric catalog")
    return parser


def _split_child(argv: Sequence[str]) -> tuple[list[str], list[str]]:
    argv = list(argv)
    if "--" in argv:
        i = argv.index("--")
        return argv[:i], argv[i + 1:]
    return argv, []


def _exit_code(returncode: int) -> int:
    return 128 - returncode if returncode < 0 else returncode


def cmd_run(args, child: list[str]) -> int:
    if not child:
        raise ValidationError("run needs a child command after '--'")
    selection = resolve_selection(args.metrics)
    config = SamplingConfig(
        interval_s=args.interval, selected_metrics=selection, output_dir=args.out,
        carbon=_carbon_config(args),
    )
    kinds = [k.strip() for k in args.sources.split(",") if k.strip()]
    bad = [k for k in kinds if k not in SOURCE_KINDS or k == "replay"]
    if bad:
        raise ValidationError("unknown source kind: " + ", ".join(bad))
    exe = shutil.which(child[0])
    if exe is None:
        print(f"powertrace: cannot run {child[0]!r}: command not found", file=sys.stderr)
        return EXIT_SPAWN

    session = server = None
    opened = []
    try:
        opened, missing = open_available(kinds) if "synthetic" not in kinds else _open_with_synthetic(kinds, args.gpus)
        for kind, reason in missing.items():
            log.info("source %s unavailable: %s", kind, reason)
        if not opened:
            raise PowertraceError("no metric source available on this host")
        session = start(config, opened)
        if args.serve:
            server = serve_exposition(session, args.serve)
            print(f"powertrace: serving {server.url}", file=sys.stderr)
    except PowertraceError as exc:
        print(f"powertrace: warning: measurement disabled: {exc}", file=sys.stderr)

    # SIGINT from the terminal reaches the child directly (same process group);
    # the monitor keeps waiting so it can flush after the child exits. A no-op
    # handler rather than SIG_IGN: ignored dispositions survive exec, handlers don't.
    forwarded = (signal.SIGTERM, signal.SIGHUP)
    old_int = signal.signal(signal.SIGINT, lambda signum, frame: None)
    old = {s: signal.getsignal(s) for s in forwarded}
    try:
        try:
            proc = subprocess.Popen(child)
        except OSError as exc:
            print(f"powertrace: cannot run {child[0]!r}: {exc}", file=sys.stderr)
            if session is not None:
                session.stop()
            return EXIT_SPAWN
        for s in forwarded:
            signal.signal(s, lambda signum, frame: proc.send_signal(signum))
        returncode = proc.wait()
    finally:
        signal.signal(signal.SIGINT, old_int)
        for s, h in old.items():
            signal.signal(s, h)

    if session is not None:
        try:
            data = session.stop()
            if len(data.ticks) >= 2:
                write_report(data, session.root)
                if not args.quiet:
                    text = render_console(build_report(data))
                    if args.plain or os.environ.get("NO_COLOR"):
                        text = text.replace("—", "-")
                    print(text, file=sys.stderr)
            else:
                print("powertrace: warning: fewer than two ticks, no report written", file=sys.stderr)
            print(f"powertrace: session written to {session.root}", file=sys.stderr)
        except Exception as exc:  # noqa: BLE001 - never fail the workload over measurement
            print(f"powertrace: warning: finishing the session failed: {exc}", file=sys.stderr)
        finally:
            if server is not None:
                server.close()
    for src in opened:
        src.close()
    return _exit_code(returncode)


def _open_with_synthetic(kinds, gpus):
    """Open hardware kinds, then let a synthetic source fill the metrics they did not claim."""
    opened, missing = open_available([k for k in kinds if k != "synthetic"])
    taken = {m for s in opened for _, m in s.descriptor.provided_metrics}
    wanted = [m for m in catalog_ids() if m not in taken]
    if wanted:
        opened.append(SyntheticSource(constant_spec(3600.0), gpus=gpus, metrics=wanted))
    return opened, missing


def cmd_report(args) -> int:
    session = read_session(args.path)
    path = write_report(session, args.path)
    if args.print:
        print(path.read_text(encoding="utf-8"), end="")
    print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def cmd_plot(args) -> int:
    session = read_session(args.path)
    if args.metrics:
        groups = [t.strip() for t in args.metrics.split(",") if t.strip()]
        resolve_plot_columns(session, groups)  # reject unknown names before writing anything
    else:
        seen = {m for _, m in session.columns}
        groups = [d.id for d in metric_catalog() if d.id in seen]
    for g in groups:
        print(render_plot(session, [g], Path(args.path) / PLOTS_DIR / f"{g}.svg"))
    return EXIT_OK


def cmd_replay(args) -> int:
    original = read_session(args.path)
    if len(original.ticks) < 2:
        raise ValidationError(f"{args.path}: nothing to replay")
    interval = args.interval or original.config.interval_s
    out = args.out or Path(args.path).parent
    config = SamplingConfig(
        interval_s=interval, selected_metrics=original.config.selected_metrics,
        devices=frozenset(d for d in original.devices if d.cls == "gpu"), output_dir=out,
        carbon=original.config.carbon,
    )
    first = round(original.ticks[0].mono_elapsed_s / interval)
    last = math.floor(original.ticks[-1].mono_elapsed_s / interval + 1e-9)
    source = ReplaySource(original)
    data = run_offline(
        config, [source], range(first, last + 1),
        start_wall_ms=original.start_wall_ms, intensity=original.intensity,
        carbon_note=original.carbon_note, inventory=original.device_inventory,
    )
    root = out / data.id
    if len(data.ticks) >= 2:
        write_report(data, root)
    print(root)
    return EXIT_OK


def cmd_bench(args) -> int:
    result = run_bench(args.interval, args.duration, with_load=args.with_load, repeats=args.repeats)
    print(result.format_table())
    return EXIT_OK


def cmd_catalog(args) -> int:
    for d in metric_catalog():
        print(f"{d.id:<24}{d.unit:<7}{d.kind:<20}{d.category:<15}{d.device_scope:<9}{d.display_name}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    own, child = _split_child(argv)
    parser = build_parser()
    args = parser.parse_args(own)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="powertrace: %(levelname)s: %(message)s",
    )
    if child and args.command != "run":
        parser.error("'--' child command is only valid with 'run'")
    try:
        if args.command == "run":
            return cmd_run(args, child)
        handler = {
            "report": cmd_report, "plot": cmd_plot, "replay": cmd_replay,
            "bench": cmd_bench, "catalog": cmd_catalog,
        }[args.command]
        return handler(args)
    except (ValidationError, PowertraceError) as exc:
        print(f"powertrace: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
