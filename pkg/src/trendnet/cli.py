"""Headless operation: run the service, drive scenarios, emit reports.

Subcommands share the runtime (and its data directory) with the service,
so a scripted sequence like

    trendnet simulate --hours 72 --period 1h
    trendnet benchmark build --days 3 --out report.json

is the same computation the HTTP API performs.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
import urllib.request
from typing import Optional

from .analytics import InsufficientData
from .config import ParseError, SystemConfig, ValidationError, build_config, load_config
from .runtime import TrendNetRuntime
from .server import serve

_DURATION_RE = re.compile(r"^(\d+(?:\.\d+)?)(ms|s|m|h|d)?$")
_DURATION_MS = {"ms": 1, "s": 1000, "m": 60_000, "h": 3_600_000, "d": 86_400_000, None: 1}


def parse_duration_ms(text: str) -> int:
    match = _DURATION_RE.match(text.strip())
    if match is None:
        raise ValueError(f"bad duration {text!r} (try 1h, 30m, 90s, 500ms)")
    value, unit = match.groups()
    ms = int(float(value) * _DURATION_MS[unit])
    if ms <= 0:
        raise ValueError("duration must be positive")
    return ms


def _load(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else build_config({})
    if getattr(args, "data_dir", None):
        cfg.data_dir = args.data_dir
    return cfg


def _open_runtime(args, cfg: Optional[SystemConfig] = None) -> TrendNetRuntime:
    return TrendNetRuntime(cfg if cfg is not None else _load(args))


def _cmd_serve(args) -> int:
    cfg = _load(args)
    serve(cfg, require_approval=args.require_approval, port=args.port)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    if args.period:
        period_ms = parse_duration_ms(args.period)
        cfg.collector.period_ms = period_ms
        cfg.analytics.sample_period_ms = period_ms
    if args.seed is not None:
        cfg.sim.profile["rng_seed"] = args.seed
    runtime = _open_runtime(args, cfg)
    try:
        now = runtime.advance_hours(args.hours)
    finally:
        runtime.close()
    print(f"advanced {args.hours}h; virtual now = {now} ms")
    return 0


def _cmd_benchmark(args) -> int:
    runtime = _open_runtime(args)
    try:
        exports = runtime.run_benchmark(args.days)
    except InsufficientData as exc:
        print(f"benchmark failed: {exc}", file=sys.stderr)
        return 1
    finally:
        runtime.close()
    doc = {"benchmarks": exports}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {len(exports)} benchmark(s) to {args.out}")
    else:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def _cmd_inject(args) -> int:
    runtime = _open_runtime(args)
    try:
        entry = runtime.inject(args.src, args.dst, args.factor, args.hours)
    except ValueError as exc:
        print(f"inject failed: {exc}", file=sys.stderr)
        return 1
    finally:
        runtime.close()
    print(json.dumps(entry))
    return 0


def _cmd_report(args) -> int:
    runtime = _open_runtime(args)
    try:
        doc = runtime.report_document()
    finally:
        runtime.close()
    if not doc["links"]:
        print("no benchmarks available; run `trendnet benchmark build` first", file=sys.stderr)
        return 1
    if args.format == "json":
        payload = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    else:
        lines = ["host_ip,interface,hour,mean,sigma"]
        for link in doc["links"]:
            for row in link["rows"]:
                lines.append(
                    f"{link['host_ip']},{link['interface']},{row['hour']},"
                    f"{row['mean_util']!r},{row['sigma']!r}"
                )
        payload = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
        print(f"wrote report to {args.out}")
    else:
        sys.stdout.write(payload)
    return 0


def _cmd_watch(args) -> int:
    url = args.url.rstrip("/") + "/api/v1/events"
    wanted_links = set(args.links or [])

    def matches(payload: dict) -> bool:
        if not wanted_links:
            return True
        link = payload.get("link") or {}
        return f"{link.get('host_ip')}/{link.get('interface')}" in wanted_links

    printed = 0
    try:
        with urllib.request.urlopen(url) as stream:
            data_lines: list[str] = []
            for raw in stream:
                line = raw.decode("utf-8").rstrip("\n")
                if line.startswith("data:"):
                    data_lines.append(line[5:].strip())
                    continue
                if line == "" and data_lines:
                    envelope = json.loads("\n".join(data_lines))
                    data_lines = []
                    if envelope["kind"] not in ("trend", "decision"):
                        continue
                    if envelope["kind"] == "trend" and not matches(envelope["payload"]):
                        continue
                    print(json.dumps(envelope), flush=True)
                    printed += 1
                    if args.max_events and printed >= args.max_events:
                        return 0
    except KeyboardInterrupt:
        return 0
    except OSError as exc:
        print(f"watch failed: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trendnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="path to the system config JSON")
        p.add_argument("--data-dir", help="override the configured data directory")

    p = sub.add_parser("serve", help="run the HTTP service")
    common(p)
    p.add_argument("--require-approval", action="store_true", help="manual decision policy")
    p.add_argument("--port", type=int, help="listen port (TRENDNET_PORT also works)")
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("simulate", help="advance virtual time with polling active")
    common(p)
    p.add_argument("--hours", type=float, required=True)
    p.add_argument("--period", help="poll/sample period, e.g. 1h or 30m")
    p.add_argument("--seed", type=int, help="override the traffic rng seed")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("benchmark", help="benchmark operations")
    bench_sub = p.add_subparsers(dest="benchmark_command", required=True)
    pb = bench_sub.add_parser("build", help="build per-hour benchmarks from stored telemetry")
    common(pb)
    pb.add_argument("--days", type=int, required=True)
    pb.add_argument("--out", help="write the benchmark exports to this file")
    pb.set_defaults(fn=_cmd_benchmark)

    p = sub.add_parser("inject", help="scale a demand for some virtual hours")
    common(p)
    p.add_argument("--src", required=True, help="demand source prefix (CIDR)")
    p.add_argument("--dst", required=True, help="demand destination prefix (CIDR)")
    p.add_argument("--factor", type=float, required=True)
    p.add_argument("--hours", type=float, required=True)
    p.set_defaults(fn=_cmd_inject)

    p = sub.add_parser("watch", help="stream trend/decision transitions as JSON lines")
    p.add_argument("--url", default="http://127.0.0.1:8080", help="service base URL")
    p.add_argument("--links", nargs="*", help="filter trends to host_ip/interface pairs")
    p.add_argument("--max-events", type=int, default=0, help="exit after N events (0 = forever)")
    p.set_defaults(fn=_cmd_watch)

    p = sub.add_parser("report", help="emit the per-link hourly benchmark report")
    common(p)
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
