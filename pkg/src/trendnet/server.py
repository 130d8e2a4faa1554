"""HTTP/JSON API plus SSE event stream over the runtime.

All mutations funnel through one lock, so handler threads never race the
single-writer runtime. The event stream is fan-out per connected client
from connection time.
"""
from __future__ import annotations

import json
import logging
import os
import queue
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .actioner import IllegalDecisionState
from .analytics import InsufficientData
from .config import SystemConfig
from .runtime import TrendNetRuntime

logger = logging.getLogger(__name__)

API_PREFIX = "/api/v1"
_DECISION_ACTION = re.compile(r"^/decisions/([^/]+)/(approve|revert)$")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "application/javascript",
    ".css": "text/css",
    ".svg": "image/svg+xml",
    ".json": "application/json",
    ".map": "application/json",
    ".ico": "image/x-icon",
}


class _HttpError(Exception):
    def __init__(self, status: int, body: dict) -> None:
        self.status = status
        self.body = body
        super().__init__(body.get("error", status))


class TrendNetServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], runtime: TrendNetRuntime) -> None:
        super().__init__(address, _Handler)
        self.runtime = runtime
        self.lock = threading.RLock()
        self.stopping = threading.Event()
        self._ticker: Optional[threading.Thread] = None
        if runtime.cfg.sim.free_run:
            self._ticker = threading.Thread(target=self._free_run, daemon=True, name="sim-ticker")
            self._ticker.start()

    @property
    def port(self) -> int:
        return self.server_address[1]

    def _free_run(self) -> None:
        slice_s = 0.2
        while not self.stopping.wait(slice_s):
            with self.lock:
                self.runtime.advance_wall_slice(slice_s)

    def shutdown_server(self) -> None:
        self.stopping.set()
        if self._ticker is not None:
            self._ticker.join(timeout=2.0)
        self.shutdown()
        self.server_close()
        with self.lock:
            self.runtime.save_state()
            self.runtime.close()


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: TrendNetServer

    def log_message(self, fmt: str, *args) -> None:
        logger.debug("%s %s", self.address_string(), fmt % args)

    # -- plumbing ---------------------------------------------------------------

    def _send_json(self, status: int, obj) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise _HttpError(400, {"error": "malformed JSON body", "detail": str(exc)}) from None
        if not isinstance(doc, dict):
            raise _HttpError(400, {"error": "body must be a JSON object"})
        return doc

    def _query(self) -> dict[str, str]:
        parsed = parse_qs(urlparse(self.path).query)
        return {k: v[-1] for k, v in parsed.items()}

    def _api_path(self) -> Optional[str]:
        path = urlparse(self.path).path
        if path == API_PREFIX or path.startswith(API_PREFIX + "/"):
            return path[len(API_PREFIX):] or "/"
        return None

    def _dispatch(self, method: str) -> None:
        try:
            path = self._api_path()
            if path is None:
                if method == "GET":
                    self._serve_static(urlparse(self.path).path)
                    return
                raise _HttpError(404, {"error": "unknown resource"})
            handler = getattr(self, f"_handle_{method.lower()}", None)
            if handler is None:
                raise _HttpError(404, {"error": "unknown resource"})
            handler(path)
        except _HttpError as exc:
            self._send_json(exc.status, exc.body)
        except BrokenPipeError:
            pass
        except Exception as exc:  # pragma: no cover - last-resort guard
            logger.exception("unhandled error serving %s", self.path)
            self._send_json(500, {"error": f"{type(exc).__name__}: {exc}"})

    def do_GET(self) -> None:  # noqa: N802
        self._dispatch("GET")

    def do_POST(self) -> None:  # noqa: N802
        self._dispatch("POST")

    def do_PUT(self) -> None:  # noqa: N802
        self._dispatch("PUT")

    def do_OPTIONS(self) -> None:  # noqa: N802
        # CORS preflight, so a console served from another origin can call us
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, Accept")
        self.send_header("Access-Control-Max-Age", "600")
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- GET ----------------------------------------------------------------------

    def _handle_get(self, path: str) -> None:
        runtime = self.server.runtime
        if path == "/health":
            self._send_json(200, {"status": "ok"})
        elif path == "/topology":
            with self.server.lock:
                self._send_json(200, runtime.topology_document())
        elif path == "/config":
            with self.server.lock:
                self._send_json(200, runtime.config_document())
        elif path == "/series":
            self._get_series()
        elif path == "/benchmark":
            q = self._query()
            host_ip, interface = q.get("host_ip"), q.get("interface")
            if not host_ip or not interface:
                raise _HttpError(400, {"error": "host_ip and interface are required"})
            with self.server.lock:
                doc = runtime.benchmark_for(host_ip, interface)
            if doc is None:
                raise _HttpError(404, {"error": f"no benchmark for {host_ip}/{interface}"})
            self._send_json(200, doc)
        elif path == "/benchmarks":
            with self.server.lock:
                self._send_json(200, runtime.benchmarks_document())
        elif path == "/trends":
            q = self._query()
            active = None
            if "active" in q:
                if q["active"] not in ("true", "false"):
                    raise _HttpError(400, {"error": "active must be true or false"})
                active = q["active"] == "true"
            with self.server.lock:
                self._send_json(200, runtime.trends_document(active))
        elif path == "/decisions":
            with self.server.lock:
                self._send_json(200, runtime.decisions_document())
        elif path == "/events":
            self._stream_events()
        else:
            raise _HttpError(404, {"error": "unknown resource"})

    def _get_series(self) -> None:
        q = self._query()
        missing = [k for k in ("metric", "host_ip", "interface", "src") if not q.get(k)]
        if missing:
            raise _HttpError(400, {"error": f"missing query params: {missing}"})
        runtime = self.server.runtime
        with self.server.lock:
            t0 = _int_param(q, "from", 0)
            t1 = _int_param(q, "to", runtime.now_ms() + 1)
            bucket = _int_param(q, "bucket_ms", 0)
            fn = q.get("fn", "mean")
            if fn not in ("mean", "max", "sum"):
                raise _HttpError(400, {"error": f"unknown fn {fn!r}"})
            try:
                doc = runtime.series(
                    q["metric"], q["host_ip"], q["interface"], q["src"],
                    t0, t1, bucket or None, fn,
                )
            except ValueError as exc:
                raise _HttpError(400, {"error": str(exc)}) from None
        self._send_json(200, doc)

    def _stream_events(self) -> None:
        hub = self.server.runtime.hub
        q = hub.subscribe()
        self.close_connection = True
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Connection", "close")
            self.end_headers()
            self.wfile.write(b": connected\n\n")
            self.wfile.flush()
            idle = 0
            while not self.server.stopping.is_set():
                try:
                    envelope = q.get(timeout=0.25)
                    idle = 0
                except queue.Empty:
                    idle += 1
                    if idle >= 40:  # ~10s keepalive comment
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        idle = 0
                    continue
                payload = json.dumps(envelope)
                frame = f"id: {envelope['seq']}\nevent: {envelope['kind']}\ndata: {payload}\n\n"
                self.wfile.write(frame.encode("utf-8"))
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            hub.unsubscribe(q)

    def _serve_static(self, path: str) -> None:
        static_dir = self.server.runtime.cfg.server.static_dir
        if not static_dir:
            if path == "/":
                body = b"trendnet service is running; API under /api/v1\n"
                self.send_response(200)
                self.send_header("Content-Type", "text/plain")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
                return
            raise _HttpError(404, {"error": "no static assets configured"})
        rel = "index.html" if path == "/" else path.lstrip("/")
        root = os.path.realpath(static_dir)
        full = os.path.realpath(os.path.join(root, rel))
        if not full.startswith(root + os.sep) and full != root:
            raise _HttpError(404, {"error": "unknown resource"})
        if not os.path.isfile(full):
            raise _HttpError(404, {"error": "unknown resource"})
        ext = os.path.splitext(full)[1]
        with open(full, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", _CONTENT_TYPES.get(ext, "application/octet-stream"))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    # -- POST / PUT -------------------------------------------------------------------

    def _handle_post(self, path: str) -> None:
        runtime = self.server.runtime
        if path == "/benchmark/run":
            body = self._read_json()
            days = body.get("days")
            if days is not None and (not isinstance(days, int) or days <= 0):
                raise _HttpError(400, {"error": "days must be a positive integer"})
            with self.server.lock:
                try:
                    exports = runtime.run_benchmark(days)
                except InsufficientData as exc:
                    raise _HttpError(
                        400,
                        {"error": "InsufficientData", "hours": exc.hours, "link": exc.link},
                    ) from None
            self._send_json(200, {"benchmarks": exports})
        elif path == "/sim/advance":
            body = self._read_json()
            hours = body.get("hours")
            if not isinstance(hours, (int, float)) or isinstance(hours, bool) or hours <= 0:
                raise _HttpError(400, {"error": "hours must be a positive number"})
            with self.server.lock:
                now = runtime.advance_hours(float(hours))
            self._send_json(200, {"now_ms": now})
        elif path == "/sim/scenario":
            body = self._read_json()
            inject = body.get("inject")
            if not isinstance(inject, dict):
                raise _HttpError(400, {"error": "body needs an 'inject' object"})
            required = {"src_prefix", "dst_prefix", "factor", "hours"}
            missing = required - set(inject)
            if missing:
                raise _HttpError(400, {"error": f"inject missing keys: {sorted(missing)}"})
            with self.server.lock:
                try:
                    entry = runtime.inject(
                        inject["src_prefix"],
                        inject["dst_prefix"],
                        float(inject["factor"]),
                        float(inject["hours"]),
                    )
                except (ValueError, TypeError) as exc:
                    raise _HttpError(400, {"error": str(exc)}) from None
            self._send_json(200, {"inject": entry})
        else:
            match = _DECISION_ACTION.match(path)
            if match is None:
                raise _HttpError(404, {"error": "unknown resource"})
            decision_id, action = match.groups()
            with self.server.lock:
                try:
                    if action == "approve":
                        doc = runtime.approve_decision(decision_id)
                    else:
                        doc = runtime.revert_decision(decision_id)
                except KeyError:
                    raise _HttpError(404, {"error": f"unknown decision {decision_id}"}) from None
                except IllegalDecisionState as exc:
                    raise _HttpError(409, {"error": str(exc)}) from None
            self._send_json(200, doc)

    def _handle_put(self, path: str) -> None:
        if path != "/config":
            raise _HttpError(404, {"error": "unknown resource"})
        patch = self._read_json()
        runtime = self.server.runtime
        with self.server.lock:
            violations = runtime.update_config(patch)
            if violations:
                raise _HttpError(400, {"error": "validation", "violations": violations})
            self._send_json(200, runtime.config_document())


def _int_param(q: dict[str, str], name: str, default: int) -> int:
    if name not in q or q[name] == "":
        return default
    try:
        return int(q[name])
    except ValueError:
        raise _HttpError(400, {"error": f"{name} must be an integer"}) from None


def start_server(runtime: TrendNetRuntime, port: int = 0, host: str = "127.0.0.1") -> TrendNetServer:
    """Bind and serve on a background thread; returns the running server."""
    server = TrendNetServer((host, port), runtime)
    thread = threading.Thread(target=server.serve_forever, daemon=True, name="trendnet-http")
    thread.start()
    return server


def serve(cfg: SystemConfig, *, require_approval: bool = False, port: Optional[int] = None) -> None:
    """Foreground entry point for the CLI serve subcommand."""
    runtime = TrendNetRuntime(cfg, require_approval=require_approval)
    effective_port = port if port is not None else cfg.server.port
    env_port = os.environ.get("TRENDNET_PORT")
    if env_port:
        effective_port = int(env_port)
    server = TrendNetServer(("0.0.0.0", effective_port), runtime)
    print(f"trendnet service on :{server.port} (data dir {cfg.data_dir})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown_server()
