"""Minimal JSON-over-HTTP plumbing on the standard library.

Services register ``(method, path)`` routes on a :class:`JsonApp`; a
``fallback`` callable receives everything else (the provider uses it for its
protected resources).  :func:`serve` runs the app on a threading server with
HTTP/1.1 keep-alive.
"""

from __future__ import annotations

import http.client
import json
import logging
import socket
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable
from urllib.parse import parse_qs, urlsplit

log = logging.getLogger(__name__)


class HttpError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, list[str]]
    headers: dict[str, str]
    body: bytes
    client_address: str

    def json(self) -> Any:
        if not self.body:
            return {}
        try:
            return json.loads(self.body)
        except ValueError as exc:
            raise HttpError(400, f"invalid JSON body: {exc}") from exc

    def arg(self, name: str, default: str | None = None) -> str | None:
        vals = self.query.get(name)
        return vals[0] if vals else default


@dataclass
class Reply:
    status: int
    body: bytes
    headers: dict[str, str] = field(default_factory=dict)

    @classmethod
    def json(cls, obj: Any, status: int = 200) -> "Reply":
        return cls(status, json.dumps(obj, separators=(",", ":")).encode(), {"Content-Type": "application/json"})


Route = Callable[[Request], "Reply | Any"]


class JsonApp:
    def __init__(self, name: str):
        self.name = name
        self.routes: dict[tuple[str, str], Route] = {}
        self.fallback: Route | None = None

    def route(self, method: str, path: str) -> Callable[[Route], Route]:
        def deco(fn: Route) -> Route:
            self.routes[(method, path)] = fn
            return fn

        return deco

    def dispatch(self, req: Request) -> Reply:
        fn = self.routes.get((req.method, req.path))
        if fn is None:
            if any(p == req.path for _, p in self.routes):
                return Reply.json({"error": "method not allowed"}, 405)
            fn = self.fallback
        if fn is None:
            return Reply.json({"error": "not found"}, 404)
        try:
            out = fn(req)
        except HttpError as exc:
            return Reply.json({"error": exc.message}, exc.status)
        except Exception as exc:  # noqa: BLE001 - report, never crash the server
            log.exception("%s: unhandled error on %s %s", self.name, req.method, req.path)
            return Reply.json({"error": f"internal error: {exc}"}, 500)
        return out if isinstance(out, Reply) else Reply.json(out)


def _handler_class(app: JsonApp) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "fedcap"

        def setup(self) -> None:
            super().setup()
            # headers and body go out in separate writes; avoid the Nagle/delayed-ACK stall
            self.connection.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

        def _handle(self) -> None:
            parts = urlsplit(self.path)
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            req = Request(
                self.command,
                parts.path,
                parse_qs(parts.query),
                {k: v for k, v in self.headers.items()},
                body,
                self.client_address[0],
            )
            reply = app.dispatch(req)
            self.send_response(reply.status)
            for k, v in reply.headers.items():
                self.send_header(k, v)
            self.send_header("Content-Length", str(len(reply.body)))
            self.end_headers()
            self.wfile.write(reply.body)

        do_GET = do_PUT = do_POST = do_DELETE = do_PATCH = _handle

        def log_message(self, fmt: str, *args: Any) -> None:
            log.debug("%s: " + fmt, app.name, *args)

    return Handler


def serve(app: JsonApp, host: str = "127.0.0.1", port: int = 0, *, poll_interval: float = 0.5) -> ThreadingHTTPServer:
    """Start ``app`` on a daemon thread; returns the bound server.

    ``poll_interval`` bounds how long ``shutdown()`` waits.
    """
    server = ThreadingHTTPServer((host, port), _handler_class(app))
    server.daemon_threads = True
    threading.Thread(
        target=server.serve_forever, args=(poll_interval,), name=f"{app.name}-http", daemon=True
    ).start()
    return server


def split_url(url: str) -> tuple[str, int]:
    parts = urlsplit(url if "://" in url else "http://" + url)
    return parts.hostname or "127.0.0.1", parts.port or 80


class Client:
    """Keep-alive JSON client bound to one base URL (not thread-safe)."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.host, self.port = split_url(base_url)
        self.timeout = timeout
        self._conn: http.client.HTTPConnection | None = None

    def _connection(self) -> http.client.HTTPConnection:
        if self._conn is None:
            self._conn = http.client.HTTPConnection(self.host, self.port, timeout=self.timeout)
        return self._conn

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def raw(
        self, method: str, path: str, body: bytes | None = None, headers: dict[str, str] | None = None
    ) -> tuple[int, bytes, dict[str, str]]:
        hdrs = dict(headers or {})
        if body is not None:
            hdrs.setdefault("Content-Type", "application/json")
        for attempt in (0, 1):
            conn = self._connection()
            try:
                conn.request(method, path, body=body, headers=hdrs)
                resp = conn.getresponse()
                data = resp.read()
                return resp.status, data, {k: v for k, v in resp.getheaders()}
            except (http.client.RemoteDisconnected, BrokenPipeError, ConnectionResetError):
                # stale keep-alive socket; reconnect once
                self.close()
                if attempt:
                    raise
        raise AssertionError("unreachable")

    def call(
        self, method: str, path: str, payload: Any = None, headers: dict[str, str] | None = None
    ) -> tuple[int, Any]:
        body = None if payload is None else json.dumps(payload).encode()
        status, data, _ = self.raw(method, path, body, headers)
        try:
            return status, json.loads(data) if data else None
        except ValueError:
            return status, data.decode("utf-8", "replace")

    def expect(self, method: str, path: str, payload: Any = None, headers: dict[str, str] | None = None) -> Any:
        status, out = self.call(method, path, payload, headers)
        if status != 200:
            raise HttpError(status, f"{method} {self.base_url}{path}: {out}")
        return out


def post_once(url: str, path: str, payload: Any, timeout: float = 5.0) -> tuple[int, Any]:
    """One-shot POST with its own connection (safe from any thread)."""
    client = Client(url, timeout)
    try:
        return client.call("POST", path, payload)
    finally:
        client.close()
