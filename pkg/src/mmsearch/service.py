"""JSON-over-HTTP query endpoint.

Routes::

    GET  /health   -> {"status", "digest", "doc_count"}
    POST /search   -> SearchResponse document

``SearchService.handle`` holds all request logic and is plain-callable, so the
HTTP layer is a thin adapter and tests need no sockets.
"""

from __future__ import annotations

import json
import logging
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

from .errors import EmptyQuery, MMSearchError, SnapshotNotLoaded
from .pipeline import QueryContext, SearchEngine
from .records import FilterSpec
from .snapshot import snapshot_digest

log = logging.getLogger(__name__)

MAX_BODY = 1 << 20
_SEARCH_FIELDS = {"query", "filters", "page", "page_size", "explain", "context", "recovery"}


class RequestError(MMSearchError, ValueError):
    def __init__(self, kind: str, message: str, status: int = 400) -> None:
        super().__init__(message)
        self.kind = kind
        self.status = status


def _error(status: int, kind: str, message: str) -> tuple[int, dict[str, Any]]:
    return status, {"error": {"type": kind, "message": message, "status": status}}


class SearchService:
    """Serves queries from whichever engine is current.

    :meth:`swap` replaces the engine atomically: each request reads the
    reference once, so it runs entirely against one snapshot.
    """

    def __init__(self, engine: SearchEngine | None = None) -> None:
        self._engine = engine
        self._swap_lock = threading.Lock()

    @property
    def engine(self) -> SearchEngine:
        engine = self._engine
        if engine is None:
            raise SnapshotNotLoaded("no snapshot loaded")
        return engine

    def swap(self, engine: SearchEngine) -> SearchEngine | None:
        with self._swap_lock:
            previous, self._engine = self._engine, engine
        return previous

    def health(self) -> dict[str, Any]:
        engine = self.engine
        if engine.digest is None:
            # built in-process rather than loaded; hash once and keep it
            engine.digest = snapshot_digest(engine)
        return {"status": "ok", "digest": engine.digest, "doc_count": len(engine)}

    def search(self, request: Any) -> dict[str, Any]:
        if not isinstance(request, dict):
            raise RequestError("BadRequest", "request body must be a JSON object")
        unknown = set(request) - _SEARCH_FIELDS
        if unknown:
            raise RequestError("BadRequest", f"unknown request field {sorted(unknown)[0]!r}")
        query = request.get("query")
        if not isinstance(query, str):
            raise RequestError("BadRequest", "'query' must be a string")
        engine = self.engine
        page_size = request.get("page_size", engine.config.page_size)
        page = request.get("page", 1)
        for name, value in (("page", page), ("page_size", page_size)):
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise RequestError("BadRequest", f"'{name}' must be a positive integer")
        explain = request.get("explain", False)
        recovery = request.get("recovery")
        if not isinstance(explain, bool) or not (recovery is None or isinstance(recovery, bool)):
            raise RequestError("BadRequest", "'explain' and 'recovery' must be booleans")
        try:
            filters = FilterSpec.from_dict(request.get("filters"))
            context = QueryContext(**(request.get("context") or {}))
        except (TypeError, ValueError) as exc:
            raise RequestError("BadRequest", str(exc)) from None
        response = engine.search(
            query, filters=filters, page_size=page_size, offset=(page - 1) * page_size,
            explain=explain, context=context, recovery=recovery,
        )
        return response.to_dict()

    def handle(self, method: str, path: str, body: bytes = b"") -> tuple[int, dict[str, Any]]:
        """Dispatch one request; never raises."""
        path = path.split("?", 1)[0].rstrip("/") or "/"
        try:
            if path == "/health":
                if method != "GET":
                    return _error(405, "MethodNotAllowed", "use GET /health")
                return 200, self.health()
            if path == "/search":
                if method != "POST":
                    return _error(405, "MethodNotAllowed", "use POST /search")
                try:
                    request = json.loads(body.decode("utf-8") or "null")
                except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                    return _error(400, "BadRequest", f"body is not valid JSON: {exc}")
                return 200, self.search(request)
            return _error(404, "NotFound", f"no route {path!r}")
        except RequestError as exc:
            return _error(exc.status, exc.kind, str(exc))
        except EmptyQuery as exc:
            return _error(400, "EmptyQuery", str(exc))
        except SnapshotNotLoaded as exc:
            return _error(503, "SnapshotNotLoaded", str(exc))
        except MMSearchError as exc:
            return _error(400, type(exc).__name__, str(exc))
        except Exception:
            log.exception("unhandled error serving %s %s", method, path)
            return _error(500, "InternalError", "internal error")


def _handler_class(service: SearchService) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _reply(self, status: int, payload: dict[str, Any]) -> None:
            data = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _dispatch(self, method: str) -> None:
            try:
                length = int(self.headers.get("Content-Length") or 0)
            except ValueError:
                length = -1
            if length < 0 or length > MAX_BODY:
                self._reply(*_error(HTTPStatus.REQUEST_ENTITY_TOO_LARGE if length > 0 else 400, "BadRequest", "bad Content-Length"))
                self.close_connection = True
                return
            body = self.rfile.read(length) if length else b""
            self._reply(*service.handle(method, self.path, body))

        def do_GET(self) -> None:
            self._dispatch("GET")

        def do_POST(self) -> None:
            self._dispatch("POST")

        def log_message(self, format: str, *args: Any) -> None:
            log.info("%s - %s", self.address_string(), format % args)

    return Handler


def make_server(service: SearchService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _handler_class(service))
    server.daemon_threads = True
    return server
