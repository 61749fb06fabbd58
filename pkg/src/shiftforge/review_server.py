"""HTTP service that hosts a review queue for interactive labeling.

Built on the standard library's threading HTTP server: one process, no
extra dependencies, good enough for a single reviewer on a local
machine. Decisions are appended to a JSON-lines file through a lock, so
concurrent posts serialize cleanly, and a restart replays that file to
recover exactly the state the previous run had accumulated.

The JSON API:
    GET  /api/queue?offset=0&limit=50  -> {"items": [...], "total": N}
    GET  /api/image/<sample_id>        -> image bytes
    POST /api/decision                 -> stored decision record
    GET  /api/decisions                -> all decisions, oldest first
    GET  /api/progress                 -> {"decided": K, "total": N}

When a directory of static files is supplied, it is served at the root
path, which is how the browser front end reaches the same origin as the
API. Responses carry permissive CORS headers so a front end served from
a dev server can talk to the API as well.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .manifest import Manifest
from .review import (
    ReviewDecision,
    ReviewItem,
    append_decision,
    effective_decisions,
    load_decisions,
)

_CONTENT_TYPES = {
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".json": "application/json",
    ".csv": "text/csv; charset=utf-8",
}


class ReviewService:
    """Queue, manifest, and decision state behind the HTTP handlers."""

    def __init__(
        self,
        queue: list[ReviewItem],
        manifest: Manifest,
        image_root: str | Path,
        decisions_path: str | Path,
        ui_dir: str | Path | None = None,
    ):
        self.queue = list(queue)
        self.manifest = manifest
        self.image_root = Path(image_root)
        self.decisions_path = Path(decisions_path)
        self.ui_dir = Path(ui_dir) if ui_dir is not None else None
        self._by_id = manifest.by_id()
        self._queue_ids = {item.sample_id for item in self.queue}
        self._lock = threading.Lock()
        self.decisions: list[ReviewDecision] = load_decisions(self.decisions_path)

    def queue_page(self, offset: int, limit: int) -> dict:
        with self._lock:
            decided = {d.sample_id for d in self.decisions}
        items = []
        for item in self.queue[offset : offset + limit]:
            row = item.to_dict()
            row["decided"] = item.sample_id in decided
            row["image_missing"] = not (self.image_root / item.image_path).is_file()
            items.append(row)
        return {"items": items, "total": len(self.queue)}

    def image_payload(self, sample_id: str) -> tuple[bytes, str]:
        record = self._by_id.get(sample_id)
        if record is None:
            raise KeyError(sample_id)
        path = self.image_root / record.image_path
        if not path.is_file():
            raise FileNotFoundError(sample_id)
        content_type = _CONTENT_TYPES.get(path.suffix.lower(), "application/octet-stream")
        return path.read_bytes(), content_type

    def record_decision(self, body: dict) -> ReviewDecision:
        sample_id = body.get("sample_id")
        if not isinstance(sample_id, str) or sample_id not in self._by_id:
            raise KeyError(str(sample_id))
        decision = ReviewDecision.now(
            sample_id=sample_id,
            action=body.get("action", ""),
            reviewer_id=body.get("reviewer_id", "anonymous"),
        )
        with self._lock:
            append_decision(decision, self.decisions_path)
            self.decisions.append(decision)
        return decision

    def progress(self) -> dict:
        with self._lock:
            effective = effective_decisions(self.decisions)
        decided = sum(1 for sample_id in self._queue_ids if sample_id in effective)
        return {"decided": decided, "total": len(self.queue)}

    def all_decisions(self) -> list[dict]:
        with self._lock:
            return [d.to_dict() for d in self.decisions]


class _ReviewHandler(BaseHTTPRequestHandler):
    service: ReviewService  # bound by make_server

    # Silence the default per-request stderr logging.
    def log_message(self, format: str, *args) -> None:
        pass

    def _send_json(self, payload, status: int = 200) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._send_cors()
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, body: bytes, content_type: str) -> None:
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self._send_cors()
        self.end_headers()
        self.wfile.write(body)

    def _send_cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def do_OPTIONS(self) -> None:  # noqa: N802 (http.server naming)
        self.send_response(204)
        self._send_cors()
        self.end_headers()

    def do_GET(self) -> None:  # noqa: N802
        parsed = urlparse(self.path)
        route = parsed.path
        if route == "/api/queue":
            query = parse_qs(parsed.query)
            try:
                offset = int(query.get("offset", ["0"])[0])
                limit = int(query.get("limit", ["50"])[0])
            except ValueError:
                self._send_json({"error": "offset and limit must be integers"}, status=400)
                return
            if offset < 0 or limit < 0:
                self._send_json({"error": "offset and limit must be non-negative"}, status=400)
                return
            self._send_json(self.service.queue_page(offset, limit))
        elif route.startswith("/api/image/"):
            sample_id = route[len("/api/image/") :]
            try:
                body, content_type = self.service.image_payload(sample_id)
            except KeyError:
                self._send_json({"error": f"unknown sample_id '{sample_id}'"}, status=404)
            except FileNotFoundError:
                self._send_json({"error": f"image for '{sample_id}' not readable"}, status=404)
            else:
                self._send_bytes(body, content_type)
        elif route == "/api/decisions":
            self._send_json(self.service.all_decisions())
        elif route == "/api/progress":
            self._send_json(self.service.progress())
        else:
            self._serve_static(route)

    def do_POST(self) -> None:  # noqa: N802
        parsed = urlparse(self.path)
        if parsed.path != "/api/decision":
            self._send_json({"error": "unknown endpoint"}, status=404)
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            if not isinstance(body, dict):
                raise ValueError("body must be a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            self._send_json({"error": f"invalid JSON body: {exc}"}, status=400)
            return
        try:
            decision = self.service.record_decision(body)
        except KeyError as exc:
            self._send_json({"error": f"unknown sample_id {exc}"}, status=404)
        except ValueError as exc:
            self._send_json({"error": str(exc)}, status=400)
        else:
            self._send_json(decision.to_dict())

    def _serve_static(self, route: str) -> None:
        ui_dir = self.service.ui_dir
        if ui_dir is None:
            if route == "/":
                self._send_bytes(
                    b"review service is running; API under /api/", "text/plain; charset=utf-8"
                )
            else:
                self._send_json({"error": "not found"}, status=404)
            return
        relative = route.lstrip("/") or "index.html"
        target = (ui_dir / relative).resolve()
        if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
            self._send_json({"error": "not found"}, status=404)
            return
        content_type = _CONTENT_TYPES.get(target.suffix.lower(), "application/octet-stream")
        self._send_bytes(target.read_bytes(), content_type)


def make_server(service: ReviewService, host: str = "127.0.0.1", port: int = 8765) -> ThreadingHTTPServer:
    """Bind the service to a threading HTTP server; port 0 picks a free one."""
    handler = type("BoundReviewHandler", (_ReviewHandler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve_review(
    queue: list[ReviewItem],
    manifest: Manifest,
    image_root: str | Path,
    decisions_path: str | Path,
    host: str = "127.0.0.1",
    port: int = 8765,
    ui_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Convenience wrapper: build the service and return a bound server.

    The caller decides whether to serve_forever on the current thread or
    drive it from a background thread (tests do the latter).
    """
    service = ReviewService(
        queue=queue,
        manifest=manifest,
        image_root=image_root,
        decisions_path=decisions_path,
        ui_dir=ui_dir,
    )
    return make_server(service, host=host, port=port)
