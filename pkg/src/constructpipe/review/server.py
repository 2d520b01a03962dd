"""HTTP review service over a candidate registry.

Endpoints (JSON in, JSON out, CORS open so a browser UI on another origin
can talk to it):

    GET  /health       liveness + finalized flag
    GET  /registry     the registry as generated, plus decision count
    GET  /candidates   current class states; ?status=&sort=&page=&page_size=&examples=
    POST /decisions    apply one decision; returns it with its assigned id
    POST /finalize     finalize; returns the final class set
    GET  /final        the final class set, 404 until finalized

Every decision that validates is appended to a decisions JSON-lines file
before the response goes out, so a restarted server folds back to the same
state. Invalid decisions are rejected with 409 and never persisted.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from ..runstore import dump_line, read_stage_file, repair_trailing_partial_line
from .registry import ReviewError, ReviewState, apply_decision, final_payload, load_state, sort_candidates

DEFAULT_PAGE_SIZE = 20
MAX_PAGE_SIZE = 200


class ReviewServiceError(Exception):
    pass


@dataclass
class ReviewService:
    state: ReviewState
    decisions_path: Path
    final_path: Path | None = None
    unit_texts: dict[str, str] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def open(
        cls,
        registry_path: str | Path,
        decisions_path: str | Path,
        final_path: str | Path | None = None,
        units_path: str | Path | None = None,
    ) -> "ReviewService":
        registry = json.loads(Path(registry_path).read_text(encoding="utf-8"))
        state = load_state(registry)
        decisions_path = Path(decisions_path)
        if decisions_path.exists():
            repair_trailing_partial_line(decisions_path)
            with decisions_path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        apply_decision(state, json.loads(line))
        unit_texts: dict[str, str] = {}
        if units_path is not None:
            _, rows = read_stage_file(Path(units_path))
            for row in rows:
                unit_texts[row["unit_id"]] = row["text"]
        return cls(
            state=state,
            decisions_path=decisions_path,
            final_path=Path(final_path) if final_path else None,
            unit_texts=unit_texts,
        )

    def _next_decision_id(self) -> str:
        return f"d-{len(self.state.decisions) + 1:04d}"

    def submit(self, payload: dict) -> dict:
        """Validate, apply, persist, and return one decision."""
        with self.lock:
            decision = {
                "decision_id": payload.get("decision_id") or self._next_decision_id(),
                "actor": payload.get("actor", "reviewer"),
                "timestamp": payload.get("timestamp")
                or datetime.now(timezone.utc).isoformat(timespec="seconds"),
                "action": payload.get("action"),
            }
            for key in ("subject", "target", "value"):
                if payload.get(key) is not None:
                    decision[key] = payload[key]
            apply_decision(self.state, decision)
            with self.decisions_path.open("a", encoding="utf-8") as fh:
                fh.write(dump_line(decision))
            if decision["action"] == "finalize" and self.final_path is not None:
                payload_out = final_payload(self.state)
                self.final_path.write_text(
                    json.dumps(payload_out, ensure_ascii=False, indent=2) + "\n",
                    encoding="utf-8",
                )
            return decision

    def candidates(
        self,
        status: str = "all",
        sort: str = "count_desc",
        page: int = 1,
        page_size: int = DEFAULT_PAGE_SIZE,
        examples: int = 0,
    ) -> dict:
        with self.lock:
            classes = [self.state.classes[cid] for cid in self.state.order]
            if status == "live":
                classes = [c for c in classes if c.status != "merged"]
            elif status != "all":
                classes = [c for c in classes if c.status == status]
            classes = sort_candidates(classes, sort)
            total = len(classes)
            page_size = max(1, min(page_size, MAX_PAGE_SIZE))
            page = max(1, page)
            start = (page - 1) * page_size
            rows = []
            warnings: list[str] = []
            for cand in classes[start : start + page_size]:
                row = cand.to_json()
                if examples > 0:
                    resolved = []
                    for uid in cand.example_unit_ids[:examples]:
                        text = self.unit_texts.get(uid)
                        if text is None:
                            warnings.append(f"no unit text for {uid}")
                        resolved.append({"unit_id": uid, "text": text})
                    row["examples"] = resolved
                rows.append(row)
            return {
                "total": total,
                "page": page,
                "page_size": page_size,
                "finalized": self.state.finalized,
                "classes": rows,
                "warnings": warnings,
            }

    def registry_view(self) -> dict:
        with self.lock:
            return {
                "registry": self.state.registry,
                "decision_count": len(self.state.decisions),
                "finalized": self.state.finalized,
            }

    def final_view(self) -> dict | None:
        with self.lock:
            if not self.state.finalized:
                return None
            return final_payload(self.state)

    def health(self) -> dict:
        with self.lock:
            return {
                "status": "ok",
                "pipeline_kind": self.state.kind.name,
                "finalized": self.state.finalized,
                "decisions": len(self.state.decisions),
            }

    def apply_file(self, path: str | Path) -> int:
        """Apply a scripted decision file (JSON lines); returns how many."""
        n = 0
        with Path(path).open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    self.submit(json.loads(line))
                    n += 1
        return n


def _make_handler(service: ReviewService, ui_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            pass

        def _send_json(self, status: int, obj: dict) -> None:
            body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self._cors()
            self.end_headers()
            self.wfile.write(body)

        def _cors(self) -> None:
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/health":
                self._send_json(200, service.health())
            elif url.path == "/registry":
                self._send_json(200, service.registry_view())
            elif url.path == "/candidates":
                qs = parse_qs(url.query)

                def q(key, default):
                    return qs.get(key, [default])[0]

                try:
                    result = service.candidates(
                        status=q("status", "all"),
                        sort=q("sort", "count_desc"),
                        page=int(q("page", "1")),
                        page_size=int(q("page_size", str(DEFAULT_PAGE_SIZE))),
                        examples=int(q("examples", "0")),
                    )
                except (ValueError, ReviewError) as exc:
                    self._send_json(400, {"error": str(exc)})
                    return
                self._send_json(200, result)
            elif url.path == "/final":
                result = service.final_view()
                if result is None:
                    self._send_json(404, {"error": "not finalized"})
                else:
                    self._send_json(200, result)
            elif ui_dir is not None:
                self._serve_static(url.path)
            else:
                self._send_json(404, {"error": f"no route {url.path}"})

        def do_POST(self):
            url = urlparse(self.path)
            if url.path not in ("/decisions", "/finalize"):
                self._send_json(404, {"error": f"no route {url.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"{}")
                if not isinstance(payload, dict):
                    raise ValueError("body must be a JSON object")
            except (ValueError, json.JSONDecodeError) as exc:
                self._send_json(400, {"error": f"bad request body: {exc}"})
                return
            if url.path == "/finalize":
                payload["action"] = "finalize"
            try:
                decision = service.submit(payload)
            except ReviewError as exc:
                self._send_json(409, {"error": str(exc)})
                return
            if decision["action"] == "finalize":
                self._send_json(200, {"decision": decision, "final": service.final_view()})
            else:
                self._send_json(200, {"decision": decision})

        def _serve_static(self, path: str) -> None:
            rel = path.lstrip("/") or "index.html"
            target = (ui_dir / rel).resolve()
            if not str(target).startswith(str(ui_dir.resolve())) or not target.is_file():
                self._send_json(404, {"error": f"no route {path}"})
                return
            body = target.read_bytes()
            ctype = {
                ".html": "text/html; charset=utf-8",
                ".js": "text/javascript; charset=utf-8",
                ".css": "text/css; charset=utf-8",
                ".json": "application/json; charset=utf-8",
            }.get(target.suffix, "application/octet-stream")
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self._cors()
            self.end_headers()
            self.wfile.write(body)

    return Handler


def build_server(service: ReviewService, port: int = 0, ui_dir: str | Path | None = None) -> ThreadingHTTPServer:
    handler = _make_handler(service, Path(ui_dir) if ui_dir else None)
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve(service: ReviewService, port: int = 0, ui_dir: str | Path | None = None) -> None:
    """Run until interrupted, announcing the bound address on stdout."""
    server = build_server(service, port, ui_dir)
    host, bound_port = server.server_address[:2]
    print(json.dumps({"listening": f"http://{host}:{bound_port}"}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
