"""HTTP/JSON service consumed by the studio UI.

Stateless request handling over stdlib threading HTTP: weights, schedule,
and config are immutable shared state; every request derives its own RNG
from the seed in its body, so concurrent requests are independent and
deterministic. Validation failures return status 400 with
{"error": <message>, "field": <path>}.
"""

from __future__ import annotations

import json
import logging
import time
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

from .denoiser import SKETCH_SIDE, VOCAB, VOCAB_VERSION, DenoiserParams, encode_condition
from .diffusion import DiffusionSchedule, SamplerConfig, refine, sample
from .layout import Layout
from .rules import RuleConfig, rule_report

log = logging.getLogger("layoutforge.server")

_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
    ".map": "application/json",
}


class RequestError(Exception):
    def __init__(self, message: str, field: str):
        super().__init__(message)
        self.field = field


def _require_seed(body: dict) -> int:
    seed = body.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise RequestError("seed must be an integer", "seed")
    return seed


def _parse_sketch(body: dict):
    sketch = body.get("sketch")
    if sketch is None:
        return None
    if not isinstance(sketch, list) or len(sketch) != SKETCH_SIDE * SKETCH_SIDE:
        raise RequestError(
            f"sketch must be a list of exactly {SKETCH_SIDE * SKETCH_SIDE} numbers", "sketch"
        )
    for i, v in enumerate(sketch):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
            raise RequestError("sketch entries must be numbers in [0,1]", f"sketch[{i}]")
    return sketch


def _parse_prompt(body: dict) -> str:
    prompt = body.get("prompt", "")
    if not isinstance(prompt, str):
        raise RequestError("prompt must be a string", "prompt")
    return prompt


def _parse_layout(body: dict) -> Layout:
    doc = body.get("layout")
    if not isinstance(doc, dict):
        raise RequestError("layout must be an object", "layout")
    try:
        return Layout.from_json_dict(doc)
    except (KeyError, ValueError, TypeError) as exc:
        raise RequestError(f"invalid layout: {exc}", "layout") from exc


class StudioApp:
    """Shared immutable state plus the request handlers."""

    def __init__(
        self,
        params: DenoiserParams,
        sched: DiffusionSchedule,
        rule_cfg: RuleConfig = RuleConfig(),
        projection_every: int = 25,
        static_dir: Optional[str] = None,
        model_version: str = "dev",
    ):
        self.params = params
        self.sched = sched
        self.rule_cfg = rule_cfg
        self.projection_every = projection_every
        self.static_dir = Path(static_dir).resolve() if static_dir else None
        self.model_version = model_version

    def _sampler_cfg(self, condition, seed: int, projection: bool) -> SamplerConfig:
        return SamplerConfig(
            seed=seed,
            steps=self.sched.T,
            condition=condition,
            projection_every=self.projection_every if projection else 0,
            rules=self.rule_cfg,
        )

    def _response(self, layout: Layout, elapsed_s: float) -> dict:
        return {
            "layout": layout.to_json_dict(),
            "rule_report": rule_report(layout, self.rule_cfg).to_json_dict(),
            "sample_time_ms": elapsed_s * 1e3,
            "model_version": self.model_version,
        }

    def handle_generate(self, body: dict) -> dict:
        seed = _require_seed(body)
        prompt = _parse_prompt(body)
        sketch = _parse_sketch(body)
        projection = body.get("projection", True)
        if not isinstance(projection, bool):
            raise RequestError("projection must be a boolean", "projection")
        condition = encode_condition(prompt, sketch)
        t0 = time.perf_counter()
        layout = sample(self._sampler_cfg(condition, seed, projection), self.params, self.sched)
        return self._response(layout, time.perf_counter() - t0)

    def handle_refine(self, body: dict) -> dict:
        seed = _require_seed(body)
        layout = _parse_layout(body)
        pinned = body.get("pinned", [])
        if not isinstance(pinned, list):
            raise RequestError("pinned must be a list of component indices", "pinned")
        for k, p in enumerate(pinned):
            if isinstance(p, bool) or not isinstance(p, int) or not 0 <= p < len(layout.components):
                raise RequestError(
                    f"pinned index must be an integer in [0, {len(layout.components)})",
                    f"pinned[{k}]",
                )
        t_start = body.get("t_start", max(1, self.sched.T // 2))
        if isinstance(t_start, bool) or not isinstance(t_start, int) or not 1 <= t_start <= self.sched.T:
            raise RequestError(f"t_start must be an integer in [1, {self.sched.T}]", "t_start")
        projection = body.get("projection", True)
        if not isinstance(projection, bool):
            raise RequestError("projection must be a boolean", "projection")
        prompt = _parse_prompt(body)
        sketch = _parse_sketch(body)
        condition = encode_condition(prompt, sketch) if (prompt or sketch is not None) else None
        t0 = time.perf_counter()
        refined = refine(
            layout,
            set(pinned),
            self._sampler_cfg(condition, seed, projection),
            t_start,
            self.params,
            self.sched,
        )
        return self._response(refined, time.perf_counter() - t0)

    def handle_vocab(self) -> dict:
        return {
            "vocab": list(VOCAB),
            "vocab_version": VOCAB_VERSION,
            "sketch_grid": [SKETCH_SIDE, SKETCH_SIDE],
        }

    def static_file(self, path: str) -> Optional[tuple[bytes, str]]:
        if self.static_dir is None:
            return None
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir)) or not target.is_file():
            return None
        ctype = _STATIC_TYPES.get(target.suffix, "application/octet-stream")
        return target.read_bytes(), ctype


class _Handler(BaseHTTPRequestHandler):
    app: StudioApp  # set by make_server

    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send_json(self, status: int, doc: dict) -> None:
        body = json.dumps(doc, separators=(",", ":")).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        try:
            doc = json.loads(raw or b"{}")
        except json.JSONDecodeError as exc:
            raise RequestError(f"request body is not valid JSON: {exc}", "$") from exc
        if not isinstance(doc, dict):
            raise RequestError("request body must be a JSON object", "$")
        return doc

    def do_GET(self):
        try:
            if self.path == "/health":
                self._send_json(200, {"status": "ok"})
            elif self.path == "/api/vocab":
                self._send_json(200, self.app.handle_vocab())
            else:
                served = self.app.static_file(self.path.split("?", 1)[0])
                if served is None:
                    self._send_json(404, {"error": "not found"})
                else:
                    body, ctype = served
                    self.send_response(200)
                    self.send_header("Content-Type", ctype)
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
        except Exception:
            self._internal_error()

    def do_POST(self):
        try:
            body = self._read_body()
            if self.path == "/api/generate":
                self._send_json(200, self.app.handle_generate(body))
            elif self.path == "/api/refine":
                self._send_json(200, self.app.handle_refine(body))
            else:
                self._send_json(404, {"error": "not found"})
        except RequestError as exc:
            self._send_json(400, {"error": str(exc), "field": exc.field})
        except Exception:
            self._internal_error()

    def _internal_error(self):
        error_id = uuid.uuid4().hex[:12]
        log.exception("internal error id=%s", error_id)
        try:
            self._send_json(500, {"error": "internal error", "id": error_id})
        except Exception:
            pass


def make_server(app: StudioApp, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) the threading HTTP server; port 0 picks a
    free port, which tests use."""
    handler = type("BoundHandler", (_Handler,), {"app": app})
    return ThreadingHTTPServer((host, port), handler)


def serve(app: StudioApp, host: str, port: int) -> None:
    server = make_server(app, host, port)
    log.info("serving on http://%s:%d", host, server.server_address[1])
    try:
        server.serve_forever()
    finally:
        server.server_close()
