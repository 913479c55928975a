"""Request handling shared by the offline ``recommend`` command and the HTTP service."""

from __future__ import annotations

import json
import logging
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Mapping, Optional

import numpy as np

from .data.events import InteractionEvent
from .data.sessions import GAP_SECONDS, LONGTERM_CAP, LOOKBACK_DAYS, MAX_SESSION_LEN, long_term_subsets, segment_sessions
from .matching import ItemIndex, score_all, top_n
from .model.embedding import OOV
from .training.checkpoint import Checkpoint

log = logging.getLogger(__name__)


class RequestError(ValueError):
    """The request cannot be turned into a prediction (reported as HTTP 400)."""


def parse_request(req) -> tuple[str, dict, list[InteractionEvent], int]:
    if not isinstance(req, Mapping):
        raise RequestError("request must be a JSON object")
    user = str(req.get("user_id", "anonymous"))
    profile = req.get("profile") or {}
    if not isinstance(profile, Mapping):
        raise RequestError("profile must be an object")
    profile = {str(k): str(v) for k, v in profile.items()}
    profile.setdefault("user_id", user)
    n = req.get("n", 10)
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise RequestError("n must be an integer >= 1")
    raw = req.get("events")
    if not isinstance(raw, list) or not raw:
        raise RequestError("events must be a non-empty list")
    events = []
    for k, rec in enumerate(raw):
        if not isinstance(rec, Mapping):
            raise RequestError(f"event {k} is not an object")
        try:
            events.append(InteractionEvent.from_json({**rec, "user_id": user}))
        except (KeyError, TypeError, ValueError) as exc:
            raise RequestError(f"event {k} invalid: {exc}") from None
    return user, profile, events, n


class Recommender:
    """Sessionize raw events, predict the behaviour vector and retrieve exact top-N."""

    def __init__(
        self,
        checkpoint: Checkpoint,
        gap_seconds: int = GAP_SECONDS,
        max_session_len: int = MAX_SESSION_LEN,
        lookback_days: int = LOOKBACK_DAYS,
        longterm_cap: int = LONGTERM_CAP,
    ):
        self.model = checkpoint.model
        self.version = checkpoint.config_hash
        self.index = ItemIndex.from_vocab(self.model.output_matrix().data, self.model.vocab)
        self.gap_seconds = gap_seconds
        self.max_session_len = max_session_len
        self.lookback_days = lookback_days
        self.longterm_cap = longterm_cap

    def split(self, events: list[InteractionEvent]):
        """Latest session is short-term; earlier events feed the long-term subsets."""
        sessions = segment_sessions(events, self.gap_seconds, self.max_session_len)
        if not sessions:
            raise RequestError("no short-term session could be built")
        short = sessions[-1]
        earlier = [e for s in sessions[:-1] for e in s.events]
        long_term = long_term_subsets(earlier, short.start, self.lookback_days, self.longterm_cap)
        return short, long_term

    def behaviour_vector(self, events, long_term, profile) -> np.ndarray:
        batch = self.model.make_batch([events], [long_term], [profile])
        return self.model.behaviour_vectors(batch)[0]

    def recommend(self, req) -> dict:
        start = time.perf_counter()
        _, profile, events, n = parse_request(req)
        short, long_term = self.split(events)
        o = self.behaviour_vector(short.events, long_term, profile)
        exclude = {self.index.index_of(e.item_id) for e in short.events}
        exclude.add(OOV)
        ranked = top_n(score_all(o, self.index), n, exclude)
        items = [{"item_id": self.index.item_ids[i], "score": s} for i, s in ranked]
        return {
            "items": items,
            "model_version": self.version,
            "latency_ms": (time.perf_counter() - start) * 1000.0,
        }


class _Handler(BaseHTTPRequestHandler):
    recommender: Recommender  # set on the per-server subclass
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True  # headers and body go out in separate writes

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/healthz":
            self._send(200, {"status": "ok", "model_version": self.recommender.version})
        else:
            self._send(404, {"error": "not_found", "path": self.path})

    def do_POST(self):
        if self.path != "/recommend":
            self._send(404, {"error": "not_found", "path": self.path})
            return
        length = int(self.headers.get("Content-Length") or 0)
        try:
            req = json.loads(self.rfile.read(length) or b"null")
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            self._send(400, {"error": "bad_json", "detail": str(exc)})
            return
        try:
            self._send(200, self.recommender.recommend(req))
        except RequestError as exc:
            self._send(400, {"error": "bad_request", "detail": str(exc)})
        except Exception as exc:  # pragma: no cover - keep the server alive
            log.exception("recommend failed")
            self._send(500, {"error": "internal", "detail": str(exc)})

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)


def make_server(recommender: Recommender, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    """Bind a threaded HTTP server; ``port=0`` picks a free port."""
    handler = type("RecommendHandler", (_Handler,), {"recommender": recommender})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve(checkpoint: Checkpoint, host: str = "127.0.0.1", port: int = 8080, ready: Optional[callable] = None) -> None:
    server = make_server(Recommender(checkpoint), host, port)
    if ready is not None:
        ready(server)
    try:
        server.serve_forever()
    finally:
        server.server_close()
