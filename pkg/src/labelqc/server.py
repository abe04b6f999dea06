"""HTTP review service: a sequential human-in-the-loop cleaning session.

One dataset per process. The margin inspector builds a suspicion queue; a
reviewer keeps or relabels queued samples, may trigger a retrain, and watches
live precision. All mutations pass through one lock (linearizable session)
and every response carries the revision it observed.

Endpoints (JSON over HTTP):
    GET  /api/session          session summary
    GET  /api/queue?limit=n    first n undecided queue items
    POST /api/decision         {"id": int, "action": "keep"|"relabel", "new_label": int?}
    GET  /api/metrics          live stats snapshot
    POST /api/retrain          refit on current labels, rebuild the queue
Static files under / are served from the configured UI bundle directory.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

import numpy as np

from .data import Dataset, load_dataset_csv, make_blobs
from .detectors import DetectorConfig, cincer_margin, detect_cincer
from .errors import LabelQCError, SessionError
from .models import ClassifierSpec, TrainedModel, predict_proba, train_classifier


@dataclass
class Decision:
    example_id: int
    action: str  # keep | relabel
    new_label: Optional[int] = None
    timestamp: float = field(default_factory=time.time)

    def to_json_dict(self) -> dict:
        return {
            "id": self.example_id,
            "action": self.action,
            "new_label": self.new_label,
            "timestamp": self.timestamp,
        }


class ReviewSession:
    """Single-dataset review state; callers must hold no external locks."""

    def __init__(
        self,
        dataset: Dataset,
        classifier: ClassifierSpec,
        detector: DetectorConfig,
        decisions_log: Optional[Path] = None,
    ):
        self.dataset = dataset
        self.classifier = classifier
        self.detector = detector
        self.labels = dataset.labels.copy()
        self.decisions: dict[int, Decision] = {}
        self.revision = 0
        self.keeps = 0
        self.relabels = 0
        self.decisions_log = decisions_log
        self._lock = threading.Lock()
        self._retrain_lock = threading.Lock()
        self.model: Optional[TrainedModel] = None
        self.queue: list[dict] = []
        self._fit_and_build_queue()

    # -- internals ---------------------------------------------------------

    def _working_dataset(self) -> Dataset:
        return self.dataset.with_labels(self.labels)

    def _fit_and_build_queue(self) -> None:
        working = self._working_dataset()
        try:
            self.model, _ = train_classifier(working, self.classifier)
        except LabelQCError as exc:
            raise SessionError(f"training failed: {exc}") from exc
        report = detect_cincer(self.model, working, self.detector)
        probs = predict_proba(self.model, working.features)
        items = []
        for i in np.flatnonzero(report.flags):
            sample_id = int(working.ids[i])
            if sample_id in self.decisions:
                continue
            margin = cincer_margin(probs[i])
            ce_id = report.metadata["counterexamples"].get(sample_id)
            items.append(self._queue_item(working, probs, int(i), sample_id, margin, ce_id))
        items.sort(key=lambda it: (it["margin"], it["id"]))
        self.queue = items

    def _queue_item(self, working, probs, idx, sample_id, margin, ce_id) -> dict:
        item = {
            "id": sample_id,
            "index": idx,
            "margin": float(margin),
            "observed_label": int(self.labels[idx]),
            "predicted_label": int(np.argmax(probs[idx])),
            "probs": [float(v) for v in probs[idx]],
            "features": [float(v) for v in working.features[idx]],
            "counterexample": None,
        }
        if ce_id is not None:
            ce_idx = int(np.flatnonzero(working.ids == ce_id)[0])
            item["counterexample"] = {
                "id": int(ce_id),
                "label": int(self.labels[ce_idx]),
                "features": [float(v) for v in working.features[ce_idx]],
                "probs": [float(v) for v in probs[ce_idx]],
            }
        return item

    def _stats(self) -> dict:
        reviewed = self.keeps + self.relabels
        return {
            "reviewed": reviewed,
            "keeps": self.keeps,
            "relabels": self.relabels,
            "precision": (self.relabels / reviewed) if reviewed > 0 else None,
            "queue_remaining": len(self.queue),
            "estimated_remaining_noise": len(self.queue) / self.dataset.n,
            "revision": self.revision,
        }

    def _log_decision(self, decision: Decision) -> None:
        if self.decisions_log is None:
            return
        with self.decisions_log.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(decision.to_json_dict()) + "\n")

    # -- API surface ---------------------------------------------------------

    def session_info(self) -> dict:
        with self._lock:
            return {
                "dataset": {
                    "name": self.dataset.name,
                    "n": self.dataset.n,
                    "dim": self.dataset.dim,
                    "num_classes": self.dataset.num_classes,
                },
                "threshold": self.detector.threshold,
                "stats": self._stats(),
                "revision": self.revision,
            }

    def queue_page(self, limit: int) -> dict:
        with self._lock:
            items = self.queue[: max(0, limit)]
            return {
                "revision": self.revision,
                "total_remaining": len(self.queue),
                "items": [dict(it) for it in items],
            }

    def metrics(self) -> dict:
        with self._lock:
            return self._stats()

    def submit(self, payload: dict) -> dict:
        with self._lock:
            example_id = payload.get("id")
            action = payload.get("action")
            if not isinstance(example_id, int) or action not in ("keep", "relabel"):
                raise SessionError("decision needs an integer id and action keep|relabel")
            if example_id in self.decisions:
                stats = self._stats()
                stats["duplicate"] = True
                return stats
            pos = next((i for i, it in enumerate(self.queue) if it["id"] == example_id), None)
            if pos is None:
                raise SessionError(f"id {example_id} is not in the queue")
            idx = self.queue[pos]["index"]
            new_label = payload.get("new_label")
            if action == "relabel":
                if (
                    not isinstance(new_label, int)
                    or not 0 <= new_label < self.dataset.num_classes
                    or new_label == int(self.labels[idx])
                ):
                    raise SessionError(
                        "relabel needs a new_label in range that differs from the current label"
                    )
                self.labels[idx] = new_label
                self.relabels += 1
            else:
                new_label = None
                self.keeps += 1
            decision = Decision(example_id=example_id, action=action, new_label=new_label)
            self.decisions[example_id] = decision
            self._log_decision(decision)
            del self.queue[pos]
            self.revision += 1
            stats = self._stats()
            stats["duplicate"] = False
            return stats

    def retrain(self) -> dict:
        if not self._retrain_lock.acquire(blocking=False):
            raise SessionError("retrain already in progress")
        try:
            with self._lock:
                self._fit_and_build_queue()
                self.revision += 1
                return {"revision": self.revision, "queue_remaining": len(self.queue)}
        finally:
            self._retrain_lock.release()


def start_session(config: dict) -> ReviewSession:
    """Build a ReviewSession from a serve-config dict (see README)."""
    seed = int(config.get("seed", 42))
    ds_cfg = config.get("dataset", {})
    if "path" in ds_cfg:
        dataset = load_dataset_csv(ds_cfg["path"], name=ds_cfg.get("name"))
    elif "synthetic" in ds_cfg:
        s = ds_cfg["synthetic"]
        dataset = make_blobs(
            n=int(s["n"]),
            d=int(s.get("d", 2)),
            m=int(s.get("m", 2)),
            separation=float(s.get("separation", 8.0)),
            seed=seed,
        )
    else:
        raise SessionError("serve config needs dataset.path or dataset.synthetic")
    classifier = ClassifierSpec(**config.get("classifier", {}))
    detector = DetectorConfig(**{"method": "cincer", **config.get("detector", {})})
    log = config.get("decisions_log")
    return ReviewSession(
        dataset=dataset,
        classifier=classifier,
        detector=detector,
        decisions_log=Path(log) if log else None,
    )


class _Handler(BaseHTTPRequestHandler):
    session: Optional[ReviewSession] = None
    static_dir: Optional[Path] = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    def do_GET(self):
        parsed = urlparse(self.path)
        if self.session is None and parsed.path.startswith("/api/"):
            self._send_error(409, "no active session")
            return
        if parsed.path == "/api/session":
            self._send_json(200, self.session.session_info())
        elif parsed.path == "/api/queue":
            params = parse_qs(parsed.query)
            try:
                limit = int(params.get("limit", ["10"])[0])
            except ValueError:
                self._send_error(400, "limit must be an integer")
                return
            self._send_json(200, self.session.queue_page(limit))
        elif parsed.path == "/api/metrics":
            self._send_json(200, self.session.metrics())
        else:
            self._serve_static(parsed.path)

    def do_POST(self):
        parsed = urlparse(self.path)
        if self.session is None:
            self._send_error(409, "no active session")
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            payload = json.loads(raw.decode("utf-8")) if raw else {}
        except json.JSONDecodeError:
            self._send_error(400, "body must be JSON")
            return
        if parsed.path == "/api/decision":
            try:
                self._send_json(200, self.session.submit(payload))
            except SessionError as exc:
                msg = str(exc)
                status = 404 if "not in the queue" in msg else 400
                self._send_error(status, msg)
        elif parsed.path == "/api/retrain":
            try:
                self._send_json(200, self.session.retrain())
            except SessionError as exc:
                self._send_error(409, str(exc))
        else:
            self._send_error(404, "unknown endpoint")

    def _serve_static(self, path: str) -> None:
        if self.static_dir is None:
            self._send_error(404, "no UI bundle configured")
            return
        rel = path.lstrip("/") or "index.html"
        target = (self.static_dir / rel).resolve()
        if not str(target).startswith(str(self.static_dir.resolve())) or not target.is_file():
            self._send_error(404, "not found")
            return
        ctype = {
            ".html": "text/html; charset=utf-8",
            ".js": "application/javascript; charset=utf-8",
            ".css": "text/css; charset=utf-8",
            ".svg": "image/svg+xml",
        }.get(target.suffix, "application/octet-stream")
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(session: ReviewSession, port: int, static_dir=None) -> ThreadingHTTPServer:
    handler = type("SessionHandler", (_Handler,), {
        "session": session,
        "static_dir": Path(static_dir) if static_dir else None,
    })
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve(config: dict, port: int, static_dir=None) -> None:
    session = start_session(config)
    server = make_server(session, port, static_dir)
    print(f"labelqc review server on http://127.0.0.1:{server.server_address[1]}/", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
