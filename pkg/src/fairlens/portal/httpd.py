"""HTTP surface of the portal: JSON request/response bodies, bearer-token auth.

Handlers run on a threading server; every mutation funnels through the
service's single writer lock. Error bodies are ``{code, message, details}``
with the operation error names as codes.
"""

from __future__ import annotations

import json
import mimetypes
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional, Sequence
from urllib.parse import parse_qs, urlparse

from .. import blur as blur_mod
from ..errors import (
    AlreadyAwarded,
    AlreadyTerminal,
    BadAmount,
    BadParameter,
    DuplicateOpenTask,
    DuplicateVerdict,
    FairlensError,
    InvalidBox,
    MalformedRecord,
    NotVerified,
    SelfVerification,
    TaskClosed,
    ThresholdOutOfRange,
    Unauthorized,
    UnknownDataset,
    UnknownDetectionIndex,
    UnknownImage,
    UnknownSubmission,
    UnknownTask,
    UnknownUser,
)
from ..fairness import fairness_report, report_to_lines
from ..ingest import FORMAT_VERSION, _parse_json, manifest_to_lines
from ..raster import from_png_bytes, to_png_bytes
from ..types import (
    BoundingBox,
    DatasetManifest,
    Demographics,
    DetectionRecord,
    ImageEntry,
)
from .service import MissedBox, PortalService

_CONFLICTS = (DuplicateOpenTask, TaskClosed, AlreadyTerminal, AlreadyAwarded,
              DuplicateVerdict, SelfVerification, NotVerified)
_NOT_FOUND = (UnknownImage, UnknownTask, UnknownSubmission, UnknownUser, UnknownDataset)


def status_for(error: FairlensError) -> int:
    if isinstance(error, _CONFLICTS):
        return 409
    if isinstance(error, _NOT_FOUND):
        return 404
    if isinstance(error, Unauthorized):
        return 403
    return 400


def load_tokens(path) -> list[dict]:
    """Static token file: fairlens/1 records {token, user_id, roles}."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    header = _parse_json(lines[0], 1)
    if header.get("format") != FORMAT_VERSION or header.get("kind") != "tokens":
        raise MalformedRecord(1, "expected a fairlens/1 tokens file")
    out = []
    for offset, line in enumerate(lines[1:]):
        rec = _parse_json(line, offset + 2)
        out.append({"token": rec["token"], "user_id": rec["user_id"],
                    "roles": list(rec.get("roles", []))})
    return out


@dataclass
class PortalApp:
    """Shared state behind the HTTP handlers."""

    service: PortalService
    tokens: dict[str, str] = field(default_factory=dict)   # token -> user_id
    base_manifest: Optional[DatasetManifest] = None
    base_detections: tuple[DetectionRecord, ...] = ()
    dataset_id: str = "portal"
    ui_dir: Optional[str] = None

    @classmethod
    def from_token_file(cls, service: PortalService, token_path, **kwargs) -> "PortalApp":
        app = cls(service, **kwargs)
        for rec in load_tokens(token_path):
            service.register_user(rec["user_id"], rec["roles"])
            app.tokens[rec["token"]] = rec["user_id"]
        return app

    # -- dataset assembly ------------------------------------------------------

    def corrected_dataset(self, dataset_id: str) -> tuple[DatasetManifest, list[DetectionRecord]]:
        """Base dataset merged with portal images and verified corrections."""
        retrain = self.service.export_retrain_manifest(dataset_id)
        images: dict[str, ImageEntry] = {}
        detections: list[DetectionRecord] = []
        instances = []
        if self.base_manifest is not None and self.base_manifest.dataset_id == dataset_id:
            for img in self.base_manifest.images:
                images[img.image_id] = img
            instances.extend(self.base_manifest.instances)
            detections.extend(self.base_detections)
        for image_id, stored in sorted(self.service.images.items()):
            if stored.dataset_id == dataset_id and image_id not in images:
                images[image_id] = ImageEntry(image_id, None, Demographics())
        for task_id in sorted(self.service.tasks):
            task = self.service.tasks[task_id]
            if self.service.images[task.image_id].dataset_id == dataset_id:
                detections.extend(task.detections)
        instances.extend(retrain.instances)
        manifest = DatasetManifest(dataset_id, tuple(images.values()), tuple(instances),
                                   provenance="portal corrected dataset")
        return manifest, detections

    def anonymize_image(self, image_id: str, sigma: Optional[float],
                        margin: Optional[float]) -> tuple[bytes, str]:
        stored = self.service.images.get(image_id)
        if stored is None or stored.png is None:
            raise UnknownImage(image_id)
        boxes: list[BoundingBox] = []
        flagged: set[tuple] = set()
        task = None
        task_id = self.service.open_task_by_image.get(image_id)
        if task_id:
            task = self.service.tasks[task_id]
        for sub_id in sorted(self.service.submissions):
            sub = self.service.submissions[sub_id]
            if sub.state != "verified":
                continue
            sub_task = self.service.tasks[sub.task_id]
            if sub_task.image_id != image_id:
                continue
            for missed in sub.missed_boxes:
                boxes.append(missed.box)
            for flag in sub.false_positive_flags:
                det = sub_task.detections[flag]
                flagged.add((det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max))
        if task is not None:
            for det in task.detections:
                key = (det.box.x_min, det.box.y_min, det.box.x_max, det.box.y_max)
                if key not in flagged:
                    boxes.append(det.box)
        img = from_png_bytes(stored.png)
        config = blur_mod.BlurConfig(sigma=sigma, margin=0.1 if margin is None else margin)
        out, audit = blur_mod.anonymize(img, boxes, config, image_id=image_id)
        return to_png_bytes(out), audit.to_lines()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, ensure_ascii=False) + "\n").encode("utf-8")


def make_handler(app: PortalApp):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        # -- plumbing -----------------------------------------------------

        def _send(self, status: int, body: bytes, content_type: str = "application/json",
                  extra_headers: Optional[dict] = None):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            for k, v in (extra_headers or {}).items():
                self.send_header(k, v)
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, status: int, obj, extra_headers: Optional[dict] = None):
            self._send(status, _json_bytes(obj), extra_headers=extra_headers)

        def _send_error_obj(self, status: int, code: str, message: str, details=None):
            self._send_json(status, {"code": code, "message": message,
                                     "details": details or {}})

        def _auth(self) -> str:
            header = self.headers.get("Authorization", "")
            if header.startswith("Bearer "):
                token = header[len("Bearer "):].strip()
                user_id = app.tokens.get(token)
                if user_id:
                    return user_id
            raise PermissionError("missing or invalid bearer token")

        def _body(self) -> bytes:
            length = int(self.headers.get("Content-Length", "0") or "0")
            return self.rfile.read(length) if length else b""

        def _json_body(self) -> dict:
            raw = self._body()
            if not raw:
                return {}
            try:
                obj = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise MalformedRecord(1, f"invalid JSON body: {exc}") from exc
            if not isinstance(obj, dict):
                raise MalformedRecord(1, "body must be a JSON object")
            return obj

        # -- dispatch ------------------------------------------------------

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

        def _dispatch(self, method: str):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            query = {k: v[-1] for k, v in parse_qs(url.query).items()}
            try:
                if parts[:1] == ["ui"]:
                    return self._serve_ui(parts[1:])
                user_id = self._auth()
                handler = self._route(method, parts)
                if handler is None:
                    return self._send_error_obj(404, "NotFound",
                                                f"no route for {method} {url.path}")
                return handler(user_id, parts, query)
            except PermissionError as exc:
                return self._send_error_obj(401, "Unauthenticated", str(exc))
            except FairlensError as exc:
                return self._send_json(status_for(exc), exc.as_dict())
            except Exception as exc:  # pragma: no cover - defensive
                return self._send_error_obj(500, "InternalError", str(exc))

        def _route(self, method: str, parts: list[str]):
            routes = {
                ("POST", "images"): self._post_image,
                ("POST", "images/*/tasks"): self._post_task,
                ("POST", "images/*/anonymize"): self._post_anonymize,
                ("GET", "images/*"): self._get_image,
                ("GET", "tasks"): self._get_tasks,
                ("POST", "tasks/*/annotations"): self._post_annotation,
                ("GET", "annotations"): self._get_annotations,
                ("POST", "annotations/*/verdicts"): self._post_verdict,
                ("GET", "accounts/*/balance"): self._get_balance,
                ("POST", "datasets/*/revenue"): self._post_revenue,
                ("GET", "datasets/*/retrain-manifest"): self._get_retrain,
                ("GET", "datasets/*/reports/fairness"): self._get_fairness,
            }
            for (m, pattern), handler in routes.items():
                if m != method:
                    continue
                pat_parts = pattern.split("/")
                if len(pat_parts) != len(parts):
                    continue
                if all(p == "*" or p == q for p, q in zip(pat_parts, parts)):
                    return handler
            return None

        # -- endpoints ------------------------------------------------------

        def _post_image(self, user_id, parts, query):
            png = self._body()
            stored = app.service.upload_image(user_id, png,
                                              query.get("dataset", app.dataset_id))
            self._send_json(200, {"image_id": stored.image_id,
                                  "width": stored.width, "height": stored.height})

        def _get_image(self, user_id, parts, query):
            stored = app.service.images.get(parts[1])
            if stored is None or stored.png is None:
                raise UnknownImage(parts[1])
            self._send(200, stored.png, content_type="image/png")

        def _post_task(self, user_id, parts, query):
            body = self._json_body()
            detections = []
            for d in body.get("detections", []):
                try:
                    detections.append(DetectionRecord(
                        parts[1], BoundingBox.from_dict(d["box"]), float(d["confidence"])))
                except (KeyError, TypeError, ValueError) as exc:
                    raise MalformedRecord(1, f"bad detection: {exc}") from exc
            task = app.service.create_task(parts[1], detections, creator=user_id)
            self._send_json(200, task.as_dict())

        def _get_tasks(self, user_id, parts, query):
            state = query.get("state", "open")
            tasks = [t.as_dict() for t in app.service.open_tasks()] if state == "open" \
                else [t.as_dict() for _, t in sorted(app.service.tasks.items())
                      if t.state == state]
            self._send_json(200, tasks)

        def _post_annotation(self, user_id, parts, query):
            body = self._json_body()
            task = app.service.tasks.get(parts[1])
            if task is None:
                raise UnknownTask(parts[1])
            image = app.service.images[task.image_id]
            missed = []
            for m in body.get("missed_boxes", []):
                box = m.get("box", m)
                try:
                    coords = [float(box[k]) for k in ("x_min", "y_min", "x_max", "y_max")]
                except (KeyError, TypeError, ValueError) as exc:
                    raise MalformedRecord(1, f"bad missed box: {exc}") from exc
                if not all(0.0 <= c <= 1.0 for c in coords):
                    raise InvalidBox("normalized coordinates must lie in [0, 1]")
                pixel = BoundingBox(coords[0] * image.width, coords[1] * image.height,
                                    coords[2] * image.width, coords[3] * image.height)
                demo = None
                if "demographics" in m:
                    demo = Demographics.from_dict(m["demographics"])
                missed.append(MissedBox(pixel, demo))
            flags = [int(f) for f in body.get("false_positive_flags", [])]
            sub = app.service.submit_annotation(parts[1], user_id, missed, flags)
            self._send_json(200, self._submission_view(sub, image))

        def _submission_view(self, sub, image) -> dict:
            view = sub.as_dict()
            for m, stored in zip(view["payload"]["missed_boxes"], sub.missed_boxes):
                b = stored.box
                m["normalized_box"] = {
                    "x_min": b.x_min / image.width, "y_min": b.y_min / image.height,
                    "x_max": b.x_max / image.width, "y_max": b.y_max / image.height}
            return view

        def _get_annotations(self, user_id, parts, query):
            state = query.get("state")
            views = []
            for sub_id in sorted(app.service.submissions):
                sub = app.service.submissions[sub_id]
                if state and sub.state != state:
                    continue
                task = app.service.tasks[sub.task_id]
                image = app.service.images[task.image_id]
                views.append(self._submission_view(sub, image))
            self._send_json(200, views)

        def _post_verdict(self, user_id, parts, query):
            body = self._json_body()
            decision = body.get("decision", "")
            sub = app.service.cast_verdict(parts[1], user_id, decision)
            task = app.service.tasks[sub.task_id]
            image = app.service.images[task.image_id]
            self._send_json(200, self._submission_view(sub, image))

        def _get_balance(self, user_id, parts, query):
            balance = app.service.get_balance(parts[1])
            self._send_json(200, {"user_id": parts[1], "balance": balance})

        def _post_revenue(self, user_id, parts, query):
            body = self._json_body()
            amount = body.get("amount")
            if not isinstance(amount, int) or isinstance(amount, bool):
                raise BadAmount(amount)
            rev = app.service.record_revenue(parts[1], amount)
            self._send_json(200, rev.as_dict())

        def _get_retrain(self, user_id, parts, query):
            since = float(query.get("since", "0") or "0")
            manifest = app.service.export_retrain_manifest(parts[1], since)
            body = manifest_to_lines(manifest).encode("utf-8")
            self._send(200, body, content_type="text/plain; charset=utf-8")

        def _get_fairness(self, user_id, parts, query):
            tau = float(query.get("tau", "0.5"))
            grouping = query.get("grouping", "ethnicity")
            if grouping not in ("ethnicity", "gender", "age_group"):
                raise BadParameter(f"unknown grouping {grouping!r}")
            manifest, detections = app.corrected_dataset(parts[1])
            report = fairness_report(manifest, detections, tau, grouping)
            self._send(200, report_to_lines(report).encode("utf-8"),
                       content_type="text/plain; charset=utf-8")

        def _post_anonymize(self, user_id, parts, query):
            body = self._json_body()
            sigma = body.get("sigma")
            margin = body.get("margin")
            png, audit_lines = app.anonymize_image(
                parts[1],
                float(sigma) if sigma is not None else None,
                float(margin) if margin is not None else None)
            audit_json = json.dumps(json.loads("[" + ",".join(
                line for line in audit_lines.strip().split("\n")) + "]"))
            self._send(200, png, content_type="image/png",
                       extra_headers={"X-Anonymization-Audit": audit_json})

        # -- static UI --------------------------------------------------------

        def _serve_ui(self, rel_parts: list[str]):
            if app.ui_dir is None:
                return self._send_error_obj(404, "NotFound", "no UI bundle configured")
            root = Path(app.ui_dir).resolve()
            rel = "/".join(rel_parts) or "index.html"
            target = (root / rel).resolve()
            if not target.is_relative_to(root) or not target.is_file():
                return self._send_error_obj(404, "NotFound", f"no asset {rel!r}")
            ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
            self._send(200, target.read_bytes(), content_type=ctype)

    return Handler


def make_server(app: PortalApp, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), make_handler(app))
