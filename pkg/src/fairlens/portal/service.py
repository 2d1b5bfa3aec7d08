"""Annotation-portal core: tasks, submissions, verdicts, and the incentive ledger.

State is a pure fold over an append-only event log. Commands validate against
current state, append events, and apply them; replaying the persisted log
rebuilds identical balances and submission states. All mutations are
serialized through one lock, so the ledger never observes a partial update.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from ..errors import (
    AlreadyAwarded,
    AlreadyTerminal,
    BadAmount,
    BadParameter,
    DuplicateOpenTask,
    DuplicateVerdict,
    NoContributors,
    NotVerified,
    SelfVerification,
    TaskClosed,
    Unauthorized,
    UnknownDataset,
    UnknownDetectionIndex,
    UnknownImage,
    UnknownSubmission,
    UnknownTask,
    UnknownUser,
)
from ..ingest import FORMAT_VERSION, _dump, _parse_json
from ..types import (
    BoundingBox,
    DatasetManifest,
    Demographics,
    DetectionRecord,
    FaceInstance,
    ImageEntry,
    NEGATIVE,
    POSITIVE,
)

TREASURY = "platform-treasury"

ROLES = ("uploader", "annotator", "verifier")


@dataclass(frozen=True)
class PortalConfig:
    quorum: int = 2
    bounty: int = 100
    verification_fee: int = 10
    role_weights: dict[str, float] = field(default_factory=lambda: {
        "uploader": 0.5, "annotator": 0.3, "verifier": 0.2})


@dataclass
class User:
    user_id: str
    roles: tuple[str, ...]


@dataclass
class StoredImage:
    image_id: str
    dataset_id: str
    uploader: str
    width: int
    height: int
    sha256: str
    png: Optional[bytes] = None


@dataclass
class AnnotationTask:
    task_id: str
    image_id: str
    detections: tuple[DetectionRecord, ...]
    state: str = "open"
    created_at: float = 0.0

    def as_dict(self) -> dict:
        return {"task_id": self.task_id, "image_id": self.image_id,
                "detections": [d.as_dict() for d in self.detections],
                "state": self.state, "created_at": self.created_at}


@dataclass
class MissedBox:
    box: BoundingBox
    demographics: Optional[Demographics] = None

    def as_dict(self) -> dict:
        d = {"box": self.box.as_dict()}
        if self.demographics is not None:
            d["demographics"] = self.demographics.as_dict()
        return d


@dataclass
class AnnotationSubmission:
    submission_id: str
    task_id: str
    annotator: str
    missed_boxes: tuple[MissedBox, ...]
    false_positive_flags: tuple[int, ...]
    state: str = "submitted"
    verdicts: list[dict] = field(default_factory=list)
    verified_at: Optional[float] = None
    awarded: bool = False

    def as_dict(self) -> dict:
        return {"submission_id": self.submission_id, "task_id": self.task_id,
                "annotator": self.annotator,
                "payload": {"missed_boxes": [m.as_dict() for m in self.missed_boxes],
                            "false_positive_flags": list(self.false_positive_flags)},
                "state": self.state, "verdicts": list(self.verdicts)}


@dataclass(frozen=True)
class LedgerEntry:
    entry_id: int
    debit: str
    credit: str
    amount: int
    reason: str           # bounty | verification_fee | royalty
    reference: str

    def as_dict(self) -> dict:
        return {"entry_id": self.entry_id, "debit": self.debit, "credit": self.credit,
                "amount": self.amount, "reason": self.reason, "reference": self.reference}


@dataclass
class RevenueEvent:
    event_id: str
    dataset_id: str
    amount: int
    allocations: tuple[tuple[str, int], ...]

    def as_dict(self) -> dict:
        return {"event_id": self.event_id, "dataset_id": self.dataset_id,
                "amount": self.amount,
                "allocations": [{"user_id": u, "amount": a} for u, a in self.allocations]}


def largest_remainder(shares: dict[str, float], amount: int) -> dict[str, int]:
    """Integer allocation of `amount` proportional to real-valued shares.

    Floors each share, then hands the remaining units out by largest
    fractional part, ties broken by ascending user id. Allocations always
    sum to `amount` exactly.
    """
    total = sum(shares.values())
    real = {u: amount * (w / total) for u, w in shares.items()}
    floors = {u: int(real[u]) for u in real}
    leftover = amount - sum(floors.values())
    order = sorted(real, key=lambda u: (-(real[u] - floors[u]), u))
    for u in order[:leftover]:
        floors[u] += 1
    return floors


class PortalService:
    """Single-writer portal state machine over an append-only event log."""

    def __init__(
        self,
        config: PortalConfig = PortalConfig(),
        log_path: Optional[str] = None,
        clock: Callable[[], float] = time.time,
        blob_dir: Optional[str] = None,
    ):
        self.config = config
        self.clock = clock
        self._lock = threading.RLock()
        self._log_path = Path(log_path) if log_path else None
        self._blob_dir = Path(blob_dir) if blob_dir else None
        if self._blob_dir:
            self._blob_dir.mkdir(parents=True, exist_ok=True)
        self._seq = 0
        self.users: dict[str, User] = {}
        self.images: dict[str, StoredImage] = {}
        self.tasks: dict[str, AnnotationTask] = {}
        self.open_task_by_image: dict[str, str] = {}
        self.submissions: dict[str, AnnotationSubmission] = {}
        self.ledger: list[LedgerEntry] = []
        self.revenue_events: dict[str, RevenueEvent] = {}
        # dataset -> user -> {"uploads": n, "annotations": n, "verdicts": n}
        self.contributions: dict[str, dict[str, dict[str, int]]] = {}
        if self._log_path and self._log_path.exists():
            self._replay_file()
        elif self._log_path:
            self._log_path.write_text(
                _dump({"format": FORMAT_VERSION, "kind": "events"}) + "\n",
                encoding="utf-8")

    # -- event plumbing ---------------------------------------------------

    def _replay_file(self):
        lines = self._log_path.read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        header = _parse_json(lines[0], 1)
        if header.get("kind") != "events":
            raise ValueError(f"not an event log: {self._log_path}")
        for offset, line in enumerate(lines[1:]):
            event = _parse_json(line, offset + 2)
            self._apply(event)
            self._seq = event["seq"]

    def _emit(self, kind: str, **payload) -> dict:
        self._seq += 1
        event = {"seq": self._seq, "at": self.clock(), "kind": kind, **payload}
        self._apply(event)
        if self._log_path:
            with self._log_path.open("a", encoding="utf-8") as fh:
                fh.write(_dump(event) + "\n")
        return event

    def _apply(self, event: dict) -> None:
        handler = getattr(self, f"_apply_{event['kind']}")
        handler(event)

    def _contrib(self, dataset_id: str, user_id: str) -> dict[str, int]:
        dataset = self.contributions.setdefault(dataset_id, {})
        return dataset.setdefault(user_id, {"uploads": 0, "annotations": 0, "verdicts": 0})

    # -- users -------------------------------------------------------------

    def register_user(self, user_id: str, roles: Sequence[str]) -> User:
        with self._lock:
            roles = tuple(roles)
            if not roles or any(r not in ROLES for r in roles):
                raise BadParameter(f"roles must be a non-empty subset of {ROLES}")
            if user_id in self.users:
                existing = self.users[user_id]
                merged = tuple(r for r in ROLES if r in set(existing.roles) | set(roles))
                if merged != existing.roles:
                    self._emit("register_user", user_id=user_id, roles=list(merged))
                return self.users[user_id]
            self._emit("register_user", user_id=user_id, roles=list(roles))
            return self.users[user_id]

    def _apply_register_user(self, event: dict) -> None:
        self.users[event["user_id"]] = User(event["user_id"], tuple(event["roles"]))

    def _require_role(self, user_id: str, role: str) -> User:
        user = self.users.get(user_id)
        if user is None:
            raise UnknownUser(user_id)
        if role not in user.roles:
            raise Unauthorized(user_id, role)
        return user

    # -- images ------------------------------------------------------------

    def upload_image(self, uploader: str, png_bytes: bytes,
                     dataset_id: str = "portal") -> StoredImage:
        from ..raster import from_png_bytes

        with self._lock:
            self._require_role(uploader, "uploader")
            img = from_png_bytes(png_bytes)
            image_id = f"img-{self._seq + 1:06d}"
            sha = hashlib.sha256(png_bytes).hexdigest()
            if self._blob_dir:
                (self._blob_dir / f"{image_id}.png").write_bytes(png_bytes)
            event = self._emit("upload_image", image_id=image_id, dataset_id=dataset_id,
                               uploader=uploader, width=img.width, height=img.height,
                               sha256=sha)
            stored = self.images[image_id]
            stored.png = png_bytes
            return stored

    def _apply_upload_image(self, event: dict) -> None:
        image = StoredImage(event["image_id"], event["dataset_id"], event["uploader"],
                            event["width"], event["height"], event["sha256"])
        if self._blob_dir:
            blob = self._blob_dir / f"{image.image_id}.png"
            if blob.exists():
                image.png = blob.read_bytes()
        self.images[image.image_id] = image
        self._contrib(image.dataset_id, image.uploader)["uploads"] += 1

    # -- tasks ---------------------------------------------------------------

    def create_task(self, image_id: str, detections: Sequence[DetectionRecord],
                    creator: Optional[str] = None) -> AnnotationTask:
        with self._lock:
            if creator is not None:
                self._require_role(creator, "uploader")
            if image_id not in self.images:
                raise UnknownImage(image_id)
            if image_id in self.open_task_by_image:
                raise DuplicateOpenTask(image_id)
            task_id = f"task-{self._seq + 1:06d}"
            self._emit("create_task", task_id=task_id, image_id=image_id,
                       detections=[d.as_dict() for d in detections])
            return self.tasks[task_id]

    def _apply_create_task(self, event: dict) -> None:
        detections = tuple(DetectionRecord.from_dict(d) for d in event["detections"])
        task = AnnotationTask(event["task_id"], event["image_id"], detections,
                              "open", event["at"])
        self.tasks[task.task_id] = task
        self.open_task_by_image[task.image_id] = task.task_id

    def open_tasks(self) -> list[AnnotationTask]:
        with self._lock:
            return [t for _, t in sorted(self.tasks.items()) if t.state == "open"]

    # -- submissions -----------------------------------------------------------

    def submit_annotation(self, task_id: str, annotator: str,
                          missed_boxes: Sequence[MissedBox],
                          false_positive_flags: Sequence[int]) -> AnnotationSubmission:
        with self._lock:
            self._require_role(annotator, "annotator")
            task = self.tasks.get(task_id)
            if task is None:
                raise UnknownTask(task_id)
            if task.state != "open":
                raise TaskClosed(task_id)
            for flag in false_positive_flags:
                if not 0 <= flag < len(task.detections):
                    raise UnknownDetectionIndex(flag, len(task.detections))
            submission_id = f"sub-{self._seq + 1:06d}"
            self._emit(
                "submit_annotation", submission_id=submission_id, task_id=task_id,
                annotator=annotator,
                missed_boxes=[m.as_dict() for m in missed_boxes],
                false_positive_flags=[int(f) for f in false_positive_flags])
            return self.submissions[submission_id]

    def _apply_submit_annotation(self, event: dict) -> None:
        missed = tuple(
            MissedBox(BoundingBox.from_dict(m["box"]),
                      Demographics.from_dict(m["demographics"]) if "demographics" in m else None)
            for m in event["missed_boxes"])
        sub = AnnotationSubmission(event["submission_id"], event["task_id"],
                                   event["annotator"], missed,
                                   tuple(event["false_positive_flags"]))
        self.submissions[sub.submission_id] = sub

    # -- verdicts & bounties ------------------------------------------------------

    def cast_verdict(self, submission_id: str, verifier: str,
                     decision: str) -> AnnotationSubmission:
        with self._lock:
            if decision not in ("approve", "reject"):
                raise BadParameter(f"decision must be approve or reject, got {decision!r}")
            self._require_role(verifier, "verifier")
            sub = self.submissions.get(submission_id)
            if sub is None:
                raise UnknownSubmission(submission_id)
            if sub.state != "submitted":
                raise AlreadyTerminal(submission_id, sub.state)
            if verifier == sub.annotator:
                raise SelfVerification(verifier)
            if any(v["verifier"] == verifier for v in sub.verdicts):
                raise DuplicateVerdict(verifier)
            self._emit("cast_verdict", submission_id=submission_id,
                       verifier=verifier, decision=decision)
            sub = self.submissions[submission_id]
            if sub.state == "verified" and not sub.awarded:
                self._award_bounty_locked(sub)
            return sub

    def _apply_cast_verdict(self, event: dict) -> None:
        sub = self.submissions[event["submission_id"]]
        sub.verdicts.append({"verifier": event["verifier"],
                             "decision": event["decision"], "at": event["at"]})
        approvals = sum(1 for v in sub.verdicts if v["decision"] == "approve")
        rejections = sum(1 for v in sub.verdicts if v["decision"] == "reject")
        if approvals >= self.config.quorum:
            sub.state = "verified"
            sub.verified_at = event["at"]
        elif rejections >= self.config.quorum:
            sub.state = "rejected"

    def award_bounty(self, submission_id: str) -> list[LedgerEntry]:
        with self._lock:
            sub = self.submissions.get(submission_id)
            if sub is None:
                raise UnknownSubmission(submission_id)
            if sub.state != "verified":
                raise NotVerified(submission_id, sub.state)
            if sub.awarded:
                raise AlreadyAwarded(submission_id)
            return self._award_bounty_locked(sub)

    def _award_bounty_locked(self, sub: AnnotationSubmission) -> list[LedgerEntry]:
        approvers = [v["verifier"] for v in sub.verdicts if v["decision"] == "approve"]
        before = len(self.ledger)
        self._emit("award_bounty", submission_id=sub.submission_id,
                   annotator=sub.annotator, approvers=approvers)
        return self.ledger[before:]

    def _apply_award_bounty(self, event: dict) -> None:
        sub = self.submissions[event["submission_id"]]
        sub.awarded = True
        ref = event["submission_id"]
        self._append_ledger(TREASURY, event["annotator"], self.config.bounty, "bounty", ref)
        for verifier in event["approvers"]:
            self._append_ledger(TREASURY, verifier, self.config.verification_fee,
                                "verification_fee", ref)
        task = self.tasks[sub.task_id]
        dataset_id = self.images[task.image_id].dataset_id
        self._contrib(dataset_id, sub.annotator)["annotations"] += 1
        for verifier in event["approvers"]:
            self._contrib(dataset_id, verifier)["verdicts"] += 1

    def _append_ledger(self, debit: str, credit: str, amount: int,
                       reason: str, reference: str) -> None:
        self.ledger.append(LedgerEntry(len(self.ledger) + 1, debit, credit,
                                       int(amount), reason, reference))

    # -- revenue --------------------------------------------------------------

    def record_revenue(self, dataset_id: str, amount: int) -> RevenueEvent:
        with self._lock:
            if not isinstance(amount, int) or amount <= 0:
                raise BadAmount(amount)
            shares = self._royalty_shares(dataset_id)
            if not shares:
                raise NoContributors(dataset_id)
            allocations = largest_remainder(shares, amount)
            alloc_list = [[u, allocations[u]] for u in sorted(allocations)
                          if allocations[u] > 0]
            event_id = f"rev-{self._seq + 1:06d}"
            self._emit("record_revenue", event_id=event_id, dataset_id=dataset_id,
                       amount=amount, allocations=alloc_list)
            return self.revenue_events[event_id]

    def _royalty_shares(self, dataset_id: str) -> dict[str, float]:
        contribs = self.contributions.get(dataset_id, {})
        role_counts = {"uploader": 0, "annotator": 0, "verifier": 0}
        key_for_role = {"uploader": "uploads", "annotator": "annotations",
                        "verifier": "verdicts"}
        for user_counts in contribs.values():
            for role, key in key_for_role.items():
                role_counts[role] += user_counts[key]
        present = [r for r in ROLES if role_counts[r] > 0]
        if not present:
            return {}
        weight_total = sum(self.config.role_weights[r] for r in present)
        shares: dict[str, float] = {}
        for user_id, counts in contribs.items():
            share = 0.0
            for role in present:
                role_weight = self.config.role_weights[role] / weight_total
                share += role_weight * counts[key_for_role[role]] / role_counts[role]
            if share > 0.0:
                shares[user_id] = share
        return shares

    def _apply_record_revenue(self, event: dict) -> None:
        allocations = tuple((u, int(a)) for u, a in event["allocations"])
        rev = RevenueEvent(event["event_id"], event["dataset_id"],
                           int(event["amount"]), allocations)
        self.revenue_events[rev.event_id] = rev
        for user_id, amount in allocations:
            self._append_ledger(TREASURY, user_id, amount, "royalty", rev.event_id)

    # -- balances ---------------------------------------------------------------

    def get_balance(self, user_id: str) -> int:
        with self._lock:
            if user_id != TREASURY and user_id not in self.users:
                raise UnknownUser(user_id)
            balance = 0
            for entry in self.ledger:
                if entry.credit == user_id:
                    balance += entry.amount
                if entry.debit == user_id:
                    balance -= entry.amount
            return balance

    def all_balances(self) -> dict[str, int]:
        with self._lock:
            balances: dict[str, int] = {}
            for entry in self.ledger:
                balances[entry.credit] = balances.get(entry.credit, 0) + entry.amount
                balances[entry.debit] = balances.get(entry.debit, 0) - entry.amount
            return balances

    # -- retrain export -----------------------------------------------------------

    def export_retrain_manifest(self, dataset_id: str, since: float = 0.0) -> DatasetManifest:
        """Verified corrections after `since` as a training manifest.

        Missed boxes become Positive instances; FP-flagged machine detections
        become Negative instances. Ordering is (image_id, instance_id).
        """
        with self._lock:
            rows: list[tuple[str, FaceInstance]] = []
            images_used: set[str] = set()
            for sub_id in sorted(self.submissions):
                sub = self.submissions[sub_id]
                if sub.state != "verified" or sub.verified_at is None:
                    continue
                if sub.verified_at <= since:
                    continue
                task = self.tasks[sub.task_id]
                image = self.images[task.image_id]
                if image.dataset_id != dataset_id:
                    continue
                images_used.add(task.image_id)
                for i, missed in enumerate(sub.missed_boxes):
                    demo = missed.demographics or Demographics()
                    inst = FaceInstance(f"{sub_id}-missed-{i:03d}", task.image_id,
                                        missed.box, POSITIVE, demo)
                    rows.append((task.image_id, inst))
                for i, flag in enumerate(sorted(set(sub.false_positive_flags))):
                    det = task.detections[flag]
                    inst = FaceInstance(f"{sub_id}-flag-{i:03d}", task.image_id,
                                        det.box, NEGATIVE, Demographics())
                    rows.append((task.image_id, inst))
            rows.sort(key=lambda r: (r[0], r[1].instance_id))
            images = tuple(ImageEntry(image_id, None, Demographics())
                           for image_id in sorted(images_used))
            return DatasetManifest(dataset_id, images, tuple(r[1] for r in rows),
                                   provenance="portal retrain export")
