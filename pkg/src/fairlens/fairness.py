"""Detection-vs-ground-truth matching and per-group fairness metrics.

The evaluation treats face detection as a binary detected/undetected task
over labeled candidate regions: Positive regions are faces, Negative regions
are background crops, and every detection either claims a region or counts
as a spurious false positive attributed to its image's group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import GroupingMismatch, MissingGroup, ThresholdOutOfRange, UnknownImage
from .ingest import FORMAT_VERSION, _dump, _parse_json, _read_lines
from .types import BoundingBox, DatasetManifest, DetectionRecord, FaceInstance

METRIC_KEYS = ("accuracy", "fpr", "fnr", "ppv")

# Row labels used by the markdown rendering, in fixed order.
METRIC_LABELS = (
    ("accuracy", "Prediction Accuracy"),
    ("fpr", "False Positive Rate"),
    ("fnr", "False Negative rate"),
    ("ppv", "Positive Predictive Value"),
)

DEFAULT_TAU = 0.5


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes, by area."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, str, float], ...]          # (detection idx, instance_id, iou)
    unmatched_detections: tuple[int, ...]
    unmatched_positives: tuple[str, ...]
    untouched_negatives: tuple[str, ...]
    tau: float


def match_detections(
    instances: Sequence[FaceInstance],
    detections: Sequence[DetectionRecord],
    tau: float = DEFAULT_TAU,
    known_images: Optional[set[str]] = None,
) -> MatchResult:
    """Greedy one-to-one matching of detections to candidate regions.

    Per image, detections in descending-confidence order (file order breaks
    ties) each claim the still-unclaimed instance with the highest IoU >= tau;
    IoU ties go to the lexicographically smallest instance_id.
    """
    if not 0.0 < tau <= 1.0:
        raise ThresholdOutOfRange(tau)
    if known_images is None:
        known_images = {inst.image_id for inst in instances}
    by_image: dict[str, list[FaceInstance]] = {}
    for inst in instances:
        by_image.setdefault(inst.image_id, []).append(inst)
    # vectorized per-image candidate IoU: columns are x_min, y_min, x_max, y_max
    box_arrays = {
        image_id: np.array([[i.box.x_min, i.box.y_min, i.box.x_max, i.box.y_max]
                            for i in insts], dtype=np.float64)
        for image_id, insts in by_image.items()
    }

    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].confidence, i))
    claimed_mask: dict[str, np.ndarray] = {
        image_id: np.zeros(len(insts), dtype=bool) for image_id, insts in by_image.items()}
    claimed_ids: set[str] = set()
    pairs: list[tuple[int, str, float]] = []
    unmatched: list[int] = []
    for det_idx in order:
        det = detections[det_idx]
        if det.image_id not in known_images:
            raise UnknownImage(det.image_id)
        insts = by_image.get(det.image_id)
        if not insts:
            unmatched.append(det_idx)
            continue
        boxes = box_arrays[det.image_id]
        b = det.box
        ix = np.minimum(boxes[:, 2], b.x_max) - np.maximum(boxes[:, 0], b.x_min)
        iy = np.minimum(boxes[:, 3], b.y_max) - np.maximum(boxes[:, 1], b.y_min)
        inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
        areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
        overlaps = inter / (areas + b.area - inter)
        overlaps[claimed_mask[det.image_id]] = -1.0
        best_iou = float(overlaps.max())
        if best_iou < tau:
            unmatched.append(det_idx)
            continue
        tied = np.nonzero(overlaps == best_iou)[0]
        best_pos = min(tied, key=lambda i: insts[i].instance_id)
        claimed_mask[det.image_id][best_pos] = True
        claimed_ids.add(insts[best_pos].instance_id)
        pairs.append((det_idx, insts[best_pos].instance_id, best_iou))

    pairs.sort(key=lambda p: p[0])
    unmatched.sort()
    unmatched_positives = tuple(sorted(
        inst.instance_id for inst in instances
        if inst.is_positive and inst.instance_id not in claimed_ids))
    untouched_negatives = tuple(sorted(
        inst.instance_id for inst in instances
        if not inst.is_positive and inst.instance_id not in claimed_ids))
    return MatchResult(tuple(pairs), tuple(unmatched), unmatched_positives,
                       untouched_negatives, tau)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class GroupMetrics:
    """Rates derived from one confusion matrix; None means undefined (0/0)."""

    accuracy: Optional[float]
    fpr: Optional[float]
    fnr: Optional[float]
    ppv: Optional[float]

    def value(self, key: str) -> Optional[float]:
        return getattr(self, key)

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "fpr": self.fpr,
                "fnr": self.fnr, "ppv": self.ppv}


def group_metrics(c: ConfusionCounts) -> GroupMetrics:
    def ratio(num: int, den: int) -> Optional[float]:
        return num / den if den > 0 else None

    return GroupMetrics(
        accuracy=ratio(c.tp + c.tn, c.total),
        fpr=ratio(c.fp, c.fp + c.tn),
        fnr=ratio(c.fn, c.fn + c.tp),
        ppv=ratio(c.tp, c.tp + c.fp),
    )


def confusion_by_group(
    match: MatchResult,
    manifest: DatasetManifest,
    detections: Sequence[DetectionRecord],
    grouping: str = "ethnicity",
    allow_unknown: bool = True,
) -> dict[str, ConfusionCounts]:
    """Attribute each TP/FP/FN/TN to a demographic group.

    Matched regions carry their own group; a detection that matched nothing
    is a false positive attributed to its image's group.
    """
    instances = {inst.instance_id: inst for inst in manifest.instances}
    image_groups = manifest.image_group_map()

    tallies: dict[str, dict[str, int]] = {}

    def bump(group: str, image_id: str, cell: str):
        if group == "Unknown" and not allow_unknown:
            raise MissingGroup(image_id, grouping)
        tallies.setdefault(group, {"tp": 0, "fp": 0, "fn": 0, "tn": 0})[cell] += 1

    for _, instance_id, _ in match.pairs:
        inst = instances[instance_id]
        group = inst.demographics.attribute(grouping)
        bump(group, inst.image_id, "tp" if inst.is_positive else "fp")
    for det_idx in match.unmatched_detections:
        image_id = detections[det_idx].image_id
        if image_id not in image_groups:
            raise UnknownImage(image_id)
        bump(image_groups[image_id].attribute(grouping), image_id, "fp")
    for instance_id in match.unmatched_positives:
        inst = instances[instance_id]
        bump(inst.demographics.attribute(grouping), inst.image_id, "fn")
    for instance_id in match.untouched_negatives:
        inst = instances[instance_id]
        bump(inst.demographics.attribute(grouping), inst.image_id, "tn")

    return {group: ConfusionCounts(**cells) for group, cells in sorted(tallies.items())}


@dataclass(frozen=True)
class FairnessReport:
    dataset_id: str
    grouping: str
    tau: float
    rows: dict[str, tuple[ConfusionCounts, GroupMetrics]] = field(default_factory=dict)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(sorted(self.rows))

    def counts(self, group: str) -> ConfusionCounts:
        return self.rows[group][0]

    def metrics(self, group: str) -> GroupMetrics:
        return self.rows[group][1]


def fairness_report(
    manifest: DatasetManifest,
    detections: Sequence[DetectionRecord],
    tau: float = DEFAULT_TAU,
    grouping: str = "ethnicity",
    allow_unknown: bool = True,
) -> FairnessReport:
    match = match_detections(manifest.instances, detections, tau,
                             known_images=manifest.image_ids())
    counts = confusion_by_group(match, manifest, detections, grouping, allow_unknown)
    rows = {group: (c, group_metrics(c)) for group, c in counts.items()}
    return FairnessReport(manifest.dataset_id, grouping, tau, rows)


@dataclass(frozen=True)
class MetricDelta:
    absolute: Optional[float]
    relative: Optional[float]


@dataclass(frozen=True)
class DeltaReport:
    grouping: str
    deltas: dict[str, dict[str, MetricDelta]]  # group -> metric -> delta

    def absolute(self, group: str, metric: str) -> Optional[float]:
        return self.deltas[group][metric].absolute

    def relative(self, group: str, metric: str) -> Optional[float]:
        return self.deltas[group][metric].relative


def compare_reports(before: FairnessReport, after: FairnessReport) -> DeltaReport:
    """Per-group, per-metric absolute and relative change (after vs before)."""
    if before.grouping != after.grouping or before.groups != after.groups:
        raise GroupingMismatch(
            f"{before.grouping}:{','.join(before.groups)}",
            f"{after.grouping}:{','.join(after.groups)}",
        )
    deltas: dict[str, dict[str, MetricDelta]] = {}
    for group in before.groups:
        row: dict[str, MetricDelta] = {}
        for key in METRIC_KEYS:
            b = before.metrics(group).value(key)
            a = after.metrics(group).value(key)
            if b is None or a is None:
                row[key] = MetricDelta(None, None)
            else:
                abs_delta = a - b
                rel = abs_delta / b if b != 0.0 else None
                row[key] = MetricDelta(abs_delta, rel)
        deltas[group] = row
    return DeltaReport(before.grouping, deltas)


# -- rendering & serialization -------------------------------------------------

UNDEFINED_CELL = "—"  # em dash rendered for undefined metrics


def format_metric(value: Optional[float]) -> str:
    """Table cell formatting: 2 decimals, 3 when below 0.01, em dash when undefined."""
    if value is None:
        return UNDEFINED_CELL
    if value < 0.01:
        return f"{value:.3f}"
    return f"{value:.2f}"


def report_to_markdown(report: FairnessReport) -> str:
    groups = report.groups
    lines = ["| Metric | " + " | ".join(groups) + " |",
             "| --- | " + " | ".join("---" for _ in groups) + " |"]
    for key, label in METRIC_LABELS:
        cells = [format_metric(report.metrics(g).value(key)) for g in groups]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def report_to_csv(report: FairnessReport) -> str:
    groups = report.groups
    lines = ["metric," + ",".join(groups)]
    for key, label in METRIC_LABELS:
        cells = []
        for g in groups:
            v = report.metrics(g).value(key)
            cells.append("" if v is None else repr(v))
        lines.append(f"{label}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def report_to_lines(report: FairnessReport) -> str:
    lines = [_dump({"format": FORMAT_VERSION, "kind": "report"})]
    lines.append(_dump({"record": "meta", "dataset_id": report.dataset_id,
                        "grouping": report.grouping, "tau": report.tau}))
    for group in report.groups:
        c, m = report.rows[group]
        lines.append(_dump({"record": "group", "group": group,
                            "counts": c.as_dict(), "metrics": m.as_dict()}))
    return "\n".join(lines) + "\n"


def save_report(report: FairnessReport, path) -> None:
    Path(path).write_text(report_to_lines(report), encoding="utf-8")


def load_report(path) -> FairnessReport:
    lines = _read_lines(path, "report")
    dataset_id = ""
    grouping = "ethnicity"
    tau = DEFAULT_TAU
    rows: dict[str, tuple[ConfusionCounts, GroupMetrics]] = {}
    for offset, line in enumerate(lines):
        rec = _parse_json(line, offset + 2)
        if rec.get("record") == "meta":
            dataset_id = rec["dataset_id"]
            grouping = rec["grouping"]
            tau = float(rec["tau"])
        elif rec.get("record") == "group":
            c = ConfusionCounts(**rec["counts"])
            m = GroupMetrics(**rec["metrics"])
            rows[rec["group"]] = (c, m)
    return FairnessReport(dataset_id, grouping, tau, rows)
