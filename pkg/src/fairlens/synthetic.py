"""Synthetic benchmark fixtures.

Two generators live here:

* an integer confusion-count solver that, given published per-group rates
  (accuracy, FPR, FNR, PPV), finds count tuples whose rendered metrics land
  within a stated tolerance of the published cells, plus a paired selector
  that keeps before/after deltas close to the published deltas; and
* a geometric realizer that turns chosen counts into a manifest + detection
  list which the matching pipeline reproduces exactly, and a blob generator
  for attribute-clustering fixtures.

Published rate tables are often not realizable by any single confusion
matrix (the error rates bound accuracy away from the printed value), so the
solver minimizes deviation instead of assuming exactness and records what it
achieved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .fairness import ConfusionCounts, format_metric, group_metrics
from .types import (
    BoundingBox,
    DatasetManifest,
    Demographics,
    DetectionRecord,
    FaceInstance,
    ImageEntry,
    NEGATIVE,
    POSITIVE,
)

METRIC_ORDER = ("accuracy", "fpr", "fnr", "ppv")


@dataclass(frozen=True)
class RateTargets:
    accuracy: float
    fpr: float
    fnr: float
    ppv: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.accuracy, self.fpr, self.fnr, self.ppv)


@dataclass(frozen=True)
class CountCandidate:
    counts: ConfusionCounts
    values: tuple[float, float, float, float]     # achieved metrics
    deviations: tuple[float, float, float, float]  # |achieved - target|

    @property
    def max_dev(self) -> float:
        return max(self.deviations)

    @property
    def sum_dev(self) -> float:
        return sum(self.deviations)

    @property
    def accuracy(self) -> float:
        return self.values[0]

    @property
    def ppv(self) -> float:
        return self.values[3]


def _rendered_ok(value: float, target: float, tol: float, exact_subcent: bool) -> bool:
    rendered = float(format_metric(value))
    if target < 0.01 and exact_subcent:
        return abs(rendered - target) <= 1e-12
    return abs(rendered - target) <= tol + 1e-12


def solve_count_candidates(
    targets: RateTargets,
    total: int = 1000,
    rendered_tol: float = 0.01,
    exact_subcent: bool = True,
) -> list[CountCandidate]:
    """Enumerate count tuples whose rendered cells sit within the tolerance.

    Cells published below 0.01 (three printed decimals) must render to the
    published string exactly when exact_subcent is set. The search is a
    vectorized sweep over (positives, fn, fp) windows around the targets.
    """
    acc_t, fpr_t, fnr_t, ppv_t = targets.as_tuple()
    slack = rendered_tol + 0.006  # rendering rounds, so widen the raw search window

    positives = np.arange(1, total)
    fn_lo = np.maximum(0, ((fnr_t - slack) * positives).astype(np.int64) - 1)
    fn_width = int(2 * slack * total) + 4
    fn = fn_lo[:, None] + np.arange(fn_width)[None, :]           # (P, Wfn)
    p_grid = np.broadcast_to(positives[:, None], fn.shape)
    fn_ok = (fn <= np.minimum(p_grid - 1, ((fnr_t + slack) * p_grid).astype(np.int64) + 1))

    tp = p_grid - fn
    fp_lo = np.maximum(0, (tp * (1.0 - ppv_t - slack) / (ppv_t + slack)).astype(np.int64) - 1)
    fp_width = int(total * (1.0 - ppv_t + slack) / max(ppv_t - slack, 1e-9)
                   - total * (1.0 - ppv_t - slack) / (ppv_t + slack)) + 4
    fp = fp_lo[:, :, None] + np.arange(fp_width)[None, None, :]   # (P, Wfn, Wfp)
    fp_hi = (tp * (1.0 - ppv_t + slack) / max(ppv_t - slack, 1e-9)).astype(np.int64) + 1

    tp3 = tp[:, :, None]
    fn3 = fn[:, :, None]
    p3 = p_grid[:, :, None]
    tn = (total - p3) - fp
    valid = fn_ok[:, :, None] & (fp <= np.minimum(total - p3, fp_hi[:, :, None])) & (tn >= 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        acc = (tp3 + tn) / float(total)
        fpr = np.where(fp + tn > 0, fp / np.maximum(fp + tn, 1), np.nan)
        fnr = fn3 / p3
        ppv = np.where(tp3 + fp > 0, tp3 / np.maximum(tp3 + fp, 1), np.nan)
    valid &= np.isfinite(fpr) & np.isfinite(ppv)

    def rendered(values: np.ndarray) -> np.ndarray:
        out = np.round(values, 2)
        small = values < 0.01
        out[small] = np.round(values[small], 3)
        return out

    for values, target in ((acc, acc_t), (fpr, fpr_t), (fnr, fnr_t), (ppv, ppv_t)):
        r = rendered(np.where(valid, values, np.nan))
        if target < 0.01 and exact_subcent:
            valid &= np.abs(r - target) <= 1e-12
        else:
            valid &= np.abs(r - target) <= rendered_tol + 1e-12

    out: list[CountCandidate] = []
    seen: set[tuple[int, int, int, int]] = set()
    for i, j, k in zip(*np.nonzero(valid)):
        counts = (int(tp3[i, j, 0]), int(fp[i, j, k]), int(fn3[i, j, 0]), int(tn[i, j, k]))
        if counts in seen:
            continue
        seen.add(counts)
        c = ConfusionCounts(*counts)
        m = group_metrics(c)
        values = (m.accuracy, m.fpr, m.fnr, m.ppv)
        # the numpy pre-filter rounds approximately; re-check with the real renderer
        if not all(_rendered_ok(v, t, rendered_tol, exact_subcent)
                   for v, t in zip(values, targets.as_tuple())):
            continue
        devs = tuple(abs(v - t) for v, t in zip(values, targets.as_tuple()))
        out.append(CountCandidate(c, values, devs))
    return out


def solve_counts_pool(targets: RateTargets, total: int = 1000) -> list[CountCandidate]:
    """Candidate pool with a relaxation ladder for unreachable published rows."""
    for tol, exact in ((0.01, True), (0.01, False), (0.02, False), (0.03, False)):
        pool = solve_count_candidates(targets, total, tol, exact)
        if pool:
            return pool
    raise ValueError(f"no realizable counts near {targets}")


def _shrink(pool: Sequence[CountCandidate]) -> list[CountCandidate]:
    # one representative per (accuracy, ppv) micro-bucket keeps pairing cheap
    best: dict[tuple[float, float], CountCandidate] = {}
    for cand in pool:
        key = (round(cand.accuracy, 3), round(cand.ppv, 3))
        if key not in best or cand.sum_dev < best[key].sum_dev:
            best[key] = cand
    return list(best.values())


GAIN_BAND = (0.011, 0.052)
GAIN_TOL = 0.004
REL_TOL = 0.004


def select_fixture_pair(
    before: RateTargets,
    after: RateTargets,
    total: int = 1000,
) -> tuple[CountCandidate, CountCandidate]:
    """Choose before/after counts replaying the published improvement.

    The published accuracy gain and relative PPV gain are preserved as
    closely as the integer lattice allows; when even that is unreachable the
    constraints relax one at a time, preferring a nonzero gain inside the
    (0.011, 0.052) window so downstream comparisons stay in the published
    1 % - 5.5 % band.
    """
    pool_b = _shrink(solve_counts_pool(before, total))
    pool_a = _shrink(solve_counts_pool(after, total))
    pub_gain = after.accuracy - before.accuracy
    pub_rel = (after.ppv - before.ppv) / before.ppv if before.ppv else None

    acc_b = np.array([c.accuracy for c in pool_b])[:, None]
    ppv_b = np.array([c.ppv for c in pool_b])[:, None]
    acc_a = np.array([c.accuracy for c in pool_a])[None, :]
    ppv_a = np.array([c.ppv for c in pool_a])[None, :]
    gain = acc_a - acc_b
    rel = (ppv_a - ppv_b) / ppv_b
    in_band = (gain >= GAIN_BAND[0]) & (gain <= GAIN_BAND[1])
    rel_ok = np.abs(rel - pub_rel) <= REL_TOL if pub_rel is not None else np.ones_like(gain, bool)
    near_pub = np.abs(gain - pub_gain) <= GAIN_TOL
    if abs(pub_gain) <= 1e-12:
        # a published zero gain is replayed as an exactly-zero gain when possible
        stages = [(gain == 0.0) & rel_ok, near_pub & rel_ok, in_band,
                  np.ones_like(gain, bool)]
    else:
        stages = [near_pub & in_band & rel_ok, in_band & rel_ok, in_band,
                  np.ones_like(gain, bool)]

    key_dev = np.maximum.reduce([
        np.broadcast_to(np.array([max(c.deviations[0], c.deviations[3])
                                  for c in pool_b])[:, None], gain.shape),
        np.broadcast_to(np.array([max(c.deviations[0], c.deviations[3])
                                  for c in pool_a])[None, :], gain.shape),
    ])
    sum_dev = (np.array([c.sum_dev for c in pool_b])[:, None]
               + np.array([c.sum_dev for c in pool_a])[None, :])
    for valid in stages:
        if not valid.any():
            continue
        masked_key = np.where(valid, key_dev, np.inf)
        best_key = masked_key.min()
        tie = valid & (masked_key <= best_key + 1e-15)
        masked_sum = np.where(tie, sum_dev, np.inf)
        i, j = np.unravel_index(int(np.argmin(masked_sum)), gain.shape)
        return pool_b[i], pool_a[j]
    raise ValueError("no fixture pair satisfies even the relaxed constraints")


def build_table_fixture_counts(
    before_rates: Mapping[str, RateTargets],
    after_rates: Mapping[str, RateTargets],
    total: int = 1000,
) -> tuple[dict[str, ConfusionCounts], dict[str, ConfusionCounts]]:
    """Per-group paired counts for a before/after benchmark replay."""
    before_counts: dict[str, ConfusionCounts] = {}
    after_counts: dict[str, ConfusionCounts] = {}
    for group in sorted(before_rates):
        cb, ca = select_fixture_pair(before_rates[group], after_rates[group], total)
        before_counts[group] = cb.counts
        after_counts[group] = ca.counts
    return before_counts, after_counts


# -- geometric realization ------------------------------------------------------

_BOX_SIDE = 8.0
_BOX_STEP = 20.0


def _unit_box(slot: int, row: int) -> BoundingBox:
    x = slot * _BOX_STEP
    y = row * _BOX_STEP
    return BoundingBox(x, y, x + _BOX_SIDE, y + _BOX_SIDE)


def build_confusion_manifest(
    dataset_id: str,
    counts_by_group: Mapping[str, ConfusionCounts],
    grouping: str = "ethnicity",
    taxonomy: Optional[str] = None,
) -> tuple[DatasetManifest, list[DetectionRecord]]:
    """Realize target counts as disjoint unit boxes on one image per group.

    TP regions get an identical detection (IoU 1), FN regions none, TN
    regions are untouched negatives, and FP detections sit on empty ground
    so they match nothing and attribute to the image's group. Running the
    matching pipeline at tau 0.5 reproduces the counts exactly.
    """
    images: list[ImageEntry] = []
    instances: list[FaceInstance] = []
    detections: list[DetectionRecord] = []
    for group in sorted(counts_by_group):
        counts = counts_by_group[group]
        image_id = f"img-{group}"
        demo = Demographics(**{grouping: group})
        images.append(ImageEntry(image_id, None, demo))
        slot = 0
        for i in range(counts.tp):
            box = _unit_box(slot, 0)
            instances.append(FaceInstance(f"{group}-tp-{i:04d}", image_id, box, POSITIVE, demo))
            detections.append(DetectionRecord(image_id, box, 0.9))
            slot += 1
        for i in range(counts.fn):
            instances.append(FaceInstance(f"{group}-fn-{i:04d}", image_id,
                                          _unit_box(slot, 0), POSITIVE, demo))
            slot += 1
        for i in range(counts.tn):
            instances.append(FaceInstance(f"{group}-tn-{i:04d}", image_id,
                                          _unit_box(slot, 0), NEGATIVE, demo))
            slot += 1
        for i in range(counts.fp):
            detections.append(DetectionRecord(image_id, _unit_box(i, 2), 0.9))
    manifest = DatasetManifest(dataset_id, tuple(images), tuple(instances),
                               provenance="synthetic confusion fixture", taxonomy=taxonomy)
    return manifest, detections


# -- attribute-clustering fixture -------------------------------------------------

def build_attribute_blobs(
    races: Sequence[str] = ("Asian", "Indian", "Black", "White"),
    genders: Sequence[str] = ("Male", "Female"),
    points_per_blob: int = 10,
    race_scale: float = 1.5,
    gender_offset: float = 1.0,
    jitter: float = 0.003,
    dim: int = 128,
    seed: int = 7,
) -> tuple[dict[str, np.ndarray], dict[str, Demographics]]:
    """Blob embeddings where race x gender structure dominates gender alone.

    Race centers sit on orthogonal axes at race_scale; each gender forms a
    sub-blob offset along a shared axis by +-gender_offset/2. The jitter is
    small relative to the gender offset (its effective radius grows with
    sqrt(dim)), which keeps the eight race x gender blobs tighter than the
    four race clusters, and those tighter than the two gender clusters.
    """
    rng = np.random.RandomState(seed)
    embs: dict[str, np.ndarray] = {}
    demographics: dict[str, Demographics] = {}
    gender_axis = len(races)  # axis orthogonal to every race axis
    for r_idx, race in enumerate(races):
        for g_idx, gender in enumerate(genders):
            sign = 1.0 if g_idx % 2 == 0 else -1.0
            center = np.zeros(dim)
            center[r_idx] = race_scale
            center[gender_axis] = sign * gender_offset / 2.0
            for p in range(points_per_blob):
                vec = center + rng.standard_normal(dim) * jitter
                key = f"{race}-{gender}-{p:03d}"
                embs[key] = vec
                demographics[key] = Demographics(ethnicity=race, gender=gender)
    return embs, demographics
