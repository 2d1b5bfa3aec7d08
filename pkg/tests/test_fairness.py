import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlens.errors import GroupingMismatch, ThresholdOutOfRange, UnknownImage
from fairlens.fairness import (
    ConfusionCounts,
    compare_reports,
    confusion_by_group,
    fairness_report,
    format_metric,
    group_metrics,
    iou,
    load_report,
    match_detections,
    report_to_csv,
    report_to_lines,
    report_to_markdown,
    save_report,
)
from fairlens.types import (
    BoundingBox,
    DatasetManifest,
    Demographics,
    DetectionRecord,
    FaceInstance,
    ImageEntry,
    NEGATIVE,
    POSITIVE,
)


def box(x0, y0, x1, y1):
    return BoundingBox(float(x0), float(y0), float(x1), float(y1))


class TestIou:
    def test_identical(self):
        assert iou(box(0, 0, 10, 10), box(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou(box(0, 0, 10, 10), box(20, 20, 30, 30)) == 0.0

    def test_hand_computed_overlap(self):
        # intersection 5x5=25, union 100+100-25=175
        assert iou(box(0, 0, 10, 10), box(5, 5, 15, 15)) == pytest.approx(25 / 175, abs=1e-12)

    def test_symmetric(self):
        a, b = box(0, 0, 10, 10), box(3, 4, 9, 22)
        assert iou(a, b) == iou(b, a)


def pixel_enumeration_iou(a: BoundingBox, b: BoundingBox) -> float:
    """Independent oracle: count unit pixels for integer-coordinate boxes."""
    def cells(bb):
        return {(x, y)
                for x in range(int(bb.x_min), int(bb.x_max))
                for y in range(int(bb.y_min), int(bb.y_max))}
    ca, cb = cells(a), cells(b)
    union = len(ca | cb)
    return len(ca & cb) / union if union else 0.0


int_box = st.tuples(st.integers(0, 49), st.integers(0, 49),
                    st.integers(1, 50), st.integers(1, 50))


def to_box(t):
    x0, y0, w, h = t
    return box(x0, y0, x0 + w, y0 + h)


@settings(max_examples=300, deadline=None)
@given(int_box, int_box)
def test_iou_matches_pixel_enumeration(ta, tb):
    a, b = to_box(ta), to_box(tb)
    assert iou(a, b) == pytest.approx(pixel_enumeration_iou(a, b), abs=1e-9)


def scene(instances, detections):
    """Build a one-image manifest around explicit instances."""
    images = tuple(ImageEntry(image_id, None, Demographics(ethnicity="Asian"))
                   for image_id in sorted({i.image_id for i in instances} |
                                          {d.image_id for d in detections}))
    return DatasetManifest("scene", images, tuple(instances))


class TestMatchDetections:
    def test_single_pair(self):
        inst = FaceInstance("f1", "im", box(0, 0, 10, 10), POSITIVE)
        det = DetectionRecord("im", box(0, 3, 10, 10), 0.9)  # IoU 0.7
        result = match_detections([inst], [det], 0.5)
        assert result.pairs == ((0, "f1", pytest.approx(0.7)),)
        assert result.unmatched_detections == ()
        assert result.unmatched_positives == ()

    def test_higher_confidence_wins(self):
        inst = FaceInstance("f1", "im", box(0, 0, 10, 10), POSITIVE)
        dets = [DetectionRecord("im", box(0, 1, 10, 10), 0.8),
                DetectionRecord("im", box(0, 0, 10, 9), 0.9)]
        result = match_detections([inst], dets, 0.5)
        assert result.pairs[0][0] == 1  # the 0.9-confidence detection
        assert result.unmatched_detections == (0,)

    def test_confidence_tie_broken_by_file_order(self):
        inst = FaceInstance("f1", "im", box(0, 0, 10, 10), POSITIVE)
        dets = [DetectionRecord("im", box(0, 1, 10, 10), 0.9),
                DetectionRecord("im", box(0, 0, 10, 9), 0.9)]
        result = match_detections([inst], dets, 0.5)
        assert result.pairs[0][0] == 0

    def test_iou_tie_broken_lexicographically(self):
        instances = [FaceInstance("b", "im", box(0, 0, 10, 10), POSITIVE),
                     FaceInstance("a", "im", box(20, 0, 30, 10), POSITIVE)]
        # detection overlapping both boxes equally is impossible with disjoint
        # boxes; use identical duplicate ground-truth boxes instead
        instances = [FaceInstance("b", "im", box(0, 0, 10, 10), POSITIVE),
                     FaceInstance("a", "im", box(0, 0, 10, 10), POSITIVE)]
        det = DetectionRecord("im", box(0, 0, 10, 10), 0.9)
        result = match_detections(instances, [det], 0.5)
        assert result.pairs[0][1] == "a"

    def test_negatives_can_be_claimed(self):
        inst = FaceInstance("n1", "im", box(0, 0, 10, 10), NEGATIVE)
        det = DetectionRecord("im", box(0, 0, 10, 10), 0.9)
        result = match_detections([inst], [det], 0.5)
        assert result.pairs == ((0, "n1", 1.0),)
        assert result.untouched_negatives == ()

    def test_threshold_out_of_range(self):
        with pytest.raises(ThresholdOutOfRange):
            match_detections([], [], 0.0)
        with pytest.raises(ThresholdOutOfRange):
            match_detections([], [], 1.1)

    def test_unknown_image(self):
        det = DetectionRecord("ghost", box(0, 0, 1, 1), 0.5)
        with pytest.raises(UnknownImage):
            match_detections([FaceInstance("f1", "im", box(0, 0, 1, 1), POSITIVE)],
                             [det], 0.5)


def random_scene(rng, n_instances, n_detections, image_count=2):
    instances = []
    for i in range(n_instances):
        x0, y0 = rng.randint(0, 40), rng.randint(0, 40)
        w, h = rng.randint(2, 12), rng.randint(2, 12)
        instances.append(FaceInstance(
            f"i{i:02d}", f"im{rng.randint(image_count)}",
            box(x0, y0, x0 + w, y0 + h),
            POSITIVE if rng.rand() < 0.7 else NEGATIVE,
            Demographics(ethnicity=["Asian", "White"][rng.randint(2)])))
    detections = []
    for _ in range(n_detections):
        x0, y0 = rng.randint(0, 40), rng.randint(0, 40)
        w, h = rng.randint(2, 12), rng.randint(2, 12)
        detections.append(DetectionRecord(
            f"im{rng.randint(image_count)}", box(x0, y0, x0 + w, y0 + h),
            round(float(rng.rand()), 3)))
    return instances, detections


def verify_greedy_contract(instances, detections, result, tau):
    """Re-derive every greedy step independently and check one-to-one-ness."""
    seen_dets = [idx for idx, _, _ in result.pairs] + list(result.unmatched_detections)
    assert sorted(seen_dets) == list(range(len(detections)))
    assert len(set(seen_dets)) == len(detections)
    matched_insts = [iid for _, iid, _ in result.pairs]
    assert len(set(matched_insts)) == len(matched_insts)
    by_id = {i.instance_id: i for i in instances}
    pair_for_det = {idx: (iid, ov) for idx, iid, ov in result.pairs}
    claimed = set()
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].confidence, i))
    for det_idx in order:
        det = detections[det_idx]
        candidates = []
        for inst in instances:
            if inst.image_id != det.image_id or inst.instance_id in claimed:
                continue
            overlap = iou(det.box, inst.box)
            if overlap >= tau:
                candidates.append((-overlap, inst.instance_id))
        if not candidates:
            assert det_idx in result.unmatched_detections
            continue
        candidates.sort()
        expected_id = candidates[0][1]
        got_id, got_ov = pair_for_det[det_idx]
        assert got_id == expected_id
        assert got_ov == pytest.approx(-candidates[0][0])
        claimed.add(got_id)
    for inst in instances:
        if inst.is_positive and inst.instance_id not in claimed:
            assert inst.instance_id in result.unmatched_positives
        if not inst.is_positive and inst.instance_id not in claimed:
            assert inst.instance_id in result.untouched_negatives


def all_images(instances, detections):
    return ({i.image_id for i in instances} | {d.image_id for d in detections})


def test_matching_one_to_one_and_greedy_oracle():
    rng = np.random.RandomState(42)
    for _ in range(200):
        instances, detections = random_scene(rng, rng.randint(0, 8), rng.randint(0, 5))
        result = match_detections(instances, detections, 0.3,
                                  known_images=all_images(instances, detections))
        verify_greedy_contract(instances, detections, result, 0.3)


def test_matching_exhaustive_small_scenes():
    """Every scene with <= 4 detections against the step-by-step oracle."""
    rng = np.random.RandomState(7)
    for _ in range(300):
        n_det = rng.randint(0, 5)
        instances, detections = random_scene(rng, rng.randint(1, 6), n_det,
                                             image_count=1)
        result = match_detections(instances, detections, 0.25,
                                  known_images=all_images(instances, detections))
        verify_greedy_contract(instances, detections, result, 0.25)


class TestGroupMetrics:
    def test_ppv_asian_baseline_cell(self):
        m = group_metrics(ConfusionCounts(tp=78, fp=22, fn=0, tn=0))
        assert m.ppv == pytest.approx(0.78)

    def test_undefined_ppv(self):
        m = group_metrics(ConfusionCounts(tp=0, fp=0, fn=3, tn=2))
        assert m.ppv is None

    def test_perfect_detector(self):
        m = group_metrics(ConfusionCounts(tp=1, fp=0, fn=0, tn=1))
        assert (m.accuracy, m.fpr, m.fnr, m.ppv) == (1.0, 0.0, 0.0, 1.0)

    def test_values_in_unit_interval_or_none(self):
        rng = np.random.RandomState(3)
        for _ in range(500):
            c = ConfusionCounts(*(int(v) for v in rng.randint(0, 50, size=4)))
            m = group_metrics(c)
            for v in (m.accuracy, m.fpr, m.fnr, m.ppv):
                assert v is None or (0.0 <= v <= 1.0 and math.isfinite(v))


class TestConfusionByGroup:
    def test_matched_positive(self):
        inst = FaceInstance("f1", "im", box(0, 0, 10, 10), POSITIVE,
                            Demographics(ethnicity="White"))
        det = DetectionRecord("im", box(0, 0, 10, 10), 0.9)
        manifest = scene([inst], [det])
        match = match_detections([inst], [det], 0.5)
        counts = confusion_by_group(match, manifest, [det])
        assert counts["White"].as_dict() == {"tp": 1, "fp": 0, "fn": 0, "tn": 0}

    def test_detection_on_negative_region(self):
        inst = FaceInstance("n1", "im", box(0, 0, 10, 10), NEGATIVE,
                            Demographics(ethnicity="Asian"))
        det = DetectionRecord("im", box(0, 0, 10, 10), 0.9)
        manifest = scene([inst], [det])
        match = match_detections([inst], [det], 0.5)
        counts = confusion_by_group(match, manifest, [det])
        assert counts["Asian"].as_dict() == {"tp": 0, "fp": 1, "fn": 0, "tn": 0}

    def test_spurious_detection_attributes_to_image_group(self):
        inst = FaceInstance("f1", "im", box(0, 0, 10, 10), POSITIVE,
                            Demographics(ethnicity="Asian"))
        far = DetectionRecord("im", box(100, 100, 110, 110), 0.9)
        manifest = scene([inst], [far])
        match = match_detections([inst], [far], 0.5)
        counts = confusion_by_group(match, manifest, [far])
        assert counts["Asian"].fp == 1
        assert counts["Asian"].fn == 1

    def test_missing_group_when_unknown_disallowed(self):
        from fairlens.errors import MissingGroup

        inst = FaceInstance("f1", "im", box(0, 0, 10, 10), POSITIVE)  # Unknown group
        det = DetectionRecord("im", box(0, 0, 10, 10), 0.9)
        manifest = DatasetManifest(
            "scene", (ImageEntry("im", None, Demographics()),), (inst,))
        match = match_detections([inst], [det], 0.5)
        with pytest.raises(MissingGroup):
            confusion_by_group(match, manifest, [det], allow_unknown=False)
        # the default keeps Unknown as its own group
        counts = confusion_by_group(match, manifest, [det])
        assert counts["Unknown"].tp == 1

    def test_count_conservation_random_scenes(self):
        rng = np.random.RandomState(11)
        for _ in range(100):
            instances, detections = random_scene(rng, rng.randint(1, 10), rng.randint(0, 6))
            manifest = scene(instances, detections)
            match = match_detections(instances, detections, 0.3,
                                     known_images=manifest.image_ids())
            counts = confusion_by_group(match, manifest, detections)
            tp = sum(c.tp for c in counts.values())
            fp = sum(c.fp for c in counts.values())
            fn = sum(c.fn for c in counts.values())
            tn = sum(c.tn for c in counts.values())
            n_pos = sum(1 for i in instances if i.is_positive)
            n_neg = len(instances) - n_pos
            spurious = len(match.unmatched_detections)
            assert tp + fn == n_pos
            assert tn <= n_neg
            assert tn + (fp - spurious) == n_neg
            assert tp + fp + fn + tn == len(instances) + spurious


class TestFairnessReport:
    def test_empty_detections_positives_only(self):
        instances = [FaceInstance(f"f{i}", "im", box(20 * i, 0, 20 * i + 8, 8), POSITIVE,
                                  Demographics(ethnicity="Asian")) for i in range(4)]
        manifest = scene(instances, [])
        report = fairness_report(manifest, [], 0.5)
        assert report.counts("Asian").as_dict() == {"tp": 0, "fp": 0, "fn": 4, "tn": 0}
        assert report.metrics("Asian").fnr == 1.0
        assert report.metrics("Asian").ppv is None

    def test_pure_function_byte_identical(self, table_datasets):
        (manifest, detections), _ = table_datasets
        a = report_to_lines(fairness_report(manifest, detections, 0.5))
        b = report_to_lines(fairness_report(manifest, detections, 0.5))
        assert a == b

    def test_save_load_round_trip(self, tmp_path, table_datasets):
        (manifest, detections), _ = table_datasets
        report = fairness_report(manifest, detections, 0.5)
        path = tmp_path / "r.jsonl"
        save_report(report, path)
        loaded = load_report(path)
        assert loaded.rows == report.rows
        assert loaded.tau == report.tau


class TestCompareReports:
    def _report_from_counts(self, counts_by_group, dataset_id="ds"):
        from fairlens.fairness import FairnessReport
        rows = {g: (c, group_metrics(c)) for g, c in counts_by_group.items()}
        return FairnessReport(dataset_id, "ethnicity", 0.5, rows)

    def test_ppv_relative_gain_matches_headline(self):
        # 0.78 -> 0.93 is a +19.23% relative PPV gain
        before = self._report_from_counts({"Asian": ConfusionCounts(78, 22, 0, 0)})
        after = self._report_from_counts({"Asian": ConfusionCounts(93, 7, 0, 0)})
        delta = compare_reports(before, after)
        assert delta.relative("Asian", "ppv") == pytest.approx(0.1923, abs=5e-5)

    def test_accuracy_absolute_delta(self):
        before = self._report_from_counts({"Asian": ConfusionCounts(91, 4, 5, 0)})
        after = self._report_from_counts({"Asian": ConfusionCounts(96, 1, 3, 0)})
        delta = compare_reports(before, after)
        assert delta.absolute("Asian", "accuracy") == pytest.approx(0.05)

    def test_identical_reports_zero_deltas(self):
        report = self._report_from_counts({"Asian": ConfusionCounts(5, 1, 2, 3)})
        delta = compare_reports(report, report)
        for metric in ("accuracy", "fpr", "fnr", "ppv"):
            assert delta.absolute("Asian", metric) == 0.0

    def test_grouping_mismatch(self):
        a = self._report_from_counts({"Asian": ConfusionCounts(1, 0, 0, 0)})
        b = self._report_from_counts({"White": ConfusionCounts(1, 0, 0, 0)})
        with pytest.raises(GroupingMismatch):
            compare_reports(a, b)

    def test_undefined_before_gives_undefined_relative(self):
        before = self._report_from_counts({"Asian": ConfusionCounts(0, 0, 1, 1)})
        after = self._report_from_counts({"Asian": ConfusionCounts(1, 0, 0, 1)})
        delta = compare_reports(before, after)
        assert delta.relative("Asian", "ppv") is None
        # fpr before is 0: relative undefined, absolute still defined
        assert delta.relative("Asian", "fpr") is None
        assert delta.absolute("Asian", "fpr") == 0.0


class TestRendering:
    def test_format_metric_rule(self):
        assert format_metric(0.91) == "0.91"
        assert format_metric(0.005) == "0.005"
        assert format_metric(0.0049) == "0.005"
        assert format_metric(None) == "—"

    def test_markdown_row_order(self, table_datasets):
        (manifest, detections), _ = table_datasets
        md = report_to_markdown(fairness_report(manifest, detections, 0.5))
        lines = md.strip().split("\n")
        labels = [line.split("|")[1].strip() for line in lines[2:]]
        assert labels == ["Prediction Accuracy", "False Positive Rate",
                          "False Negative rate", "Positive Predictive Value"]

    def test_markdown_undefined_cell(self):
        report = TestCompareReports()._report_from_counts(
            {"Asian": ConfusionCounts(0, 0, 2, 1)})
        md = report_to_markdown(report)
        assert "—" in md

    def test_csv_round_trip_exact(self, table_datasets):
        (manifest, detections), _ = table_datasets
        report = fairness_report(manifest, detections, 0.5)
        csv_text = report_to_csv(report)
        lines = csv_text.strip().split("\n")
        groups = lines[0].split(",")[1:]
        parsed = {}
        for line, key in zip(lines[1:], ("accuracy", "fpr", "fnr", "ppv")):
            cells = line.split(",")[1:]
            for g, cell in zip(groups, cells):
                parsed[(key, g)] = float(cell) if cell else None
        for g in report.groups:
            for key in ("accuracy", "fpr", "fnr", "ppv"):
                assert parsed[(key, g)] == report.metrics(g).value(key)
