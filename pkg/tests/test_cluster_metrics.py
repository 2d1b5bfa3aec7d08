import itertools

import numpy as np
import pytest

from fairlens import analytics
from fairlens.analytics import ClusterAssignment, NOISE
from fairlens.errors import BadParameter, CoincidentCentroids, IoFailure, NeedTwoClusters
from fairlens.synthetic import build_attribute_blobs
from fairlens.types import Demographics


def axis_embs(values):
    embs = {}
    for i, v in enumerate(values):
        vec = np.zeros(4)
        vec[0] = float(v)
        embs[f"p{i:02d}"] = vec
    return embs


def naive_silhouette(dist, labels):
    """Direct per-point formula evaluation, independent of the main path."""
    keys = [k for k in dist.keys if k in labels]
    idx = {k: i for i, k in enumerate(dist.keys)}
    scores = []
    for k in keys:
        own = [o for o in keys if labels[o] == labels[k]]
        if len(own) == 1:
            scores.append(0.0)
            continue
        a = np.mean([dist.values[idx[k], idx[o]] for o in own if o != k])
        b = min(np.mean([dist.values[idx[k], idx[o]] for o in keys if labels[o] == lab])
                for lab in set(labels.values()) if lab != labels[k])
        scores.append(0.0 if max(a, b) == 0 else (b - a) / max(a, b))
    return float(np.mean(scores))


def naive_dbi(points, labels):
    clusters = sorted(set(labels.values()), key=str)
    centroids, scatters = [], []
    for c in clusters:
        members = np.stack([points[k] for k in sorted(labels) if labels[k] == c])
        mu = members.mean(axis=0)
        centroids.append(mu)
        scatters.append(np.mean([np.linalg.norm(m - mu) for m in members]))
    total = 0.0
    for i in range(len(clusters)):
        total += max((scatters[i] + scatters[j]) / np.linalg.norm(centroids[i] - centroids[j])
                     for j in range(len(clusters)) if j != i)
    return total / len(clusters)


class TestMeanSilhouette:
    def test_hand_computed_two_pairs(self):
        embs = axis_embs([0.0, 1.0, 10.0, 11.0])
        dist = analytics.pairwise_distances(embs)
        labels = {"p00": 0, "p01": 0, "p02": 1, "p03": 1}
        # per point: (10.5-1)/10.5, (9.5-1)/9.5, mirrored
        expected = (0.904762 + 0.894737 + 0.894737 + 0.904762) / 4
        assert analytics.mean_silhouette(dist, labels) == pytest.approx(expected, abs=1e-5)
        assert analytics.mean_silhouette(dist, labels) == pytest.approx(0.89975, abs=1e-5)

    def test_single_cluster_raises(self):
        dist = analytics.pairwise_distances(axis_embs([0.0, 1.0]))
        with pytest.raises(NeedTwoClusters):
            analytics.mean_silhouette(dist, {"p00": 0, "p01": 0})

    def test_duplicated_points_far_apart_score_one(self):
        embs = axis_embs([0.0, 0.0, 10.0, 10.0])
        dist = analytics.pairwise_distances(embs)
        labels = {"p00": 0, "p01": 0, "p02": 1, "p03": 1}
        assert analytics.mean_silhouette(dist, labels) == 1.0

    def test_noise_excluded_from_assignment(self):
        embs = axis_embs([0.0, 0.2, 5.0, 5.2, 50.0])
        dist = analytics.pairwise_distances(embs)
        assignment = ClusterAssignment(
            {"p00": 0, "p01": 0, "p02": 1, "p03": 1, "p04": NOISE})
        with_noise = analytics.mean_silhouette(dist, assignment)
        without = analytics.mean_silhouette(
            dist, {"p00": 0, "p01": 0, "p02": 1, "p03": 1})
        assert with_noise == without


class TestDaviesBouldin:
    def test_hand_computed(self):
        points = axis_embs([0.0, 1.0, 10.0, 11.0])
        labels = {"p00": 0, "p01": 0, "p02": 1, "p03": 1}
        assert analytics.davies_bouldin(points, labels) == pytest.approx(0.1, abs=1e-12)

    def test_duplicated_points_zero(self):
        points = axis_embs([3.0, 3.0, 9.0, 9.0])
        labels = {"p00": 0, "p01": 0, "p02": 1, "p03": 1}
        assert analytics.davies_bouldin(points, labels) == 0.0

    def test_coincident_centroids(self):
        points = axis_embs([0.0, 10.0, 0.0, 10.0])
        labels = {"p00": 0, "p01": 0, "p02": 1, "p03": 1}
        with pytest.raises(CoincidentCentroids):
            analytics.davies_bouldin(points, labels)

    def test_single_cluster_raises(self):
        with pytest.raises(NeedTwoClusters):
            analytics.davies_bouldin(axis_embs([0.0, 1.0]), {"p00": 0, "p01": 0})


def test_msc_dbi_match_naive_formulas_randomized():
    rng = np.random.RandomState(99)
    for _ in range(120):
        n = rng.randint(4, 51)
        k = rng.randint(2, 7)
        dim = rng.randint(2, 6)
        points = {f"r{i:02d}": rng.randn(dim) * 3 for i in range(n)}
        labels = {key: int(rng.randint(k)) for key in points}
        if len(set(labels.values())) < 2:
            labels[sorted(points)[0]] = 0
            labels[sorted(points)[1]] = 1
        dist = analytics.pairwise_distances(points)
        assert analytics.mean_silhouette(dist, labels) == pytest.approx(
            naive_silhouette(dist, labels), abs=1e-9)
        try:
            expected = naive_dbi(points, labels)
        except ZeroDivisionError:
            continue
        assert analytics.davies_bouldin(points, labels) == pytest.approx(expected, abs=1e-9)


def test_metrics_invariant_under_label_permutation():
    rng = np.random.RandomState(5)
    points = {f"r{i:02d}": rng.randn(3) for i in range(12)}
    labels = {key: i % 3 for i, key in enumerate(sorted(points))}
    dist = analytics.pairwise_distances(points)
    base_msc = analytics.mean_silhouette(dist, labels)
    base_dbi = analytics.davies_bouldin(points, labels)
    for perm in itertools.permutations(range(3)):
        renamed = {k: perm[v] for k, v in labels.items()}
        assert analytics.mean_silhouette(dist, renamed) == pytest.approx(base_msc, abs=1e-12)
        assert analytics.davies_bouldin(points, renamed) == pytest.approx(base_dbi, abs=1e-12)


def test_metrics_agree_with_sklearn_reference():
    from sklearn.metrics import davies_bouldin_score, silhouette_score

    rng = np.random.RandomState(17)
    points = {f"r{i:02d}": rng.randn(4) for i in range(30)}
    labels = {key: i % 3 for i, key in enumerate(sorted(points))}
    dist = analytics.pairwise_distances(points)
    x = np.stack([points[k] for k in sorted(points)])
    y = np.array([labels[k] for k in sorted(points)])
    assert analytics.mean_silhouette(dist, labels) == pytest.approx(
        float(silhouette_score(x, y)), abs=1e-9)
    assert analytics.davies_bouldin(points, labels) == pytest.approx(
        float(davies_bouldin_score(x, y)), abs=1e-9)


class TestAttributeClusterMetrics:
    def test_table_orderings(self):
        embs, demo = build_attribute_blobs()
        both = analytics.attribute_cluster_metrics(embs, demo, "both")
        race = analytics.attribute_cluster_metrics(embs, demo, "race")
        gender = analytics.attribute_cluster_metrics(embs, demo, "gender")
        assert both.msc > race.msc > gender.msc
        assert both.dbi < race.dbi < gender.dbi

    def test_single_race_raises(self):
        embs, demo = build_attribute_blobs(races=("Asian",))
        with pytest.raises(NeedTwoClusters):
            analytics.attribute_cluster_metrics(embs, demo, "race")

    def test_unknown_excluded_and_counted(self):
        embs, demo = build_attribute_blobs(points_per_blob=3)
        first = sorted(embs)[0]
        demo[first] = Demographics(ethnicity="Unknown", gender="Male")
        result = analytics.attribute_cluster_metrics(embs, demo, "race")
        assert result.excluded == 1

    def test_bad_grouping(self):
        embs, demo = build_attribute_blobs(points_per_blob=2)
        with pytest.raises(BadParameter):
            analytics.attribute_cluster_metrics(embs, demo, "age")

    def test_matches_naive_on_fixture(self):
        embs, demo = build_attribute_blobs(points_per_blob=4)
        result = analytics.attribute_cluster_metrics(embs, demo, "both")
        labels = {k: (demo[k].ethnicity, demo[k].gender) for k in embs}
        dist = analytics.pairwise_distances(embs)
        assert result.msc == pytest.approx(naive_silhouette(dist, labels), abs=1e-9)
        assert result.dbi == pytest.approx(naive_dbi(embs, labels), abs=1e-9)


class TestOutlierReport:
    def test_all_noise(self):
        assignment = ClusterAssignment({"a": NOISE, "b": NOISE})
        demo = {"a": Demographics(), "b": Demographics()}
        assert analytics.outlier_report(assignment, demo) == [
            ("a", "noise"), ("b", "noise")]

    def test_minority_flagged(self):
        labels = {f"w{i}": 0 for i in range(9)}
        labels["x"] = 0
        demo = {k: Demographics(ethnicity="White") for k in labels}
        demo["x"] = Demographics(ethnicity="Asian")
        labels.update({"y0": 1, "y1": 1})
        demo.update({"y0": Demographics(ethnicity="Black"),
                     "y1": Demographics(ethnicity="Black")})
        flags = analytics.outlier_report(ClusterAssignment(labels), demo)
        assert flags == [("x", "minority-in-cluster")]

    def test_tie_no_flags(self):
        labels = {"a": 0, "b": 0, "c": 0, "d": 0, "e": 1, "f": 1}
        demo = {"a": Demographics(ethnicity="White"), "b": Demographics(ethnicity="White"),
                "c": Demographics(ethnicity="Asian"), "d": Demographics(ethnicity="Asian"),
                "e": Demographics(ethnicity="Black"), "f": Demographics(ethnicity="Black")}
        assert analytics.outlier_report(ClusterAssignment(labels), demo) == []


class TestExportScatter:
    def test_rows_and_header(self, tmp_path):
        proj = analytics.Projection2D({"a": (1.0, 2.0), "b": (3.5, -0.25), "c": (0, 0)})
        path = tmp_path / "scatter.csv"
        analytics.export_scatter(proj, {"a": 0, "b": 1, "c": NOISE}, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "instance_id,x,y,label"
        assert len(lines) == 4
        assert lines[1] == "a,1.000000,2.000000,0"

    def test_byte_identical_re_export(self, tmp_path):
        proj = analytics.Projection2D({"a": (1.0, 2.0), "b": (3.5, -0.25)})
        p1, p2 = tmp_path / "s1.csv", tmp_path / "s2.csv"
        analytics.export_scatter(proj, {"a": 0, "b": 1}, p1)
        analytics.export_scatter(proj, {"a": 0, "b": 1}, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_empty_projection_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        analytics.export_scatter(analytics.Projection2D({}), {}, path)
        assert path.read_text() == "instance_id,x,y,label\n"

    def test_missing_labels_rejected(self, tmp_path):
        proj = analytics.Projection2D({"a": (0.0, 0.0)})
        with pytest.raises(BadParameter):
            analytics.export_scatter(proj, {}, tmp_path / "x.csv")

    def test_io_failure(self, tmp_path):
        proj = analytics.Projection2D({"a": (0.0, 0.0)})
        with pytest.raises(IoFailure):
            analytics.export_scatter(proj, {"a": 0}, tmp_path / "nodir" / "x.csv")
