"""Embedding analytics: clustering, cluster quality, 2-D projection, outliers.

Everything here is deterministic: DBSCAN resolves ties by stable key order,
PCA uses fixed starting vectors, and t-SNE derives its initialization from an
explicit seed, so repeated runs are byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .errors import (
    BadParameter,
    CoincidentCentroids,
    EmptyGrid,
    IoFailure,
    NeedTwoClusters,
    NoValidClustering,
    PerplexityOutOfRange,
    TooFewPoints,
    TooManyPoints,
)
from .types import UNKNOWN, Demographics

NOISE = -1

TSNE_MAX_POINTS = 5000
TSNE_EXAGGERATION = 12.0
TSNE_EXAGGERATION_ITERS = 250
TSNE_MOMENTUM_SWITCH = 250
TSNE_INIT_SCALE = 1e-4


# -- distances -----------------------------------------------------------------

@dataclass(frozen=True)
class DistanceMatrix:
    keys: tuple[str, ...]
    values: np.ndarray  # (n, n) float64, symmetric, zero diagonal

    def index(self, key: str) -> int:
        return self.keys.index(key)


def _embedding_matrix(embs: Mapping[str, np.ndarray]) -> tuple[tuple[str, ...], np.ndarray]:
    keys = tuple(sorted(embs))
    x = np.stack([np.asarray(embs[k], dtype=np.float64) for k in keys])
    return keys, x


def pairwise_distances(embs: Mapping[str, np.ndarray]) -> DistanceMatrix:
    """Euclidean distance matrix with keys in stable lexicographic order."""
    if len(embs) < 2:
        raise TooFewPoints(len(embs), 2)
    keys, x = _embedding_matrix(embs)
    d = np.sqrt(_kernels.pairwise_sq_dists(x))
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    d.flags.writeable = False
    return DistanceMatrix(keys, d)


# -- DBSCAN --------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterAssignment:
    """Point-to-cluster map; NOISE (-1) marks unclustered points."""

    labels: dict[str, int]

    @property
    def cluster_ids(self) -> tuple[int, ...]:
        return tuple(sorted({v for v in self.labels.values() if v != NOISE}))

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_ids)

    def members(self, cluster_id: int) -> tuple[str, ...]:
        return tuple(sorted(k for k, v in self.labels.items() if v == cluster_id))

    def noise(self) -> tuple[str, ...]:
        return tuple(sorted(k for k, v in self.labels.items() if v == NOISE))


def dbscan(dist: DistanceMatrix, eps: float, min_pts: int) -> ClusterAssignment:
    """Density clustering on a precomputed distance matrix.

    A point is core iff at least min_pts points (itself included) lie within
    eps. Clusters are connected components of the core-core adjacency; border
    points join the lowest-numbered adjacent cluster; the rest are NOISE.
    Cluster ids follow the order of each cluster's first core point in key
    order, which makes the assignment deterministic.
    """
    if eps <= 0.0:
        raise BadParameter(f"eps must be > 0, got {eps}")
    if min_pts < 1:
        raise BadParameter(f"min_pts must be >= 1, got {min_pts}")
    keys = dist.keys
    n = len(keys)
    within = dist.values <= eps
    neighbor_counts = within.sum(axis=1)  # includes self (diagonal distance 0)
    core = neighbor_counts >= min_pts

    labels = np.full(n, NOISE, dtype=np.int64)
    next_id = 0
    for start in range(n):
        if not core[start] or labels[start] != NOISE:
            continue
        # BFS over core points only
        labels[start] = next_id
        queue = [start]
        while queue:
            u = queue.pop()
            for v in np.nonzero(within[u])[0]:
                if core[v] and labels[v] == NOISE:
                    labels[v] = next_id
                    queue.append(int(v))
        next_id += 1
    # border points: non-core within eps of a core; lowest adjacent cluster id
    for i in range(n):
        if core[i] or not within[i][core].any():
            continue
        adjacent = labels[np.nonzero(within[i] & core)[0]]
        labels[i] = int(adjacent.min())
    return ClusterAssignment({keys[i]: int(labels[i]) for i in range(n)})


@dataclass(frozen=True)
class ClusterQuality:
    msc: float
    dbi: Optional[float] = None
    excluded: int = 0


@dataclass(frozen=True)
class SweepResult:
    eps: float
    assignment: ClusterAssignment
    quality: ClusterQuality


def sweep_dbscan(
    dist: DistanceMatrix,
    eps_grid: Sequence[float],
    min_pts: int,
    embs: Optional[Mapping[str, np.ndarray]] = None,
) -> SweepResult:
    """Run DBSCAN across an eps grid and keep the best clustering by MSC.

    Only runs with at least two clusters count; among those the highest mean
    silhouette wins, ties going to the smallest eps. Noise points are excluded
    from the quality metrics.
    """
    if len(eps_grid) == 0:
        raise EmptyGrid()
    best: Optional[tuple[float, float, ClusterAssignment]] = None
    for eps in sorted(eps_grid):
        assignment = dbscan(dist, eps, min_pts)
        if assignment.n_clusters < 2:
            continue
        clustered = {k: v for k, v in assignment.labels.items() if v != NOISE}
        if len(clustered) < 2:
            continue
        msc = mean_silhouette(dist, clustered)
        if best is None or msc > best[0]:
            best = (msc, eps, assignment)
    if best is None:
        raise NoValidClustering()
    msc, eps, assignment = best
    dbi = None
    if embs is not None:
        clustered = {k: v for k, v in assignment.labels.items() if v != NOISE}
        try:
            dbi = davies_bouldin(embs, clustered)
        except CoincidentCentroids:
            dbi = None
    return SweepResult(eps, assignment, ClusterQuality(msc, dbi))


# -- cluster quality metrics -----------------------------------------------------

LabelMap = Mapping[str, Union[int, str, tuple]]


def _clustered_labels(labels: Union[ClusterAssignment, LabelMap]) -> dict[str, object]:
    if isinstance(labels, ClusterAssignment):
        return {k: v for k, v in labels.labels.items() if v != NOISE}
    return dict(labels)


def mean_silhouette(dist: DistanceMatrix, labels: Union[ClusterAssignment, LabelMap]) -> float:
    """Mean of (b - a) / max(a, b) over all labeled points.

    a is the mean distance to the point's own cluster (self excluded), b the
    smallest mean distance to any other cluster. Singleton clusters score 0.
    """
    lab = _clustered_labels(labels)
    ids = [k for k in dist.keys if k in lab]
    clusters: dict[object, list[int]] = {}
    for idx, k in enumerate(dist.keys):
        if k in lab:
            clusters.setdefault(lab[k], []).append(idx)
    if len(clusters) < 2:
        raise NeedTwoClusters(len(clusters))
    d = dist.values
    scores = []
    for k in ids:
        i = dist.keys.index(k)
        own = clusters[lab[k]]
        if len(own) == 1:
            scores.append(0.0)
            continue
        a = sum(d[i, j] for j in own if j != i) / (len(own) - 1)
        b = min(
            sum(d[i, j] for j in other) / len(other)
            for label, other in clusters.items()
            if label != lab[k]
        )
        denom = max(a, b)
        scores.append(0.0 if denom == 0.0 else (b - a) / denom)
    return float(sum(scores) / len(scores))


def davies_bouldin(
    points: Mapping[str, np.ndarray],
    labels: Union[ClusterAssignment, LabelMap],
) -> float:
    """Davies-Bouldin index over raw coordinates (centroid-based)."""
    lab = _clustered_labels(labels)
    clusters: dict[object, list[str]] = {}
    for k in sorted(lab):
        clusters.setdefault(lab[k], []).append(k)
    if len(clusters) < 2:
        raise NeedTwoClusters(len(clusters))
    order = sorted(clusters, key=lambda c: str(c))
    centroids = []
    scatters = []
    for label in order:
        members = np.stack([np.asarray(points[k], dtype=np.float64) for k in clusters[label]])
        centroid = members.mean(axis=0)
        centroids.append(centroid)
        scatters.append(float(np.linalg.norm(members - centroid, axis=1).mean()))
    k = len(order)
    ratios = []
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if i == j:
                continue
            m = float(np.linalg.norm(centroids[i] - centroids[j]))
            if m == 0.0:
                raise CoincidentCentroids(i, j)
            worst = max(worst, (scatters[i] + scatters[j]) / m)
        ratios.append(worst)
    return float(sum(ratios) / k)


def attribute_cluster_metrics(
    embs: Mapping[str, np.ndarray],
    demographics: Mapping[str, Demographics],
    grouping: str = "race",
) -> ClusterQuality:
    """MSC and DBI treating demographic attributes as cluster labels.

    grouping is "race", "gender", or "both" (race x gender product labels);
    instances whose needed attributes are Unknown are excluded and counted.
    """
    if grouping not in ("race", "gender", "both"):
        raise BadParameter(f"grouping must be race, gender, or both, got {grouping!r}")
    labels: dict[str, object] = {}
    excluded = 0
    for key in sorted(embs):
        demo = demographics[key]
        race, gender = demo.ethnicity, demo.gender
        if grouping == "race":
            value: object = race
            missing = race == UNKNOWN
        elif grouping == "gender":
            value = gender
            missing = gender == UNKNOWN
        else:
            value = (race, gender)
            missing = race == UNKNOWN or gender == UNKNOWN
        if missing:
            excluded += 1
        else:
            labels[key] = value
    kept = {k: embs[k] for k in labels}
    if len(set(labels.values())) < 2:
        raise NeedTwoClusters(len(set(labels.values())))
    dist = pairwise_distances(kept)
    msc = mean_silhouette(dist, labels)
    dbi = davies_bouldin(kept, labels)
    return ClusterQuality(msc, dbi, excluded)


# -- PCA -------------------------------------------------------------------------

@dataclass(frozen=True)
class Projection2D:
    coords: dict[str, tuple[float, float]]

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(sorted(self.coords))


@dataclass(frozen=True)
class PcaResult:
    projection: Projection2D
    components: np.ndarray          # (out_dims, d) orthonormal rows
    explained_ratios: tuple[float, ...]


PCA_TOL = 1e-10
PCA_MAX_ITER = 10000


def _power_iteration(cov: np.ndarray, start: np.ndarray,
                     previous: list[np.ndarray]) -> tuple[float, np.ndarray]:
    v = start / np.linalg.norm(start)
    for prev in previous:
        v -= prev * (prev @ v)
    norm = np.linalg.norm(v)
    if norm < 1e-300:
        return 0.0, np.zeros_like(start)
    v /= norm
    for _ in range(PCA_MAX_ITER):
        w = cov @ v
        for prev in previous:
            w -= prev * (prev @ w)
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            return 0.0, v
        w /= norm
        if w @ v < 0:
            w = -w
        if float(np.linalg.norm(w - v)) <= PCA_TOL:
            v = w
            break
        v = w
    eigenvalue = float(v @ (cov @ v))
    return eigenvalue, v


def _fix_sign(v: np.ndarray) -> np.ndarray:
    for entry in v:
        if abs(entry) > 1e-12:
            return v if entry > 0 else -v
    return v


def pca_project(embs: Mapping[str, np.ndarray], out_dims: int = 2) -> PcaResult:
    """Project onto the top principal components of the sample covariance.

    Deterministic power iteration with deflation (tolerance 1e-10, fixed
    starting vectors); components are orthonormal and sign-fixed so the first
    nonzero entry is positive. Null directions yield zero coordinates.
    """
    if len(embs) < out_dims + 1:
        raise TooFewPoints(len(embs), out_dims + 1)
    keys, x = _embedding_matrix(embs)
    mean = x.mean(axis=0)
    centered = x - mean
    n, d = centered.shape
    cov = (centered.T @ centered) / (n - 1)
    total_var = float(np.trace(cov))

    starts = np.random.RandomState(20240101).standard_normal((out_dims, d))
    components: list[np.ndarray] = []
    eigenvalues: list[float] = []
    for i in range(out_dims):
        if total_var == 0.0:
            eigenvalues.append(0.0)
            components.append(np.zeros(d))
            continue
        lam, v = _power_iteration(cov, starts[i].copy(), components)
        if lam <= total_var * 1e-12:
            eigenvalues.append(0.0)
            components.append(np.zeros(d))
        else:
            eigenvalues.append(lam)
            components.append(_fix_sign(v))
    comp = np.stack(components)
    proj = centered @ comp.T
    ratios = tuple(
        (lam / total_var if total_var > 0.0 else 0.0) for lam in eigenvalues
    )
    coords = {k: (float(proj[i, 0]), float(proj[i, 1] if out_dims > 1 else 0.0))
              for i, k in enumerate(keys)}
    return PcaResult(Projection2D(coords), comp, ratios)


# -- t-SNE -----------------------------------------------------------------------

@dataclass(frozen=True)
class TsneResult:
    projection: Projection2D
    kl_history: tuple[tuple[int, float], ...]
    achieved_perplexities: np.ndarray


def _conditional_probs(sq_row: np.ndarray, beta: float, self_idx: int) -> np.ndarray:
    w = np.exp(-sq_row * beta)
    w[self_idx] = 0.0
    total = w.sum()
    if total <= 0.0:
        # all weights underflowed (e.g. exactly equidistant rows pushed to
        # huge beta); the limit distribution is uniform over the others
        w = np.ones_like(w)
        w[self_idx] = 0.0
        total = w.sum()
    return w / total


def _row_perplexity(p_row: np.ndarray) -> float:
    nz = p_row[p_row > 0.0]
    h = float(-(nz * np.log2(nz)).sum())
    return 2.0 ** h


def tsne_affinities(embs_or_matrix, perplexity: float) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Symmetrized joint probabilities P plus per-row achieved perplexities.

    Bandwidths are found per row by binary search (at most 50 bisection
    steps) so each row's perplexity matches the target within 1e-5.
    """
    if isinstance(embs_or_matrix, Mapping):
        keys, x = _embedding_matrix(embs_or_matrix)
        sq = _kernels.pairwise_sq_dists(x)
    else:
        sq = np.asarray(embs_or_matrix, dtype=np.float64)
        keys = tuple(str(i) for i in range(sq.shape[0]))
    n = sq.shape[0]
    cond = np.zeros((n, n), dtype=np.float64)
    achieved = np.zeros(n, dtype=np.float64)
    for i in range(n):
        beta_lo, beta_hi = 0.0, np.inf
        beta = 1.0
        p_row = _conditional_probs(sq[i], beta, i)
        perp = _row_perplexity(p_row)
        # bracket, then bisect
        expansions = 0
        while perp > perplexity and expansions < 100:
            beta_lo = beta
            beta *= 2.0
            p_row = _conditional_probs(sq[i], beta, i)
            perp = _row_perplexity(p_row)
            expansions += 1
        while perp < perplexity and expansions < 100:
            beta_hi = beta
            beta /= 2.0
            p_row = _conditional_probs(sq[i], beta, i)
            perp = _row_perplexity(p_row)
            expansions += 1
        if perp > perplexity:
            beta_lo = beta
        else:
            beta_hi = min(beta_hi, beta) if np.isfinite(beta_hi) else beta
        for _ in range(50):
            if abs(perp - perplexity) <= 1e-5:
                break
            if perp > perplexity:
                beta_lo = beta
            else:
                beta_hi = beta
            beta = beta_lo * 2.0 if not np.isfinite(beta_hi) else 0.5 * (beta_lo + beta_hi)
            p_row = _conditional_probs(sq[i], beta, i)
            perp = _row_perplexity(p_row)
        cond[i] = p_row
        achieved[i] = perp
    p = (cond + cond.T) / (2.0 * n)
    return p, achieved, keys


def tsne_project(
    embs: Mapping[str, np.ndarray],
    perplexity: float = 15.0,
    iterations: int = 1000,
    learning_rate: float = 200.0,
    seed: int = 0,
) -> TsneResult:
    """Exact t-SNE to 2-D with the standard optimization schedule.

    Early exaggeration x12 for the first 250 iterations, momentum 0.5
    switching to 0.8 at iteration 250, seeded normal initialization with
    sigma 1e-4. Identical inputs and seed give identical output.
    """
    n = len(embs)
    if n > TSNE_MAX_POINTS:
        raise TooManyPoints(n, TSNE_MAX_POINTS)
    if not 5.0 <= perplexity <= (n - 1) / 3.0:
        raise PerplexityOutOfRange(perplexity, n)
    p, achieved, keys = tsne_affinities(embs, perplexity)

    rng = np.random.RandomState(seed)
    y = rng.standard_normal((n, 2)) * TSNE_INIT_SCALE
    velocity = np.zeros_like(y)
    kl_history: list[tuple[int, float]] = []

    for it in range(1, iterations + 1):
        p_eff = p * TSNE_EXAGGERATION if it <= TSNE_EXAGGERATION_ITERS else p
        momentum = 0.5 if it < TSNE_MOMENTUM_SWITCH else 0.8
        _, grad = _kernels.tsne_kl_grad(p_eff, y)
        velocity = momentum * velocity - learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0)
        if it % 50 == 0 or it == iterations:
            kl, _ = _kernels.tsne_kl_grad(p, y)
            if not math.isfinite(kl):
                raise BadParameter(f"divergent t-SNE run at iteration {it}")
            kl_history.append((it, float(kl)))

    coords = {k: (float(y[i, 0]), float(y[i, 1])) for i, k in enumerate(keys)}
    return TsneResult(Projection2D(coords), tuple(kl_history), achieved)


# -- outliers & export -------------------------------------------------------------

def outlier_report(
    assignment: ClusterAssignment,
    demographics: Mapping[str, Demographics],
    attribute: str = "ethnicity",
) -> list[tuple[str, str]]:
    """Flag NOISE points and minority-attribute members of majority clusters."""
    flags: list[tuple[str, str]] = []
    for key, label in assignment.labels.items():
        if label == NOISE:
            flags.append((key, "noise"))
    clusters: dict[int, list[str]] = {}
    for key, label in assignment.labels.items():
        if label != NOISE:
            clusters.setdefault(label, []).append(key)
    for label, members in clusters.items():
        values = [demographics[k].attribute(attribute) for k in members]
        counts: dict[str, int] = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        top = max(counts.values())
        winners = [v for v, c in counts.items() if c == top]
        if len(winners) != 1:
            continue  # tie: no majority, no flags for this cluster
        majority = winners[0]
        for k, v in zip(members, values):
            if v != majority:
                flags.append((k, "minority-in-cluster"))
    return sorted(flags)


def export_scatter(proj: Projection2D, labels: Mapping[str, object], path) -> None:
    """Write (instance_id, x, y, label) rows as CSV in stable key order."""
    missing = [k for k in proj.coords if k not in labels]
    if missing:
        raise BadParameter(f"labels missing for {len(missing)} instance(s), e.g. {missing[0]!r}")
    lines = ["instance_id,x,y,label"]
    for key in proj.keys:
        x, y = proj.coords[key]
        lines.append(f"{key},{x:.6f},{y:.6f},{labels[key]}")
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc
