"""Sub-pool formation: cluster APs into resource pools and pick aggregators.

APs are clustered with Lloyd's k-means (k-means++ seeding) over a 3-D
feature vector of min-max normalized position and arrival rate.  Each
cluster becomes a sub-pool whose highest-rate member acts as the aggregator
hosting training for the pool; that choice keeps the largest single data
stream from ever traveling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import NetworkTopology


@dataclass(frozen=True)
class FeatureVector:
    """Clustering features for one AP, each min-max normalized into [0, 1]."""

    x: float
    y: float
    rate: float

    def __post_init__(self):
        for name in ("x", "y", "rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"feature {name}={v} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.rate])


@dataclass(frozen=True)
class PoolingPolicy:
    """Assignment of APs to sub-pools plus the per-pool aggregator AP.

    ``assignment[ap_id]`` is the sub-pool id; ``aggregators[subpool_id]`` is
    the AP hosting training for that pool.
    """

    k: int
    assignment: tuple[int, ...]
    aggregators: tuple[int, ...]

    def __post_init__(self):
        n = len(self.assignment)
        if not (1 <= self.k <= n):
            raise ValueError(f"k={self.k} not in [1, {n}]")
        if len(self.aggregators) != self.k:
            raise ValueError("one aggregator required per sub-pool")
        for p in range(self.k):
            members = self.members(p)
            if not members:
                raise ValueError(f"sub-pool {p} is empty")
            if self.assignment[self.aggregators[p]] != p:
                raise ValueError(f"aggregator {self.aggregators[p]} not in pool {p}")

    @property
    def n_aps(self) -> int:
        return len(self.assignment)

    def members(self, subpool_id: int) -> list[int]:
        return [i for i, p in enumerate(self.assignment) if p == subpool_id]


@dataclass(frozen=True)
class KmeansResult:
    assignment: np.ndarray
    centroids: np.ndarray
    inertia_history: tuple[float, ...]

    def __iter__(self):
        # allow `assignment, centroids = kmeans(...)`
        return iter((self.assignment, self.centroids))


def _sq_dists(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _nearest(points, centroids):
    # np.argmin returns the first minimum: ties break to the lowest index
    return np.argmin(_sq_dists(points, centroids), axis=1)


def _fill_empty_clusters(points, assignment, centroids, k):
    """Reassign the farthest point of the largest cluster into each empty one."""
    assignment = assignment.copy()
    sizes = np.bincount(assignment, minlength=k)
    for empty in np.flatnonzero(sizes == 0):
        # donor must keep at least one member; pigeonhole guarantees one exists
        donor = int(np.argmax(np.where(sizes >= 2, sizes, -1)))
        members = np.flatnonzero(assignment == donor)
        d = np.sum((points[members] - centroids[donor]) ** 2, axis=1)
        stolen = members[int(np.argmax(d))]
        assignment[stolen] = empty
        sizes[donor] -= 1
        sizes[empty] += 1
    return assignment


def _cluster_means(points, assignment, k):
    centroids = np.empty((k, points.shape[1]))
    for c in range(k):
        centroids[c] = points[assignment == c].mean(axis=0)
    return centroids


def _kmeanspp(points, k, rng):
    """k-means++ seeding: spread the initial centroids proportionally to D^2."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))  # all remaining mass at existing centroids
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((points - points[idx]) ** 2, axis=1))
    return points[chosen].copy()


def kmeans(points, k: int, seed: int, max_iter: int = 300, tol: float = 1e-10):
    """Lloyd's algorithm with k-means++ seeding.

    Parameters
    ----------
    points : array-like, shape (n, d)
        Finite feature vectors.
    k : int
        Number of clusters, 1 <= k <= n.
    seed : int
        Seeds both the k-means++ draws and any uniform fallback.
    max_iter : int
        Iteration cap for the assign/update loop.
    tol : float
        Terminate once the largest centroid movement falls below this.

    Returns
    -------
    KmeansResult
        ``assignment`` (n,), ``centroids`` (k, d) and the per-iteration
        within-cluster sum of squares, which is non-increasing.
    """
    points = np.asarray(
        [p.as_array() if isinstance(p, FeatureVector) else p for p in points],
        dtype=np.float64,
    )
    n = points.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"k={k} must satisfy 1 <= k <= {n}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")

    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    centroids = _kmeanspp(points, k, rng)
    history = []
    prev_obj = np.inf
    for _ in range(max_iter):
        assignment = _nearest(points, centroids)
        assignment = _fill_empty_clusters(points, assignment, centroids, k)
        new_centroids = _cluster_means(points, assignment, k)
        obj = float(np.sum((points - new_centroids[assignment]) ** 2))
        if obj > prev_obj * (1 + 1e-12) + 1e-12:
            raise AssertionError(
                f"k-means objective increased: {prev_obj} -> {obj}"
            )
        history.append(obj)
        prev_obj = obj
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        if shift < tol:
            break

    # make the returned assignment consistent with the final centroids
    assignment = _nearest(points, centroids)
    repaired = _fill_empty_clusters(points, assignment, centroids, k)
    if not np.array_equal(repaired, assignment):
        assignment = repaired
        centroids = _cluster_means(points, assignment, k)
    return KmeansResult(assignment, centroids, tuple(history))


def build_features(topology: NetworkTopology) -> list[FeatureVector]:
    """Min-max normalize (x, y, rate) per dimension; constant dims map to 0."""
    pos = topology.positions()
    rates = topology.rates()
    cols = np.column_stack([pos[:, 0], pos[:, 1], rates])
    lo = cols.min(axis=0)
    span = cols.max(axis=0) - lo
    span[span == 0] = 1.0
    normed = (cols - lo) / span
    return [FeatureVector(*row) for row in normed]


def form_subpools(
    topology: NetworkTopology, k: int, seed: int, features: str = "position_rate"
) -> PoolingPolicy:
    """Cluster APs into k sub-pools and pick each pool's max-rate member as aggregator.

    ``features`` selects the clustering space: "position_rate" (default) uses
    normalized (x, y, rate); "position" clusters on proximity alone.  Ties on
    arrival rate break to the lowest AP id.  Deterministic per (topology, k,
    seed); the AP order inside the topology is canonical (by id), so the
    partition does not depend on construction order.
    """
    if features not in ("position_rate", "position"):
        raise ValueError(f"unknown feature mode {features!r}")
    rates = topology.rates()
    if np.any(rates <= 0):
        raise ValueError("topology has unsampled arrival rates; sample rates first")
    matrix = np.stack([f.as_array() for f in build_features(topology)])
    if features == "position":
        matrix = matrix[:, :2]
    assignment, _ = kmeans(matrix, k, seed)

    aggregators = []
    for p in range(k):
        members = np.flatnonzero(assignment == p)
        best = members[int(np.argmax(rates[members]))]  # argmax ties -> lowest id
        aggregators.append(int(best))
    return PoolingPolicy(
        k=k,
        assignment=tuple(int(a) for a in assignment),
        aggregators=tuple(aggregators),
    )
