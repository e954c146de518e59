"""Physical network model: access points, workload rates, and data placement.

Access points (APs) sit at random positions on a square service area.  Each
AP has a mean data arrival rate (samples per second) describing how much
training data its users generate.  Training data is assigned to APs with the
label-sharding scheme, so per-AP class distributions are deliberately skewed.

All randomness flows through ``numpy.random.Generator`` seeded with PCG64,
which makes every operation a pure function of its inputs and seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset


@dataclass(frozen=True)
class ApNode:
    id: int
    position: tuple[float, float]
    arrival_rate: float = 0.0  # samples per second; 0.0 means "not sampled yet"


@dataclass(frozen=True)
class NetworkTopology:
    aps: tuple[ApNode, ...]
    area_side: float
    seed: int

    def __post_init__(self):
        # canonical order is by id, whatever order the APs were supplied in
        object.__setattr__(self, "aps", tuple(sorted(self.aps, key=lambda a: a.id)))
        ids = [ap.id for ap in self.aps]
        if ids != list(range(len(self.aps))):
            raise ValueError(f"AP ids must be a permutation of 0..n-1, got {ids}")
        for ap in self.aps:
            x, y = ap.position
            if not (0.0 <= x <= self.area_side and 0.0 <= y <= self.area_side):
                raise ValueError(f"AP {ap.id} position {ap.position} outside area")

    @property
    def n_aps(self) -> int:
        return len(self.aps)

    def rates(self) -> np.ndarray:
        """Arrival rates in AP id order."""
        return np.array([ap.arrival_rate for ap in self.aps])

    def positions(self) -> np.ndarray:
        """(n, 2) array of AP positions in id order."""
        return np.array([ap.position for ap in self.aps])


@dataclass(eq=False)
class DataShard:
    """The slice of the training set held by one AP."""

    ap_id: int
    sample_indices: np.ndarray
    label_histogram: np.ndarray

    def __len__(self):
        return len(self.sample_indices)


def generate_topology(n_aps: int, area_side: float, seed: int) -> NetworkTopology:
    """Place ``n_aps`` APs i.i.d. uniformly on the [0, area_side]^2 square."""
    if n_aps < 1:
        raise ValueError(f"n_aps must be >= 1, got {n_aps}")
    if area_side <= 0:
        raise ValueError(f"area_side must be > 0, got {area_side}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    xy = rng.uniform(0.0, area_side, size=(n_aps, 2))
    aps = tuple(ApNode(id=i, position=(xy[i, 0], xy[i, 1])) for i in range(n_aps))
    return NetworkTopology(aps=aps, area_side=area_side, seed=seed)


def sample_arrival_rates(
    topology: NetworkTopology, lambda_max: float, seed: int
) -> NetworkTopology:
    """Draw per-AP arrival rates uniformly on the half-open interval (0, lambda_max].

    Rates are strictly positive: with u ~ U[0, 1) the draw lambda_max * (1 - u)
    lands in (0, lambda_max].
    """
    if lambda_max <= 0:
        raise ValueError(f"lambda_max must be > 0, got {lambda_max}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    u = rng.uniform(0.0, 1.0, size=topology.n_aps)
    rates = lambda_max * (1.0 - u)
    aps = tuple(
        ApNode(id=ap.id, position=ap.position, arrival_rate=rates[ap.id])
        for ap in topology.aps
    )
    return NetworkTopology(aps=aps, area_side=topology.area_side, seed=topology.seed)


def partition_noniid(
    dataset: LabeledDataset, n_aps: int, shards_per_ap: int = 2, seed: int = 0
) -> list[DataShard]:
    """Label-shard the dataset across APs.

    Samples are sorted by label, cut into ``n_aps * shards_per_ap`` equal
    contiguous shards (the remainder after equal division is discarded), and
    shards are dealt to APs by a seeded permutation.  Each AP therefore holds
    a few adjacent label groups, which is the canonical non-iid construction
    for federated training.
    """
    n_shards = n_aps * shards_per_ap
    n = len(dataset)
    if n < n_shards:
        raise ValueError(f"dataset of {n} samples cannot fill {n_shards} shards")
    shard_size = n // n_shards

    order = np.argsort(dataset.labels, kind="stable")
    kept = order[: n_shards * shard_size]
    shards = kept.reshape(n_shards, shard_size)

    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    perm = rng.permutation(n_shards)

    n_classes = int(dataset.labels.max()) + 1
    out = []
    for ap_id in range(n_aps):
        mine = perm[ap_id * shards_per_ap : (ap_id + 1) * shards_per_ap]
        indices = np.concatenate([shards[s] for s in mine])
        hist = np.bincount(dataset.labels[indices], minlength=n_classes)
        out.append(
            DataShard(ap_id=ap_id, sample_indices=indices, label_histogram=hist)
        )
    return out
