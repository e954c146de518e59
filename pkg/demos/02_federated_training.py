#!/usr/bin/env python3
"""Simulate the training phase for one pooling policy and inspect the trace.

Needs the dataset from 00_make_dataset.py (the --small variant is fine).
Every second each AP receives a Poisson batch of fresh samples; non-
aggregators ship theirs to the pool aggregator; each aggregator takes one
SGD step; every ten seconds the pool models are FedAvg-combined into the
global model.
"""

from collections import Counter
from pathlib import Path

from edgepool import (
    SimConfig,
    form_subpools,
    generate_topology,
    partition_noniid,
    sample_arrival_rates,
    simulate,
)
from edgepool.datasets import load_dataset

data = Path(__file__).parent / "data"
train = load_dataset(data / "train-images-idx3-ubyte", data / "train-labels-idx1-ubyte")
test = load_dataset(data / "t10k-images-idx3-ubyte", data / "t10k-labels-idx1-ubyte")
print(f"{len(train)} train / {len(test)} test samples")

topo = sample_arrival_rates(generate_topology(16, 1000, seed=7), 1.0, seed=42)
shards = partition_noniid(train, n_aps=16, shards_per_ap=2, seed=3)
labels_at_ap0 = [c for c, n in enumerate(shards[0].label_histogram) if n > 0]
print(f"AP 0 holds {len(shards[0])} samples covering labels {labels_at_ap0} (non-iid)\n")

policy = form_subpools(topo, k=4, seed=7)
sim = SimConfig(horizon_s=120, eval_period_s=30, seed=5)
result = simulate(topo, policy, shards, train, sim, test)

kinds = Counter(ev.kind for ev in result.trace.events)
print("trace events:", dict(sorted(kinds.items())))
migrated = sum(ev.data_units for ev in result.trace.by_kind("migration"))
trained = sum(ev.data_units for ev in result.trace.by_kind("local_train"))
print(f"{migrated} samples migrated to aggregators, {trained} trained\n")

print("accuracy curve (global model on the held-out test set):")
for t, acc in result.accuracy_curve:
    bar = "#" * int(acc * 40)
    print(f"  t={t:>4}s  {acc:.3f}  {bar}")
