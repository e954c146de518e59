#!/usr/bin/env python3
"""Reservation sizing, real-time charging, and overage.

Reuses the dataset from 00_make_dataset.py.  The reservation expects the
mean arrival rates; actual Poisson arrivals fluctuate above them about half
of the seconds, and every excess resource unit is charged again at the
overage multiplier.  Flip DETERMINISTIC to True to see the fluctuation (and
the overage) vanish.
"""

from pathlib import Path

from edgepool import (
    CostModel,
    SimConfig,
    account,
    form_subpools,
    generate_topology,
    partition_noniid,
    reserve,
    sample_arrival_rates,
    simulate,
    summarize,
)
from edgepool.datasets import load_dataset

DETERMINISTIC = False

data = Path(__file__).parent / "data"
train = load_dataset(data / "train-images-idx3-ubyte", data / "train-labels-idx1-ubyte")
test = load_dataset(data / "t10k-images-idx3-ubyte", data / "t10k-labels-idx1-ubyte")

topo = sample_arrival_rates(generate_topology(16, 1000, seed=7), 1.0, seed=42)
shards = partition_noniid(train, 16, 2, seed=3)
policy = form_subpools(topo, k=4, seed=7)
sim = SimConfig(horizon_s=120, eval_period_s=120, seed=5,
                deterministic_arrivals=DETERMINISTIC)
model = CostModel()  # 1 RU/unit moved, 0.5 RU/unit trained, 0.1/exchange, 10/step

plan = reserve(topo, policy, model, sim)
print("reserved RU/s per sub-pool:")
for p in range(policy.k):
    print(f"  pool {p}: communication {plan.communication_rate[p]:6.2f} "
          f"(migration {plan.migration_rate[p]:.2f} + exchange {plan.exchange_rate[p]:.3f})"
          f"   computing {plan.computing_rate[p]:6.2f}")

result = simulate(topo, policy, shards, train, sim, test)
ledger = account(result.trace, plan, model)
print("\nactual consumption over", sim.horizon_s, "seconds:")
print(f"  migration  {ledger.migration_ru:9.1f} RU")
print(f"  exchange   {ledger.exchange_ru:9.1f} RU")
print(f"  processing {ledger.processing_ru:9.1f} RU")
print(f"  training   {ledger.training_ru:9.1f} RU")
print(f"  overage    {ledger.overage_ru:9.1f} RU "
      f"(comm {ledger.overage_comm_ru:.1f} + comp {ledger.overage_comp_ru:.1f})")

s = summarize(ledger)
print(f"\ncommunication {s['communication_ru']:.1f} RU, computing "
      f"{s['computing_ru']:.1f} RU, average {s['average_ru_per_s']:.2f} RU/s")
