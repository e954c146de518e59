#!/usr/bin/env python3
"""Walk through topology generation and sub-pool formation.

Places 32 APs on a square kilometer, samples per-AP data arrival rates, and
clusters the APs into sub-pools for a few pool counts.  The aggregator of
each sub-pool is its highest-rate member, so the largest data stream never
leaves its host AP.
"""

import numpy as np

from edgepool import form_subpools, generate_topology, sample_arrival_rates

topo = generate_topology(n_aps=32, area_side=1000, seed=7)
topo = sample_arrival_rates(topo, lambda_max=1.0, seed=42)
rates = topo.rates()
print(f"32 APs on a {topo.area_side:.0f}x{topo.area_side:.0f} area")
print(f"arrival rates: mean {rates.mean():.3f}, min {rates.min():.3f}, "
      f"max {rates.max():.3f} samples/s\n")

for k in (1, 4, 8, 32):
    policy = form_subpools(topo, k=k, seed=7)
    sizes = np.bincount(np.array(policy.assignment), minlength=k)
    agg_rates = [float(topo.aps[a].arrival_rate) for a in policy.aggregators]
    print(f"k={k:>2}: pool sizes {sorted(sizes.tolist(), reverse=True)}")
    print(f"      aggregators {list(policy.aggregators)} "
          f"(rates {[round(r, 2) for r in agg_rates]})")

print("\nWith k=32 every AP trains alone (fully distributed); with k=1 all")
print("data funnels to the single busiest AP (fully centralized).")
