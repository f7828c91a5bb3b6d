"""Score the neighbours of one random transmitter with every routing metric.

Run with ``python demos/relay_metrics.py``.  Prints, for the five farthest
neighbours, the distance, the received power and each scheme's metric, then
the relay each scheme would pick.
"""

import numpy as np

from adhoc_relay import MCConfig, NetworkParams, SchemeId, build_q_table
from adhoc_relay.geometry import sample_probe_realization, truncation_radius
from adhoc_relay.schemes import scheme_metrics, select_index
from adhoc_relay.streams import stream

params = NetworkParams.from_mean_nodes(30.0, p_tx=0.2, alpha=4.0)
rng = stream(2024)
real = sample_probe_realization(params, truncation_radius(params), rng)
qtable = build_q_table(params, None, MCConfig(qtable_samples=20_000), stream(2024, 1))
names = [s for s in SchemeId]

metrics = {}
for s in names:
    metrics[s] = scheme_metrics(s, real, params, qtable=qtable, threshold=0.05, mc_cfg=MCConfig(so_samples=2000), rng=rng)

s_pow = real.signal_powers(params)
order = np.argsort(real.neighbor_dist)[::-1][:5]
print(f"{real.n_neighbors} neighbours in the routing zone (radius {params.r_a:.3f})")
print("dist    power   " + " ".join(f"{s.value:>9}" for s in names))
for i in order:
    row = " ".join(f"{metrics[s][i]:9.4f}" for s in names)
    print(f"{real.neighbor_dist[i]:.3f}  {s_pow[i]:7.3f} {row}")
for s in names:
    pick = select_index(metrics[s], real.neighbor_dist)
    print(f"{s.value:>9} picks neighbour {pick} at distance {real.neighbor_dist[pick]:.3f}")
