"""ADORP of every scheme against the ALOHA transmit probability.

A small version of the ``--paper-figure 3`` sweep (2000 realizations per
point instead of 20000) that runs in about a minute.
"""

from adhoc_relay import MCConfig, NetworkParams, sweep

grid = [0.05, 0.1, 0.2, 0.3, 0.5]
schemes = ["SO", "BO", "NSO", "NBO", "THRESHOLD", "NN"]
params = NetworkParams.from_mean_nodes(30.0, alpha=4.0)
res = sweep("p_tx", grid, schemes, params, MCConfig(realizations=2000, so_samples=200), seed=1)

print("p_tx  " + "".join(f"{s:>11}" for s in schemes))
for x, est in res.points:
    print(f"{x:4.2f}  " + "".join(f"{est[s].value:11.4f}" for s in est))
