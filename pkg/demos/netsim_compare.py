"""Short network simulation: NBO against nearest-neighbour routing.

Uses the desk-scale network (100 nodes on 1000 m^2, alpha = 3) with 5000
slots per run; the acceptance runs use 100000.
"""

from adhoc_relay import SimConfig, run_sim

for p in (0.1, 0.2, 0.3):
    runs = {s: run_sim(SimConfig.desk(p, s, slots=5000, seed=1)) for s in ("NBO", "NN")}
    nbo, nn = runs["NBO"], runs["NN"]
    print(f"p_tx={p}: NBO eer {nbo.eer:.4f} ({nbo.delivered} delivered), "
          f"NN eer {nn.eer:.4f} ({nn.delivered} delivered), ratio {nbo.eer / nn.eer:.2f}")
