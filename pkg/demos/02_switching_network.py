"""Consensus over a network that is never connected at any single instant.

The mission schedule cycles through three sparse digraphs, 30 ms each. No
single graph has a spanning tree, yet their integral over any 90 ms window
does, and that is enough for agreement. The guaranteed rate is extremely
conservative compared with what the simulation shows.
"""
import numpy as np

from etcoord.analysis import check_consensus_envelope, fit_decay_rate
from etcoord.graph import consensus_rate_constants, has_delta_spanning_tree, laplacian
from etcoord.scenario import default_scenario
from etcoord.sim import check_connectivity, run_consensus_reference

cfg = default_scenario()
for k, (dur, g) in enumerate(cfg.schedule.segments, 1):
    single = has_delta_spanning_tree(dur * laplacian(g), dur)
    print(f"D{k}: edges {sorted(g.edges)}  spanning tree alone: {single.holds}")

failing, windows = check_connectivity(cfg)
for w in windows:
    print(f"window [{w.t_start:.2f}, {w.t_start + cfg.qos_T:.2f}] holds={w.holds} "
          f"roots={sorted(w.roots)}")

cr = consensus_rate_constants(cfg.gains.a, cfg.gains.b, cfg.qos_delta, cfg.qos_T, cfg.n)
print(f"\nguaranteed: diam(t) <= {cr.k:.10f} diam(0) exp(-{cr.lam:.3g} t)")

x0 = np.array([1.0, -0.5, 0.3, 0.9, -1.0])
ct = run_consensus_reference(cfg.schedule, cfg.gains.a, cfg.gains.b, x0, cfg.dt, 10.0)
diam = ct.x.max(axis=1) - ct.x.min(axis=1)
print(f"observed rate on [1, 10] s: {fit_decay_rate(ct.t, diam, window=(1, 10)):.3g} 1/s")
print("envelope", check_consensus_envelope(ct, cr.k, cr.lam).line())
for t in (0, 2, 5, 10):
    print(f"  t={t:4.1f}s  diam={diam[int(t / cfg.dt)]:.3e}")
