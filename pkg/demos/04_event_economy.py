"""Trading agreement for bandwidth.

A larger trigger threshold means fewer broadcasts and a looser agreement.
Each row is one full mission.
"""
from etcoord import report
from etcoord.scenario import default_scenario
from etcoord.sim import run_scenario

base = default_scenario()
print("   c1   events   arrival spread [ms]   spread after 10 s")
for c1 in (0.005, 0.01, 0.03, 0.1, 0.3):
    cfg = base.with_overrides([("trigger.c1", c1)])
    summary, _, _ = report.evaluate_run(cfg, run_scenario(cfg))
    print(f"{c1:5g}   {summary.total_events:6d}   {summary.arrival_spread * 1000:19.1f}"
          f"   {summary.max_gamma_spread_after_10s:17.4g}")
