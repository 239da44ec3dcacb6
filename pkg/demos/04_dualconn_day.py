"""One user crossing a cell border, simulated in all three modes.

Shows the event sequences side by side: the single baseline hands over
with hysteresis+TTT only; ideal-dual prepares the target cell in
advance and hands over through the prepared leg.
"""

import numpy as np

from dcsim import dualconn
from dcsim.mobility import MINUTES_PER_DAY, MapSpec, Trajectory, UserProfile
from dcsim.predictor import NormSpec
from dcsim.radio import Deployment, RadioConfig

cfg = RadioConfig()
dep = Deployment(1.0, [[1000.0, 1000.0], [2000.0, 1000.0]])
policy = dualconn.DcPolicy()

# 60-minute walk from deep in cell 0 to deep in cell 1, then hold
xs = np.concatenate([np.linspace(1100, 1900, 61),
                     np.full(MINUTES_PER_DAY - 61, 1900.0)])
walk = Trajectory(0, 0, np.column_stack([xs, np.full_like(xs, 1000.0)]))
profile = UserProfile(0, 1.0, (0, 1))

for mode in ("single", "ideal-dual"):
    events, records = dualconn.simulate_day(
        [profile], {0: walk}, dep, cfg, {}, policy, mode,
        norm=NormSpec(3000, 2000), map_spec=MapSpec(3000, 2000, 1, 0))
    print(f"\n{mode} mode:")
    for e in events:
        print(f"  minute {e.minute:3d}: {e.kind.value:16s} "
              f"BS {e.from_bs} -> BS {e.to_bs}")
    dual_minutes = [r.minute for r in records if r.target_bs >= 0]
    if dual_minutes:
        lo, hi = min(dual_minutes), max(dual_minutes)
        near = [r for r in records if lo <= r.minute <= hi]
        base = [r for r in records if r.minute in
                range(lo, hi + 1)] if mode == "single" else near
        print(f"  dual leg held minutes {lo}..{hi}; mean rate there "
              f"{np.mean([r.rate_bps for r in near]) / 1e6:.1f} Mb/s, "
              f"mean ber {np.mean([r.ber for r in near]):.2e}")
    else:
        ho = next((e.minute for e in events), 30)
        near = [r for r in records if abs(r.minute - ho) <= 2]
        print(f"  around the handover: mean rate "
              f"{np.mean([r.rate_bps for r in near]) / 1e6:.1f} Mb/s, "
              f"mean ber {np.mean([r.ber for r in near]):.2e}")
