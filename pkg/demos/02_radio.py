"""Tour of the radio layer: path loss, SNR, BER, rate, and the
ground-truth handover sequence of a straight-line walk through a
Poisson-deployed network.
"""

import numpy as np

from dcsim import radio
from dcsim.mobility import MapSpec
from dcsim.streams import derive_rng

cfg = radio.RadioConfig()
print("link budget vs distance (tx 0.25 W, alpha 4, noise 1e-13 W):")
print(f"{'d [m]':>8} {'rss [W]':>12} {'snr [dB]':>10} {'ber':>10} {'rate [Mb/s]':>12}")
for d in (10, 50, 100, 200, 400, 800):
    s = radio.link_stats(cfg, (0.0, 0.0), (d, 0.0))
    print(f"{d:>8} {s.rss_w:>12.3e} {10 * np.log10(s.snr):>10.1f} "
          f"{s.ber:>10.3e} {s.rate_bps / 1e6:>12.1f}")

map_spec = MapSpec(2000, 2000, 1, 0)
dep = radio.deploy_ppp(map_spec, 10.0, derive_rng(0, "deploy-demo"))
print(f"\nPPP deployment at 10 BS/km^2 on 4 km^2: {dep.n_bs} BSs")

# walk across the map and watch the serving BS change
t = np.linspace(0, 1, 300)[:, None]
walk = (1 - t) * np.array([100.0, 1000.0]) + t * np.array([1900.0, 1000.0])
from dcsim.mobility import Trajectory
events = radio.actual_ho_events(Trajectory(0, 0, np.vstack(
    [walk, np.tile(walk[-1], (720 - len(walk), 1))])), dep, cfg)
print(f"walking 1.8 km across the map crosses {len(events)} cell borders:")
for minute, src, dst in events[:8]:
    print(f"  minute {minute:3d}: BS {src} -> BS {dst}")

# dual-link composition rules
b1, b2 = 1e-2, 3e-3
r1, r2 = 5e7, 2e7
print(f"\ndual link: ber {b1:g} * {b2:g} = {radio.dual_ber(b1, b2):g}, "
      f"rate {r1:g} + {r2:g} = {radio.dual_rate(r1, r2):g}")
