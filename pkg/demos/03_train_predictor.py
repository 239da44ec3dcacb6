"""Train a next-position predictor from scratch and watch it learn.

Uses a small 22-day synthetic user, trains the stacked LSTM with
truncated BPTT, and reports the loss curve and handover-prediction
accuracy on two held-out days.
"""

import time

import numpy as np

from dcsim import lstm, mobility, radio
from dcsim.predictor import (NormSpec, build_dataset, evaluate_day,
                             train_user_model)
from dcsim.streams import derive_rng

map_spec = mobility.MapSpec(2000, 2000, 120, 4)
hotspots = mobility.generate_hotspots(map_spec, derive_rng(0, "hotspots", 0))
sites = mobility.assign_user_sites(hotspots, 10, 3.0, derive_rng(0, "sites", 0, 0))
profile = mobility.UserProfile(0, 1.0, sites)
days = mobility.generate_trajectory(profile, map_spec, hotspots, 22, 0)
print(f"user 0: {len(days)} days of movement at {profile.speed_mps} m/s")

norm = NormSpec(map_spec.width_m, map_spec.height_m)
spec = lstm.StackSpec()          # 3 x 64 hidden units
hyper = lstm.TrainHyper(seed=0)  # lr 1e-2, decay 0.99, 100 epochs

t0 = time.time()
params, losses = train_user_model(build_dataset(days[:20], norm), spec, hyper)
print(f"trained on 20 days in {time.time() - t0:.0f} s")
print("loss curve (every 10th epoch):")
for e in range(0, len(losses), 10):
    print(f"  epoch {e:3d}: {losses[e]:.3e}")
print(f"  final    : {losses[-1]:.3e}")

cfg = radio.RadioConfig()
dep = radio.deploy_ppp(map_spec, 5.0, derive_rng(0, "deploy", 0, 5.0))
for day in (20, 21):
    acc, preds, actual, _ = evaluate_day(spec, params, days[day], dep, cfg,
                                         norm, map_spec)
    print(f"eval day {day}: {len(actual)} actual handovers, "
          f"{len(preds)} predicted, accuracy {acc:.2f}")

blob = lstm.save_checkpoint(spec, params)
spec2, params2 = lstm.load_checkpoint(blob)
same = all(np.array_equal(a, b)
           for a, b in zip(params.arrays(), params2.arrays()))
print(f"\ncheckpoint round trip ({len(blob)} bytes) bit-exact: {same}")
