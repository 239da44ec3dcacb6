"""A miniature end-to-end experiment sweep.

Runs the full pipeline (traces -> trained predictors -> three-mode
simulation) on a deliberately tiny grid so it finishes in about a
minute, then prints the report tables.  Scale the config up for real
runs; the full desk-scale sweep is what the acceptance suite exercises.
"""

import time

from dcsim import harness, lstm, mobility

config = harness.SimConfig(
    map_spec=mobility.MapSpec(1500, 1500, 40, 3),
    stack_spec=lstm.StackSpec(hidden_sizes=(16, 16)),
    hyper=lstm.TrainHyper(epochs=20),
    densities_per_km2=(5.0, 20.0),
    speeds_mps=(1.0, 8.0),
    users_per_speed=2,
    days=6,
    eval_days=1,
    sites_per_user=6,
    seeds=(0,),
)

t0 = time.time()
rows = harness.run_sweep(config, master_seed=0,
                         progress=lambda m: print(f"  {m}"))
print(f"\n{len(rows)} grid cells in {time.time() - t0:.0f} s\n")

print(harness.format_report(harness.report(rows)))
