"""Run the ranking-based selection on one simulated dataset with noise covariates.

Run with ``python3 demos/select_covariates.py``. Under a minute on one core;
pass a worker count as the first argument to use more.
"""

import sys

from brbvs.selection import BRBVSParams, brbvs_run
from brbvs.simulate import ScenarioConfig, simulate_dataset

workers = int(sys.argv[1]) if len(sys.argv) > 1 else 1
data = simulate_dataset(ScenarioConfig(n=800, p=12), seed=3)
params = BRBVSParams(B=10, k_max=5, tau=0.5, seed=7, metric="FIM")
results = brbvs_run(data, params, workers=workers, metrics=["FIM", "Abs"])

for metric, res in results.items():
    print(f"--- {metric}")
    print(res.summary())
    print("ratio sequence margin 1:", [round(r, 3) for r in res.margins[0].ratios])
