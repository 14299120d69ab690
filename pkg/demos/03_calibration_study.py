"""A small calibration and power study with the experiments API.

Writes fpr.csv / tpr.csv plus a plots.json sidecar describing how to chart
them, then prints both tables. Trial counts are kept small so the whole
script runs in well under a minute; scale `trials` up for tighter bands.

    python3 demos/03_calibration_study.py
"""

import csv
from pathlib import Path

from standa.experiments import ExperimentConfig, run_fpr, run_tpr

outdir = Path("demo_out")
outdir.mkdir(exist_ok=True)
bundle_spec = {"extractor": [10, 8, 4], "autoencoder": [4, 2, 4], "seed": 5}

print("=== false positive rate under the null (delta = 0) ===\n")
cfg = ExperimentConfig(
    mode="fpr", ns_list=(50, 150), nt=25, d=10, trials=40, rate=0.05,
    alpha=0.05, seed=11, bundle_spec=bundle_spec, outdir=str(outdir),
)
rows = run_fpr(cfg)
print(f"{'n_s':>5} {'method':>12} {'rejections':>11} {'tested':>7} {'fpr':>7}")
for r in rows:
    print(f"{r['n_s']:>5} {r['method']:>12} {r['rejections']:>11} "
          f"{r['tested']:>7} {r['fpr']:>7.3f}")
print()
print("selective hovers at the 0.05 target (within the binomial noise of a")
print("40-trial run — the test suite uses 120) and bonferroni sits far below")
print("it; naive rejects almost everything.\n")

print("=== power against the injected shift ===\n")
cfg = ExperimentConfig(
    mode="tpr", ns_list=(150,), nt=50, d=10, deltas=(1.0, 2.0, 3.0),
    trials=30, rate=0.05, alpha=0.05, seed=13, bundle_spec=bundle_spec,
    outdir=str(outdir),
)
rows = run_tpr(cfg)
print(f"{'delta':>6} {'method':>10} {'tpr':>7}")
for r in rows:
    print(f"{r['delta']:>6} {r['method']:>10} {r['tpr']:>7.3f}")
print()
print("power rises with the shift, and the full-region test tracks or beats")
print("the over-conditioned variant.\n")

written = sorted(p.name for p in outdir.iterdir())
print(f"wrote {written} to {outdir}/")
with open(outdir / "plots.json", encoding="utf-8") as fh:
    print("plots.json:", fh.read().strip())
