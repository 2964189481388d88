"""Squared-hinge ridge path on logistic labels with one signal direction.

The population squared-hinge risk comes from a two-dimensional reduction, so
every point of the path has an exact test loss to compare with the bound.

Run: python demos/03_margin_classification.py
"""
import dataclasses

import numpy as np

from moreaugen.harness import build_model, preset, run_sweep
from moreaugen.oracles import zero_one_risk

cfg = dataclasses.replace(preset("fig1-classification"), trials=4, grid_size=10).validate()
res = run_sweep(cfg)
print(f"n={cfg.n}, d={cfg.d}: null squared-hinge risk {res.null_risk:.3f}, best linear {res.optimal_risk:.3f}")
print("  lambda       train     test    bound")
for a in res.aggregate:
    print(f"  {a['reg_value']:.2e}  {a['train_loss']:7.3f}  {a['mean_test']:7.3f}  {a['mean_bound']:7.3f}")

model = build_model(cfg)
w = np.zeros(cfg.d)
w[0] = model.labels.wstar_coef
print(f"\nzero-one risk of the true direction: {zero_one_risk(w, model.labels.bstar, model).value:.4f}")
