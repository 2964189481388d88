"""Ordinary least squares with d = n / 4 isotropic features.

The summary functional predicts an excess test loss of sigma^2 d / (n - d),
which the simulation reproduces.

Run: python demos/05_ols_psi.py
"""
import numpy as np

from moreaugen.bounds import ols_psi_excess
from moreaugen.harness import build_model, preset
from moreaugen.oracles import regression_pop_risk
from moreaugen.synthdata import derive_seed

cfg = preset("ols-psi")
model = build_model(cfg)
excess = []
for t in range(50):
    ds = model.sample(cfg.n, derive_seed(cfg.seed, t, 0))
    w = np.linalg.lstsq(ds.X, ds.y, rcond=None)[0]
    excess.append(regression_pop_risk(w, 0.0, model).value - model.labels.sigma_sq)
print(f"n={cfg.n}, d={cfg.d}: mean excess test loss {np.mean(excess):.4f} "
      f"(predicted {ols_psi_excess(1.0, cfg.d, cfg.n):.4f})")
