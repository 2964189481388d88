"""The L1-loss construction where the generalization bound is nearly attained.

A single signal coordinate carries no information about y, and a wide junk
block fits sign targets exactly.  The ratio of the realized gap to the bound
grows towards one as n increases.

Run: python demos/04_l1_sharpness.py
"""
import dataclasses

from moreaugen.harness import preset, run_sweep, sharpness_summary

cfg = dataclasses.replace(preset("sharpness-l1"), trials=100).validate()
for s in sharpness_summary(run_sweep(cfg)):
    print(f"n={s['n']:4d}  gap {s['gap']:.3f}  bound {s['bound']:.3f}  ratio {s['ratio']:.3f} "
          f"[{s['ci_lo']:.3f}, {s['ci_hi']:.3f}]")
