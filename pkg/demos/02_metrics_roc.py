"""Scoring and evaluation: confusion counts, the ROC sweep, and AUC, with
the Mann-Whitney pairwise statistic as a cross-check.

Run with:  python3 demos/02_metrics_roc.py
"""

import numpy as np

from spoofsmith.metrics import ScoredSet, auc, confusion, roc_curve
from spoofsmith.verify import mann_whitney_auc

rng = np.random.default_rng(7)

# Simulate a decent but imperfect classifier: bona fide scores cluster
# high, attack scores cluster low, with overlap.
n = 60
positive = rng.random(n) > 0.5
scores = np.where(positive, rng.normal(0.75, 0.15, n), rng.normal(0.3, 0.15, n))
scores = np.clip(scores, 0.0, 1.0)
sset = ScoredSet(scores, positive)

report = confusion(sset, threshold=0.5)
print(f"confusion @0.5: tp={report.tp} fp={report.fp} "
      f"tn={report.tn} fn={report.fn}")
print(f"accuracy={report.accuracy:.3f} tpr={report.tpr:.3f} "
      f"fpr={report.fpr:.3f}")

points = roc_curve(sset)
print(f"ROC has {len(points)} points, from {points[0]} to {points[-1]}")

a_trap = auc(points)
a_mw = mann_whitney_auc(sset.scores, sset.positive)
print(f"AUC (trapezoid)    = {a_trap:.6f}")
print(f"AUC (Mann-Whitney) = {a_mw:.6f}")
print(f"difference         = {abs(a_trap - a_mw):.2e}")

# A crude terminal plot of the curve.
grid = [[" "] * 41 for _ in range(21)]
for fpr, tpr in points:
    grid[20 - round(tpr * 20)][round(fpr * 40)] = "*"
print("\nROC curve (x=FPR, y=TPR):")
for row in grid:
    print("|" + "".join(row))
print("+" + "-" * 41)
