"""
Scoring a partition: R², mass-preserving rescaling and KL divergence
====================================================================

Predictions are raw population shares. Before any distributional comparison
they are rescaled so that the validation partition keeps its known total.
"""

import numpy as np

from popbench.evaluation import EvalConfig, evaluate_partition, kl_divergence, r_squared, rescale_predictions

obs = np.array([0.02, 0.05, 0.01, 0.07])
pred = np.array([0.03, 0.04, -0.01, 0.08])  # a regression model can go negative

print("R² on raw predictions:", round(r_squared(obs, pred), 4))

# negatives are clamped to epsilon, then everything is scaled to the observed total
scaled = rescale_predictions(pred, obs.sum(), EvalConfig(epsilon=1e-12))
print("rescaled:", scaled, "sum:", scaled.sum(), "target:", obs.sum())

# KL only looks at the shape of the allocation, so any positive scale gives the same value
print("KL(obs || scaled):", kl_divergence(obs, scaled))
print("KL after scaling by 1000:", kl_divergence(obs, 1000 * scaled))

# evaluate_partition does both steps; R² uses the raw values, KL the rescaled ones
r2, kl = evaluate_partition(obs, pred)
print(f"partition score: R² = {r2:.4f}, KL = {kl:.4f} nats")

# a textbook check: p = (0.5, 0.5) against q = (0.9, 0.1)
print("KL((.5,.5) || (.9,.1)) =", round(kl_divergence([0.5, 0.5], [0.9, 0.1]), 5))
