"""
Offline training of the density network
=======================================

The network maps radius to density through a 1x100 tanh layer and a
square-root-log output transform. Training data are densities sampled along
dispersed entry trajectories flown through the fitted exponential model.

This demo uses a reduced schedule (about a minute); ``entrynav train`` runs
the full one.
"""
import numpy as np

from entrynav.atmos import R_MARS, fit_exponential, sample_truth_atmosphere
from entrynav.config import McConfig
from entrynav.net import OfflineConfig, TrainConfig, density_forward, offline_train

cfg = McConfig()
fit = fit_exponential([sample_truth_atmosphere(s) for s in range(20)])

offline = OfflineConfig(n_trajectories=200,
                        train=TrainConfig(epochs=400, batch_size=256, steps_per_epoch=20))
result = offline_train(fit, cfg.entry_mean, cfg.entry_sigma, cfg.vehicle, offline, seed=0)

err = result.val_rel_err
print(f"validation samples: {err.size}")
print(f"share below 1% relative error: {100 * result.frac_below_1pct:.2f}%")
print(f"median / 99th percentile error: {100 * np.median(err):.3f}% / "
      f"{100 * np.quantile(err, 0.99):.3f}%")

# The network reproduces the exponential it was trained on.
for h in (10e3, 40e3, 80e3):
    r = R_MARS + h
    print(f"h = {h / 1e3:4.0f} km: net {density_forward(result.net, r):.4e}, "
          f"fit {fit.density(r):.4e}")
