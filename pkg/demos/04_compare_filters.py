"""
Three filters on one perturbed entry
====================================

A single Monte Carlo run: one testing atmosphere, one dispersed entry state,
one measurement stream shared by the covariance-matching UKF (UKF-CM), the
density-correction UKF (UKF-AC) and the consider filter with the adaptive
network (USKF-NN). ``entrynav montecarlo`` repeats this over many runs.
"""
import numpy as np

from entrynav.atmos import fit_exponential, sample_truth_atmosphere
from entrynav.config import McConfig
from entrynav.mc import OnboardModels, compute_rmspe, run_case
from entrynav.net import OfflineConfig, TrainConfig, offline_train

cfg = McConfig()
fit = fit_exponential([sample_truth_atmosphere(s) for s in range(20)])
offline = OfflineConfig(n_trajectories=200,
                        train=TrainConfig(epochs=400, batch_size=256, steps_per_epoch=20))
net = offline_train(fit, cfg.entry_mean, cfg.entry_sigma, cfg.vehicle, offline, seed=0).net

run = run_case(cfg, run_seed=3, models=OnboardModels(fit, net))
print(f"{len(run.t)} epochs, final altitude {(run.x_true[-1, 0] - fit.r0) / 1e3:.1f} km\n")

print(f"{'filter':<9}{'failed':>8}{'|dr| m':>12}{'|dv| m/s':>12}{'RMSPE %':>10}")
for name, tr in run.traces.items():
    if tr.failed:
        print(f"{name:<9}{'yes':>8}  at epoch {tr.fail_epoch}: {tr.error}")
        continue
    err = np.abs(tr.x_hat - run.x_true).mean(axis=0)
    pct = compute_rmspe(run.rho_true[None], tr.rho_hat[None])[1]
    print(f"{name:<9}{'no':>8}{err[0]:12.1f}{err[3]:12.3f}{pct:10.3f}")

# Density along the trajectory every 50 s.
print(f"\n{'t (s)':>6}{'truth':>12}" + "".join(f"{n:>12}" for n in run.traces))
for k in range(199, len(run.t), 200):
    row = "".join(f"{tr.rho_hat[k]:12.4e}" for tr in run.traces.values())
    print(f"{run.t[k]:6.0f}{run.rho_true[k]:12.4e}{row}")
