"""
Surrogate Mars atmospheres and the onboard exponential model
============================================================

Truth atmospheres are tabulated COSPAR-style baselines with a correlated,
altitude-dependent log-normal perturbation. The onboard model used by the
classical filters is a single exponential fitted to a set of such profiles.

Run with ``python3 demos/01_atmosphere_and_fit.py``.
"""
import numpy as np

from entrynav.atmos import R_MARS, fit_exponential, sample_truth_atmosphere

# Twenty training atmospheres, seeded like ``entrynav gen-atmos``.
profiles = [sample_truth_atmosphere(seed) for seed in range(20)]
fit = fit_exponential(profiles)
print(f"fitted model: rho0 = {fit.rho0:.5e} kg/m^3, hs = {fit.hs:.1f} m")

# How far is the fit from the individual profiles? The spread grows with
# altitude, which is exactly the mismatch the adaptive filters must absorb.
altitudes_km = np.array([0, 20, 40, 60, 80, 100, 120])
r = R_MARS + 1e3 * altitudes_km
ratios = np.array([p.density(r) / fit.density(r) for p in profiles])
print("\naltitude   truth/fit ratio over 20 profiles")
print("  (km)        min      median       max")
for h, col in zip(altitudes_km, ratios.T):
    print(f"{h:6d}   {col.min():9.3f} {np.median(col):9.3f} {col.max():9.3f}")

# Testing atmospheres come from a disjoint seed range, so nothing the
# onboard models saw during training reappears in the Monte Carlo runs.
test = sample_truth_atmosphere(1_000_000_000)
print(f"\nfirst testing profile at 60 km: {test.density(R_MARS + 60e3):.4e} kg/m^3 "
      f"(fit {fit.density(R_MARS + 60e3):.4e})")
