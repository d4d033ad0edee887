"""
One epoch of online network adaptation
======================================

The USKF-NN adapts the network weights at every measurement epoch by Adam
steps on the innovation loss nu^T R^-1 nu evaluated at the prior mean. Steps
are kept only when they lower the loss. Here the true density is 30% above
what the network predicts; a single epoch of adaptation closes the gap.
"""
from dataclasses import replace

import numpy as np

from entrynav.atmos import fit_exponential, sample_truth_atmosphere
from entrynav.config import McConfig
from entrynav.dynamics import propagate
from entrynav.filters import ConsiderFilterState, MloConfig, mlo
from entrynav.net import OfflineConfig, TrainConfig, density_forward, offline_train
from entrynav.sensors import build_R, measure_ideal_array

cfg = McConfig()
fit = fit_exponential([sample_truth_atmosphere(s) for s in range(20)])
offline = OfflineConfig(n_trajectories=60,
                        train=TrainConfig(epochs=300, batch_size=256, steps_per_epoch=20))
net = offline_train(fit, cfg.entry_mean, cfg.entry_sigma, cfg.vehicle, offline, seed=0).net

# A state 150 s into the entry, where the sensed loads are large.
x = propagate(cfg.entry_mean, 150.0, 600, lambda r: density_forward(net, r), cfg.vehicle)
rho_net = density_forward(net, x[0])
rho_true = 1.3 * rho_net
y = measure_ideal_array(x, rho_true, cfg.vehicle)
R = build_R(measure_ideal_array(x, rho_net, cfg.vehicle), cfg.noise)

# The step size decays as alpha_L / k; epoch 10 is typical of the early entry.
state = replace(ConsiderFilterState.initial(x, cfg.P0, net), k_meas=10)
res = mlo(state, y, R, MloConfig(), cfg.vehicle)
rho_after = density_forward(res.net, x[0])

print(f"loss before / after: {res.loss_pre:.3e} / {res.loss_post:.3e} "
      f"({res.iters} Adam iterations)")
print(f"density error before: {100 * abs(rho_net - rho_true) / rho_true:.2f}%")
print(f"density error after:  {100 * abs(rho_after - rho_true) / rho_true:.4f}%")
print("accepted losses:", np.array2string(np.array(res.losses[:6]), precision=3), "...")
