"""UKF with the state augmented by a density correction factor (UKF-AC).

The ninth state ``K = rho / rho_nominal`` scales the onboard exponential
model, ``rho_hat = K * rho_nominal(r)``, and is carried as a random walk.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import block_diag

from ..atmos import ExpModel
from ..dynamics import N_STATE, R, VehicleConfig, propagate
from ..sensors import NoiseSpec, build_R, measure_ideal_array
from .ukf import Ukf
from .ut import UtConfig

P_K0 = 1e-10
Q_K = 1e-7


class EntryUkfAC:
    name = "ukf_ac"

    def __init__(self, x0, P0, k0: float, model: ExpModel, vcfg: VehicleConfig,
                 noise: NoiseSpec, Q, p_k0: float = P_K0, q_k: float = Q_K,
                 n_sub: int = 5, ut: UtConfig | None = None):
        self.model = model
        self.vcfg = vcfg
        self.noise = noise
        self.n_sub = n_sub
        self.Qa = block_diag(np.asarray(Q, dtype=float), [[q_k]])
        xa = np.append(np.asarray(x0, dtype=float), k0)
        Pa = block_diag(np.asarray(P0, dtype=float), [[p_k0]])
        self.ukf = Ukf(xa, Pa, self._fx, self._hx, ut or UtConfig(L=N_STATE + 1))

    def _density(self, Xa):
        return Xa[..., N_STATE] * self.model.density(Xa[..., R])

    def _fx(self, Xa, dt):
        k = Xa[:, N_STATE]
        x = propagate(Xa[:, :N_STATE], dt, self.n_sub,
                      lambda r: k * self.model.density(r), self.vcfg)
        return np.column_stack([x, k])

    def _hx(self, Xa):
        return measure_ideal_array(Xa[:, :N_STATE], self._density(Xa), self.vcfg)

    def epoch(self, y, dt):
        self.ukf.predict(dt, self.Qa)
        xa = self.ukf.x
        R_meas = build_R(measure_ideal_array(xa[:N_STATE], self._density(xa), self.vcfg),
                         self.noise)
        self.ukf.update(y, R_meas)
        return self.x, self.state_cov

    @property
    def x(self):
        return self.ukf.x[:N_STATE]

    @property
    def k(self) -> float:
        return float(self.ukf.x[N_STATE])

    @property
    def state_cov(self):
        return self.ukf.P[:N_STATE, :N_STATE]

    @property
    def rho_hat(self) -> float:
        return float(self._density(self.ukf.x))


def ukf_ac_step(f: EntryUkfAC, y, dt):
    """One UKF-AC epoch (predict, update)."""
    return f.epoch(y, dt)
