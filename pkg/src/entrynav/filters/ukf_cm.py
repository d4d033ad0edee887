"""UKF with windowed covariance matching of the process noise (UKF-CM).

The batch estimator is the classical windowed covariance-matching form

    Q_hat = 1/(N-1) sum (nu_i - nu_bar)(nu_i - nu_bar)^T
            - 1/N   sum (Phi P+_{i-1} Phi^T - P+_i)

with state innovations ``nu_i = x+_i - x-_i``. A UKF has no transition
matrix, so ``Phi P+ Phi^T`` is taken as the unscented prior covariance minus
the process noise that was added to it.

With the diagonal-only absolute-value reset, the estimate is frequently
indefinite (correlation coefficients well above one appear within the first
windows of an entry run), and no sigma points can be drawn from the
resulting prior. ``psd_projection=True`` clips the negative eigenvalues of
the estimate before it is used; turning it off gives the unrepaired filter.
"""
from __future__ import annotations

import logging
from collections import deque

import numpy as np

from ..atmos import ExpModel
from ..dynamics import VehicleConfig, propagate
from ..errors import WindowError
from ..sensors import NoiseSpec, build_R, measure_ideal_array
from .ukf import Ukf
from .ut import UtConfig, nearest_psd, symmetrize

log = logging.getLogger(__name__)

BATCH_SIZE = 10


def estimate_q_matching(innovations, phi_terms):
    """Process-noise estimate from a batch of state innovations.

    ``innovations`` is ``(N, n)``; ``phi_terms`` is ``(N, n, n)`` holding
    ``Phi P+_{i-1} Phi^T - P+_i`` for each sample. The diagonal of the result is
    replaced by its absolute value; off-diagonals are kept.
    """
    nu = np.asarray(innovations, dtype=float)
    D = np.asarray(phi_terms, dtype=float)
    N = nu.shape[0]
    if N < 2:
        raise WindowError("need at least two innovations")
    dnu = nu - nu.mean(axis=0)
    Q = dnu.T @ dnu / (N - 1) - D.sum(axis=0) / N
    Q = symmetrize(Q)
    idx = np.diag_indices_from(Q)
    Q[idx] = np.abs(Q[idx])
    return Q


def estimate_R_matching(innovations, hph_terms):
    """Measurement-noise estimate from a batch of measurement innovations.

    ``hph_terms`` holds ``H P- H^T`` per sample; for a UKF that is ``P_yy - R``.
    Their mean is weighted by ``(N-1)/N``. The result can be indefinite;
    callers decide how to repair it.
    """
    nu = np.asarray(innovations, dtype=float)
    H = np.asarray(hph_terms, dtype=float)
    N = nu.shape[0]
    if N < 2:
        raise WindowError("need at least two innovations")
    dnu = nu - nu.mean(axis=0)
    return symmetrize(dnu.T @ dnu / (N - 1) - (N - 1) / N * H.mean(axis=0))


class UkfCM:
    """UKF whose process noise is re-estimated from a sliding window of innovations."""

    def __init__(self, x0, P0, fx, hx, Q0, ut: UtConfig | None = None,
                 batch_size: int = BATCH_SIZE, adapt_R: bool = False,
                 psd_projection: bool = True):
        self.ukf = Ukf(x0, P0, fx, hx, ut)
        self.psd_projection = psd_projection
        self.Q_raw = None
        self.Q = np.array(Q0, dtype=float)
        self.batch_size = batch_size
        self.adapt_R = adapt_R
        self.R_hat = None
        self._nu_x = deque(maxlen=batch_size)
        self._phi = deque(maxlen=batch_size)
        self._nu_y = deque(maxlen=batch_size)
        self._hph = deque(maxlen=batch_size)

    @property
    def x(self):
        return self.ukf.x

    @property
    def P(self):
        return self.ukf.P

    def step(self, y, dt, R):
        """Predict over ``dt``, update with ``y``; ``R`` may be a callable of the prior mean."""
        Q_used = self.Q
        x_prior, P_prior = (a.copy() for a in self.ukf.predict(dt, Q_used))
        if self.adapt_R and self.R_hat is not None:
            R = self.R_hat
        elif callable(R):
            R = R(x_prior)
        if not self.ukf.update(y, R):
            return self.x, self.P
        self._nu_x.append(self.ukf.x - x_prior)
        self._phi.append(P_prior - Q_used - self.ukf.P)
        self._nu_y.append(self.ukf.innovation)
        self._hph.append(self.ukf.S - R)
        if len(self._nu_x) == self.batch_size:
            self.Q_raw = estimate_q_matching(np.array(self._nu_x), np.array(self._phi))
            self.Q = nearest_psd(self.Q_raw) if self.psd_projection else self.Q_raw
            if self.adapt_R:
                R_hat = estimate_R_matching(np.array(self._nu_y), np.array(self._hph))
                idx = np.diag_indices_from(R_hat)
                R_hat[idx] = np.abs(R_hat[idx])
                self.R_hat = R_hat
        return self.x, self.P


class EntryUkfCM(UkfCM):
    """UKF-CM for the entry problem with a fixed exponential density model."""

    name = "ukf_cm"

    def __init__(self, x0, P0, Q0, model: ExpModel, vcfg: VehicleConfig,
                 noise: NoiseSpec, n_sub: int = 5, ut: UtConfig | None = None,
                 batch_size: int = BATCH_SIZE, psd_projection: bool = True):
        self.model = model
        self.vcfg = vcfg
        self.noise = noise
        self.n_sub = n_sub
        super().__init__(x0, P0, self._fx, self._hx, Q0, ut or UtConfig(L=8),
                         batch_size=batch_size, psd_projection=psd_projection)

    def _fx(self, X, dt):
        return propagate(X, dt, self.n_sub, self.model.density, self.vcfg)

    def _hx(self, X):
        return measure_ideal_array(X, self.model.density(X[:, 0]), self.vcfg)

    def R_of_prior(self, x):
        return build_R(measure_ideal_array(x, self.model.density(x[0]), self.vcfg), self.noise)

    def epoch(self, y, dt):
        return self.step(y, dt, self.R_of_prior)

    @property
    def rho_hat(self) -> float:
        return float(self.model.density(self.x[0]))

    @property
    def state_cov(self):
        return self.P


def ukf_cm_step(f: EntryUkfCM, y, dt):
    """One UKF-CM epoch (predict, update, re-estimate Q)."""
    return f.epoch(y, dt)
