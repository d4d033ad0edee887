"""A plain additive-noise unscented Kalman filter.

Used directly by the augmented-correction and covariance-matching filters,
and by the linear toy systems in the test-suite.
"""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from .ut import UtConfig, cross_covariance, sigma_points, symmetrize, unscented_moments

log = logging.getLogger(__name__)


class Ukf:
    """Unscented Kalman filter with sigma-point propagation ``fx(X, dt)``.

    ``fx`` maps an ``(n_sigma, n)`` array of states over ``dt`` seconds and
    ``hx`` maps the same array to ``(n_sigma, m)`` predicted measurements.
    """

    def __init__(self, x0, P0, fx: Callable, hx: Callable, ut: UtConfig | None = None):
        self.x = np.array(x0, dtype=float)
        self.P = np.array(P0, dtype=float)
        self.fx = fx
        self.hx = hx
        self.ut = ut or UtConfig(L=self.x.size)
        self.y_pred = None
        self.S = None
        self.innovation = None

    def predict(self, dt, Q):
        X, wm, wc = sigma_points(self.x, self.P, self.ut)
        Xp = self.fx(X, dt)
        self.x, self.P, _ = unscented_moments(Xp, wm, wc, noise=Q)
        return self.x, self.P

    def update(self, y, R):
        """Kalman update; returns False (and keeps the prior) if P_yy is singular."""
        X, wm, wc = sigma_points(self.x, self.P, self.ut)
        Y = self.hx(X)
        y_hat, Pyy, dY = unscented_moments(Y, wm, wc, noise=R)
        Pxy = cross_covariance(X - self.x, dY, wc)
        try:
            K = np.linalg.solve(Pyy, Pxy.T).T
        except np.linalg.LinAlgError:
            log.warning("P_yy singular; measurement update skipped")
            return False
        self.y_pred, self.S = y_hat, Pyy
        self.innovation = np.asarray(y, dtype=float) - y_hat
        self.x = self.x + K @ self.innovation
        self.P = symmetrize(self.P - K @ Pyy @ K.T)
        return True
