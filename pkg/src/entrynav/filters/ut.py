"""Sigma-point generation and unscented moment reduction."""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import numpy as np

from ..errors import CovarianceError

log = logging.getLogger(__name__)

#: Relative diagonal jitter ladder tried when a Cholesky factorization fails.
JITTER_LADDER = (1e-12, 1e-10, 1e-8)


@dataclass(frozen=True)
class UtConfig:
    """Scaled unscented transform constants for an ``L``-dimensional state.

    ``kappa=None`` selects the usual ``3 - L``.
    """

    L: int
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float | None = None

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if not self.L + self.lam > 0:
            raise ValueError(f"L + lambda must be positive (got {self.L + self.lam})")

    @property
    def k(self) -> float:
        return 3.0 - self.L if self.kappa is None else self.kappa

    @property
    def lam(self) -> float:
        return self.alpha**2 * (self.L + self.k) - self.L

    def weights(self):
        return _weights(self.L, self.alpha, self.beta, self.k)


@functools.lru_cache(maxsize=32)
def _weights(L, alpha, beta, kappa):
    lam = alpha**2 * (L + kappa) - L
    wm = np.full(2 * L + 1, 1.0 / (2.0 * (L + lam)))
    wc = wm.copy()
    wm[0] = lam / (L + lam)
    wc[0] = wm[0] + 1.0 - alpha**2 + beta
    wm.flags.writeable = False
    wc.flags.writeable = False
    return wm, wc


def symmetrize(P):
    return 0.5 * (P + P.T)


def nearest_psd(P):
    """Project a symmetric matrix onto the PSD cone by clipping negative eigenvalues."""
    w, V = np.linalg.eigh(symmetrize(np.asarray(P, dtype=float)))
    if w.min() >= 0:
        return symmetrize(np.asarray(P, dtype=float))
    return symmetrize((V * np.clip(w, 0.0, None)) @ V.T)


def robust_cholesky(P):
    """Lower Cholesky factor of ``P`` with a scale-aware jitter fallback.

    On failure the matrix is symmetrized, normalized to unit diagonal, and
    ``eps * I`` is added there (``eps`` from :data:`JITTER_LADDER`), which is
    the same as adding ``eps * diag(P)`` in the original coordinates.
    """
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    P = symmetrize(P)
    d = np.diag(P).copy()
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise CovarianceError("covariance has a negative diagonal entry")
    live = d > 0
    if not np.all(live):
        # zero-variance components must be uncorrelated with everything
        if np.any(P[~live] != 0):
            raise CovarianceError("zero-variance component with non-zero covariance")
        out = np.zeros_like(P)
        if np.any(live):
            out[np.ix_(live, live)] = robust_cholesky(P[np.ix_(live, live)])
        return out
    s = np.sqrt(d)
    corr = P / np.outer(s, s)
    eye = np.eye(len(d))
    for eps in JITTER_LADDER:
        try:
            Lc = np.linalg.cholesky(corr + eps * eye)
        except np.linalg.LinAlgError:
            continue
        log.debug("cholesky needed relative jitter %g", eps)
        return s[:, None] * Lc
    raise CovarianceError("covariance is not positive semi-definite")


def sigma_points(x, P, ut: UtConfig):
    """Return ``(X, wm, wc)`` with ``X`` of shape ``(2L+1, L)``."""
    x = np.asarray(x, dtype=float)
    P = np.asarray(P, dtype=float)
    L = ut.L
    if x.shape != (L,) or P.shape != (L, L):
        raise ValueError(f"expected state of size {L}")
    S = robust_cholesky((L + ut.lam) * P)
    X = np.empty((2 * L + 1, L))
    X[0] = x
    X[1:L + 1] = x + S.T
    X[L + 1:] = x - S.T
    wm, wc = ut.weights()
    return X, wm, wc


def unscented_moments(Y, wm, wc, noise=None, mean=None):
    """Weighted mean and covariance of transformed sigma points ``Y``."""
    y = wm @ Y if mean is None else mean
    dY = Y - y
    cov = (wc[:, None] * dY).T @ dY
    if noise is not None:
        cov = cov + noise
    return y, symmetrize(cov), dY


def cross_covariance(dX, dY, wc):
    return (wc[:, None] * dX).T @ dY
