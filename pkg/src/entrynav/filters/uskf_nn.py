"""Unscented Schmidt-Kalman filter with an online-adapted density network (USKF-NN).

Each epoch runs three stages:

1. ``uskf_propagate`` -- sigma points over the augmented state ``[x; c]``
   are integrated with density ``c * NN(r)``; ``c`` is a consider parameter
   modelled as an exponentially correlated random variable centred at one.
2. ``mlo`` -- the network weights are adapted by Adam steps on the
   measurement log-likelihood loss ``nu^T R^-1 nu`` at the prior mean,
   accepting only steps that lower the loss.
3. ``uskf_update`` -- a Schmidt update with the adapted network: the state
   and the state/consider cross-covariance are corrected, the consider
   estimate and its variance are not.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..dynamics import N_STATE, R, VehicleConfig, propagate
from ..net import AdamState, MlpDensityNet, adam_step, density_forward, density_gradient
from ..sensors import QDOT, NoiseSpec, build_R, measure_ideal_array
from .ut import UtConfig, cross_covariance, sigma_points, symmetrize, unscented_moments

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EcrvConfig:
    tau: float = 5.0
    P_ss: float = 1e-3
    P_c0: float = 1e-10

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.P_ss >= self.P_c0 >= 0:
            raise ValueError("need P_ss >= P_c0 >= 0")

    def decay(self, dt):
        return math.exp(-dt / self.tau)

    def q_c(self, dt):
        return -math.expm1(-2.0 * dt / self.tau) * self.P_ss


@dataclass(frozen=True)
class MloConfig:
    """Online adaptation settings. The step size at epoch ``k`` is ``alpha_L / k``."""

    alpha_L: float = 0.01
    beta1: float = 0.1
    beta2: float = 0.9
    p_max: int = 1
    T: float = 1.0
    eps: float = 1e-8
    max_iter: int = 100

    def __post_init__(self):
        if self.p_max < 1 or self.max_iter < 1:
            raise ValueError("p_max and max_iter must be >= 1")


@dataclass
class ConsiderFilterState:
    x_hat: np.ndarray
    P: np.ndarray
    C: np.ndarray
    P_c: float
    net: MlpDensityNet
    adam: AdamState
    c_hat: float = 1.0
    k_meas: int = 0

    @classmethod
    def initial(cls, x0, P0, net: MlpDensityNet, ecrv: EcrvConfig | None = None,
                mlo_cfg: MloConfig | None = None):
        ecrv = ecrv or EcrvConfig()
        mlo_cfg = mlo_cfg or MloConfig()
        return cls(x_hat=np.array(x0, dtype=float), P=np.array(P0, dtype=float),
                   C=np.zeros(N_STATE), P_c=float(ecrv.P_c0), net=net,
                   adam=AdamState(beta1=mlo_cfg.beta1, beta2=mlo_cfg.beta2, eps=mlo_cfg.eps))

    def augmented(self):
        xa = np.append(self.x_hat, self.c_hat)
        Pa = np.empty((N_STATE + 1, N_STATE + 1))
        Pa[:N_STATE, :N_STATE] = self.P
        Pa[:N_STATE, N_STATE] = self.C
        Pa[N_STATE, :N_STATE] = self.C
        Pa[N_STATE, N_STATE] = self.P_c
        return xa, Pa

    @property
    def rho_hat(self) -> float:
        return float(density_forward(self.net, self.x_hat[R]))


def _considered_density(net, Xa):
    return Xa[:, N_STATE] * density_forward(net, Xa[:, R])


def uskf_propagate(st: ConsiderFilterState, dt: float, Q, ecrv: EcrvConfig,
                   cfg: VehicleConfig, ut: UtConfig | None = None, n_sub: int = 5):
    """Time update of the augmented state; returns the prior state."""
    ut = ut or UtConfig(L=N_STATE + 1)
    xa, Pa = st.augmented()
    X, wm, wc = sigma_points(xa, Pa, ut)
    c = X[:, N_STATE]
    net = st.net
    Xp = np.empty_like(X)
    Xp[:, :N_STATE] = propagate(X[:, :N_STATE], dt, n_sub,
                                lambda r: c * density_forward(net, r), cfg)
    Xp[:, N_STATE] = 1.0 + ecrv.decay(dt) * (c - 1.0)

    x_mean = wm @ Xp
    # the ECRV flow maps a mean of one to exactly one
    x_mean[N_STATE] = 1.0
    Qa = np.zeros((N_STATE + 1, N_STATE + 1))
    Qa[:N_STATE, :N_STATE] = Q
    Qa[N_STATE, N_STATE] = ecrv.q_c(dt)
    _, Pa_prior, _ = unscented_moments(Xp, wm, wc, noise=Qa, mean=x_mean)
    return replace(st, x_hat=x_mean[:N_STATE], P=Pa_prior[:N_STATE, :N_STATE].copy(),
                   C=Pa_prior[:N_STATE, N_STATE].copy(), P_c=float(Pa_prior[N_STATE, N_STATE]),
                   c_hat=1.0)


def mlo_loss(net: MlpDensityNet, x_prior, y, R_inv, cfg: VehicleConfig) -> float:
    """Measurement log-likelihood loss at the prior mean with network density."""
    rho = density_forward(net, x_prior[R])
    nu = np.asarray(y, dtype=float) - measure_ideal_array(x_prior, rho, cfg)
    return float(nu @ R_inv @ nu)


def mlo_loss_grad(net: MlpDensityNet, x_prior, y, R_inv, cfg: VehicleConfig):
    """Loss and its gradient w.r.t. the 301 network parameters."""
    rho, drho = density_gradient(net, x_prior[R])
    h = measure_ideal_array(x_prior, rho, cfg)
    nu = np.asarray(y, dtype=float) - h
    # accel and q are linear in rho; qdot goes as sqrt(rho)
    dh = measure_ideal_array(x_prior, 1.0, cfg)
    dh[QDOT] = 0.5 * dh[QDOT] / math.sqrt(rho)
    w = R_inv @ nu
    dL_drho = -2.0 * float(w @ dh)
    return float(nu @ w), dL_drho * drho


@dataclass
class MloResult:
    net: MlpDensityNet
    adam: AdamState
    loss_pre: float
    loss_post: float
    iters: int
    losses: list = field(default_factory=list)


def mlo(st: ConsiderFilterState, y, R_meas, opt: MloConfig, cfg: VehicleConfig) -> MloResult:
    """Adapt the network to the current measurement (accept-if-better Adam loop)."""
    x_prior = st.x_hat
    R_inv = np.linalg.inv(R_meas)
    net, adam = st.net, st.adam
    lr = opt.alpha_L / max(st.k_meas, 1)
    loss = mlo_loss(net, x_prior, y, R_inv, cfg)
    result = MloResult(net, adam, loss, loss, 0, [loss])
    if not math.isfinite(loss):
        log.warning("epoch %d: non-finite MLO loss; adaptation skipped", st.k_meas)
        return result
    p = 0
    iters = 0
    while loss > opt.T and iters < opt.max_iter:
        iters += 1
        _, g = mlo_loss_grad(net, x_prior, y, R_inv, cfg)
        if not np.all(np.isfinite(g)):
            log.warning("epoch %d: non-finite MLO gradient; adaptation aborted", st.k_meas)
            break
        if adam.step_count == 0:
            adam = replace(adam, m=np.zeros_like(g), v=g * g)
        params, adam_new = adam_step(net.params, g, adam, lr)
        trial = net.with_params(params)
        new_loss = mlo_loss(trial, x_prior, y, R_inv, cfg)
        if not math.isfinite(new_loss):
            log.warning("epoch %d: non-finite trial loss; adaptation aborted", st.k_meas)
            break
        if new_loss < loss:
            net, adam, loss = trial, adam_new, new_loss
            result.losses.append(loss)
        else:
            p += 1
        if p == opt.p_max:
            break
    result.net, result.adam, result.loss_post, result.iters = net, adam, loss, iters
    return result


def uskf_update(st: ConsiderFilterState, y, R_meas, cfg: VehicleConfig,
                ut: UtConfig | None = None) -> ConsiderFilterState:
    """Schmidt measurement update; the consider row of the gain is discarded."""
    ut = ut or UtConfig(L=N_STATE + 1)
    xa, Pa = st.augmented()
    X, wm, wc = sigma_points(xa, Pa, ut)
    Y = measure_ideal_array(X[:, :N_STATE], _considered_density(st.net, X), cfg)
    _, Pyy, dY = unscented_moments(Y, wm, wc, noise=R_meas)
    y_hat = wm @ Y
    Pxay = cross_covariance(X - xa, dY, wc)
    try:
        K = np.linalg.solve(Pyy, Pxay.T).T
    except np.linalg.LinAlgError:
        log.warning("epoch %d: P_yy singular; update skipped", st.k_meas)
        return st
    Kx, Kc = K[:N_STATE], K[N_STATE]
    x_post = st.x_hat + Kx @ (np.asarray(y, dtype=float) - y_hat)
    KxPyy = Kx @ Pyy
    P_post = symmetrize(st.P - KxPyy @ Kx.T)
    C_post = st.C - KxPyy @ Kc
    return replace(st, x_hat=x_post, P=P_post, C=C_post)


def _prior_R(prior: ConsiderFilterState, cfg, noise):
    rho = density_forward(prior.net, prior.x_hat[R])
    return build_R(measure_ideal_array(prior.x_hat, rho, cfg), noise or NoiseSpec())


def _adapt(prior, y, R_meas, opt, cfg, adapt):
    if adapt:
        res = mlo(prior, y, R_meas, opt, cfg)
        return replace(prior, net=res.net, adam=res.adam), res
    loss = mlo_loss(prior.net, prior.x_hat, y, np.linalg.inv(R_meas), cfg)
    return prior, MloResult(prior.net, prior.adam, loss, loss, 0, [loss])


def uskf_nn_step(st: ConsiderFilterState, y, dt: float, Q, ecrv: EcrvConfig,
                 opt: MloConfig, cfg: VehicleConfig, noise: NoiseSpec | None = None,
                 R_meas=None, ut: UtConfig | None = None, adapt: bool = True, n_sub: int = 5):
    """Propagate, adapt, update. Returns ``(posterior_state, MloResult)``.

    ``R_meas`` defaults to :func:`build_R` at the prior prediction.
    """
    st = replace(st, k_meas=st.k_meas + 1)
    prior = uskf_propagate(st, dt, Q, ecrv, cfg, ut, n_sub)
    if R_meas is None:
        R_meas = _prior_R(prior, cfg, noise)
    prior, res = _adapt(prior, y, R_meas, opt, cfg, adapt)
    return uskf_update(prior, y, R_meas, cfg, ut), res


class EntryUskfNN:
    """Stateful wrapper exposing the common per-epoch filter interface."""

    name = "uskf_nn"

    def __init__(self, x0, P0, net: MlpDensityNet, Q, vcfg: VehicleConfig, noise: NoiseSpec,
                 ecrv: EcrvConfig | None = None, opt: MloConfig | None = None,
                 adapt: bool = True, n_sub: int = 5, ut: UtConfig | None = None):
        self.ecrv = ecrv or EcrvConfig()
        self.opt = opt or MloConfig()
        self.st = ConsiderFilterState.initial(x0, P0, net, self.ecrv, self.opt)
        self.Q = np.asarray(Q, dtype=float)
        self.vcfg = vcfg
        self.noise = noise
        self.adapt = adapt
        self.n_sub = n_sub
        self.ut = ut or UtConfig(L=N_STATE + 1)
        self.last = None
        self.consider_violations = 0

    def epoch(self, y, dt):
        st = replace(self.st, k_meas=self.st.k_meas + 1)
        prior = uskf_propagate(st, dt, self.Q, self.ecrv, self.vcfg, self.ut, self.n_sub)
        R_meas = _prior_R(prior, self.vcfg, self.noise)
        prior, self.last = _adapt(prior, y, R_meas, self.opt, self.vcfg, self.adapt)
        post = uskf_update(prior, y, R_meas, self.vcfg, self.ut)
        if post.P_c != prior.P_c or post.c_hat != 1.0:
            self.consider_violations += 1
        self.st = post
        return self.x, self.state_cov

    @property
    def x(self):
        return self.st.x_hat

    @property
    def state_cov(self):
        return self.st.P

    @property
    def rho_hat(self) -> float:
        return self.st.rho_hat
