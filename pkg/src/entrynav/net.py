"""One-hidden-layer tanh network mapping planet-centric radius to density.

Pipeline for a radius ``r``::

    i   = (r - r_mean) / r_std
    a   = tanh(W_in * i + b_in)          # 100 hidden units
    o   = W_out . a + b_out
    vr  = o * varrho_std + varrho_mean   # transformed density
    rho = 10 ** (B_shift - vr**2)

The 301 weights and biases are stored as one flat vector ``params`` laid out
as ``[W_in, b_in, W_out, b_out]`` so that gradients and Adam moments share
the same shape.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import propagate
from .errors import TrainingError

log = logging.getLogger(__name__)

HIDDEN = 100
N_PARAMS = 3 * HIDDEN + 1
LN10 = math.log(10.0)
FORMAT_VERSION = 1

_W_IN = slice(0, HIDDEN)
_B_IN = slice(HIDDEN, 2 * HIDDEN)
_W_OUT = slice(2 * HIDDEN, 3 * HIDDEN)
_B_OUT = 3 * HIDDEN


@dataclass(frozen=True, eq=False)
class MlpDensityNet:
    params: np.ndarray
    r_mean: float
    r_std: float
    varrho_mean: float
    varrho_std: float
    B_shift: float = 0.0

    def __post_init__(self):
        p = np.array(self.params, dtype=float).reshape(-1)
        if p.size != N_PARAMS:
            raise ValueError(f"expected {N_PARAMS} parameters, got {p.size}")
        if not (self.r_std > 0 and self.varrho_std > 0):
            raise ValueError("normalization standard deviations must be positive")
        p.flags.writeable = False
        object.__setattr__(self, "params", p)

    @property
    def W_in(self):
        return self.params[_W_IN]

    @property
    def b_in(self):
        return self.params[_B_IN]

    @property
    def W_out(self):
        return self.params[_W_OUT]

    @property
    def b_out(self):
        return float(self.params[_B_OUT])

    def with_params(self, params) -> "MlpDensityNet":
        return replace(self, params=params)

    def density(self, r):
        return density_forward(self, r)

    # -- persistence -------------------------------------------------------
    def to_dict(self):
        return {
            "format": FORMAT_VERSION,
            "hidden": HIDDEN,
            "W_in": self.W_in.tolist(),
            "b_in": self.b_in.tolist(),
            "W_out": self.W_out.tolist(),
            "b_out": self.b_out,
            "r_mean": self.r_mean,
            "r_std": self.r_std,
            "varrho_mean": self.varrho_mean,
            "varrho_std": self.varrho_std,
            "B_shift": self.B_shift,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported network format {d.get('format')!r}")
        params = np.concatenate([d["W_in"], d["b_in"], d["W_out"], [d["b_out"]]])
        return cls(params=params, r_mean=float(d["r_mean"]), r_std=float(d["r_std"]),
                   varrho_mean=float(d["varrho_mean"]), varrho_std=float(d["varrho_std"]),
                   B_shift=float(d["B_shift"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def transform_density(rho, B_shift=0.0):
    """rho -> varrho = sqrt(B_shift - log10(rho)); requires rho < 10**B_shift."""
    arg = B_shift - np.log10(rho)
    if np.any(arg < 0):
        raise ValueError("density too large for the sqrt-log transform")
    return np.sqrt(arg)


def inverse_transform(varrho, B_shift=0.0):
    return 10.0 ** (B_shift - np.asarray(varrho) ** 2)


def _hidden(net: MlpDensityNet, r):
    i = (np.asarray(r, dtype=float) - net.r_mean) / net.r_std
    a = np.tanh(np.multiply.outer(i, net.W_in) + net.b_in)
    return i, a


def density_forward(net: MlpDensityNet, r):
    _, a = _hidden(net, r)
    o = a @ net.W_out + net.b_out
    varrho = o * net.varrho_std + net.varrho_mean
    return 10.0 ** (net.B_shift - varrho * varrho)


def density_gradient(net: MlpDensityNet, r):
    """Density and its gradient w.r.t. all parameters.

    Returns ``(rho, grad)`` where ``grad`` has shape ``r.shape + (301,)``.
    """
    i, a = _hidden(net, r)
    o = a @ net.W_out + net.b_out
    varrho = o * net.varrho_std + net.varrho_mean
    rho = 10.0 ** (net.B_shift - varrho * varrho)
    drho_do = rho * LN10 * (-2.0 * varrho) * net.varrho_std
    g_pre = (drho_do[..., None] * net.W_out) * (1.0 - a * a)
    grad = np.empty(np.shape(rho) + (N_PARAMS,))
    grad[..., _W_IN] = g_pre * np.asarray(i)[..., None]
    grad[..., _B_IN] = g_pre
    grad[..., _W_OUT] = drho_do[..., None] * a
    grad[..., _B_OUT] = drho_do
    return rho, grad


@dataclass
class AdamState:
    """Moving averages of the gradient (``m``) and squared gradient (``v``)."""

    m: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    v: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    beta1: float = 0.1
    beta2: float = 0.9
    eps: float = 1e-8
    step_count: int = 0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam decay rates must lie in [0, 1)")

    def copy(self):
        return replace(self, m=self.m.copy(), v=self.v.copy())


def adam_step(params, grad, st: AdamState, lr: float, bias_correction: bool = False):
    """One Adam update; returns ``(new_params, new_state)`` without mutating inputs.

    The online filter runs without bias correction. The offline trainer turns
    it on.
    """
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or st.m.shape != grad.shape:
        raise ValueError("params, grad and Adam moments must share a shape")
    m = st.beta1 * st.m + (1.0 - st.beta1) * grad
    v = st.beta2 * st.v + (1.0 - st.beta2) * grad * grad
    t = st.step_count + 1
    if bias_correction:
        m_hat = m / (1.0 - st.beta1**t)
        v_hat = v / (1.0 - st.beta2**t)
    else:
        m_hat, v_hat = m, v
    new = params - lr * m_hat / (np.sqrt(v_hat) + st.eps)
    return new, replace(st, m=m, v=v, step_count=t)


# -- offline training -------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    lr_min: float = 1e-6
    lr_max: float = 1e-2
    warmup_frac: float = 0.1
    val_frac: float = 0.2
    batch_size: int = 256
    steps_per_epoch: int = 40
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.lr_min <= self.lr_max:
            raise ValueError("need 0 < lr_min <= lr_max")
        if not 0 < self.val_frac < 1:
            raise ValueError("val_frac must lie in (0, 1)")
        if self.batch_size < 1 or self.steps_per_epoch < 1:
            raise ValueError("batch_size and steps_per_epoch must be positive")


def one_cycle_lr(epoch: int, cfg: TrainConfig) -> float:
    """Cosine warm-up from lr_min to lr_max, then cosine anneal back to lr_min."""
    n_up = max(1, int(round(cfg.warmup_frac * cfg.epochs)))
    if epoch < n_up:
        u = epoch / n_up
    else:
        u = 1.0 - (epoch - n_up) / max(1, cfg.epochs - 1 - n_up)
    u = min(max(u, 0.0), 1.0)
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * 0.5 * (1.0 - math.cos(math.pi * u))


def init_params(rng) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    p = np.empty(N_PARAMS)
    p[_W_IN] = rng.uniform(-1.0, 1.0, HIDDEN)
    p[_B_IN] = rng.uniform(-1.0, 1.0, HIDDEN)
    bound = 1.0 / math.sqrt(HIDDEN)
    p[_W_OUT] = rng.uniform(-bound, bound, HIDDEN)
    p[_B_OUT] = rng.uniform(-bound, bound)
    return p


def _mse_and_grad(params, i, target):
    """Mean squared error in normalized output space and its parameter gradient."""
    w_in, b_in = params[_W_IN], params[_B_IN]
    w_out, b_out = params[_W_OUT], params[_B_OUT]
    a = np.tanh(np.multiply.outer(i, w_in) + b_in)
    err = a @ w_out + b_out - target
    n = i.size
    loss = float(err @ err) / n
    d_o = (2.0 / n) * err
    g = np.empty(N_PARAMS)
    g[_W_OUT] = d_o @ a
    g[_B_OUT] = d_o.sum()
    d_pre = np.multiply.outer(d_o, w_out)
    d_pre *= 1.0 - a * a
    g[_B_IN] = d_pre.sum(axis=0)
    g[_W_IN] = i @ d_pre
    return loss, g


@dataclass(frozen=True)
class TrainResult:
    net: MlpDensityNet
    train_loss: float
    val_loss: float
    val_rel_err: np.ndarray
    history: np.ndarray

    @property
    def frac_below_1pct(self) -> float:
        return float(np.mean(self.val_rel_err < 0.01))


def _safe_std(x: np.ndarray) -> float:
    """Standard deviation, replaced by 1 for a degenerate (constant) sample."""
    s = float(x.std())
    return s if s > 1e-12 * max(1.0, float(np.abs(x).max())) else 1.0


def train_on_samples(r_train, rho_train, r_val, rho_val, cfg: TrainConfig | None = None,
                     seed=0, B_shift: float = 0.0) -> TrainResult:
    """Fit a fresh network to (radius, density) samples.

    Normalization statistics come from the training split only.
    Each epoch takes ``cfg.steps_per_epoch`` Adam steps, each on a seeded
    random minibatch of ``cfg.batch_size`` training samples (or on the full
    set if it is smaller).
    """
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(seed)
    r_train = np.asarray(r_train, dtype=float)
    rho_train = np.asarray(rho_train, dtype=float)
    if np.any(rho_train >= 10.0**B_shift) or np.any(rho_val >= 10.0**B_shift):
        raise TrainingError("densities must be below 10**B_shift for the sqrt-log transform")
    vr_train = transform_density(rho_train, B_shift)
    r_mean, r_std = float(r_train.mean()), _safe_std(r_train)
    vr_mean, vr_std = float(vr_train.mean()), _safe_std(vr_train)
    i_train = (r_train - r_mean) / r_std
    o_train = (vr_train - vr_mean) / vr_std

    params = init_params(rng)
    st = AdamState(beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    n = i_train.size
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        lr = one_cycle_lr(epoch, cfg)
        total = 0.0
        for _ in range(cfg.steps_per_epoch):
            if n > cfg.batch_size:
                idx = rng.integers(0, n, size=cfg.batch_size)
                ib, ob = i_train[idx], o_train[idx]
            else:
                ib, ob = i_train, o_train
            loss, g = _mse_and_grad(params, ib, ob)
            if not (math.isfinite(loss) and np.all(np.isfinite(g))):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            total += loss
            params, st = adam_step(params, g, st, lr, bias_correction=True)
        history[epoch] = total / cfg.steps_per_epoch

    net = MlpDensityNet(params, r_mean, r_std, vr_mean, vr_std, B_shift)
    train_loss, _ = _mse_and_grad(params, i_train, o_train)
    r_val = np.asarray(r_val, dtype=float)
    rho_val = np.asarray(rho_val, dtype=float)
    o_val = (transform_density(rho_val, B_shift) - vr_mean) / vr_std
    val_loss, _ = _mse_and_grad(params, (r_val - r_mean) / r_std, o_val)
    if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
        raise TrainingError("non-finite final loss", epoch=cfg.epochs)
    rel = np.abs(density_forward(net, r_val) - rho_val) / rho_val
    log.info("trained net: train mse %.3e, val mse %.3e, %.1f%% of val < 1%%",
             train_loss, val_loss, 100 * np.mean(rel < 0.01))
    return TrainResult(net, train_loss, val_loss, rel, history)


@dataclass(frozen=True)
class OfflineConfig:
    """Trajectory-sampling settings for the offline data set."""

    n_trajectories: int = 1000
    t_final: float = 250.0
    record_dt: float = 0.5
    dt: float = 0.05
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.n_trajectories < 2:
            raise ValueError("need at least two trajectories for a train/validation split")
        if not (self.t_final > 0 and self.record_dt > 0 and self.dt > 0):
            raise ValueError("t_final, record_dt and dt must be positive")
        n_sub = self.record_dt / self.dt
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("record_dt must be an integer multiple of dt")


def generate_training_data(fit, entry_mean, entry_sigma, vehicle, cfg: OfflineConfig, rng):
    """Radii and densities along sampled entry trajectories under ``fit``.

    Initial states are drawn from ``N(entry_mean, diag(entry_sigma**2))``;
    all trajectories are integrated together and recorded every
    ``cfg.record_dt`` seconds. Returns ``(radii, rho)``, each shaped
    ``(n_trajectories, n_records)``.
    """
    x = entry_mean + entry_sigma * rng.standard_normal((cfg.n_trajectories, len(entry_mean)))
    n_rec = int(round(cfg.t_final / cfg.record_dt))
    n_sub = int(round(cfg.record_dt / cfg.dt))
    radii = np.empty((cfg.n_trajectories, n_rec + 1))
    radii[:, 0] = x[:, 0]
    for k in range(n_rec):
        x = propagate(x, cfg.record_dt, n_sub, fit.density, vehicle)
        radii[:, k + 1] = x[:, 0]
    return radii, fit.density(radii)


def offline_train(fit, entry_mean, entry_sigma, vehicle, cfg: OfflineConfig | None = None,
                  seed=None) -> TrainResult:
    """Generate trajectory data under the exponential fit and train a network.

    The validation set is a random 20% (``cfg.train.val_frac``) of whole
    trajectories, so no trajectory contributes to both splits.
    """
    cfg = cfg or OfflineConfig()
    seed = cfg.seed if seed is None else seed
    data_rng, split_rng = (np.random.default_rng(s)
                           for s in np.random.SeedSequence(seed).spawn(2))
    radii, rho = generate_training_data(fit, np.asarray(entry_mean, dtype=float),
                                        np.asarray(entry_sigma, dtype=float), vehicle, cfg,
                                        data_rng)
    order = split_rng.permutation(cfg.n_trajectories)
    n_val = max(1, int(round(cfg.train.val_frac * cfg.n_trajectories)))
    val, tr = order[:n_val], order[n_val:]
    return train_on_samples(radii[tr].ravel(), rho[tr].ravel(), radii[val].ravel(),
                            rho[val].ravel(), cfg.train, seed=seed)
