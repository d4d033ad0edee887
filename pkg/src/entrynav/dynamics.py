"""Point-mass (3-DOF) entry dynamics over a non-rotating Mars.

States are carried as float arrays whose last axis holds the eight components
``[r, phi, theta, v, gamma, psi, B, LoD]`` so that a whole batch of sigma
points or Monte Carlo samples propagates in one call. :class:`EntryState` is
the named, scalar view of the same vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SingularityError

MU_MARS = 4.282837e13

STATE_NAMES = ("r", "phi", "theta", "v", "gamma", "psi", "B", "LoD")
N_STATE = len(STATE_NAMES)
R, PHI, THETA, V, GAMMA, PSI, B, LOD = range(N_STATE)
ANGLE_STATES = (PHI, THETA, GAMMA, PSI)

_COS_GUARD = 1e-9


@dataclass(frozen=True)
class EntryState:
    r: float
    phi: float
    theta: float
    v: float
    gamma: float
    psi: float
    B: float
    LoD: float

    def as_array(self):
        return np.array([self.r, self.phi, self.theta, self.v, self.gamma,
                         self.psi, self.B, self.LoD], dtype=float)

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (N_STATE,):
            raise ValueError(f"expected shape ({N_STATE},), got {x.shape}")
        return cls(*map(float, x))


@dataclass(frozen=True)
class VehicleConfig:
    """Constant vehicle/attitude parameters (MSL-like defaults)."""

    mu: float = MU_MARS
    sigma: float = 0.0
    alpha_att: float = math.radians(-17.0)
    Rn: float = 1.125

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.Rn > 0:
            raise ValueError("Rn must be positive")


def _as_state_array(s):
    if isinstance(s, EntryState):
        return s.as_array()
    return np.asarray(s, dtype=float)


def accel_drag_lift(s, rho):
    """Drag and lift accelerations, m/s^2. ``s`` is an EntryState or state array."""
    x = _as_state_array(s)
    drag = 0.5 * rho * x[..., V] ** 2 * x[..., B]
    return drag, drag * x[..., LOD]


def state_derivative(s, rho, cfg: VehicleConfig):
    """Time derivative of the state; returns an array shaped like ``s``."""
    x = _as_state_array(s)
    r, phi, v = x[..., R], x[..., PHI], x[..., V]
    gam, psi = x[..., GAMMA], x[..., PSI]
    cg, sg = np.cos(gam), np.sin(gam)
    cphi = np.cos(phi)
    if np.any(np.abs(cg) < _COS_GUARD) or np.any(np.abs(cphi) < _COS_GUARD):
        raise SingularityError("cos(gamma) or cos(phi) is numerically zero")
    cpsi, spsi = np.cos(psi), np.sin(psi)
    drag, lift = accel_drag_lift(x, rho)
    g = cfg.mu / r**2
    v2r = v * v / r

    dx = np.zeros_like(x)
    dx[..., R] = v * sg
    dx[..., PHI] = v * cg * cpsi / r
    dx[..., THETA] = v * cg * spsi / (r * cphi)
    dx[..., V] = -drag - g * sg
    dx[..., GAMMA] = (lift * math.cos(cfg.sigma) - g * cg + v2r * cg) / v
    dx[..., PSI] = (lift * math.sin(cfg.sigma) / cg + v2r * cg * spsi * np.tan(phi)) / v
    # B and L/D are random walks: no deterministic drift
    return dx


def rk4_step(s, dt: float, density: Callable, cfg: VehicleConfig):
    """One classical RK4 step; ``density(r)`` is re-evaluated at every stage."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = _as_state_array(s)

    def f(y):
        return state_derivative(y, density(y[..., R]), cfg)

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate(x, duration: float, n_sub: int, density: Callable, cfg: VehicleConfig):
    """Advance ``x`` by ``duration`` seconds using ``n_sub`` equal RK4 substeps."""
    h = duration / n_sub
    for _ in range(n_sub):
        x = rk4_step(x, h, density, cfg)
    return x


@dataclass(frozen=True)
class Trajectory:
    """Time history sampled at the sensor epochs (index 0 is the initial state)."""

    t: np.ndarray
    x: np.ndarray
    rho: np.ndarray

    def state(self, k) -> EntryState:
        return EntryState.from_array(self.x[k])

    def to_csv(self, path):
        header = "t_s,r_m,phi_rad,theta_rad,v_ms,gamma_rad,psi_rad,B_m2kg,LoD,rho_true"
        data = np.column_stack([self.t, self.x, self.rho])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def propagate_truth(s0, profile, cfg: VehicleConfig, dt: float, t_end: float,
                    q_std=None, seed=None, sensor_dt: float = 0.25) -> Trajectory:
    """Integrate the truth trajectory with additive process noise.

    Noise with per-state 1-sigma ``q_std`` (length 8) is added once per sensor
    interval, after the deterministic RK4 substeps. ``profile`` is anything
    with a ``density(r)`` method, or a bare callable.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    n_sub = int(round(sensor_dt / dt))
    if n_sub < 1 or not math.isclose(n_sub * dt, sensor_dt, rel_tol=1e-9):
        raise ValueError("sensor_dt must be an integer multiple of dt")
    n_epochs = int(round(t_end / sensor_dt))
    density = profile.density if hasattr(profile, "density") else profile
    q_std = np.zeros(N_STATE) if q_std is None else np.asarray(q_std, dtype=float)
    rng = np.random.default_rng(seed)

    xs = np.empty((n_epochs + 1, N_STATE))
    xs[0] = _as_state_array(s0)
    x = xs[0].copy()
    for k in range(1, n_epochs + 1):
        x = propagate(x, sensor_dt, n_sub, density, cfg)
        # draw every step so the stream layout does not depend on q_std values
        x = x + q_std * rng.standard_normal(N_STATE)
        xs[k] = x
    t = sensor_dt * np.arange(n_epochs + 1)
    rho = np.asarray(density(xs[:, R]), dtype=float)
    return Trajectory(t=t, x=xs, rho=rho)
