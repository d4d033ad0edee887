"""Onboard sensor models: IMU specific force, dynamic pressure, heat rate.

Measurements are packed as a length-5 vector ``[ax, ay, az, q, qdot]``
(body-frame specific force in m/s^2, dynamic pressure in Pa, convective
heating rate in W/m^2). Functions accept batches along leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import V, VehicleConfig, _as_state_array, accel_drag_lift

#: Sutton-Graves constant for Mars, kg^0.5 / m.
K_SUTTON_GRAVES = 1.9027e-4
G0 = 9.80665
N_MEAS = 5
AX, AY, AZ, Q_DYN, QDOT = range(N_MEAS)

_R_FLOOR = 1e-20


@dataclass(frozen=True)
class Measurement:
    a_body: np.ndarray
    q_dyn: float
    qdot_s: float

    def as_array(self):
        return np.concatenate([np.asarray(self.a_body, dtype=float),
                               [self.q_dyn, self.qdot_s]])

    @classmethod
    def from_array(cls, y):
        y = np.asarray(y, dtype=float)
        return cls(a_body=y[:3].copy(), q_dyn=float(y[3]), qdot_s=float(y[4]))


@dataclass(frozen=True)
class NoiseSpec:
    """1-sigma sensor noise. Defaults are the 3-sigma sensor ratings divided by 3."""

    sigma_accel: float = 300e-6 * G0 / 3.0
    frac_q: float = 0.01 / 3.0
    frac_qdot: float = 0.01 / 3.0

    def __post_init__(self):
        if min(self.sigma_accel, self.frac_q, self.frac_qdot) < 0:
            raise ValueError("noise levels must be non-negative")


def velocity_to_body(alpha_att: float):
    """Rotation from the velocity frame to the body frame (pitch by alpha_att about y)."""
    ca, sa = math.cos(alpha_att), math.sin(alpha_att)
    return np.array([[ca, 0.0, -sa],
                     [0.0, 1.0, 0.0],
                     [sa, 0.0, ca]])


def measure_ideal_array(x, rho, cfg: VehicleConfig):
    """Noiseless measurement vector(s) for state array(s) ``x``; shape ``(..., 5)``."""
    x = _as_state_array(x)
    rho = np.asarray(rho, dtype=float)
    drag, lift = accel_drag_lift(x, rho)
    a_v = np.stack([-drag,
                    lift * math.sin(cfg.sigma),
                    lift * math.cos(cfg.sigma)], axis=-1)
    a_b = a_v @ velocity_to_body(cfg.alpha_att).T
    v = x[..., V]
    q = 0.5 * rho * v * v
    qdot = K_SUTTON_GRAVES * np.sqrt(rho / cfg.Rn) * v**3
    return np.concatenate([a_b, q[..., None], qdot[..., None]], axis=-1)


def measure_ideal(s, rho: float, cfg: VehicleConfig) -> Measurement:
    return Measurement.from_array(measure_ideal_array(s, rho, cfg))


def noise_std(y_pred, noise: NoiseSpec):
    """Per-channel 1-sigma for a predicted measurement vector."""
    y_pred = np.asarray(y_pred, dtype=float)
    sd = np.empty_like(y_pred)
    sd[..., :3] = noise.sigma_accel
    sd[..., Q_DYN] = noise.frac_q * np.abs(y_pred[..., Q_DYN])
    sd[..., QDOT] = noise.frac_qdot * np.abs(y_pred[..., QDOT])
    return sd


def measure_noisy_array(x, rho, cfg: VehicleConfig, noise: NoiseSpec, rng):
    y = measure_ideal_array(x, rho, cfg)
    return y + noise_std(y, noise) * rng.standard_normal(y.shape)


def measure_noisy(s, rho: float, cfg: VehicleConfig, noise: NoiseSpec, rng) -> Measurement:
    return Measurement.from_array(measure_noisy_array(s, rho, cfg, noise, rng))


def build_R(meas, noise: NoiseSpec):
    """Diagonal measurement covariance scaled by the *predicted* reading."""
    y = meas.as_array() if isinstance(meas, Measurement) else np.asarray(meas, dtype=float)
    return np.diag(np.maximum(noise_std(y, noise) ** 2, _R_FLOOR))
