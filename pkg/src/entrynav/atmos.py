"""Martian atmospheric density models.

Three kinds of density source live here:

* :class:`ExpModel` -- isothermal exponential law, the onboard model;
* :class:`CosparModel` -- exponential with a sinusoidal correction;
* :class:`TabulatedProfile` -- a density table interpolated with a natural
  cubic spline, used as the "truth" atmosphere.

:func:`sample_truth_atmosphere` draws seeded truth profiles: a COSPAR baseline
with jittered coefficients times a smooth, altitude-correlated log-normal
perturbation whose relative spread grows from a few percent near the surface
to roughly 45 % at the top of the grid.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ExtrapolationError, FitError

#: Reference (surface) radius of Mars used as r0 throughout, m.
R_MARS = 3.3895e6
#: Centre values seeding the surrogate generator.
RHO0_NOMINAL = 0.0158
HS_NOMINAL = 9354.0


@dataclass(frozen=True)
class ExpModel:
    """rho = rho0 * exp(-(r - r0) / hs)."""

    rho0: float
    r0: float
    hs: float

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ValueError(f"rho0 must be positive, got {self.rho0}")
        if not self.hs > 0:
            raise ValueError(f"hs must be positive, got {self.hs}")

    def density(self, r):
        return exp_density(self, r)


@dataclass(frozen=True)
class CosparModel:
    """Modified exponential: exp{-beta (r-r0) + gamma cos[w (r-r0)] + delta sin[w (r-r0)]}."""

    rho0: float
    r0: float
    beta_rho: float
    gamma_rho: float = 0.0
    omega_rho: float = 0.0
    delta_rho: float = 0.0

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ValueError(f"rho0 must be positive, got {self.rho0}")
        if self.omega_rho < 0:
            raise ValueError(f"omega_rho must be non-negative, got {self.omega_rho}")

    def density(self, r):
        return cospar_density(self, r)


def exp_density(m: ExpModel, r):
    return m.rho0 * np.exp(-(np.asarray(r, dtype=float) - m.r0) / m.hs)


def cospar_density(m: CosparModel, r):
    dr = np.asarray(r, dtype=float) - m.r0
    phase = m.omega_rho * dr
    return m.rho0 * np.exp(
        -m.beta_rho * dr + m.gamma_rho * np.cos(phase) + m.delta_rho * np.sin(phase)
    )


@dataclass(frozen=True, eq=False)
class TabulatedProfile:
    """Density table on a strictly increasing radius grid.

    Evaluation uses a natural cubic spline through the knots. Queries outside
    ``[radii[0], radii[-1]]`` raise :class:`ExtrapolationError`.
    """

    radii: np.ndarray
    densities: np.ndarray
    _spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self):
        radii = np.array(self.radii, dtype=float)
        dens = np.array(self.densities, dtype=float)
        if radii.ndim != 1 or radii.shape != dens.shape:
            raise ValueError("radii and densities must be 1-D arrays of equal length")
        if radii.size < 2:
            raise ValueError("a profile needs at least two knots")
        if np.any(np.diff(radii) <= 0):
            raise ValueError("radii must be strictly increasing")
        if np.any(~(dens > 0)):
            raise ValueError("densities must be positive")
        radii.flags.writeable = False
        dens.flags.writeable = False
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "densities", dens)
        object.__setattr__(self, "_spline", CubicSpline(radii, dens, bc_type="natural"))

    @property
    def altitudes(self):
        return self.radii - R_MARS

    def density(self, r):
        return spline_density(self, r)

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["radius_m", "density_kgm3"])
            for r, rho in zip(self.radii, self.densities):
                w.writerow([repr(float(r)), repr(float(rho))])

    @classmethod
    def from_csv(cls, path):
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["radius_m", "density_kgm3"]:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [(float(a), float(b)) for a, b in reader]
        arr = np.array(rows, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])


def spline_density(p: TabulatedProfile, r):
    r_arr = np.asarray(r, dtype=float)
    lo, hi = p.radii[0], p.radii[-1]
    if np.any(r_arr < lo) or np.any(r_arr > hi) or np.any(np.isnan(r_arr)):
        raise ExtrapolationError(
            f"radius outside tabulated range [{lo:.1f}, {hi:.1f}] m"
        )
    out = np.asarray(p._spline(r_arr))
    # snap exact knot hits to the table so the interpolation condition holds bitwise
    idx = np.clip(np.searchsorted(p.radii, r_arr), 0, len(p.radii) - 1)
    hit = p.radii[idx] == r_arr
    if np.any(hit):
        out = np.where(hit, p.densities[idx], out)
    return float(out) if out.ndim == 0 else out


def fit_exponential(profiles: Sequence[TabulatedProfile], r0: float = R_MARS) -> ExpModel:
    """Least-squares fit of ln(rho) against (r - r0), pooled over all profiles."""
    if len(profiles) == 0:
        raise FitError("need at least one profile")
    xs, ys = [], []
    for p in profiles:
        if len(p.radii) < 2:
            raise FitError("each profile needs at least two knots")
        xs.append(np.asarray(p.radii, dtype=float) - r0)
        ys.append(np.log(np.asarray(p.densities, dtype=float)))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    if np.ptp(x) == 0:
        raise FitError("all radii are equal; scale height is unidentifiable")
    # center x for conditioning, then shift the intercept back to r0
    xm = x.mean()
    xc = x - xm
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * xm)
    if not slope < 0:
        raise FitError(f"fitted log-density slope is non-negative ({slope:g})")
    return ExpModel(rho0=math.exp(intercept), r0=r0, hs=-1.0 / slope)


@dataclass(frozen=True)
class PerturbationConfig:
    """Settings for the surrogate truth-atmosphere generator.

    ``frac_low``/``frac_high`` are the relative 1-sigma density perturbations at
    the datum (zero altitude) and at the top of the grid; the log-space spread
    is interpolated linearly in altitude between them, held at ``frac_low``
    below the datum, and scaled by ``amplitude``. The grid starts below the
    datum so that strongly dispersed trajectories stay inside the table.
    """

    h_min: float = -30.0e3
    h_max: float = 140.0e3
    dh: float = 500.0
    r_surface: float = R_MARS
    rho0: float = RHO0_NOMINAL
    hs: float = HS_NOMINAL
    rho0_frac_std: float = 0.03
    hs_frac_std: float = 0.01
    gamma_std: float = 0.03
    delta_std: float = 0.03
    wavelength_min: float = 25.0e3
    wavelength_max: float = 60.0e3
    frac_low: float = 0.02
    frac_high: float = 0.45
    amplitude: float = 1.0
    corr_length: float = 8.0e3

    def __post_init__(self):
        for name in ("frac_low", "frac_high"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if not (self.dh > 0 and self.h_max > max(self.h_min, 0.0)):
            raise ValueError("invalid altitude grid")
        if not (0 < self.wavelength_min <= self.wavelength_max):
            raise ValueError("invalid wavelength range")
        if self.corr_length <= 0:
            raise ValueError("corr_length must be positive")

    def altitude_grid(self):
        n = int(round((self.h_max - self.h_min) / self.dh)) + 1
        return self.h_min + self.dh * np.arange(n)

    def log_sigma(self, h):
        """Log-space standard deviation of the perturbation at altitude ``h``."""
        u = np.clip(np.asarray(h, dtype=float) / self.h_max, 0.0, 1.0)
        frac = self.frac_low + (self.frac_high - self.frac_low) * u
        return np.sqrt(np.log1p(frac**2))


@functools.lru_cache(maxsize=8)
def _correlation_factor(h_min, h_max, dh, corr_length):
    n = int(round((h_max - h_min) / dh)) + 1
    h = h_min + dh * np.arange(n)
    d = h[:, None] - h[None, :]
    corr = np.exp(-0.5 * (d / corr_length) ** 2)
    lam, vec = np.linalg.eigh(corr)
    factor = vec * np.sqrt(np.clip(lam, 0.0, None))
    factor.flags.writeable = False
    return factor


def _draw_baseline(rng, cfg: PerturbationConfig) -> CosparModel:
    rho0 = cfg.rho0 * math.exp(cfg.rho0_frac_std * rng.standard_normal())
    hs = cfg.hs * (1.0 + cfg.hs_frac_std * rng.standard_normal())
    gamma = cfg.gamma_std * rng.standard_normal()
    delta = cfg.delta_std * rng.standard_normal()
    wavelength = rng.uniform(cfg.wavelength_min, cfg.wavelength_max)
    return CosparModel(
        rho0=rho0,
        r0=cfg.r_surface,
        beta_rho=1.0 / hs,
        gamma_rho=gamma,
        omega_rho=2.0 * math.pi / wavelength,
        delta_rho=delta,
    )


def truth_baseline(seed: int, cfg: PerturbationConfig | None = None) -> CosparModel:
    """The COSPAR baseline underlying ``sample_truth_atmosphere(seed, cfg)``."""
    cfg = cfg or PerturbationConfig()
    return _draw_baseline(np.random.default_rng(seed), cfg)


def log_perturbation(seed: int, cfg: PerturbationConfig | None = None):
    """Log-density perturbation field on the generator grid for ``seed``."""
    cfg = cfg or PerturbationConfig()
    rng = np.random.default_rng(seed)
    _draw_baseline(rng, cfg)  # advance the stream exactly as the generator does
    factor = _correlation_factor(cfg.h_min, cfg.h_max, cfg.dh, cfg.corr_length)
    z = factor @ rng.standard_normal(factor.shape[1])
    h = cfg.altitude_grid()
    return cfg.amplitude * cfg.log_sigma(h) * z


def sample_truth_atmosphere(seed: int, cfg: PerturbationConfig | None = None) -> TabulatedProfile:
    """Seeded surrogate truth atmosphere on a uniform altitude grid."""
    cfg = cfg or PerturbationConfig()
    base = truth_baseline(seed, cfg)
    h = cfg.altitude_grid()
    radii = cfg.r_surface + h
    dens = base.density(radii) * np.exp(log_perturbation(seed, cfg))
    return TabulatedProfile(radii, dens)
