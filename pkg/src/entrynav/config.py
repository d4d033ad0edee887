"""Experiment configuration.

Defaults reproduce the MSL-like entry scenario: entry-state dispersions,
process and measurement noise, filter constants and the online-adaptation
settings. Configuration files are JSON; angles in them are in degrees and are
converted to radians on load. Unknown keys are rejected.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .atmos import PerturbationConfig
from .dynamics import N_STATE, STATE_NAMES, VehicleConfig
from .errors import ConfigError
from .filters.ut import UtConfig
from .filters.uskf_nn import EcrvConfig, MloConfig
from .net import OfflineConfig, TrainConfig
from .sensors import G0, NoiseSpec

SCHEMA_VERSION = 1
FILTER_NAMES = ("ukf_cm", "ukf_ac", "uskf_nn")

# config-file key for each state, with a flag for degree-valued entries
STATE_KEYS = (("r_m", False), ("phi_deg", True), ("theta_deg", True), ("v_ms", False),
              ("gamma_deg", True), ("psi_deg", True), ("B_m2kg", False), ("LoD", False))

DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "mc": {
        "n_runs": 100,
        "t_end": 350.0,
        "sensor_hz": 4.0,
        "dt_truth": 0.05,
        "filter_substeps": 5,
        "seed": 0,
        "workers": 1,
        "filters": list(FILTER_NAMES),
        "adapt_network": True,
    },
    "entry_mean": {"r_m": 3.5222e6, "phi_deg": -3.919, "theta_deg": 126.72, "v_ms": 6.0833e3,
                   "gamma_deg": -15.489, "psi_deg": 93.206, "B_m2kg": 7.1e-3, "LoD": 0.24},
    "entry_3sigma": {"r_m": 32.066, "phi_deg": 7.81e-4, "theta_deg": 3.67e-4, "v_ms": 2.6059e-2,
                     "gamma_deg": 4.0e-4, "psi_deg": 2.68e-4, "B_m2kg": 4.8e-3, "LoD": 0.15178},
    "process_noise_3sigma": {"r_m": 0.0, "phi_deg": 0.0, "theta_deg": 0.0, "v_ms": 0.3,
                             "gamma_deg": 2e-3, "psi_deg": 2e-4, "B_m2kg": 1e-5, "LoD": 3e-5},
    "measurement_noise_3sigma": {"accel_ug": 300.0, "q_pct": 1.0, "qdot_pct": 1.0},
    "vehicle": {"mu": 4.282837e13, "bank_deg": 0.0, "aoa_deg": -17.0, "nose_radius_m": 1.125},
    "ut": {"alpha": 1.0, "beta": 2.0, "kappa": None},
    "mlo": {"alpha_L": 0.01, "beta1": 0.1, "beta2": 0.9, "p_max": 1, "T": 1.0,
            "eps": 1e-8, "max_iter": 100},
    "ecrv": {"tau": 5.0, "P_ss": 1e-3, "P_c0": 1e-10},
    "ukf_ac": {"P_K0": 1e-10, "Q_K": 1e-7},
    "ukf_cm": {"batch_size": 10, "psd_projection": True},
    "atmosphere": {
        **{f.name: f.default for f in fields(PerturbationConfig)},
        "n_train_profiles": 20,
        "train_seed_base": 0,
        "test_seed_base": 1_000_000_000,
    },
    "training": {
        "n_trajectories": 1000,
        "t_final": 250.0,
        "record_dt": 0.5,
        "dt": 0.05,
        "seed": 0,
        **{f.name: f.default for f in fields(TrainConfig)},
    },
    "paths": {"atmos_dir": "atmos", "network": "network.json", "out_dir": "out"},
    "log_level": "INFO",
}


def _state_vector(d, name):
    out = np.empty(N_STATE)
    for i, (key, is_deg) in enumerate(STATE_KEYS):
        v = float(d[key])
        if not math.isfinite(v):
            raise ConfigError(f"{name}.{key} must be finite")
        out[i] = math.radians(v) if is_deg else v
    return out


def _state_dict(x):
    return {key: (math.degrees(v) if is_deg else float(v))
            for (key, is_deg), v in zip(STATE_KEYS, x)}


@dataclass(frozen=True, eq=False)
class McConfig:
    """Everything a Monte Carlo campaign needs, in SI units and radians."""

    n_runs: int = 100
    t_end: float = 350.0
    sensor_hz: float = 4.0
    dt_truth: float = 0.05
    filter_substeps: int = 5
    seed: int = 0
    workers: int = 1
    filters: tuple = FILTER_NAMES
    adapt: bool = True
    entry_mean: np.ndarray = None
    entry_sigma: np.ndarray = None
    q_sigma: np.ndarray = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    ut_alpha: float = 1.0
    ut_beta: float = 2.0
    ut_kappa: float | None = None
    mlo: MloConfig = field(default_factory=MloConfig)
    ecrv: EcrvConfig = field(default_factory=EcrvConfig)
    ac_P_K0: float = 1e-10
    ac_Q_K: float = 1e-7
    cm_batch_size: int = 10
    cm_psd_projection: bool = True
    atmosphere: PerturbationConfig = field(default_factory=PerturbationConfig)
    n_train_profiles: int = 20
    train_seed_base: int = 0
    test_seed_base: int = 1_000_000_000
    offline: OfflineConfig = field(default_factory=OfflineConfig)

    def __post_init__(self):
        d = DEFAULTS
        if self.entry_mean is None:
            object.__setattr__(self, "entry_mean", _state_vector(d["entry_mean"], "entry_mean"))
        if self.entry_sigma is None:
            object.__setattr__(self, "entry_sigma",
                               _state_vector(d["entry_3sigma"], "entry_3sigma") / 3.0)
        if self.q_sigma is None:
            object.__setattr__(self, "q_sigma",
                               _state_vector(d["process_noise_3sigma"], "process_noise") / 3.0)
        object.__setattr__(self, "filters", tuple(self.filters))
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1")
        if not self.sensor_hz > 0:
            raise ConfigError("sensor_hz must be positive")
        if not (self.t_end > 0 and self.dt_truth > 0 and self.filter_substeps >= 1):
            raise ConfigError("t_end, dt_truth and filter_substeps must be positive")
        n_sub = self.sensor_dt / self.dt_truth
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ConfigError("sensor period must be an integer multiple of dt_truth")
        unknown = set(self.filters) - set(FILTER_NAMES)
        if unknown:
            raise ConfigError(f"unknown filters: {sorted(unknown)}")
        if np.any(self.entry_sigma < 0) or np.any(self.q_sigma < 0):
            raise ConfigError("standard deviations must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def sensor_dt(self) -> float:
        return 1.0 / self.sensor_hz

    @property
    def n_epochs(self) -> int:
        return int(round(self.t_end * self.sensor_hz))

    @property
    def Q(self):
        return np.diag(self.q_sigma**2)

    @property
    def P0(self):
        return np.diag(self.entry_sigma**2)

    def ut(self, L: int) -> UtConfig:
        return UtConfig(L=L, alpha=self.ut_alpha, beta=self.ut_beta, kappa=self.ut_kappa)

    def replace(self, **kw) -> "McConfig":
        cur = {f.name: getattr(self, f.name) for f in fields(self)}
        cur.update(kw)
        return McConfig(**cur)


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def resolve(raw: dict | None = None) -> dict:
    """Merge a (partial) raw config over the defaults, rejecting unknown keys."""
    raw = raw or {}
    if raw.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {raw.get('schema')!r}")
    return _merge(DEFAULTS, raw)


def mc_config_from_dict(d: dict) -> McConfig:
    """Build an :class:`McConfig` from a fully resolved config dictionary."""
    try:
        mc = d["mc"]
        mn = d["measurement_noise_3sigma"]
        veh = d["vehicle"]
        atm = dict(d["atmosphere"])
        n_train = int(atm.pop("n_train_profiles"))
        train_base = int(atm.pop("train_seed_base"))
        test_base = int(atm.pop("test_seed_base"))
        tr = dict(d["training"])
        offline = OfflineConfig(
            n_trajectories=int(tr.pop("n_trajectories")), t_final=float(tr.pop("t_final")),
            record_dt=float(tr.pop("record_dt")), dt=float(tr.pop("dt")),
            seed=int(tr.pop("seed")), train=TrainConfig(**tr))
        if not (mn["accel_ug"] >= 0 and mn["q_pct"] >= 0 and mn["qdot_pct"] >= 0):
            raise ConfigError("measurement noise must be non-negative")
        if offline.n_trajectories < 2:
            raise ConfigError("training.n_trajectories must be >= 2")
        if n_train < 1:
            raise ConfigError("atmosphere.n_train_profiles must be >= 1")
        if train_base + n_train > test_base:
            raise ConfigError("training and testing atmosphere seed ranges overlap")
        return McConfig(
            n_runs=int(mc["n_runs"]), t_end=float(mc["t_end"]),
            sensor_hz=float(mc["sensor_hz"]), dt_truth=float(mc["dt_truth"]),
            filter_substeps=int(mc["filter_substeps"]), seed=int(mc["seed"]),
            workers=int(mc["workers"]), filters=tuple(mc["filters"]),
            adapt=bool(mc["adapt_network"]),
            entry_mean=_state_vector(d["entry_mean"], "entry_mean"),
            entry_sigma=_state_vector(d["entry_3sigma"], "entry_3sigma") / 3.0,
            q_sigma=_state_vector(d["process_noise_3sigma"], "process_noise_3sigma") / 3.0,
            noise=NoiseSpec(sigma_accel=mn["accel_ug"] * 1e-6 * G0 / 3.0,
                            frac_q=mn["q_pct"] / 100.0 / 3.0,
                            frac_qdot=mn["qdot_pct"] / 100.0 / 3.0),
            vehicle=VehicleConfig(mu=float(veh["mu"]), sigma=math.radians(veh["bank_deg"]),
                                  alpha_att=math.radians(veh["aoa_deg"]),
                                  Rn=float(veh["nose_radius_m"])),
            ut_alpha=float(d["ut"]["alpha"]), ut_beta=float(d["ut"]["beta"]),
            ut_kappa=None if d["ut"]["kappa"] is None else float(d["ut"]["kappa"]),
            mlo=MloConfig(**d["mlo"]), ecrv=EcrvConfig(**d["ecrv"]),
            ac_P_K0=float(d["ukf_ac"]["P_K0"]), ac_Q_K=float(d["ukf_ac"]["Q_K"]),
            cm_batch_size=int(d["ukf_cm"]["batch_size"]),
            cm_psd_projection=bool(d["ukf_cm"]["psd_projection"]),
            atmosphere=PerturbationConfig(**atm), n_train_profiles=n_train,
            train_seed_base=train_base, test_seed_base=test_base, offline=offline)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None) -> tuple[dict, McConfig]:
    """Read a JSON config (or the defaults) and return ``(resolved_dict, McConfig)``."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
    d = resolve(raw)
    return d, mc_config_from_dict(d)


def state_units():
    return dict(zip(STATE_NAMES, ("m", "rad", "rad", "m/s", "rad", "rad", "m^2/kg", "-")))
