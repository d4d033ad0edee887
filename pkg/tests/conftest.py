"""Shared fixtures: scenario constants and a quickly trained density network."""
import pytest

from entrynav.atmos import R_MARS, ExpModel
from entrynav.config import McConfig
from entrynav.dynamics import VehicleConfig
from entrynav.net import OfflineConfig, TrainConfig, offline_train


@pytest.fixture(scope="session")
def vcfg():
    return VehicleConfig()


@pytest.fixture(scope="session")
def mc_cfg():
    return McConfig()


@pytest.fixture(scope="session")
def entry_x0(mc_cfg):
    return mc_cfg.entry_mean.copy()


@pytest.fixture(scope="session")
def nominal_exp():
    return ExpModel(rho0=0.0158, r0=R_MARS, hs=9354.0)


@pytest.fixture(scope="session")
def small_training(mc_cfg, nominal_exp):
    """A network trained for a short schedule; accurate to a few percent."""
    cfg = OfflineConfig(n_trajectories=60, t_final=250.0,
                        train=TrainConfig(epochs=300, batch_size=256, steps_per_epoch=20))
    return offline_train(nominal_exp, mc_cfg.entry_mean, mc_cfg.entry_sigma, mc_cfg.vehicle,
                         cfg, seed=3)


@pytest.fixture(scope="session")
def small_net(small_training):
    return small_training.net

