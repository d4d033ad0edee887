import json
import math

import numpy as np
import pytest

from entrynav.config import DEFAULTS, McConfig, load_config, mc_config_from_dict, resolve
from entrynav.errors import ConfigError
from entrynav.sensors import NoiseSpec


class TestDefaults:
    def test_defaults_match_dataclass(self):
        from_dict = mc_config_from_dict(resolve())
        ref = McConfig()
        for name in ("n_runs", "t_end", "sensor_hz", "seed", "filters", "cm_batch_size"):
            assert getattr(from_dict, name) == getattr(ref, name)
        np.testing.assert_allclose(from_dict.entry_mean, ref.entry_mean, rtol=1e-15)
        np.testing.assert_allclose(from_dict.entry_sigma, ref.entry_sigma, rtol=1e-15)
        np.testing.assert_allclose(from_dict.q_sigma, ref.q_sigma, rtol=1e-15)
        assert from_dict.noise == ref.noise == NoiseSpec()

    def test_epoch_count(self):
        cfg = McConfig()
        assert cfg.sensor_dt == 0.25 and cfg.n_epochs == 1400

    def test_process_noise_defaults(self):
        cfg = McConfig()
        assert 3 * cfg.q_sigma[3] == pytest.approx(0.3)
        assert 3 * cfg.q_sigma[4] == pytest.approx(math.radians(2e-3))
        assert 3 * cfg.q_sigma[6] == pytest.approx(1e-5)
        np.testing.assert_allclose(cfg.Q, np.diag(cfg.q_sigma**2))


class TestLoading:
    def test_degrees_are_converted(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"entry_mean": {"gamma_deg": -10.0},
                                 "vehicle": {"aoa_deg": -20.0}}))
        _, cfg = load_config(p)
        assert cfg.entry_mean[4] == pytest.approx(math.radians(-10.0))
        assert cfg.vehicle.alpha_att == pytest.approx(math.radians(-20.0))

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="mc.nruns"):
            resolve({"mc": {"nruns": 3}})
        with pytest.raises(ConfigError):
            resolve({"bogus": 1})

    def test_wrong_schema_rejected(self):
        with pytest.raises(ConfigError):
            resolve({"schema": 99})

    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            mc_config_from_dict(resolve({"mc": {"filters": ["kalman"]}}))
        with pytest.raises(ConfigError):
            mc_config_from_dict(resolve({"measurement_noise_3sigma": {"q_pct": -1.0}}))
        with pytest.raises(ConfigError):
            mc_config_from_dict(resolve({"atmosphere": {"test_seed_base": 5}}))

    def test_unreadable_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_defaults_not_mutated(self):
        before = json.dumps(DEFAULTS, sort_keys=True)
        resolve({"mc": {"n_runs": 7}})
        assert json.dumps(DEFAULTS, sort_keys=True) == before

    def test_replace_validates(self):
        with pytest.raises(ConfigError):
            McConfig().replace(n_runs=0)
