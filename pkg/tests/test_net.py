import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entrynav.atmos import R_MARS
from entrynav.errors import TrainingError
from entrynav.net import (HIDDEN, N_PARAMS, AdamState, MlpDensityNet, OfflineConfig,
                          TrainConfig, adam_step, density_forward, density_gradient,
                          inverse_transform, offline_train, one_cycle_lr, train_on_samples,
                          transform_density)


def random_net(rng, scale=1.0):
    return MlpDensityNet(scale * rng.standard_normal(N_PARAMS) / 3.0, r_mean=R_MARS + 6e4,
                         r_std=3e4, varrho_mean=2.3 + rng.random(), varrho_std=0.3 + rng.random())


def constant_net(varrho_star, b_in=None):
    p = np.zeros(N_PARAMS)
    if b_in is not None:
        p[HIDDEN:2 * HIDDEN] = b_in
    return MlpDensityNet(p, R_MARS, 1e4, varrho_star, 1.0)


def fd_gradient(f, p, rel=1e-6):
    g = np.empty_like(p)
    for j in range(p.size):
        h = rel * max(1.0, abs(p[j]))
        e = np.zeros_like(p)
        e[j] = h
        g[j] = (f(p + e) - f(p - e)) / (2 * h)
    return g


class TestForward:
    def test_constant_network(self):
        net = constant_net(2.0)
        r = R_MARS + np.linspace(0, 1.3e5, 9)
        np.testing.assert_allclose(density_forward(net, r), 1e-4, rtol=1e-14)

    @pytest.mark.parametrize("rho", [1e-8, 1e-4, 1e-1])
    def test_transform_roundtrip(self, rho):
        assert inverse_transform(transform_density(rho)) == pytest.approx(rho, rel=1e-12)

    def test_transform_rejects_dense_air(self):
        with pytest.raises(ValueError):
            transform_density(2.0)

    def test_pipeline_by_hand(self):
        rng = np.random.default_rng(1)
        net = random_net(rng)
        r = R_MARS + 4.2e4
        i = (r - net.r_mean) / net.r_std
        a = np.tanh(net.W_in * i + net.b_in)
        vr = (a @ net.W_out + net.b_out) * net.varrho_std + net.varrho_mean
        assert density_forward(net, r) == pytest.approx(10 ** (-vr * vr), rel=1e-13)

    def test_normalization_roundtrip(self):
        net = random_net(np.random.default_rng(2))
        r = R_MARS + 1e4 * np.arange(10)
        i = (r - net.r_mean) / net.r_std
        np.testing.assert_allclose(i * net.r_std + net.r_mean, r, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-1e7, 1e7))
    def test_positive_for_finite_inputs(self, seed, dr):
        net = random_net(np.random.default_rng(seed))
        rho = density_forward(net, R_MARS + dr)
        assert np.isfinite(rho) and rho >= 0

    def test_shape_contract(self):
        net = random_net(np.random.default_rng(3))
        assert density_forward(net, np.ones((4, 3)) * R_MARS).shape == (4, 3)
        with pytest.raises(ValueError):
            MlpDensityNet(np.zeros(10), 0.0, 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            MlpDensityNet(np.zeros(N_PARAMS), 0.0, 0.0, 0.0, 1.0)


class TestGradient:
    def test_hand_chain_rule_on_output_weight(self):
        b_in = np.linspace(-1, 1, HIDDEN)
        net = constant_net(1.7, b_in=b_in)
        r = R_MARS + 1e4
        rho, g = density_gradient(net, r)
        # constant-zero network: o = 0 so varrho = varrho_mean
        j = 17
        want = rho * math.log(10) * (-2 * 1.7) * 1.0 * math.tanh(b_in[j])
        assert g[2 * HIDDEN + j] == pytest.approx(want, rel=1e-13)

    def test_zero_at_stationary_point(self):
        net = constant_net(0.0)
        _, g = density_gradient(net, R_MARS)
        assert g[-1] == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        net = random_net(rng)
        r = R_MARS + rng.uniform(0, 1.3e5)
        rho, g = density_gradient(net, r)
        assert rho == density_forward(net, r)
        fd = fd_gradient(lambda p: density_forward(net.with_params(p), r), net.params.copy())
        assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-6

    def test_batched_gradient(self):
        net = random_net(np.random.default_rng(5))
        r = R_MARS + np.array([1e4, 5e4, 9e4])
        rho, g = density_gradient(net, r)
        assert g.shape == (3, N_PARAMS)
        for k in range(3):
            np.testing.assert_allclose(g[k], density_gradient(net, r[k])[1], rtol=1e-14)


class TestAdam:
    def test_zero_gradient(self):
        st_ = AdamState(m=np.zeros(3), v=np.ones(3))
        p, _ = adam_step(np.arange(3.0), np.zeros(3), st_, 0.1)
        np.testing.assert_array_equal(p, np.arange(3.0))

    def test_scalar_oracle(self):
        st_ = AdamState(m=np.zeros(1), v=np.array([4.0]), beta1=0.1, beta2=0.9, eps=1e-8)
        p, new = adam_step(np.array([1.0]), np.array([2.0]), st_, 0.01)
        assert new.m[0] == pytest.approx(1.8, rel=1e-15)
        assert new.v[0] == pytest.approx(4.0, rel=1e-15)
        assert p[0] == 1 - 0.01 * 1.8 / (2 + 1e-8)
        assert p[0] == pytest.approx(0.991, abs=1e-10)
        # inputs untouched
        assert st_.m[0] == 0.0 and st_.v[0] == 4.0 and st_.step_count == 0

    def test_momentum_accumulates(self):
        st_ = AdamState(m=np.zeros(1), v=np.array([1.0]))
        p0 = np.array([0.0])
        p1, st1 = adam_step(p0, np.array([1.0]), st_, 0.01)
        p2, _ = adam_step(p1, np.array([1.0]), st1, 0.01)
        assert abs(p2[0] - p1[0]) >= abs(p1[0] - p0[0])

    @settings(max_examples=40, deadline=None)
    @given(g=st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-6), lr=st.floats(1e-4, 1.0))
    def test_degenerate_decay_is_normalized_step(self, g, lr):
        st_ = AdamState(m=np.zeros(1), v=np.zeros(1), beta1=0.0, beta2=0.0, eps=0.0)
        p, _ = adam_step(np.array([0.5]), np.array([g]), st_, lr)
        assert p[0] == pytest.approx(0.5 - lr * math.copysign(1.0, g), rel=1e-12)

    def test_bias_correction_option(self):
        st_ = AdamState(m=np.zeros(1), v=np.zeros(1), beta1=0.9, beta2=0.999, eps=0.0)
        p, _ = adam_step(np.array([0.0]), np.array([3.0]), st_, 0.1, bias_correction=True)
        assert p[0] == pytest.approx(-0.1)

    def test_invalid_state(self):
        with pytest.raises(ValueError):
            AdamState(beta1=1.0)
        with pytest.raises(ValueError):
            adam_step(np.zeros(2), np.zeros(3), AdamState(m=np.zeros(3), v=np.zeros(3)), 0.1)


class TestTraining:
    def test_lr_schedule_sweeps_range(self):
        cfg = TrainConfig(epochs=1000)
        lrs = np.array([one_cycle_lr(e, cfg) for e in range(1000)])
        assert lrs[0] == pytest.approx(1e-6)
        assert lrs.max() == pytest.approx(1e-2)
        assert lrs[-1] == pytest.approx(1e-6)
        assert np.argmax(lrs) == 100

    def test_constant_target(self):
        # an exponential with an enormous scale height is constant to 1e-5
        r = R_MARS + np.linspace(0, 1e4, 500)
        rho = 3.2e-4 * np.exp(-(r - R_MARS) / 1e9)
        cfg = TrainConfig(epochs=200, batch_size=64, steps_per_epoch=5)
        res = train_on_samples(r[::2], rho[::2], r[1::2], rho[1::2], cfg, seed=0)
        assert np.max(res.val_rel_err) < 1e-3
        out = density_forward(res.net, r)
        assert np.ptp(out) / out.mean() < 1e-3

    def test_identical_targets_do_not_divide_by_zero(self):
        r = R_MARS + np.linspace(0, 1e4, 40)
        rho = np.full_like(r, 3.2e-4)
        res = train_on_samples(r, rho, r, rho, TrainConfig(epochs=3, batch_size=8), seed=0)
        assert res.net.varrho_std == 1.0 and np.all(np.isfinite(res.val_rel_err))

    def test_deterministic(self):
        r = R_MARS + np.linspace(0, 1e5, 300)
        rho = 0.0158 * np.exp(-(r - R_MARS) / 9354.0)
        cfg = TrainConfig(epochs=20, batch_size=32, steps_per_epoch=2)
        a = train_on_samples(r[::2], rho[::2], r[1::2], rho[1::2], cfg, seed=5)
        b = train_on_samples(r[::2], rho[::2], r[1::2], rho[1::2], cfg, seed=5)
        assert a.net.params.tobytes() == b.net.params.tobytes()

    def test_normalization_from_training_split_only(self):
        r = R_MARS + np.linspace(0, 1e5, 200)
        rho = 0.0158 * np.exp(-(r - R_MARS) / 9354.0)
        cfg = TrainConfig(epochs=2, batch_size=16, steps_per_epoch=1)
        res = train_on_samples(r[:150], rho[:150], r[150:], rho[150:], cfg, seed=0)
        assert res.net.r_mean == pytest.approx(r[:150].mean())
        assert res.net.varrho_std == pytest.approx(transform_density(rho[:150]).std())

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_loss_reports_epoch(self):
        r = R_MARS + np.linspace(0, 1e5, 50)
        rho = 0.0158 * np.exp(-(r - R_MARS) / 9354.0)
        cfg = TrainConfig(epochs=5, lr_min=1e200, lr_max=1e300, batch_size=8)
        with pytest.raises(TrainingError) as info:
            train_on_samples(r, rho, r, rho, cfg, seed=0)
        assert info.value.epoch is not None

    def test_rejects_dense_targets(self):
        with pytest.raises(TrainingError):
            train_on_samples([1.0, 2.0], [2.0, 3.0], [1.0], [2.0], TrainConfig(epochs=1))

    def test_offline_train_small(self, small_training):
        assert small_training.val_rel_err.size > 0
        assert np.median(small_training.val_rel_err) < 0.02
        assert small_training.history[-1] < small_training.history[0]

    def test_offline_config_validation(self):
        with pytest.raises(ValueError):
            OfflineConfig(n_trajectories=1)
        with pytest.raises(ValueError):
            OfflineConfig(record_dt=0.07)


class TestPersistence:
    def test_json_roundtrip_is_byte_identical(self, tmp_path):
        net = random_net(np.random.default_rng(8))
        net.save(tmp_path / "a.json")
        MlpDensityNet.load(tmp_path / "a.json").save(tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        d = json.loads((tmp_path / "a.json").read_text())
        assert d["format"] == 1 and len(d["W_in"]) == HIDDEN and d["B_shift"] == 0.0

    def test_unknown_format_rejected(self):
        d = random_net(np.random.default_rng(9)).to_dict()
        d["format"] = 2
        with pytest.raises(ValueError):
            MlpDensityNet.from_dict(d)


def test_offline_train_deterministic(mc_cfg, nominal_exp):
    cfg = OfflineConfig(n_trajectories=10, t_final=20.0,
                        train=TrainConfig(epochs=5, batch_size=32, steps_per_epoch=2))
    a = offline_train(nominal_exp, mc_cfg.entry_mean, mc_cfg.entry_sigma, mc_cfg.vehicle, cfg, 4)
    b = offline_train(nominal_exp, mc_cfg.entry_mean, mc_cfg.entry_sigma, mc_cfg.vehicle, cfg, 4)
    assert a.net.params.tobytes() == b.net.params.tobytes()
