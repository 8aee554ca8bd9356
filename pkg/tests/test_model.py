"""Tests for configuration, channel statistics, and closed-form link math."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relaynet.model import (
    ChannelRealization,
    ConfigError,
    SystemConfig,
    TransceiverDesign,
    config_from_dict,
    db_to_linear,
    design_is_feasible,
    downlink_channel,
    excluded_covariance,
    fill_mmse_receivers,
    generate_channels,
    load_config,
    mse_oneway,
    mse_twoway,
    naf_design,
    received_covariance,
    relay_power,
    uplink_channel,
)


def _cfg(**overrides):
    base = dict(k_pairs=2, n_s=(2, 2), n_r=3, n_d=(2, 2), n_b=(1, 1),
                p_s=(4.0, 4.0), p_r=10.0, sigma2_r=1.0, sigma2_d=1.0)
    base.update(overrides)
    return SystemConfig(**base)


def _manual_channels(h_list, g_list, seed=0):
    return ChannelRealization(h=tuple(np.asarray(h, dtype=complex) for h in h_list),
                              g=tuple(np.asarray(g, dtype=complex) for g in g_list),
                              seed=seed)


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


class TestSystemConfig:
    def test_valid_config_accepted(self):
        cfg = _cfg()
        assert cfg.node_count == 2
        assert cfg.node_streams(1) == 1

    def test_stream_count_bounds(self):
        with pytest.raises(ConfigError):
            _cfg(n_b=(3, 1))  # exceeds n_s
        with pytest.raises(ConfigError):
            _cfg(n_b=(0, 1))

    def test_relay_antenna_floor(self):
        with pytest.raises(ConfigError):
            _cfg(n_b=(2, 2), n_r=3)

    def test_two_way_relay_floor_doubles(self):
        # 2 pairs x 1 stream each = 2 one-way, 4 two-way
        _cfg(n_r=3)
        with pytest.raises(ConfigError):
            _cfg(n_r=3, mode="twoway")
        _cfg(n_r=4, mode="twoway")

    def test_positive_powers_required(self):
        with pytest.raises(ConfigError):
            _cfg(p_r=0.0)
        with pytest.raises(ConfigError):
            _cfg(sigma2_r=-1.0)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            _cfg(mode="relay-race")

    def test_list_length_mismatch(self):
        with pytest.raises(ConfigError):
            _cfg(n_s=(2,))

    def test_power_override_helper(self):
        cfg = _cfg().with_source_power_db(10.0)
        assert cfg.p_s == (10.0, 10.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=1, max_value=6))
    def test_partner_is_an_involution(self, k):
        cfg = SystemConfig(k_pairs=k, n_s=(1,) * k, n_r=2 * k, n_d=(1,) * k,
                           n_b=(1,) * k, p_s=(1.0,) * k, p_r=1.0, mode="twoway")
        for node in range(2 * k):
            assert cfg.partner(cfg.partner(node)) == node
        for pair in range(k):
            assert cfg.partner(pair) == k + pair


class TestConfigParsing:
    def test_dict_round_trip(self):
        cfg = config_from_dict({
            "K": "2", "n_s": "2,3", "n_r": "4", "n_d": "2", "n_b": "1",
            "p_s_db": "10", "p_r_db": "13", "sigma2_r": "0.5", "mode": "twoway",
        })
        assert cfg.n_s == (2, 3)
        assert cfg.n_d == (2, 2)
        assert cfg.p_s == pytest.approx((10.0, 10.0))
        assert cfg.p_r == pytest.approx(db_to_linear(13.0))
        assert cfg.sigma2_r == 0.5
        assert cfg.sigma2_d == 1.0
        assert cfg.mode == "twoway"

    def test_missing_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({"K": "1"})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_dict({
                "K": "1", "n_s": "1", "n_r": "1", "n_d": "1", "n_b": "1",
                "p_s_db": "0", "p_r_db": "0", "bogus": "1",
            })

    def test_file_parse(self, tmp_path):
        path = tmp_path / "net.cfg"
        path.write_text(
            "# two-pair test network\n"
            "K = 2\n"
            "n_s = 2\n"
            "n_r = 3\n"
            "n_d = 2\n"
            "n_b = 1\n"
            "p_s_db = 0, 10\n"
            "p_r_db = 20\n"
            "\n"
            "mode = oneway\n")
        cfg = load_config(path)
        assert cfg.k_pairs == 2
        assert cfg.p_s == pytest.approx((1.0, 10.0))
        assert cfg.p_r == pytest.approx(100.0)

    def test_file_parse_error_includes_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("K = 1\nnot a config line\n")
        with pytest.raises(ConfigError, match="2"):
            load_config(path)


class TestGenerateChannels:
    def test_deterministic_given_seed(self):
        cfg = _cfg()
        a = generate_channels(cfg, 1234)
        b = generate_channels(cfg, 1234)
        for x, y in zip(a.h + a.g, b.h + b.g):
            assert np.array_equal(x, y)

    def test_seed_changes_draw(self):
        cfg = _cfg()
        a = generate_channels(cfg, 1)
        b = generate_channels(cfg, 2)
        assert not np.allclose(a.h[0], b.h[0])

    def test_shapes(self):
        cfg = _cfg(n_s=(2, 3), n_d=(4, 2), n_b=(1, 1))
        ch = generate_channels(cfg, 9)
        assert ch.h[0].shape == (3, 2)
        assert ch.h[1].shape == (3, 3)
        assert ch.g[0].shape == (4, 3)
        assert ch.g[1].shape == (2, 3)

    def test_entry_statistics(self):
        cfg = SystemConfig(k_pairs=1, n_s=(3,), n_r=2, n_d=(2,), n_b=(1,),
                           p_s=(1.0,), p_r=1.0)
        draws_h = np.empty((100_000, 2, 3), dtype=complex)
        draws_g = np.empty((100_000, 2, 2), dtype=complex)
        for i in range(100_000):
            ch = generate_channels(cfg, i)
            draws_h[i] = ch.h[0]
            draws_g[i] = ch.g[0]
        # variance 1/n_s for h, 1/n_r for g
        mh = float(np.mean(np.abs(draws_h) ** 2))
        mg = float(np.mean(np.abs(draws_g) ** 2))
        assert abs(mh - 1 / 3) < 0.02 * (1 / 3)
        assert abs(mg - 1 / 2) < 0.02 * (1 / 2)
        # zero mean within 3 standard errors, per real component
        n = draws_h.size
        se = math.sqrt((1 / 6) / n)   # each real part has variance 1/(2*3)
        assert abs(float(np.mean(draws_h.real))) < 3 * se
        assert abs(float(np.mean(draws_h.imag))) < 3 * se


class TestCovariances:
    def test_identity_case(self):
        cfg = SystemConfig(k_pairs=1, n_s=(2,), n_r=2, n_d=(2,), n_b=(2,),
                           p_s=(4.0,), p_r=1.0)
        ch = _manual_channels([np.eye(2)], [np.eye(2)])
        psi = received_covariance(cfg, ch, (np.eye(2, dtype=complex),))
        np.testing.assert_allclose(psi, 2 * np.eye(2), atol=1e-14)

    def test_zero_precoders_leave_noise_floor(self):
        cfg = _cfg(sigma2_r=0.3)
        ch = generate_channels(cfg, 5)
        bs = tuple(np.zeros((2, 1), dtype=complex) for _ in range(2))
        psi = received_covariance(cfg, ch, bs)
        np.testing.assert_allclose(psi, 0.3 * np.eye(3), atol=1e-14)

    def test_minimum_eigenvalue_at_noise_floor(self):
        rng = np.random.default_rng(0)
        cfg = _cfg(sigma2_r=0.7)
        ch = generate_channels(cfg, 11)
        bs = tuple(_crandn(rng, 2, 1) for _ in range(2))
        psi = received_covariance(cfg, ch, bs)
        assert np.linalg.eigvalsh(psi).min() >= 0.7 - 1e-10

    def test_excluded_covariance_identities(self):
        rng = np.random.default_rng(1)
        cfg = _cfg()
        ch = generate_channels(cfg, 21)
        bs = tuple(_crandn(rng, 2, 1) for _ in range(2))
        psi = received_covariance(cfg, ch, bs)
        for k in range(2):
            bar = excluded_covariance(cfg, ch, bs, k)
            hb = ch.h[k] @ bs[k]
            np.testing.assert_allclose(bar + hb @ hb.conj().T, psi, atol=1e-12)
            # direct sum over the other users
            other = cfg.sigma2_r * np.eye(3, dtype=complex)
            for j in range(2):
                if j != k:
                    hj = ch.h[j] @ bs[j]
                    other = other + hj @ hj.conj().T
            np.testing.assert_allclose(bar, other, atol=1e-12)

    def test_wrong_precoder_count_rejected(self):
        cfg = _cfg()
        ch = generate_channels(cfg, 3)
        with pytest.raises(ValueError):
            received_covariance(cfg, ch, (np.zeros((2, 1), dtype=complex),))


class TestRelayPower:
    def test_identity_values(self):
        assert relay_power(np.eye(3, dtype=complex), 2 * np.eye(3)) == pytest.approx(6.0)
        assert relay_power(np.zeros((3, 3), dtype=complex), 2 * np.eye(3)) == 0.0

    def test_monte_carlo_oracle(self):
        rng = np.random.default_rng(7)
        cfg = _cfg()
        ch = generate_channels(cfg, 17)
        bs = tuple(_crandn(rng, 2, 1) for _ in range(2))
        f = _crandn(rng, 3, 3)
        psi = received_covariance(cfg, ch, bs)
        analytic = relay_power(f, psi)

        n_draws = 100_000
        stacked = np.hstack([ch.h[k] @ bs[k] for k in range(2)])  # n_r x total_nb
        sym = _crandn(rng, stacked.shape[1], n_draws)
        noise = math.sqrt(cfg.sigma2_r) * _crandn(rng, 3, n_draws)
        y = f @ (stacked @ sym + noise)
        estimate = float(np.mean(np.sum(np.abs(y) ** 2, axis=0)))
        assert abs(estimate - analytic) < 0.02 * analytic


class TestMseOneWay:
    def _scalar_setup(self, w_val):
        cfg = SystemConfig(k_pairs=1, n_s=(1,), n_r=1, n_d=(1,), n_b=(1,),
                           p_s=(1.0,), p_r=1.0)
        ch = _manual_channels([[[1.0]]], [[[1.0]]])
        design = TransceiverDesign(
            b=(np.array([[1.0 + 0j]]),),
            f=np.array([[1.0 + 0j]]),
            w=(np.array([[w_val + 0j]]),))
        return cfg, ch, design

    def test_all_unit_scalar_case(self):
        cfg, ch, design = self._scalar_setup(1.0 / 3.0)
        e, _ = mse_oneway(cfg, ch, design, 0)
        assert e == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_zero_receiver_floor(self):
        rng = np.random.default_rng(2)
        cfg = _cfg()
        ch = generate_channels(cfg, 8)
        design = TransceiverDesign(
            b=tuple(_crandn(rng, 2, 1) for _ in range(2)),
            f=_crandn(rng, 3, 3),
            w=tuple(np.zeros((2, 1), dtype=complex) for _ in range(2)))
        for k in range(2):
            e, _ = mse_oneway(cfg, ch, design, k)
            assert e == pytest.approx(1.0, abs=1e-12)

    def test_monte_carlo_oracle(self):
        rng = np.random.default_rng(13)
        cfg = _cfg()
        ch = generate_channels(cfg, 29)
        bs = tuple(_crandn(rng, 2, 1) for _ in range(2))
        f = 0.6 * _crandn(rng, 3, 3)
        ws = fill_mmse_receivers(cfg, ch, bs, f)
        design = TransceiverDesign(b=bs, f=f, w=ws)
        analytic, _ = mse_oneway(cfg, ch, design, 0)

        n_draws = 200_000
        sym = _crandn(rng, 2, n_draws)          # one stream per user
        relay_noise = _crandn(rng, 3, n_draws)
        dest_noise = _crandn(rng, 2, n_draws)
        relay_in = ch.h[0] @ bs[0] @ sym[0:1] + ch.h[1] @ bs[1] @ sym[1:2] + relay_noise
        y = ch.g[0] @ (f @ relay_in) + dest_noise
        err = ws[0].conj().T @ y - sym[0:1]
        estimate = float(np.mean(np.sum(np.abs(err) ** 2, axis=0)))
        assert abs(estimate - analytic) < 0.02 * analytic

    def test_mmse_receiver_never_worse_than_zero_receiver(self):
        rng = np.random.default_rng(14)
        for trial in range(10):
            cfg = _cfg()
            ch = generate_channels(cfg, 100 + trial)
            bs = tuple(_crandn(rng, 2, 1) for _ in range(2))
            f = _crandn(rng, 3, 3)
            ws = fill_mmse_receivers(cfg, ch, bs, f)
            design = TransceiverDesign(b=bs, f=f, w=ws)
            for k in range(2):
                e, _ = mse_oneway(cfg, ch, design, k)
                assert 0.0 <= e <= 1.0 + 1e-12   # n_b = 1

    def test_dimension_mismatch_rejected(self):
        cfg = _cfg()
        ch = generate_channels(cfg, 4)
        bad = TransceiverDesign(
            b=(np.zeros((3, 1), dtype=complex), np.zeros((2, 1), dtype=complex)),
            f=np.zeros((3, 3), dtype=complex),
            w=(np.zeros((2, 1), dtype=complex),) * 2)
        with pytest.raises(ValueError):
            mse_oneway(cfg, ch, bad, 0)

    def test_mode_guard(self):
        cfg = _cfg(n_r=4, mode="twoway")
        ch = generate_channels(cfg, 4)
        design = naf_design(_cfg(n_b=(2, 2), n_r=4), generate_channels(_cfg(n_b=(2, 2), n_r=4), 4))
        with pytest.raises(ValueError):
            mse_oneway(cfg, ch, design, 0)


class TestMseTwoWay:
    def _two_way_cfg(self):
        return SystemConfig(k_pairs=1, n_s=(2,), n_r=2, n_d=(2,), n_b=(1,),
                            p_s=(4.0,), p_r=5.0, mode="twoway")

    def test_zero_receivers_floor(self):
        rng = np.random.default_rng(3)
        cfg = self._two_way_cfg()
        ch = generate_channels(cfg, 31)
        design = TransceiverDesign(
            b=(_crandn(rng, 2, 1), _crandn(rng, 2, 1)),
            f=_crandn(rng, 2, 2),
            w=(np.zeros((2, 1), dtype=complex),) * 2)
        for node in range(2):
            assert mse_twoway(cfg, ch, design, node) == pytest.approx(1.0, abs=1e-12)

    def test_silent_far_end_reduces_to_one_way(self):
        """With node K+0 silent, its estimate of s_0 is the one-way chain."""
        rng = np.random.default_rng(4)
        two = self._two_way_cfg()
        one = SystemConfig(k_pairs=1, n_s=(2,), n_r=2, n_d=(2,), n_b=(1,),
                           p_s=(4.0,), p_r=5.0)
        ch = generate_channels(two, 41)
        b0 = _crandn(rng, 2, 1)
        f = _crandn(rng, 2, 2)
        w1 = _crandn(rng, 2, 1)
        two_design = TransceiverDesign(
            b=(b0, np.zeros((2, 1), dtype=complex)), f=f,
            w=(np.zeros((2, 1), dtype=complex), w1))
        one_design = TransceiverDesign(b=(b0,), f=f, w=(w1,))
        e_two = mse_twoway(two, ch, two_design, 1)
        e_one, _ = mse_oneway(one, ch, one_design, 0)
        assert abs(e_two - e_one) < 1e-12

    def test_monte_carlo_oracle_with_cancellation(self):
        rng = np.random.default_rng(6)
        cfg = SystemConfig(k_pairs=2, n_s=(2, 2), n_r=4, n_d=(2, 2), n_b=(1, 1),
                           p_s=(4.0, 4.0), p_r=5.0, mode="twoway")
        ch = generate_channels(cfg, 51)
        bs = tuple(_crandn(rng, 2, 1) for _ in range(4))
        f = 0.5 * _crandn(rng, 4, 4)
        ws = fill_mmse_receivers(cfg, ch, bs, f)
        design = TransceiverDesign(b=bs, f=f, w=ws)
        node = 0
        analytic = mse_twoway(cfg, ch, design, node)

        n_draws = 200_000
        sym = _crandn(rng, 4, n_draws)
        relay_noise = _crandn(rng, 4, n_draws)
        own_noise = _crandn(rng, 2, n_draws)
        relay_in = sum(uplink_channel(cfg, ch, j) @ bs[j] @ sym[j:j + 1]
                       for j in range(4)) + relay_noise
        down = downlink_channel(cfg, ch, node)
        y = down @ (f @ relay_in) + own_noise
        # the node knows its own transmission and subtracts its echo
        echo = down @ f @ uplink_channel(cfg, ch, node) @ bs[node] @ sym[node:node + 1]
        err = ws[node].conj().T @ (y - echo) - sym[cfg.partner(node):cfg.partner(node) + 1]
        estimate = float(np.mean(np.sum(np.abs(err) ** 2, axis=0)))
        assert abs(estimate - analytic) < 0.02 * analytic

    def test_residual_independent_of_own_symbols(self):
        """Re-drawing a node's own symbols leaves its post-cancellation
        residual bit-for-bit unchanged."""
        rng = np.random.default_rng(8)
        cfg = self._two_way_cfg()
        ch = generate_channels(cfg, 61)
        bs = (_crandn(rng, 2, 1), _crandn(rng, 2, 1))
        f = _crandn(rng, 2, 2)
        ws = fill_mmse_receivers(cfg, ch, bs, f)
        node = 0
        sym_partner = _crandn(rng, 1, 64)
        relay_noise = _crandn(rng, 2, 64)
        own_noise = _crandn(rng, 2, 64)
        down = downlink_channel(cfg, ch, node)

        def residual(own_symbols):
            relay_in = (uplink_channel(cfg, ch, 0) @ bs[0] @ own_symbols
                        + uplink_channel(cfg, ch, 1) @ bs[1] @ sym_partner
                        + relay_noise)
            y = down @ (f @ relay_in) + own_noise
            echo = down @ f @ uplink_channel(cfg, ch, 0) @ bs[0] @ own_symbols
            return ws[node].conj().T @ (y - echo) - sym_partner

        r1 = residual(_crandn(rng, 1, 64))
        r2 = residual(_crandn(rng, 1, 64))
        assert np.allclose(r1, r2, atol=1e-12)

    def test_mode_guard(self):
        cfg = _cfg()
        ch = generate_channels(cfg, 4)
        design = naf_design(_cfg(n_b=(2, 2), n_r=4), generate_channels(_cfg(n_b=(2, 2), n_r=4), 4))
        with pytest.raises(ValueError):
            mse_twoway(cfg, ch, design, 0)


class TestNafDesign:
    def test_equal_power_split(self):
        cfg = _cfg(n_b=(2, 2), n_r=4)
        ch = generate_channels(cfg, 71)
        design = naf_design(cfg, ch)
        np.testing.assert_allclose(design.b[0], math.sqrt(2.0) * np.eye(2), atol=1e-14)

    def test_relay_power_met_exactly(self):
        cfg = _cfg(n_b=(2, 2), n_r=4, p_r=7.0)
        ch = generate_channels(cfg, 72)
        design = naf_design(cfg, ch)
        psi = received_covariance(cfg, ch, design.b)
        assert abs(relay_power(design.f, psi) - 7.0) < 1e-9
        assert design_is_feasible(cfg, design, psi)

    def test_streams_below_antennas_use_leading_columns(self):
        cfg = _cfg()   # n_b=1 < n_s=2
        ch = generate_channels(cfg, 73)
        design = naf_design(cfg, ch)
        np.testing.assert_allclose(
            design.b[0], math.sqrt(cfg.p_s[0]) * np.eye(2)[:, :1], atol=1e-14)
        psi = received_covariance(cfg, ch, design.b)
        assert design_is_feasible(cfg, design, psi)

    def test_scalar_end_to_end_formula(self):
        p_s, p_r = 4.0, 5.0
        cfg = SystemConfig(k_pairs=1, n_s=(1,), n_r=1, n_d=(1,), n_b=(1,),
                           p_s=(p_s,), p_r=p_r)
        ch = _manual_channels([[[1.0]]], [[[1.0]]])
        design = naf_design(cfg, ch)
        e, _ = mse_oneway(cfg, ch, design, 0)
        f2 = p_r / (p_s + 1.0)
        expected = 1.0 - p_s * f2 / (p_s * f2 + f2 + 1.0)
        assert e == pytest.approx(expected, abs=1e-12)

    def test_two_way_baseline_feasible(self):
        cfg = SystemConfig(k_pairs=1, n_s=(2,), n_r=4, n_d=(2,), n_b=(2,),
                           p_s=(4.0,), p_r=6.0, mode="twoway")
        ch = generate_channels(cfg, 74)
        design = naf_design(cfg, ch)
        assert len(design.b) == 2
        psi = received_covariance(cfg, ch, design.b)
        assert design_is_feasible(cfg, design, psi)
        for node in range(2):
            e = mse_twoway(cfg, ch, design, node)
            assert 0.0 <= e <= 2.0 + 1e-9
