"""Tests for the signal model.

Covers:
- config validation,
- geometry sampling (bounds, strictly positive source distances, redraw rule),
- channel statistics against the path-loss formula and Monte Carlo moments,
- waveform-level energy simulation against its analytic moments,
- the Gaussian approximation (hand-computed moments, positive definiteness,
  agreement between waveform simulation and the approximate law).
"""

from __future__ import annotations

import numpy as np
import pytest

from wsn_detect.model import (
    ChannelConfig,
    ChannelRealization,
    Hypothesis,
    ModelConfig,
    SourceKind,
    Topology,
    gaussian_moments,
    sample_channel,
    sample_gaussian_approx,
    sample_topology,
    simulate_energy,
    theta_from_channel,
)


def make_topology(distances) -> Topology:
    """Build a topology with prescribed source distances (positions on a line)."""
    distances = np.asarray(distances, dtype=float)
    source = np.array([0.0, 0.0])
    positions = np.column_stack([distances, np.zeros_like(distances)])
    return Topology(positions=positions, source_position=source, distances=distances)


class SequenceRng:
    """Minimal generator stub returning pre-seeded uniform draws."""

    def __init__(self, blocks):
        self._blocks = [np.asarray(b, dtype=float) for b in blocks]

    def uniform(self, low, high, size):
        block = self._blocks.pop(0)
        assert block.shape == tuple(size)
        return block


class TestConfigs:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_nodes": 0},
            {"samples_per_window": 0},
            {"num_windows": 0},
            {"noise_power": 0.0},
            {"noise_power": -1.0},
            {"symbol_energy": 0.0},
        ],
    )
    def test_model_config_rejects_bad_values(self, kwargs):
        base = dict(
            num_nodes=2, samples_per_window=8, num_windows=4, noise_power=1.0, symbol_energy=1.0
        )
        base.update(kwargs)
        with pytest.raises(ValueError):
            ModelConfig(**base)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"pathloss_exponent": 0.0},
            {"reference_distance": 0.0},
            {"shadowing_std_db": -0.1},
            {"area_side": 0.0},
        ],
    )
    def test_channel_config_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            ChannelConfig(**kwargs)

    def test_source_kind_round_trip(self):
        assert SourceKind("gaussian") is SourceKind.GAUSSIAN
        assert SourceKind("qam16") is SourceKind.QAM16


class TestSampleTopology:
    def test_positions_inside_square(self, rng, channel_config):
        topo = sample_topology(200, channel_config, rng)
        half = channel_config.area_side / 2.0
        assert topo.positions.shape == (200, 2)
        assert np.all(np.abs(topo.positions) <= half)

    def test_distances_match_positions(self, rng, channel_config):
        topo = sample_topology(50, channel_config, rng)
        expected = np.hypot(
            topo.positions[:, 0] - channel_config.source_position[0],
            topo.positions[:, 1] - channel_config.source_position[1],
        )
        np.testing.assert_allclose(topo.distances, expected, rtol=1e-12)
        assert np.all(topo.distances > 0)

    def test_degenerate_draw_at_origin(self, channel_config):
        # A single node forced to (0, 0) sits 1000 m from the default source.
        stub = SequenceRng([[[0.0, 0.0]]])
        topo = sample_topology(1, channel_config, stub)
        assert topo.distances[0] == pytest.approx(1000.0)

    def test_node_on_source_is_redrawn(self, channel_config):
        sx, sy = channel_config.source_position
        stub = SequenceRng([[[sx, sy]], [[100.0, 200.0]]])
        topo = sample_topology(1, channel_config, stub)
        assert topo.distances[0] > 0
        np.testing.assert_allclose(topo.positions[0], [100.0, 200.0])


class TestSampleChannel:
    def test_at_reference_distance_without_shadowing(self, rng):
        cfg = ChannelConfig(shadowing_std_db=0.0)
        topo = make_topology([cfg.reference_distance])
        real = sample_channel(topo, cfg, rng)
        assert real.sigma2[0] == pytest.approx(10.0 ** (cfg.intercept_db / 10.0), rel=1e-12)

    def test_pathloss_slope(self, rng):
        # One decade in distance costs 10 * pathloss_exponent dB.
        cfg = ChannelConfig(shadowing_std_db=0.0)
        topo = make_topology([cfg.reference_distance, 10.0 * cfg.reference_distance])
        real = sample_channel(topo, cfg, rng)
        ratio_db = 10.0 * np.log10(real.sigma2[0] / real.sigma2[1])
        assert ratio_db == pytest.approx(10.0 * cfg.pathloss_exponent, rel=1e-12)

    def test_gain_power_matches_sigma2(self, rng):
        # 1e5 i.i.d. gains at a fixed distance: E|h|^2 must approach sigma2.
        cfg = ChannelConfig(shadowing_std_db=0.0)
        topo = make_topology(np.full(100_000, 300.0))
        real = sample_channel(topo, cfg, rng)
        empirical = np.mean(np.abs(real.gains) ** 2)
        assert empirical == pytest.approx(real.sigma2[0], rel=0.02)

    def test_shadowing_spread(self, rng):
        # With shadowing on, the dB-scale sigma2 has the configured std.
        cfg = ChannelConfig(shadowing_std_db=3.0)
        topo = make_topology(np.full(100_000, 300.0))
        real = sample_channel(topo, cfg, rng)
        sigma2_db = 10.0 * np.log10(real.sigma2)
        assert np.std(sigma2_db) == pytest.approx(3.0, rel=0.02)

    def test_theta_from_channel(self):
        real = ChannelRealization(
            sigma2=np.array([1.0]), gains=np.array([3.0 + 4.0j])
        )
        theta = theta_from_channel(real, symbol_energy=2.0, noise_power=5.0)
        assert theta[0] == pytest.approx(10.0)
        with pytest.raises(ValueError):
            theta_from_channel(real, symbol_energy=0.0, noise_power=5.0)
        with pytest.raises(ValueError):
            theta_from_channel(real, symbol_energy=1.0, noise_power=0.0)


def fixed_channel(gains, noise_power=1.0) -> ChannelRealization:
    gains = np.asarray(gains, dtype=complex)
    return ChannelRealization(sigma2=np.abs(gains) ** 2, gains=gains)


class TestSimulateEnergy:
    def test_h0_moments(self, rng):
        # Normalized noise-only energies: mean 0, unit variance.
        cfg = ModelConfig(
            num_nodes=2, samples_per_window=50, num_windows=100_000, noise_power=3.0e-14
        )
        data = simulate_energy(fixed_channel([0.0, 0.0]), cfg, Hypothesis.H0, rng)
        assert data.values.shape == (2, 100_000)
        assert np.mean(data.values) == pytest.approx(0.0, abs=0.01)
        assert np.var(data.values) == pytest.approx(1.0, abs=0.02)

    def test_h0_independent_of_source_kind(self):
        # No source symbols are drawn under H0, so the stream is untouched.
        kwargs = dict(
            num_nodes=3, samples_per_window=16, num_windows=40, noise_power=1.0, symbol_energy=4.0
        )
        chan = fixed_channel([1.0, 0.5, 2.0])
        a = simulate_energy(
            chan,
            ModelConfig(source_kind=SourceKind.GAUSSIAN, **kwargs),
            Hypothesis.H0,
            np.random.default_rng(11),
        )
        b = simulate_energy(
            chan,
            ModelConfig(source_kind=SourceKind.QAM16, **kwargs),
            Hypothesis.H0,
            np.random.default_rng(11),
        )
        np.testing.assert_array_equal(a.values, b.values)

    def test_h1_requires_symbol_energy(self, rng):
        cfg = ModelConfig(num_nodes=1, samples_per_window=8, num_windows=4, noise_power=1.0)
        with pytest.raises(ValueError):
            simulate_energy(fixed_channel([1.0]), cfg, Hypothesis.H1, rng)

    @pytest.mark.parametrize("kind", [SourceKind.GAUSSIAN, SourceKind.QAM16])
    def test_h1_mean_and_cross_covariance(self, rng, kind):
        # E z = sqrt(m) theta for any unit-energy source.  The shared waveform
        # couples nodes: cov(z_n, z_n') = kappa theta_n theta_n' where
        # kappa = E|s|^4 / (E|s|^2)^2 - 1, i.e. 1 for the Gaussian source and
        # 0.32 for 16-QAM.
        m = 50
        windows = 40_000
        gains = np.array([0.8, 0.6])
        noise = 2.0
        es = 2.5
        theta = es * np.abs(gains) ** 2 / noise
        kappa = 1.0 if kind is SourceKind.GAUSSIAN else 0.32
        cfg = ModelConfig(
            num_nodes=2,
            samples_per_window=m,
            num_windows=windows,
            noise_power=noise,
            symbol_energy=es,
            source_kind=kind,
        )
        data = simulate_energy(fixed_channel(gains), cfg, Hypothesis.H1, rng)

        mean = data.values.mean(axis=1)
        stderr = data.values.std(axis=1) / np.sqrt(windows)
        np.testing.assert_array_less(np.abs(mean - np.sqrt(m) * theta), 4.0 * stderr)

        prod = (data.values[0] - mean[0]) * (data.values[1] - mean[1])
        cross = prod.mean()
        cross_stderr = prod.std() / np.sqrt(windows)
        assert abs(cross - kappa * theta[0] * theta[1]) < 4.0 * cross_stderr

    def test_blocked_generation_preserves_law(self, monkeypatch):
        # Forcing tiny chunks must not skew moments at chunk boundaries.
        import wsn_detect.model as model_mod

        cfg = ModelConfig(
            num_nodes=2, samples_per_window=10, num_windows=20_000, noise_power=1.0
        )
        monkeypatch.setattr(model_mod, "_MAX_BLOCK_SCALARS", 2 * 10 * 7)
        chunked = simulate_energy(
            fixed_channel([0.0, 0.0]), cfg, Hypothesis.H0, np.random.default_rng(5)
        )
        assert chunked.values.shape == (2, 20_000)
        assert np.mean(chunked.values) == pytest.approx(0.0, abs=0.05)
        assert np.var(chunked.values) == pytest.approx(1.0, abs=0.05)


class TestGaussianMoments:
    def test_zero_theta_is_standard_normal(self):
        mom = gaussian_moments(np.zeros(4), m=50)
        np.testing.assert_array_equal(mom.mean, np.zeros(4))
        np.testing.assert_array_equal(mom.cov, np.eye(4))

    def test_hand_computed_two_node_case(self):
        mom = gaussian_moments(np.array([1.0, 2.0]), m=25)
        np.testing.assert_allclose(mom.mean, [5.0, 10.0])
        np.testing.assert_allclose(mom.cov, [[4.0, 2.0], [2.0, 9.0]])

    def test_covariance_positive_definite(self, rng):
        for _ in range(20):
            theta = rng.uniform(0.0, 5.0, size=6)
            cov = gaussian_moments(theta, m=50).cov
            assert np.linalg.eigvalsh(cov)[0] > 0.99

    def test_rejects_negative_theta(self):
        with pytest.raises(ValueError):
            gaussian_moments(np.array([0.1, -0.1]), m=50)


class TestSampleGaussianApprox:
    def test_null_case_is_white(self, rng):
        data = sample_gaussian_approx(np.zeros(3), m=50, num_windows=50_000, rng=rng)
        assert data.values.shape == (3, 50_000)
        assert np.abs(data.values.mean(axis=1)).max() < 0.02
        np.testing.assert_allclose(np.var(data.values, axis=1), 1.0, atol=0.03)

    def test_moments_recovered(self, rng):
        theta = np.array([0.5, 1.5])
        windows = 100_000
        data = sample_gaussian_approx(theta, m=50, num_windows=windows, rng=rng)
        mom = gaussian_moments(theta, m=50)
        np.testing.assert_allclose(data.values.mean(axis=1), mom.mean, atol=0.05)
        # Gaussian sampling noise of a covariance entry: (c_ii c_jj + c_ij^2) / n.
        cov_stderr = np.sqrt(
            (np.outer(np.diag(mom.cov), np.diag(mom.cov)) + mom.cov**2) / windows
        )
        np.testing.assert_array_less(
            np.abs(np.cov(data.values, ddof=0) - mom.cov), 5.0 * cov_stderr
        )

    def test_waveform_simulation_matches_approximation(self, rng):
        # The waveform-level law converges to the Gaussian approximation:
        # compare means and covariances at m = 50.
        gains = np.array([1.0, 0.7, 0.4])
        es = 1.8
        theta = es * np.abs(gains) ** 2
        windows = 30_000
        cfg = ModelConfig(
            num_nodes=3,
            samples_per_window=50,
            num_windows=windows,
            noise_power=1.0,
            symbol_energy=es,
        )
        exact = simulate_energy(fixed_channel(gains), cfg, Hypothesis.H1, rng)
        mom = gaussian_moments(theta, m=50)
        stderr = exact.values.std(axis=1) / np.sqrt(windows)
        np.testing.assert_array_less(
            np.abs(exact.values.mean(axis=1) - mom.mean), 4.0 * stderr
        )
        emp_cov = np.cov(exact.values, ddof=0)
        # Fourth-moment corrections are O(1/sqrt(m)); allow a coarse band.
        np.testing.assert_allclose(emp_cov, mom.cov, atol=0.12)
