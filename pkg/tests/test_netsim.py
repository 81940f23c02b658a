"""Tests for the cooperation-strategy simulator.

Oracles:
- brute-force pairwise distance loops for graph construction,
- explicit matrix powers of the weight matrix for the consensus iteration
  count and conservation,
- degree-sum message counting (2|E| - N + 1 per flooded record),
- centralized statistics recomputed directly on the full data.
"""

from __future__ import annotations

import numpy as np
import pytest

from wsn_detect.detectors import glrt_statistic, lmp_statistic
from wsn_detect.estimators import global_mle
from wsn_detect.model import ChannelConfig, sample_gaussian_approx, sample_topology
from wsn_detect.netsim import (
    CommGraph,
    ConsensusConfig,
    ConsensusNonConvergence,
    DisconnectedGraphError,
    ResourceLedger,
    Strategy,
    build_comm_graph,
    metropolis_weights,
    run_consensus,
    run_flooding_glrt,
    run_mac,
    run_pac,
)

from conftest import energy_matrix


def graph_from_adjacency(adjacency) -> CommGraph:
    return CommGraph(adjacency=np.asarray(adjacency, dtype=bool))


def path_graph(n: int) -> CommGraph:
    adjacency = np.zeros((n, n), dtype=bool)
    for k in range(n - 1):
        adjacency[k, k + 1] = adjacency[k + 1, k] = True
    return graph_from_adjacency(adjacency)


def complete_graph(n: int) -> CommGraph:
    return graph_from_adjacency(~np.eye(n, dtype=bool))


class TestBuildCommGraph:
    def test_complete_when_radius_covers_diameter(self, rng, channel_config):
        topo = sample_topology(8, channel_config, rng)
        diameter = 0.0
        for i in range(8):
            for j in range(8):
                diameter = max(diameter, np.linalg.norm(topo.positions[i] - topo.positions[j]))
        graph = build_comm_graph(topo, radius=diameter + 1.0)
        assert graph.num_edges == 8 * 7 // 2

    def test_two_distant_nodes_disconnect(self, channel_config):
        from wsn_detect.model import Topology

        positions = np.array([[0.0, 0.0], [500.0, 0.0]])
        topo = Topology(
            positions=positions,
            source_position=np.array([0.0, 1000.0]),
            distances=np.array([1000.0, 1118.0]),
        )
        with pytest.raises(DisconnectedGraphError):
            build_comm_graph(topo, radius=100.0)

    def test_edge_count_matches_brute_force(self, rng, channel_config):
        topo = sample_topology(25, channel_config, rng)
        radius = 700.0
        try:
            graph = build_comm_graph(topo, radius)
        except DisconnectedGraphError:
            pytest.skip("random layout disconnected at this radius")
        count = 0
        for i in range(25):
            for j in range(i + 1, 25):
                if np.linalg.norm(topo.positions[i] - topo.positions[j]) <= radius:
                    count += 1
        assert graph.num_edges == count
        np.testing.assert_array_equal(graph.adjacency, graph.adjacency.T)
        assert not graph.adjacency.diagonal().any()

    def test_rejects_nonpositive_radius(self, rng, channel_config):
        topo = sample_topology(3, channel_config, rng)
        with pytest.raises(ValueError):
            build_comm_graph(topo, radius=0.0)


class TestMetropolisWeights:
    def test_doubly_stochastic(self, rng, channel_config):
        topo = sample_topology(12, channel_config, rng)
        graph = build_comm_graph(topo, radius=2500.0)
        weights = metropolis_weights(graph)
        np.testing.assert_allclose(weights.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(weights, weights.T)
        assert np.all(weights.diagonal() > 0)

    def test_complete_graph_is_uniform_averaging(self):
        weights = metropolis_weights(complete_graph(5))
        np.testing.assert_allclose(weights, np.full((5, 5), 0.2), atol=1e-15)

    def test_path_graph_weights(self):
        # Middle node of a 3-path has degree 2, ends degree 1: edge weight 1/3.
        weights = metropolis_weights(path_graph(3))
        expected = np.array(
            [
                [2.0 / 3.0, 1.0 / 3.0, 0.0],
                [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                [0.0, 1.0 / 3.0, 2.0 / 3.0],
            ]
        )
        np.testing.assert_allclose(weights, expected, atol=1e-15)


class TestRunPac:
    def test_ledger_and_sum(self, rng):
        stats = rng.normal(size=20)
        fused, ledger = run_pac(stats)
        assert ledger == ResourceLedger(Strategy.PAC, transmissions=20, channel_uses=20)
        assert fused == pytest.approx(stats.sum(), rel=1e-14)

    def test_zero_input(self):
        fused, _ = run_pac(np.zeros(7))
        assert fused == 0.0

    def test_matches_centralized_lmp(self, rng):
        data = energy_matrix(rng.normal(0.4, 1.2, size=(6, 30)), m=50)
        total, locals_ = lmp_statistic(data, m=50)
        fused, _ = run_pac(locals_)
        assert fused == pytest.approx(total, abs=1e-12)


class TestRunMac:
    def test_ledger_and_exact_sum(self, rng):
        stats = rng.normal(size=9)
        fused, ledger = run_mac(stats)
        assert ledger == ResourceLedger(Strategy.MAC, transmissions=9, channel_uses=1)
        assert fused == pytest.approx(stats.sum(), rel=1e-14)

    def test_noisy_channel_mean(self, rng):
        stats = np.array([1.0, 2.0, 3.0])
        runs = 4000
        noise_std = 0.5
        values = [run_mac(stats, noise_std=noise_std, rng=rng)[0] for _ in range(runs)]
        assert abs(np.mean(values) - 6.0) < 3.0 * noise_std / np.sqrt(runs)

    def test_noise_requires_rng(self):
        with pytest.raises(ValueError):
            run_mac(np.ones(3), noise_std=0.1)
        with pytest.raises(ValueError):
            run_mac(np.ones(3), noise_std=-0.1)


class TestRunConsensus:
    def test_equal_inputs_need_no_iterations(self):
        fused, ledger, iterations = run_consensus(
            np.full(6, 3.5), path_graph(6), ConsensusConfig()
        )
        assert iterations == 0
        assert ledger.transmissions == 0
        assert fused == pytest.approx(21.0, rel=1e-12)

    def test_complete_graph_converges_immediately(self, rng):
        stats = rng.normal(size=8)
        config = ConsensusConfig(tolerance=1e-8)
        fused, ledger, iterations = run_consensus(stats, complete_graph(8), config)
        assert iterations <= 2
        assert fused == pytest.approx(stats.sum(), abs=8 * 1e-8)

    def test_matches_matrix_power_oracle(self, rng):
        # The iteration count equals the first matrix power within tolerance.
        stats = rng.normal(size=5)
        graph = path_graph(5)
        config = ConsensusConfig(tolerance=1e-6, max_iters=10_000)
        _, ledger, iterations = run_consensus(stats, graph, config)
        weights = metropolis_weights(graph)
        mean = stats.mean()
        k = 0
        x = stats.copy()
        while np.max(np.abs(x - mean)) >= config.tolerance:
            x = weights @ x
            k += 1
        assert iterations == k
        assert ledger.transmissions == 5 * k
        assert ledger.channel_uses == 5 * k

    def test_conservation_of_mean(self, rng):
        graph = path_graph(7)
        weights = metropolis_weights(graph)
        x = rng.normal(size=7)
        mean = x.mean()
        for _ in range(50):
            x = weights @ x
            assert x.mean() == pytest.approx(mean, abs=1e-12)

    def test_fused_near_centralized(self, rng):
        stats = rng.normal(2.0, 1.0, size=10)
        tolerance = 1e-8
        fused, _, _ = run_consensus(
            stats, path_graph(10), ConsensusConfig(tolerance=tolerance)
        )
        assert abs(fused - stats.sum()) <= 10 * tolerance

    def test_non_convergence_raises_with_details(self, rng):
        stats = rng.normal(size=6)
        with pytest.raises(ConsensusNonConvergence) as info:
            run_consensus(stats, path_graph(6), ConsensusConfig(tolerance=1e-12, max_iters=3))
        assert info.value.iterations == 3
        assert info.value.residual > 1e-12

    def test_size_mismatch(self, rng):
        with pytest.raises(ValueError):
            run_consensus(rng.normal(size=4), path_graph(5), ConsensusConfig())

    def test_iterations_non_increasing_in_edges(self, rng, channel_config):
        # Nested geometric graphs: growing the radius only adds edges.
        topo = sample_topology(10, channel_config, np.random.default_rng(3))
        stats = rng.normal(size=10)
        config = ConsensusConfig(tolerance=1e-7, max_iters=100_000)
        iteration_counts = []
        for radius in (1200.0, 1600.0, 2200.0, 4000.0):
            try:
                graph = build_comm_graph(topo, radius)
            except DisconnectedGraphError:
                continue
            _, _, iterations = run_consensus(stats, graph, config)
            iteration_counts.append(iterations)
        assert len(iteration_counts) >= 2
        assert all(b <= a for a, b in zip(iteration_counts, iteration_counts[1:]))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ConsensusConfig(tolerance=0.0)
        with pytest.raises(ValueError):
            ConsensusConfig(max_iters=0)


class TestRunFloodingGlrt:
    def test_message_count_formula(self, rng):
        # Duplicate-suppressed flooding costs 2|E| - N + 1 messages per record.
        data = energy_matrix(rng.normal(size=(4, 3)), m=50)
        for graph in (path_graph(4), complete_graph(4)):
            _, ledger = run_flooding_glrt(data, graph)
            per_record = 2 * graph.num_edges - 4 + 1
            assert ledger.transmissions == per_record * 4 * 3
            assert ledger.channel_uses == ledger.transmissions

    def test_complete_graph_lower_bound(self, rng):
        data = energy_matrix(rng.normal(size=(3, 2)), m=50)
        _, ledger = run_flooding_glrt(data, complete_graph(3))
        assert ledger.transmissions >= 3 * 2 * 2

    def test_linear_in_windows(self, rng):
        graph = path_graph(3)
        short = energy_matrix(rng.normal(size=(3, 5)), m=50)
        long = energy_matrix(rng.normal(size=(3, 10)), m=50)
        _, ledger_short = run_flooding_glrt(short, graph)
        _, ledger_long = run_flooding_glrt(long, graph)
        assert ledger_long.transmissions == 2 * ledger_short.transmissions

    def test_fused_equals_centralized(self, rng):
        data = sample_gaussian_approx(
            np.array([0.3, 0.6, 0.1]), m=50, num_windows=80, rng=rng
        )
        fused, _ = run_flooding_glrt(data, path_graph(3))
        fit = global_mle(data, 50)
        assert fit.converged
        assert fused == glrt_statistic(data, 50, fit.theta)

    def test_size_mismatch(self, rng):
        data = energy_matrix(rng.normal(size=(3, 4)), m=50)
        with pytest.raises(ValueError):
            run_flooding_glrt(data, path_graph(4))
