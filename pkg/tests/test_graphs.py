import math
from collections import deque

import numpy as np
import pytest

from dsrtopo import graphs as gr
from dsrtopo.errors import InvalidArgumentError
from dsrtopo.model import TopologyMask


def bfs_distances(adj):
    """Per-node BFS oracle for directed shortest paths."""
    n = adj.shape[0]
    dist = np.full((n, n), np.inf)
    for s in range(n):
        dist[s, s] = 0.0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in np.nonzero(adj[u])[0]:
                if dist[s, v] == np.inf:
                    dist[s, v] = dist[s, u] + 1
                    queue.append(v)
    return dist


def triangle_clustering_oracle(adj):
    """Directed clustering via explicit triple loops."""
    n = adj.shape[0]
    a = adj.astype(int)
    values = []
    for i in range(n):
        t_i = 0
        for j in range(n):
            for h in range(n):
                t_i += (a[i, j] + a[j, i]) * (a[i, h] + a[h, i]) * (a[j, h] + a[h, j])
        t_i /= 2.0
        k_tot = a[i].sum() + a[:, i].sum()
        k_bi = int((a[i] & a[:, i]).sum())
        denom = k_tot * (k_tot - 1) - 2 * k_bi
        values.append(t_i / denom if denom > 0 else 0.0)
    return float(np.mean(values))


def random_graph(rng, n, density=0.3):
    adj = (rng.random((n, n)) < density).astype(np.uint8)
    np.fill_diagonal(adj, 0)
    return gr.DirectedGraph(adjacency=adj)


class TestPathLength:
    def test_complete_graph(self):
        n = 6
        adj = np.ones((n, n), dtype=np.uint8)
        np.fill_diagonal(adj, 0)
        l, unreachable = gr.avg_path_length(gr.DirectedGraph(adjacency=adj))
        assert l == 1.0 and unreachable == 0.0

    def test_directed_four_cycle(self):
        adj = np.zeros((4, 4), dtype=np.uint8)
        for i in range(4):
            adj[i, (i + 1) % 4] = 1
        l, unreachable = gr.avg_path_length(gr.DirectedGraph(adjacency=adj))
        assert l == 2.0 and unreachable == 0.0

    def test_disconnected_components(self):
        adj = np.zeros((6, 6), dtype=np.uint8)
        adj[:3, :3] = 1
        adj[3:, 3:] = 1
        np.fill_diagonal(adj, 0)
        l, unreachable = gr.avg_path_length(gr.DirectedGraph(adjacency=adj))
        assert l == 1.0
        assert unreachable == 0.6  # 18 of 30 ordered pairs cross components

    def test_floyd_warshall_matches_bfs(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            n = int(rng.integers(2, 31))
            g = random_graph(rng, n, density=float(rng.uniform(0.05, 0.5)))
            fw = gr.shortest_path_matrix(g)
            assert np.array_equal(fw, bfs_distances(g.adjacency))


class TestClustering:
    def test_complete_directed_graph_is_one(self):
        n = 7
        adj = np.ones((n, n), dtype=np.uint8)
        np.fill_diagonal(adj, 0)
        assert gr.clustering(gr.DirectedGraph(adjacency=adj)) == 1.0

    def test_directed_ring_has_no_triangles(self):
        n = 8
        adj = np.zeros((n, n), dtype=np.uint8)
        for i in range(n):
            adj[i, (i + 1) % n] = 1
        assert gr.clustering(gr.DirectedGraph(adjacency=adj)) == 0.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            n = int(rng.integers(3, 16))
            g = random_graph(rng, n, density=float(rng.uniform(0.1, 0.6)))
            assert gr.clustering(g) == pytest.approx(
                triangle_clustering_oracle(g.adjacency), abs=1e-12
            )

    def test_ws_lattice_closed_form(self):
        # ring lattice clustering: 3(k-2) / (4(k-1)); k=4 gives 0.5
        g = gr.gen_watts_strogatz(40, 4, 0.0, seed=0)
        assert abs(gr.clustering(g) - 0.5) < 1e-12


class TestSwi:
    def test_ring_lattice_is_zero(self):
        g = gr.ring_lattice(60, 6)
        assert gr.swi(g, n_random_refs=5, seed=0) == 0.0

    def test_er_is_small(self):
        values = []
        for seed in range(10):
            g = gr.gen_erdos_renyi(100, 300, seed=seed)
            values.append(gr.swi(g, n_random_refs=5, seed=seed + 100))
        assert np.mean(values) < 0.15

    def test_watts_strogatz_small_world_regime(self):
        g = gr.gen_watts_strogatz(100, 6, 0.1, seed=4)
        assert gr.swi(g, n_random_refs=10, seed=5) > 0.4


class TestDegreeStats:
    def test_complete_graph_degrees(self):
        n = 5
        adj = np.ones((n, n), dtype=np.uint8)
        np.fill_diagonal(adj, 0)
        stats = gr.degree_stats(gr.DirectedGraph(adjacency=adj))
        assert np.all(stats.in_degrees == n - 1)
        assert np.all(stats.out_degrees == n - 1)

    def test_edge_count_conservation(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng, 12, 0.4)
        stats = gr.degree_stats(g)
        assert stats.in_degrees.sum() == stats.out_degrees.sum() == g.n_edges

    def test_er_degree_sum(self):
        g = gr.gen_erdos_renyi(20, 30, seed=1)
        stats = gr.degree_stats(g)
        assert stats.in_degrees.sum() + stats.out_degrees.sum() == 4 * 30

    def test_survival_function_starts_at_one(self):
        rng = np.random.default_rng(3)
        g = random_graph(rng, 10, 0.3)
        stats = gr.degree_stats(g)
        grid, frac = stats.cum_degree_in
        assert frac[0] == 1.0
        assert np.all(np.diff(frac) <= 0)


class TestGenerators:
    def test_er_exact_edge_count(self):
        g = gr.gen_erdos_renyi(30, 100, seed=0)
        assert g.n_edges == 200  # symmetrized
        assert np.array_equal(g.adjacency, g.adjacency.T)

    def test_er_complete(self):
        n = 8
        g = gr.gen_erdos_renyi(n, n * (n - 1) // 2, seed=1)
        expected = np.ones((n, n), dtype=np.uint8)
        np.fill_diagonal(expected, 0)
        assert np.array_equal(g.adjacency, expected)

    def test_er_too_many_edges(self):
        with pytest.raises(InvalidArgumentError):
            gr.gen_erdos_renyi(5, 11, seed=0)

    def test_ws_edge_count_invariant(self):
        for p in (0.0, 0.3, 1.0):
            g = gr.gen_watts_strogatz(50, 6, p, seed=2)
            assert g.n_edges == 50 * 6
            assert np.array_equal(g.adjacency, g.adjacency.T)

    def test_ws_full_rewiring_randomizes_clustering(self):
        diffs = []
        for seed in range(10):
            ws = gr.gen_watts_strogatz(200, 6, 1.0, seed=seed)
            er = gr.gen_erdos_renyi(200, 600, seed=seed + 50)
            diffs.append(gr.clustering(ws) - gr.clustering(er))
        assert abs(np.mean(diffs)) < 0.05

    def test_ws_invalid_k(self):
        with pytest.raises(InvalidArgumentError):
            gr.gen_watts_strogatz(10, 3, 0.1, seed=0)

    def test_ba_node_and_edge_count(self):
        n, k = 50, 3
        g = gr.gen_barabasi_albert(n, k, seed=3)
        assert g.n == n
        undirected = k * (k - 1) // 2 + (n - k) * k
        assert g.n_edges == 2 * undirected
        assert np.array_equal(g.adjacency, g.adjacency.T)

    def test_ba_hub_property(self):
        ratios = []
        for seed in range(10):
            g = gr.gen_barabasi_albert(200, 3, seed=seed)
            degrees = g.adjacency.sum(axis=1)
            ratios.append(degrees.max() / np.median(degrees))
        assert max(ratios) > 5.0

    def test_generators_deterministic(self):
        for make in (
            lambda s: gr.gen_erdos_renyi(40, 80, s),
            lambda s: gr.gen_watts_strogatz(40, 4, 0.2, s),
            lambda s: gr.gen_barabasi_albert(40, 3, s),
            lambda s: gr.gen_geohub(40, 6, 3, s),
        ):
            assert np.array_equal(make(9).adjacency, make(9).adjacency)

    def test_zero_diagonal_everywhere(self):
        for g in (
            gr.gen_erdos_renyi(20, 50, 0),
            gr.gen_watts_strogatz(20, 4, 0.5, 0),
            gr.gen_barabasi_albert(20, 4, 0),
            gr.gen_geohub(20, 4, 3, 0),
        ):
            assert np.all(np.diag(g.adjacency) == 0)


class TestGeoHub:
    def test_readout_nodes_are_in_degree_hubs(self):
        readout_means, hidden_means = [], []
        for seed in range(10):
            g = gr.gen_geohub(100, 6, 3, seed=seed)
            stats = gr.degree_stats(g, n_readout=3)
            readout_means.append(stats.readout_mean_in)
            hidden_means.append(stats.hidden_mean_in)
        assert np.mean(readout_means) > np.mean(hidden_means)

    def test_degenerate_all_readout(self):
        g = gr.gen_geohub(4, 2, 4, seed=0)
        expected_seed = np.ones((4, 4), dtype=np.uint8)
        np.fill_diagonal(expected_seed, 0)
        assert np.all(g.adjacency >= 0)
        assert np.all((g.adjacency & expected_seed) == expected_seed)

    def test_odd_k_rejected(self):
        with pytest.raises(InvalidArgumentError):
            gr.gen_geohub(10, 3, 2, seed=0)

    def test_edge_budget_close_to_nominal(self):
        n, k, n_read = 60, 6, 3
        g = gr.gen_geohub(n, k, n_read, seed=5)
        nominal = n_read * (n_read - 1) + n * k
        assert g.n_edges <= nominal
        assert g.n_edges >= nominal - 20  # bounded skip allowance


class TestMaskConversion:
    def test_round_trip_preserves_off_diagonal(self):
        rng = np.random.default_rng(4)
        bits = (rng.random((8, 8)) > 0.5).astype(np.uint8)
        mask = TopologyMask(bits)
        g = gr.mask_to_graph(mask)
        back = gr.graph_to_mask(g, diagonal=np.diag(bits))
        assert np.array_equal(back.bits, bits)

    def test_match_entry_count(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 20, 0.3)
        for target in (40, g.n_edges, 200):
            adjusted = gr.match_entry_count(g, target, seed=6)
            assert adjusted.n_edges == target
            assert np.all(np.diag(adjusted.adjacency) == 0)


class TestStatsCsv:
    def test_row_format(self):
        g = gr.gen_erdos_renyi(20, 40, seed=0)
        stats = gr.graph_stats(g, n_random_refs=3, seed=1)
        row = gr.graph_stats_row("g0", g, stats)
        assert len(row.split(",")) == len(gr.GRAPH_STATS_HEADER.split(","))
        assert row.startswith("g0,20,80,")
