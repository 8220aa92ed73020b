"""Graph characterization of masks and topology generators.

Masks are read as directed adjacency matrices (diagonal excluded). Average
path length uses Floyd-Warshall over reachable ordered pairs; clustering uses
the directed-triangle generalization; the small-world index contrasts both
against Erdős–Rényi and ring-lattice references. Generators: ER, WS, BA
(undirected, symmetrized) and the natively directed GeoHub model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, UndefinedReferenceError
from .model import TopologyMask
from .seeding import derive_seed

GENERATORS = ("er", "ws", "ba", "geohub")

# Bounded retries for duplicate/self-loop draws before an edge is skipped.
MAX_REDRAWS = 50


@dataclass
class DirectedGraph:
    """Binary adjacency matrix; entry (i, j) is an edge from node i to node j."""

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise InvalidArgumentError("adjacency must be square")
        if not np.all((adj == 0) | (adj == 1)):
            raise InvalidArgumentError("adjacency entries must be 0 or 1")
        if np.any(np.diag(adj) != 0):
            raise InvalidArgumentError("self-loops are excluded from graph analysis")
        self.adjacency = np.ascontiguousarray(adj, dtype=np.uint8)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())


@dataclass
class GraphStats:
    """Summary of one graph; degree-only queries leave the rest as NaN."""

    in_degrees: np.ndarray
    out_degrees: np.ndarray
    avg_path_length: float = math.nan
    clustering: float = math.nan
    swi: float = math.nan
    unreachable_frac: float = math.nan
    cum_degree_in: tuple[np.ndarray, np.ndarray] | None = None
    cum_degree_out: tuple[np.ndarray, np.ndarray] | None = None
    readout_mean_in: float = math.nan
    hidden_mean_in: float = math.nan
    readout_mean_out: float = math.nan
    hidden_mean_out: float = math.nan


def mask_to_graph(mask: TopologyMask) -> DirectedGraph:
    """Adjacency = mask with the diagonal dropped."""
    adj = mask.bits.copy()
    np.fill_diagonal(adj, 0)
    return DirectedGraph(adjacency=adj)


def graph_to_mask(g: DirectedGraph, diagonal: np.ndarray | None = None) -> TopologyMask:
    """Mask = adjacency, with an optional diagonal restored."""
    bits = g.adjacency.copy()
    if diagonal is not None:
        np.fill_diagonal(bits, np.asarray(diagonal, dtype=np.uint8))
    return TopologyMask(bits)


def shortest_path_matrix(g: DirectedGraph) -> np.ndarray:
    """All-pairs directed geodesic distances via Floyd-Warshall (inf = unreachable)."""
    n = g.n
    dist = np.where(g.adjacency == 1, 1.0, np.inf)
    np.fill_diagonal(dist, 0.0)
    for k in range(n):
        via = dist[:, k : k + 1] + dist[k : k + 1, :]
        np.minimum(dist, via, out=dist)
    return dist


def avg_path_length(g: DirectedGraph) -> tuple[float, float]:
    """Mean geodesic distance over reachable ordered pairs, plus the fraction
    of unreachable ordered pairs."""
    if g.n < 2:
        raise InvalidArgumentError("need at least 2 nodes")
    dist = shortest_path_matrix(g)
    off = ~np.eye(g.n, dtype=bool)
    finite = np.isfinite(dist) & off
    n_pairs = g.n * (g.n - 1)
    unreachable = 1.0 - finite.sum() / n_pairs
    if not finite.any():
        return math.inf, 1.0
    return float(dist[finite].mean()), float(unreachable)


def clustering(g: DirectedGraph) -> float:
    """Directed clustering coefficient averaged over nodes.

    Per node: realized directed triangles (A + A^T)^3_ii / 2 over the possible
    count k_tot(k_tot - 1) - 2 k_bilateral; zero-denominator nodes contribute 0.
    """
    if g.n < 3:
        raise InvalidArgumentError("need at least 3 nodes")
    a = g.adjacency.astype(np.float64)
    s = a + a.T
    triangles = np.diag(s @ s @ s)
    k_in = a.sum(axis=0)
    k_out = a.sum(axis=1)
    k_tot = k_in + k_out
    k_bi = np.diag(a @ a)
    denom = 2.0 * (k_tot * (k_tot - 1.0) - 2.0 * k_bi)
    per_node = np.zeros(g.n)
    ok = denom > 0
    per_node[ok] = triangles[ok] / denom[ok]
    return float(per_node.mean())


def ring_lattice(n: int, k: int) -> DirectedGraph:
    """Undirected ring lattice (k nearest neighbors), symmetrized."""
    if k % 2 != 0 or not 0 < k < n:
        raise InvalidArgumentError("ring lattice needs even k with 0 < k < n")
    adj = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            adj[i, j] = 1
            adj[j, i] = 1
    return DirectedGraph(adjacency=adj)


def swi(g: DirectedGraph, n_random_refs: int = 10, seed: int = 0) -> float:
    """Small-world index in [0, 1].

    SWI = ((L - L_l) / (L_r - L_l)) * ((C - C_r) / (C_l - C_r)) with ER
    references matched in node and edge count and a ring lattice matched in
    mean total degree; each factor and the product are clipped to [0, 1].
    """
    if g.n_edges < 1:
        raise InvalidArgumentError("graph must have at least one edge")
    l_g, _ = avg_path_length(g)
    c_g = clustering(g)
    n = g.n
    und_edges = max(1, round(g.n_edges / 2))
    und_edges = min(und_edges, n * (n - 1) // 2)
    l_vals, c_vals = [], []
    for i in range(n_random_refs):
        ref = gen_erdos_renyi(n, und_edges, derive_seed(seed, f"swi-er:{i}"))
        l_i, _ = avg_path_length(ref)
        l_vals.append(l_i)
        c_vals.append(clustering(ref))
    l_r = float(np.mean(l_vals))
    c_r = float(np.mean(c_vals))
    k_ring = int(round(g.n_edges / n / 2.0)) * 2
    k_ring = max(2, min(k_ring, (n - 1) - (n - 1) % 2))
    lattice = ring_lattice(n, k_ring)
    l_l, _ = avg_path_length(lattice)
    c_l = clustering(lattice)
    if l_r == l_l or c_l == c_r:
        raise UndefinedReferenceError(
            f"degenerate references: L_r={l_r}, L_l={l_l}, C_r={c_r}, C_l={c_l}"
        )
    f_path = (l_g - l_l) / (l_r - l_l)
    f_clust = (c_g - c_r) / (c_l - c_r)
    f_path = min(1.0, max(0.0, f_path))
    f_clust = min(1.0, max(0.0, f_clust))
    return min(1.0, max(0.0, f_path * f_clust))


def _survival(values: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """F(k') = fraction of nodes with normalized degree >= k'."""
    norm = np.sort(values) / (n - 1)
    grid = np.unique(norm)
    frac = np.array([(norm >= g).mean() for g in grid])
    return grid, frac


def degree_stats(g: DirectedGraph, n_readout: int = 0) -> GraphStats:
    """Degree vectors, normalized cumulative distributions, readout/hidden split."""
    a = g.adjacency
    in_deg = a.sum(axis=0).astype(np.int64)
    out_deg = a.sum(axis=1).astype(np.int64)
    stats = GraphStats(in_degrees=in_deg, out_degrees=out_deg)
    stats.cum_degree_in = _survival(in_deg.astype(float), g.n)
    stats.cum_degree_out = _survival(out_deg.astype(float), g.n)
    if 0 < n_readout <= g.n:
        stats.readout_mean_in = float(in_deg[:n_readout].mean())
        stats.readout_mean_out = float(out_deg[:n_readout].mean())
        if n_readout < g.n:
            stats.hidden_mean_in = float(in_deg[n_readout:].mean())
            stats.hidden_mean_out = float(out_deg[n_readout:].mean())
    return stats


def graph_stats(
    g: DirectedGraph, n_random_refs: int = 10, seed: int = 0, n_readout: int = 0
) -> GraphStats:
    """Full summary: degrees plus L, C, SWI."""
    stats = degree_stats(g, n_readout)
    stats.avg_path_length, stats.unreachable_frac = avg_path_length(g)
    stats.clustering = clustering(g)
    stats.swi = swi(g, n_random_refs, seed)
    return stats


def gen_erdos_renyi(n: int, k_edges: int, seed: int) -> DirectedGraph:
    """Exactly k_edges distinct undirected edges chosen uniformly, symmetrized."""
    if k_edges > n * (n - 1) // 2:
        raise InvalidArgumentError("k_edges exceeds the number of possible edges")
    rng = np.random.default_rng(seed)
    adj = np.zeros((n, n), dtype=np.uint8)
    n_set = 0
    while n_set < k_edges:
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        if i == j or adj[i, j] == 1:
            continue
        adj[i, j] = 1
        adj[j, i] = 1
        n_set += 1
    return DirectedGraph(adjacency=adj)


def gen_watts_strogatz(n: int, k: int, p: float, seed: int) -> DirectedGraph:
    """Ring lattice with each clockwise edge rewired with probability p."""
    if k % 2 != 0 or not 0 < k < n:
        raise InvalidArgumentError("watts-strogatz needs even k with 0 < k < n")
    rng = np.random.default_rng(seed)
    adj = ring_lattice(n, k).adjacency.copy()
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            if rng.random() >= p:
                continue
            if adj[i].sum() >= n - 1:
                continue  # node saturated; nothing to rewire to
            while True:
                t = int(rng.integers(n))
                if t != i and adj[i, t] == 0:
                    break
            adj[i, j] = 0
            adj[j, i] = 0
            adj[i, t] = 1
            adj[t, i] = 1
    return DirectedGraph(adjacency=adj)


def gen_barabasi_albert(n: int, k: int, seed: int) -> DirectedGraph:
    """Preferential attachment from a complete seed graph on k nodes.

    Each new node attaches k distinct undirected edges to existing nodes with
    probability proportional to their degree; duplicate targets are re-drawn.
    """
    if not 1 <= k < n:
        raise InvalidArgumentError("barabasi-albert needs 1 <= k < n")
    rng = np.random.default_rng(seed)
    adj = np.zeros((n, n), dtype=np.uint8)
    adj[:k, :k] = 1
    np.fill_diagonal(adj, 0)
    degrees = adj.sum(axis=1).astype(np.float64)
    for i in range(k, n):
        targets: set[int] = set()
        while len(targets) < k:
            total = degrees[:i].sum()
            if total <= 0:
                j = int(rng.integers(i))  # degenerate seed (k = 1): uniform
            else:
                j = int(rng.choice(i, p=degrees[:i] / total))
            if j in targets:
                continue
            targets.add(j)
        for j in targets:
            adj[i, j] = 1
            adj[j, i] = 1
            degrees[i] += 1
            degrees[j] += 1
    return DirectedGraph(adjacency=adj)


def gen_geohub(n: int, k: int, n_readout: int, seed: int) -> DirectedGraph:
    """Directed generator mimicking geometrically pruned network topology.

    Starts from a complete directed graph on the readout nodes. Phase 1 draws
    k/2 edges out of every node whose targets are selected preferentially by
    in-degree, with readout targets boosted by k/2, concentrating incoming
    edges on readout hubs. Phase 2 draws k/2 edges into every node whose
    sources are selected by total degree plus k/4, which spreads outgoing
    connectivity. A stability constant of 0.05 is added to each degree when
    forming the selection probabilities; duplicate or self-loop draws are
    retried a bounded number of times, then skipped.
    """
    if k % 2 != 0 or k < 2:
        raise InvalidArgumentError("geohub needs even k >= 2")
    if not 1 <= n_readout <= n:
        raise InvalidArgumentError("need 1 <= n_readout <= n")
    rng = np.random.default_rng(seed)
    adj = np.zeros((n, n), dtype=np.uint8)
    adj[:n_readout, :n_readout] = 1
    np.fill_diagonal(adj, 0)
    k_in = adj.sum(axis=0).astype(np.float64)
    k_out = adj.sum(axis=1).astype(np.float64)

    def draw(weights: np.ndarray) -> int:
        return int(rng.choice(n, p=weights / weights.sum()))

    for i in range(n):
        for _ in range(k // 2):
            weights = k_in + 0.05
            weights[:n_readout] += k / 2.0
            for _attempt in range(MAX_REDRAWS):
                j = draw(weights)
                if j != i and adj[i, j] == 0:
                    adj[i, j] = 1
                    k_in[j] += 1.0
                    k_out[i] += 1.0
                    break
    for i in range(n):
        for _ in range(k // 2):
            weights = k_in + k_out + 0.1 + k / 4.0
            for _attempt in range(MAX_REDRAWS):
                j = draw(weights)
                if j != i and adj[j, i] == 0:
                    adj[j, i] = 1
                    k_out[j] += 1.0
                    k_in[i] += 1.0
                    break
    return DirectedGraph(adjacency=adj)


def generate_topology(
    kind: str, n: int, seed: int, target_entries: int | None = None, **params
) -> DirectedGraph:
    """Build a named topology, optionally adjusted to an exact entry count.

    Generator parameters are chosen from ``target_entries`` when not given
    explicitly; the result is then trimmed/padded with uniformly random edges
    to hit the target exactly (so sparsity is matched across topologies).
    """
    if kind not in GENERATORS:
        raise InvalidArgumentError(f"unknown topology {kind!r}; valid: {GENERATORS}")
    if kind == "er":
        k_edges = params.get("k_edges")
        if k_edges is None:
            if target_entries is None:
                raise InvalidArgumentError("er needs k_edges or target_entries")
            k_edges = max(1, round(target_entries / 2))
        g = gen_erdos_renyi(n, k_edges, seed)
    elif kind == "ws":
        k = params.get("k")
        if k is None:
            if target_entries is None:
                raise InvalidArgumentError("ws needs k or target_entries")
            k = max(2, int(round(target_entries / (2 * n))) * 2)
        g = gen_watts_strogatz(n, k, params.get("p", 0.1), seed)
    elif kind == "ba":
        k = params.get("k")
        if k is None:
            if target_entries is None:
                raise InvalidArgumentError("ba needs k or target_entries")
            # entries(k) = 2 [k(k-1)/2 + (n-k) k]; pick the closest k
            best = min(
                range(1, n),
                key=lambda kk: abs(kk * (kk - 1) + 2 * (n - kk) * kk - target_entries),
            )
            k = best
        g = gen_barabasi_albert(n, k, seed)
    else:
        k = params.get("k")
        n_readout = params.get("n_readout", 3)
        if k is None:
            if target_entries is None:
                raise InvalidArgumentError("geohub needs k or target_entries")
            k = max(
                2,
                int(round((target_entries - n_readout * (n_readout - 1)) / (2 * n))) * 2,
            )
        g = gen_geohub(n, k, n_readout, seed)
    if target_entries is not None:
        g = match_entry_count(g, target_entries, derive_seed(seed, "count-match"))
    return g


def match_entry_count(g: DirectedGraph, target: int, seed: int) -> DirectedGraph:
    """Add or remove uniformly random off-diagonal edges to hit an exact count."""
    n = g.n
    if not 0 <= target <= n * (n - 1):
        raise InvalidArgumentError("target entry count out of range")
    adj = g.adjacency.copy()
    rng = np.random.default_rng(seed)
    current = int(adj.sum())
    off_diag = ~np.eye(n, dtype=bool)
    if current > target:
        set_idx = np.flatnonzero((adj == 1) & off_diag)
        drop = rng.choice(set_idx, size=current - target, replace=False)
        adj.ravel()[drop] = 0
    elif current < target:
        unset_idx = np.flatnonzero((adj == 0) & off_diag)
        add = rng.choice(unset_idx, size=target - current, replace=False)
        adj.ravel()[add] = 1
    return DirectedGraph(adjacency=adj)


GRAPH_STATS_HEADER = (
    "graph_id,n,edges,L,C,swi,unreachable_frac,max_in_deg,max_out_deg"
)


def graph_stats_row(graph_id: str, g: DirectedGraph, stats: GraphStats) -> str:
    """One row of the graph-stats CSV."""
    return (
        f"{graph_id},{g.n},{g.n_edges},{stats.avg_path_length!r},"
        f"{stats.clustering!r},{stats.swi!r},{stats.unreachable_frac!r},"
        f"{int(stats.in_degrees.max())},{int(stats.out_degrees.max())}"
    )
