"""
Weighted Digraph Module
Graph model, the entrywise square root matrix representation, balancing by
descent of the unbalanced energy, and graph I/O

A graph with weights w_ij is represented by A with a_ij = sqrt(w_ij), so
row i of A has squared norm equal to the out-weight of node i and column i
the in-weight. Descent of B(A) never creates entries, so balancing never
adds edges.
"""

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Tuple

import networkx as nx
import numpy as np
from scipy.spatial import Delaunay

from config import EDGE_ZERO_RTOL
from modules.errors import GraphFormatError
from modules.flows import Energy, FlowConfig, FlowKind, descend, spectrum_drift
from modules.matrix_core import Matrix, as_matrix, node_imbalances

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightedDigraph:
    """
    Immutable weighted digraph with at most one edge per ordered pair

    edges are (src, dst, weight) triples over node indices, sorted by
    (src, dst). Use from_edges() to merge parallel edges.
    """

    node_labels: Tuple[str, ...]
    edges: Tuple[Tuple[int, int, float], ...]

    def __post_init__(self):
        if len(set(self.node_labels)) != len(self.node_labels):
            raise GraphFormatError("duplicate node label")
        n = len(self.node_labels)
        seen = set()
        for src, dst, weight in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise GraphFormatError(f"edge ({src}, {dst}) references a node outside [0, {n})")
            if not math.isfinite(weight) or weight < 0:
                raise GraphFormatError(f"edge ({src}, {dst}) has invalid weight {weight}")
            if (src, dst) in seen:
                raise GraphFormatError(f"parallel edge ({src}, {dst}); build the graph with from_edges()")
            seen.add((src, dst))

    @property
    def n(self):
        return len(self.node_labels)

    @classmethod
    def from_edges(cls, node_labels, edges):
        """
        Build a graph, merging parallel edges by adding their weights

        Args:
            node_labels: iterable of unique strings
            edges: iterable of (src_index, dst_index, weight)
        """
        merged = {}
        for src, dst, weight in edges:
            weight = float(weight)
            if not math.isfinite(weight) or weight < 0:
                raise GraphFormatError(f"edge ({src}, {dst}) has invalid weight {weight}")
            key = (int(src), int(dst))
            merged[key] = merged.get(key, 0.0) + weight
        ordered = tuple((s, d, w) for (s, d), w in sorted(merged.items()))
        return cls(tuple(str(label) for label in node_labels), ordered)

    def edge_set(self):
        return {(s, d) for s, d, _ in self.edges}

    def total_weight(self):
        return float(sum(w for _, _, w in self.edges))

    def weight_matrix(self):
        w = np.zeros((self.n, self.n))
        for src, dst, weight in self.edges:
            w[src, dst] = weight
        return w

    def imbalances(self):
        """Out-weight minus in-weight per node"""
        w = self.weight_matrix()
        return w.sum(axis=1) - w.sum(axis=0)


@dataclass(frozen=True)
class BalanceReport:
    max_imbalance: float
    total_weight: float
    edges_preserved: bool
    iterations: int
    converged: bool
    scale: float = 1.0
    vanished_edges: int = 0
    spectrum_drift: float = 0.0

    def to_json(self):
        return {
            "max_imbalance": self.max_imbalance,
            "total_weight": self.total_weight,
            "edges_preserved": self.edges_preserved,
            "iterations": self.iterations,
            "converged": self.converged,
            "scale": self.scale,
            "vanished_edges": self.vanished_edges,
            "spectrum_drift": self.spectrum_drift,
        }


# ---------------------------------------------------------------------------
# Matrix representation
# ---------------------------------------------------------------------------

def to_sqrt_matrix(G):
    """Real-tagged matrix with entries sqrt(w_ij), exactly 0.0 where there is no edge"""
    a = np.zeros((G.n, G.n))
    for src, dst, weight in G.edges:
        if weight < 0:
            raise GraphFormatError(f"edge ({src}, {dst}) has negative weight {weight}")
        a[src, dst] = math.sqrt(weight)
    return Matrix(a, real=True)


def from_sqrt_matrix(M, edge_mask=None, node_labels=None):
    """
    Square the entries of a real matrix back into edge weights

    Non-zero entries become edges with weight m_ij^2 (the sign of m_ij is
    lost). Zero entries produce no edge.

    Args:
        M: real-tagged Matrix
        edge_mask: optional set of (i, j) pairs; non-zero entries outside it
                   are rejected
        node_labels: optional labels, defaults to "0", "1", ...

    Raises:
        GraphFormatError: complex input or an entry outside the mask
    """
    M = as_matrix(M)
    if not M.realness_tag:
        raise GraphFormatError("graph matrices must be real-tagged")
    labels = tuple(node_labels) if node_labels is not None else tuple(str(i) for i in range(M.d))
    if len(labels) != M.d:
        raise GraphFormatError(f"expected {M.d} node labels, got {len(labels)}")

    edges = []
    rows, cols = np.nonzero(M.entries)
    for i, j in zip(rows.tolist(), cols.tolist()):
        if edge_mask is not None and (i, j) not in edge_mask:
            raise GraphFormatError(f"non-zero entry at ({i}, {j}) outside the edge mask")
        value = float(M.entries[i, j])
        edges.append((i, j, value * value))
    return WeightedDigraph.from_edges(labels, edges)


def is_dag(G):
    """True iff the positive-weight edges form no directed cycle (self-loops count)"""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(G.n))
    graph.add_edges_from((s, d) for s, d, w in G.edges if w > 0)
    return nx.is_directed_acyclic_graph(graph)


# ---------------------------------------------------------------------------
# Balancing
# ---------------------------------------------------------------------------

def balance(G, constrained=False, config=None, callback=None):
    """
    Balance a weighted digraph by gradient descent of the unbalanced energy

    The constrained variant runs on the unit sphere after dividing the
    weights by the total weight, then scales back, so the total weight is
    kept. The unconstrained variant sheds weight; on a DAG it drives every
    weight to zero.

    Args:
        G: WeightedDigraph
        constrained: keep the total weight
        config: FlowConfig; its kind is replaced by the unbalanced kind
        callback: optional callable(iteration, weights) at recorded samples,
                  weights being the d x d weight matrix at that iterate

    Returns:
        (balanced WeightedDigraph, BalanceReport)
    """
    flow_config = replace(config or FlowConfig(), kind=FlowKind(Energy.UNBALANCED, constrained))
    A0 = to_sqrt_matrix(G)
    total_in = G.total_weight()

    if total_in == 0.0:
        report = BalanceReport(0.0, 0.0, True, 0, True)
        return WeightedDigraph.from_edges(G.node_labels, []), report

    scale = math.sqrt(total_in) if constrained else 1.0
    if constrained and is_dag(G):
        logger.warning("constrained balancing of a DAG: the flow starts at a nilpotent matrix and may stall")

    on_sample = None
    if callback is not None:
        def on_sample(iteration, A):
            callback(iteration, (A.entries * scale) ** 2)

    result = descend(Matrix(A0.entries / scale, real=True), flow_config, callback=on_sample)
    limit = result.limit.entries * scale

    weights = limit * limit
    threshold = EDGE_ZERO_RTOL * total_in
    kept = [(s, d, float(weights[s, d])) for s, d in zip(*np.nonzero(weights)) if weights[s, d] >= threshold]
    vanished = len(G.edges) - len(kept)
    balanced = WeightedDigraph.from_edges(G.node_labels, [(int(s), int(d), w) for s, d, w in kept])

    if not kept:
        logger.warning("balancing drove all edge weights to zero (the graph is acyclic)")

    limit_matrix = Matrix(limit, real=True)
    report = BalanceReport(
        max_imbalance=float(np.max(np.abs(node_imbalances(limit_matrix)))),
        total_weight=float(np.sum(weights)),
        edges_preserved=balanced.edge_set() <= G.edge_set() and result.audit.zero_pattern_preserved,
        iterations=result.iterations,
        converged=result.converged,
        scale=total_in if constrained else 1.0,
        vanished_edges=vanished,
        spectrum_drift=spectrum_drift(A0, limit_matrix),
    )
    logger.info(
        "balanced %d nodes / %d edges: max imbalance %.3e, total weight %.6g",
        G.n, len(balanced.edges), report.max_imbalance, report.total_weight,
    )
    return balanced, report


# ---------------------------------------------------------------------------
# Random fixtures
# ---------------------------------------------------------------------------

def random_digraph(n, m, seed, strongly_connected=True):
    """
    Seeded random weighted digraph without self-loops

    Weights are absolute values of standard Gaussians. With
    strongly_connected, a random Hamiltonian cycle is laid down first.

    Args:
        n: node count
        m: number of distinct ordered pairs, at most n(n-1)
        seed: integer seed
    """
    if m > n * (n - 1):
        raise GraphFormatError(f"cannot place {m} edges on {n} nodes without self-loops")
    rng = np.random.default_rng(seed)
    pairs = []
    seen = set()

    if strongly_connected and n > 1:
        if m < n:
            raise GraphFormatError(f"a strongly connected graph on {n} nodes needs at least {n} edges")
        order = rng.permutation(n)
        for k in range(n):
            pair = (int(order[k]), int(order[(k + 1) % n]))
            pairs.append(pair)
            seen.add(pair)

    while len(pairs) < m:
        src, dst = (int(x) for x in rng.integers(0, n, size=2))
        if src == dst or (src, dst) in seen:
            continue
        pairs.append((src, dst))
        seen.add((src, dst))

    weights = np.abs(rng.standard_normal(len(pairs)))
    labels = [f"v{i}" for i in range(n)]
    return WeightedDigraph.from_edges(labels, [(s, d, w) for (s, d), w in zip(pairs, weights)])


def random_dag(n, m, seed):
    """Seeded random weighted DAG: edges only run forward in a random node order"""
    if m > n * (n - 1) // 2:
        raise GraphFormatError(f"a DAG on {n} nodes has at most {n * (n - 1) // 2} edges")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    seen = set()
    while len(seen) < m:
        i, j = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
        seen.add((int(order[i]), int(order[j])))
    pairs = sorted(seen)
    weights = np.abs(rng.standard_normal(len(pairs)))
    labels = [f"v{i}" for i in range(n)]
    return WeightedDigraph.from_edges(labels, [(s, d, w) for (s, d), w in zip(pairs, weights)])


def random_planar_digraph(n, seed):
    """
    Seeded planar digraph on the Delaunay triangulation of n random points

    The points are uniform in the unit square and every triangulation edge
    becomes one directed edge. Orientation comes from a depth-first search
    from a random root over a shuffled adjacency: tree edges point away
    from the root, every other edge points back to its ancestor. A
    triangulation has no bridges, so the result is strongly connected and
    each edge lies on a directed cycle. Weights are absolute values of
    standard Gaussians.

    Args:
        n: node count, at least 3
        seed: integer seed
    """
    if n < 3:
        raise GraphFormatError(f"a triangulation needs at least 3 points, got {n}")
    rng = np.random.default_rng(seed)
    triangulation = Delaunay(rng.random((n, 2)))
    pairs = sorted({
        tuple(sorted((int(simplex[a]), int(simplex[b]))))
        for simplex in triangulation.simplices
        for a, b in ((0, 1), (1, 2), (0, 2))
    })

    undirected = nx.Graph()
    undirected.add_nodes_from(range(n))
    undirected.add_edges_from(pairs[k] for k in rng.permutation(len(pairs)))
    root = int(rng.integers(n))
    tree = nx.dfs_tree(undirected, source=root)
    depth = nx.shortest_path_length(tree, source=root)

    oriented = []
    for u, v in pairs:
        if tree.has_edge(u, v) or (not tree.has_edge(v, u) and depth[u] > depth[v]):
            oriented.append((u, v))
        else:
            oriented.append((v, u))

    weights = np.abs(rng.standard_normal(len(oriented)))
    labels = [f"v{i}" for i in range(n)]
    return WeightedDigraph.from_edges(labels, [(s, d, w) for (s, d), w in zip(oriented, weights)])


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def read_edge_list(path):
    """
    Read `src<TAB>dst<TAB>weight` lines

    '#' comment lines and blank lines are skipped; labels are numbered in
    first-seen order; repeated ordered pairs have their weights summed.

    Raises:
        GraphFormatError: malformed line (with its line number) or bad weight
    """
    index = {}
    edges = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) != 3:
                raise GraphFormatError(f"expected 3 tab-separated fields, got {len(fields)}", line=lineno)
            src, dst, raw_weight = (field.strip() for field in fields)
            if not src or not dst:
                raise GraphFormatError("empty node label", line=lineno)
            try:
                weight = float(raw_weight)
            except ValueError:
                raise GraphFormatError(f"weight '{raw_weight}' is not a number", line=lineno)
            if not math.isfinite(weight) or weight < 0:
                raise GraphFormatError(f"weight must be finite and non-negative, got {raw_weight}", line=lineno)
            for label in (src, dst):
                if label not in index:
                    index[label] = len(index)
            edges.append((index[src], index[dst], weight))

    labels = sorted(index, key=index.get)
    return WeightedDigraph.from_edges(labels, edges)


def write_edge_list(G, path):
    """Write one `src<TAB>dst<TAB>weight` line per edge (isolated nodes are not representable)"""
    for label in G.node_labels:
        if "\t" in label or "\n" in label or label.startswith("#"):
            raise GraphFormatError(f"label {label!r} cannot be written to an edge list")
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {G.n} nodes, {len(G.edges)} edges\n")
        for src, dst, weight in G.edges:
            f.write(f"{G.node_labels[src]}\t{G.node_labels[dst]}\t{weight!r}\n")


def graph_to_json(G):
    return {"nodes": list(G.node_labels), "edges": [[s, d, w] for s, d, w in G.edges]}


def graph_from_json(obj):
    if not isinstance(obj, dict) or "nodes" not in obj or "edges" not in obj:
        raise GraphFormatError("graph JSON needs 'nodes' and 'edges' fields")
    labels = obj["nodes"]
    if not isinstance(labels, list) or not all(isinstance(label, str) for label in labels):
        raise GraphFormatError("'nodes' must be a list of strings")
    if len(set(labels)) != len(labels):
        raise GraphFormatError("duplicate node label in 'nodes'")
    if not isinstance(obj["edges"], list):
        raise GraphFormatError("'edges' must be a list")
    edges = []
    for k, edge in enumerate(obj["edges"]):
        if not isinstance(edge, list) or len(edge) != 3:
            raise GraphFormatError(f"edges[{k}] must be [src, dst, weight]")
        src, dst, weight = edge
        # bool is an int subclass; JSON true/false are not node indices
        for end in (src, dst):
            if isinstance(end, bool) or not isinstance(end, int):
                raise GraphFormatError(f"edges[{k}]: node index {end!r} is not an integer")
        if isinstance(weight, bool) or not isinstance(weight, (int, float)):
            raise GraphFormatError(f"edges[{k}]: weight {weight!r} is not a number")
        edges.append((src, dst, float(weight)))
    return WeightedDigraph.from_edges(labels, edges)


def read_graph_json(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise GraphFormatError(f"{path}: invalid JSON ({e})")
    return graph_from_json(obj)


def write_graph_json(G, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(graph_to_json(G), f, indent=2)


def read_graph(path):
    """Dispatch on extension: .json is Graph JSON, anything else an edge list"""
    if str(path).lower().endswith(".json"):
        return read_graph_json(path)
    return read_edge_list(path)
