"""Undirected weighted graphs with a fixed edge orientation.

Nodes are numbered from 1 to n. For the edge (i, j) stored at index k,
node i is the positive end: column k of the incidence matrix holds +1 at
row i and -1 at row j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import networkx as nx
import numpy as np

import hetcon.log
from hetcon.error import HetconError

if TYPE_CHECKING:
    from typing import Any
    from collections.abc import Iterable, Mapping

logger = hetcon.log.getLogger("graph")

# Singular values above this threshold count in a numerical rank
RANK_TOL = 1e-9

# Maximum distance between the least-squares Q and its rounding
ROUNDING_TOL = 1e-6


class GraphError(HetconError):
    pass


class SelfLoopError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class EdgeWeightError(GraphError):
    pass


class NodeIdError(GraphError):
    pass


class DisconnectedGraphError(GraphError):
    pass


class TreeFactorError(GraphError):
    pass


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    weight: float = 1.0

    def to_dict(self) -> dict[str, Any]:
        return {"i": self.i, "j": self.j, "weight": self.weight}


@dataclass(frozen=True)
class Graph:
    """A validated connected graph, see build_graph."""

    n: int
    edges: tuple[Edge, ...]

    @property
    def p(self) -> int:
        return len(self.edges)

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.edges], dtype=float)

    def edge_index(self, i: int, j: int) -> int:
        """Return the index of the edge joining i and j, in any orientation.

        :raise GraphError: when there is no such edge
        """
        for k, edge in enumerate(self.edges):
            if {edge.i, edge.j} == {i, j}:
                return k
        raise GraphError(f"no edge between {i} and {j}", origin="edge_index")

    def to_networkx(self) -> nx.Graph:
        result = nx.Graph()
        result.add_nodes_from(range(1, self.n + 1))
        for k, edge in enumerate(self.edges):
            result.add_edge(edge.i, edge.j, weight=edge.weight, index=k)
        return result

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "edges": [e.to_dict() for e in self.edges]}


def build_graph(n: int, edge_list: Iterable[tuple[int, int, float] | Edge]) -> Graph:
    """Validate a node count and an edge list and return the Graph.

    :param n: number of nodes
    :param edge_list: (i, j, weight) triples; i is the positive end
    :raise GraphError: with a subclass per kind of defect
    """
    if n < 1:
        raise NodeIdError(f"a graph needs at least one node (got {n})", "build_graph")

    edges: list[Edge] = []
    seen: set[frozenset[int]] = set()
    for item in edge_list:
        if isinstance(item, Edge):
            edge = item
        else:
            edge = Edge(int(item[0]), int(item[1]), float(item[2]))
        for node in (edge.i, edge.j):
            if not 1 <= node <= n:
                raise NodeIdError(
                    f"edge ({edge.i}, {edge.j}): node {node} not in 1..{n}",
                    "build_graph",
                )
        if edge.i == edge.j:
            raise SelfLoopError(f"self-loop on node {edge.i}", "build_graph")
        pair = frozenset((edge.i, edge.j))
        if pair in seen:
            raise DuplicateEdgeError(
                f"edge ({edge.i}, {edge.j}) appears more than once", "build_graph"
            )
        if not math.isfinite(edge.weight) or edge.weight <= 0:
            raise EdgeWeightError(
                f"edge ({edge.i}, {edge.j}): weight {edge.weight} is not positive",
                "build_graph",
            )
        seen.add(pair)
        edges.append(edge)

    g = Graph(n=n, edges=tuple(edges))
    if not nx.is_connected(g.to_networkx()):
        components = sorted(sorted(c) for c in nx.connected_components(g.to_networkx()))
        raise DisconnectedGraphError(
            f"graph is not connected, components: {components}", "build_graph"
        )
    logger.debug("graph with %d nodes and %d edges", g.n, g.p)
    return g


def flip_edge(g: Graph, k: int) -> Graph:
    """Return g with the orientation of edge k reversed."""
    edges = list(g.edges)
    edges[k] = Edge(edges[k].j, edges[k].i, edges[k].weight)
    return Graph(n=g.n, edges=tuple(edges))


def relabel(g: Graph, perm: Mapping[int, int]) -> Graph:
    """Return g with node i renamed perm[i], keeping the edge order.

    :param perm: a bijection of 1..n
    """
    if sorted(perm.keys()) != list(range(1, g.n + 1)) or sorted(perm.values()) != list(
        range(1, g.n + 1)
    ):
        raise NodeIdError(f"{dict(perm)} is not a permutation of 1..{g.n}", "relabel")
    return Graph(
        n=g.n,
        edges=tuple(Edge(perm[e.i], perm[e.j], e.weight) for e in g.edges),
    )


def incidence_matrix(g: Graph) -> np.ndarray:
    """Return the n x p incidence matrix of g as integers."""
    D = np.zeros((g.n, g.p), dtype=int)
    for k, edge in enumerate(g.edges):
        D[edge.i - 1, k] = 1
        D[edge.j - 1, k] = -1
    return D


def laplacian(g: Graph) -> np.ndarray:
    """Return the unweighted Laplacian degree - adjacency of g.

    :raise GraphError: if L differs from D D^T
    """
    adjacency = np.zeros((g.n, g.n), dtype=int)
    for edge in g.edges:
        adjacency[edge.i - 1, edge.j - 1] = 1
        adjacency[edge.j - 1, edge.i - 1] = 1
    L = np.diag(adjacency.sum(axis=1)) - adjacency

    D = incidence_matrix(g)
    if not np.array_equal(L, D @ D.T):  # defensive code
        raise GraphError("Laplacian differs from D D^T", origin="laplacian")
    return L


def weighted_coupling(g: Graph) -> np.ndarray:
    """Return the coupling matrix D Psi D^T, Psi = diag of edge weights."""
    D = incidence_matrix(g).astype(float)
    return D @ np.diag(g.weights) @ D.T


@dataclass(frozen=True)
class GraphSpectrum:
    laplacian_eigs: np.ndarray
    lambda2: float
    rank_L: int


def spectrum(g: Graph) -> GraphSpectrum:
    """Return the Laplacian spectrum of g in ascending order."""
    L = laplacian(g)
    eigs = np.linalg.eigvalsh(L.astype(float))
    rank = int(np.sum(eigs > RANK_TOL))
    return GraphSpectrum(
        laplacian_eigs=eigs,
        lambda2=float(eigs[1]) if g.n > 1 else 0.0,
        rank_L=rank,
    )


def lambda2(g: Graph) -> float:
    """Return the algebraic connectivity of g.

    :raise GraphError: when g has a single node
    """
    if g.n < 2:
        raise GraphError("algebraic connectivity needs two nodes", origin="lambda2")
    return spectrum(g).lambda2


@dataclass(frozen=True)
class SpanningTree:
    root: int
    tree_edges: tuple[int, ...]
    D_ST: np.ndarray


@dataclass(frozen=True)
class TreeFactor:
    tree_edges: tuple[int, ...]
    D_ST: np.ndarray
    Q: np.ndarray


def spanning_tree(g: Graph, root: int = 1) -> SpanningTree:
    """Return the breadth-first spanning tree of g.

    Neighbors are visited in ascending node id so that the tree only
    depends on g and root. Tree edges keep their orientation in g and are
    listed by increasing edge index.

    :param root: node the search starts from
    :raise DisconnectedGraphError: when g is not connected
    """
    if not 1 <= root <= g.n:
        raise NodeIdError(f"root {root} not in 1..{g.n}", "spanning_tree")
    nxg = g.to_networkx()
    tree_edges = sorted(
        nxg.edges[u, v]["index"]
        for u, v in nx.bfs_edges(nxg, root, sort_neighbors=sorted)
    )
    if len(tree_edges) != g.n - 1:
        raise DisconnectedGraphError(
            f"only {len(tree_edges) + 1} of {g.n} nodes reachable from {root}",
            "spanning_tree",
        )
    D = incidence_matrix(g)
    logger.debug("spanning tree from node %d: edges %s", root, tree_edges)
    return SpanningTree(root=root, tree_edges=tuple(tree_edges), D_ST=D[:, tree_edges])


def tree_factor(D: np.ndarray, tree: SpanningTree) -> TreeFactor:
    """Return the integer Q such that D = D_ST Q.

    :param D: incidence matrix of the graph
    :param tree: a spanning tree of the same graph
    :raise TreeFactorError: when the tree does not match the graph
    """
    D_ST = tree.D_ST
    n, p = D.shape
    if n == 1:
        Q = np.zeros((0, p), dtype=int)
        return TreeFactor(tree_edges=tree.tree_edges, D_ST=D_ST, Q=Q)

    Df = D_ST.astype(float)
    Q_float = np.linalg.solve(Df.T @ Df, Df.T @ D.astype(float))
    Q = np.rint(Q_float).astype(int)

    residual = float(np.max(np.abs(Q_float - Q))) if Q.size else 0.0
    if residual > ROUNDING_TOL:
        raise TreeFactorError(
            f"least-squares factor is not integral (residual {residual})", "tree_factor"
        )
    if not np.array_equal(D_ST @ Q, D):
        raise TreeFactorError("D_ST Q differs from D", "tree_factor")
    if not np.all(np.isin(Q, (-1, 0, 1))):
        raise TreeFactorError("Q has entries outside {-1, 0, 1}", "tree_factor")
    singular_values = np.linalg.svd(Q.astype(float), compute_uv=False)
    rank = int(np.sum(singular_values > RANK_TOL))
    if rank != n - 1:
        raise TreeFactorError(f"rank(Q) = {rank}, expected {n - 1}", "tree_factor")
    return TreeFactor(tree_edges=tree.tree_edges, D_ST=D_ST, Q=Q)


def write_matrix_csv(path: str, matrix: np.ndarray) -> None:
    """Write a matrix as comma separated values, one row per line.

    :param path: output file
    :param matrix: a 2d array
    """
    fmt = "%d" if np.issubdtype(matrix.dtype, np.integer) else "%.17g"
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt=fmt)
