"""Undirected simple friendship graph, assortativity and neighborhood indices."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleError
from .ingest import EdgeList


class SocialGraph:
    """Immutable undirected simple graph on nodes ``0..n_nodes-1``.

    Adjacency is a symmetric CSR matrix with sorted neighbor columns.
    """

    def __init__(self, edges, n_nodes: int | None = None):
        el = edges if isinstance(edges, EdgeList) else EdgeList(np.asarray(edges))
        self.edges = el.edges.copy()
        self.edges.setflags(write=False)
        need = el.n_nodes
        self.n_nodes = need if n_nodes is None else int(n_nodes)
        if self.n_nodes < need:
            raise ValueError(f"edge endpoints need n_nodes >= {need}")
        u, v = self.edges[:, 0], self.edges[:, 1]
        ones = np.ones(2 * len(u), dtype=np.float64)
        adj = sp.csr_matrix((ones, (np.concatenate([u, v]), np.concatenate([v, u]))),
                            shape=(self.n_nodes, self.n_nodes))
        adj.sort_indices()
        self.adj = adj
        self.degree = np.diff(adj.indptr).astype(np.int64)

    @property
    def m_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, u: int) -> np.ndarray:
        return self.adj.indices[self.adj.indptr[u]:self.adj.indptr[u + 1]]

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def edge_keys(self) -> np.ndarray:
        """``u * n + v`` per stored edge, sorted because edges are."""
        return self.edges[:, 0] * self.n_nodes + self.edges[:, 1]

    def without_edges(self, edges) -> "SocialGraph":
        drop = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
        keys = drop[:, 0] * self.n_nodes + drop[:, 1]
        keep = ~np.isin(self.edge_keys(), keys)
        return SocialGraph(self.edges[keep], self.n_nodes)


def density(g: SocialGraph) -> float:
    n = g.n_nodes
    if n < 2:
        raise InfeasibleError("density needs at least 2 nodes")
    return 2.0 * g.m_edges / (n * (n - 1))


def numeric_assortativity(g: SocialGraph, values) -> float | None:
    """Pearson correlation over both orientations of every edge.

    Returns ``None`` when the endpoint values have zero variance.
    """
    x = np.asarray(values, dtype=np.float64)
    if len(x) < g.n_nodes:
        raise ValueError("values must cover every node")
    if g.m_edges == 0:
        raise InfeasibleError("assortativity needs at least one edge")
    a = x[g.edges[:, 0]]
    b = x[g.edges[:, 1]]
    ends = np.concatenate([a, b])
    mu = ends.mean()
    var = np.mean((ends - mu) ** 2)
    if not var > 0:
        return None
    # averaging (a-mu)(b-mu) over both orientations is the same sum twice
    cov = np.mean((a - mu) * (b - mu))
    return float(np.clip(cov / var, -1.0, 1.0))


def common_neighbors(g: SocialGraph, u: int, v: int) -> int:
    return len(np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True))


def jaccard(g: SocialGraph, u: int, v: int) -> float:
    nu, nv = g.neighbors(u), g.neighbors(v)
    inter = len(np.intersect1d(nu, nv, assume_unique=True))
    union = len(nu) + len(nv) - inter
    return inter / union if union else 0.0


def adamic_adar(g: SocialGraph, u: int, v: int) -> float:
    w = np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True)
    d = g.degree[w]
    d = d[d > 1]
    return float(np.sum(1.0 / np.log(d)))


def pair_indices(g: SocialGraph, pairs) -> np.ndarray:
    """CN, Jaccard and Adamic-Adar for many pairs at once, shape ``(len, 3)``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return np.zeros((0, 3))
    if pairs.min() < 0 or pairs.max() >= g.n_nodes:
        raise IndexError("pair node outside graph")
    A = g.adj
    deg = g.degree.astype(np.float64)
    inv_log = np.zeros(g.n_nodes)
    big = deg > 1
    inv_log[big] = 1.0 / np.log(deg[big])
    common = A[pairs[:, 0]].multiply(A[pairs[:, 1]]).tocsr()
    cn = np.asarray(common.sum(axis=1)).ravel()
    aa = common @ inv_log
    union = deg[pairs[:, 0]] + deg[pairs[:, 1]] - cn
    jac = np.divide(cn, union, out=np.zeros(len(pairs)), where=union > 0)
    return np.column_stack([cn, jac, aa])
