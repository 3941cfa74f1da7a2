import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from homnet.errors import InfeasibleError
from homnet.graph import (SocialGraph, adamic_adar, common_neighbors, density, jaccard,
                          numeric_assortativity, pair_indices)

from conftest import random_graph


def stub_pearson(g, x):
    """Plain-Python Pearson over both orientations of every edge."""
    a, b = [], []
    for u, v in g.edges.tolist():
        a += [x[u], x[v]]
        b += [x[v], x[u]]
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    cov = sum((p - ma) * (q - mb) for p, q in zip(a, b))
    va = sum((p - ma) ** 2 for p in a)
    vb = sum((q - mb) ** 2 for q in b)
    return cov / math.sqrt(va * vb)


def test_graph_invariants():
    g = SocialGraph([[0, 1], [1, 0], [2, 3], [1, 1]], 5)
    assert g.m_edges == 2 and g.n_nodes == 5
    assert (g.adj != g.adj.T).nnz == 0
    assert g.degree.sum() == 2 * g.m_edges
    assert g.neighbors(1).tolist() == [0] and g.neighbors(4).tolist() == []
    assert g.has_edge(3, 2) and not g.has_edge(0, 2)


def test_density_cases():
    assert density(SocialGraph([[0, 1], [1, 2], [0, 2]])) == 1.0
    assert density(SocialGraph(np.zeros((0, 2)), 4)) == 0.0
    assert density(SocialGraph([[0, 1], [1, 2], [2, 3]])) == 0.5
    with pytest.raises(InfeasibleError):
        density(SocialGraph(np.zeros((0, 2)), 1))


def test_assortativity_perfect_and_disassortative():
    g = SocialGraph([[0, 1], [2, 3], [4, 5]])
    assert numeric_assortativity(g, [0, 0, 1, 1, 0, 0]) == pytest.approx(1.0)
    bip = SocialGraph([[0, 2], [0, 3], [1, 2], [1, 3]])
    assert numeric_assortativity(bip, [0, 0, 1, 1]) == pytest.approx(-1.0)


def test_assortativity_path():
    assert numeric_assortativity(SocialGraph([[0, 1], [1, 2]]), [1, 2, 3]) == pytest.approx(0.0, abs=1e-15)


def test_assortativity_zero_variance_is_undefined():
    assert numeric_assortativity(SocialGraph([[0, 1], [1, 2]]), [4, 4, 4]) is None


def test_assortativity_needs_edges():
    with pytest.raises(InfeasibleError):
        numeric_assortativity(SocialGraph(np.zeros((0, 2)), 3), [1, 2, 3])


def test_assortativity_matches_networkx():
    rng = np.random.default_rng(1)
    g = random_graph(rng, 40, 0.15)
    x = rng.normal(size=40)
    h = nx.Graph()
    h.add_nodes_from(range(40))
    h.add_edges_from(g.edges.tolist())
    nx.set_node_attributes(h, {i: float(x[i]) for i in range(40)}, "x")
    assert numeric_assortativity(g, x) == pytest.approx(nx.numeric_assortativity_coefficient(h, "x"), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 10), st.floats(-5, 5))
def test_assortativity_affine(seed, a, b):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 25, 0.2)
    if g.m_edges == 0:
        return
    x = rng.random(25)
    r = numeric_assortativity(g, x)
    if r is None:
        return
    assert numeric_assortativity(g, a * x + b) == pytest.approx(r, abs=1e-9)
    # both endpoints are transformed, so a negative scale cancels in cov/var
    assert numeric_assortativity(g, -a * x + b) == pytest.approx(r, abs=1e-9)
    assert r == pytest.approx(stub_pearson(g, x.tolist()), abs=1e-12)


def test_neighbor_indices_cases():
    g = SocialGraph([[0, 2], [1, 2]], 4)
    assert common_neighbors(g, 0, 1) == 1
    assert adamic_adar(g, 0, 1) == pytest.approx(1 / math.log(2))
    assert jaccard(g, 0, 1) == 1.0
    assert (common_neighbors(g, 3, 3), jaccard(g, 3, 3), adamic_adar(g, 3, 3)) == (0, 0.0, 0.0)
    iso = SocialGraph(np.zeros((0, 2)), 2)
    assert (common_neighbors(iso, 0, 1), jaccard(iso, 0, 1), adamic_adar(iso, 0, 1)) == (0, 0.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_pair_indices_match_networkx(seed):
    rng = np.random.default_rng(seed)
    n = 20
    g = random_graph(rng, n, 0.25)
    h = nx.Graph()
    h.add_nodes_from(range(n))
    h.add_edges_from(g.edges.tolist())
    pairs = rng.integers(0, n, (30, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    got = pair_indices(g, pairs)
    ebunch = [tuple(p) for p in pairs.tolist()]
    jac = [s for *_, s in nx.jaccard_coefficient(h, ebunch)]
    aa = [s for *_, s in nx.adamic_adar_index(h, ebunch)]
    cn = [len(list(nx.common_neighbors(h, u, v))) for u, v in ebunch]
    assert np.allclose(got[:, 0], cn) and np.allclose(got[:, 1], jac) and np.allclose(got[:, 2], aa)
    for (u, v), row in zip(ebunch, got):
        assert row[0] == common_neighbors(g, u, v) == common_neighbors(g, v, u)
        assert row[1] == pytest.approx(jaccard(g, v, u))
        assert row[2] == pytest.approx(adamic_adar(g, v, u))
        assert 0 <= row[1] <= 1 and row[2] >= 0


def test_without_edges():
    g = SocialGraph([[0, 1], [1, 2], [2, 3]])
    h = g.without_edges([[2, 1]])
    assert h.edges.tolist() == [[0, 1], [2, 3]] and h.n_nodes == 4
