"""Homophily measurement against a stratified configuration-model null.

Nodes carry a *triple* code ``9*m + 3*n + d`` built from their low/mid/high
groups for the representative M, N and D features. A *stratum* is an
unordered pair of triple codes; rewiring shuffles stubs within each stratum,
so degrees and per-stratum edge counts are exactly those of the input.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

from .features import FEATURES, LEVELS, REPRESENTATIVE, UserFeatureTable
from .graph import SocialGraph, density, numeric_assortativity
from .profiles import edge_dots

log = logging.getLogger(__name__)

N_TRIPLES = 27
EXACT_MAX_N = 20


def triple_codes(table: UserFeatureTable, features=REPRESENTATIVE) -> np.ndarray:
    m, n, d = (np.asarray(table.groups[f], dtype=np.int64) for f in features)
    return 9 * m + 3 * n + d


def triple_name(code: int) -> tuple[str, str, str]:
    return LEVELS[code // 9], LEVELS[(code // 3) % 3], LEVELS[code % 3]


def stratum_keys(edges: np.ndarray, codes: np.ndarray) -> np.ndarray:
    a = codes[edges[:, 0]]
    b = codes[edges[:, 1]]
    return np.minimum(a, b) * N_TRIPLES + np.maximum(a, b)


@dataclass
class RewireReport:
    seed: int
    n_strata: int = 0
    fallback_strata: list[int] = field(default_factory=list)
    fallback_edges: int = 0
    attempts: int = 0

    def fallback_fraction(self, m_edges: int) -> float:
        return self.fallback_edges / m_edges if m_edges else 0.0


def _bad_pairs(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """Indices of self-loops and of every repeat of an earlier pair."""
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    key = lo * n + hi
    order = np.argsort(key, kind="stable")
    ks = key[order]
    dup = np.zeros(len(key), dtype=bool)
    dup[order[1:]] = ks[1:] == ks[:-1]
    return np.flatnonzero(dup | (a == b))


def _shuffle_stratum(a, b, same, rng, n, max_retries, repair_rounds):
    """Randomize one stratum. Returns ``(a, b, attempts)`` or ``None``.

    Each attempt is a fresh stub shuffle followed by a bounded number of
    repair passes that swap a conflicting stub with a random other stub.
    """
    m = len(a)
    for attempt in range(1, max_retries + 1):
        if same:
            stubs = rng.permutation(np.concatenate([a, b]))
            na, nb = stubs[0::2].copy(), stubs[1::2].copy()
        else:
            na, nb = a.copy(), b[rng.permutation(m)]
        for _ in range(repair_rounds):
            bad = _bad_pairs(na, nb, n)
            if len(bad) == 0:
                return na, nb, attempt
            for i in bad.tolist():
                if same:
                    r = int(rng.integers(2 * m))
                    j, side = r >> 1, r & 1
                    if side:
                        nb[i], nb[j] = nb[j], nb[i]
                    else:
                        nb[i], na[j] = na[j], nb[i]
                else:
                    j = int(rng.integers(m))
                    nb[i], nb[j] = nb[j], nb[i]
        if len(_bad_pairs(na, nb, n)) == 0:
            return na, nb, attempt
    return None


def rewire_preserving(g: SocialGraph, codes, seed: int = 0, max_retries: int = 100,
                      repair_rounds: int = 20) -> tuple[SocialGraph, RewireReport]:
    """Degree- and stratum-preserving randomization of ``g``.

    Strata that cannot be made simple within ``max_retries`` shuffles keep
    their original edges; the report lists them.
    """
    codes = np.asarray(codes, dtype=np.int64)
    if len(codes) < g.n_nodes:
        raise ValueError("triple codes must cover every node")
    rng = np.random.default_rng(seed)
    report = RewireReport(seed)
    e = g.edges
    keys = stratum_keys(e, codes)
    # orient every edge so the endpoint with the smaller code comes first
    flip = codes[e[:, 0]] > codes[e[:, 1]]
    a = np.where(flip, e[:, 1], e[:, 0])
    b = np.where(flip, e[:, 0], e[:, 1])
    order = np.argsort(keys, kind="stable")
    bounds = np.flatnonzero(np.diff(keys[order])) + 1
    out = []
    for idx in np.split(order, bounds):
        if len(idx) == 0:
            continue
        k = int(keys[idx[0]])
        report.n_strata += 1
        same = k // N_TRIPLES == k % N_TRIPLES
        res = _shuffle_stratum(a[idx], b[idx], same, rng, g.n_nodes, max_retries, repair_rounds)
        if res is None:
            report.fallback_strata.append(k)
            report.fallback_edges += len(idx)
            report.attempts += max_retries
            out.append(np.column_stack([a[idx], b[idx]]))
        else:
            na, nb, attempts = res
            report.attempts += attempts
            out.append(np.column_stack([na, nb]))
    new_edges = np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)
    if report.fallback_edges:
        log.warning("rewiring seed %d: %d strata (%d edges) kept original edges",
                    seed, len(report.fallback_strata), report.fallback_edges)
    return SocialGraph(new_edges, g.n_nodes), report


@dataclass
class OEMatrix:
    feature: str
    observed: np.ndarray
    group_sizes: np.ndarray
    density: float
    expected_naive: np.ndarray  # p^2 d within, 2 p q d between
    expected_exact: np.ndarray  # p (p - 1) / 2 d within, p q d between

    @property
    def ratio(self) -> np.ndarray:
        return _ratio(self.observed, self.expected_naive)

    @property
    def ratio_exact(self) -> np.ndarray:
        return _ratio(self.observed, self.expected_exact)


def _ratio(obs: np.ndarray, exp: np.ndarray) -> np.ndarray:
    out = np.full(obs.shape, np.nan)
    ok = exp > 0
    out[ok] = obs[ok] / exp[ok]
    return out


def group_pair_counts(g: SocialGraph, groups, k: int = 3) -> np.ndarray:
    grp = np.asarray(groups, dtype=np.int64)
    a, b = grp[g.edges[:, 0]], grp[g.edges[:, 1]]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    c = np.bincount(lo * k + hi, minlength=k * k).reshape(k, k).astype(float)
    return np.triu(c) + np.triu(c, 1).T


def oe_matrix(g: SocialGraph, groups, feature: str = "") -> OEMatrix:
    grp = np.asarray(groups, dtype=np.int64)
    obs = group_pair_counts(g, grp)
    p = np.bincount(grp[:g.n_nodes], minlength=3).astype(float)
    d = density(g)
    outer = np.outer(p, p)
    naive = 2.0 * outer * d
    np.fill_diagonal(naive, p ** 2 * d)
    exact = outer * d
    np.fill_diagonal(exact, p * (p - 1) / 2.0 * d)
    return OEMatrix(feature, obs, p, d, naive, exact)


def group_similarity_matrix(g: SocialGraph, W: np.ndarray, groups) -> np.ndarray:
    """Mean profile dot per group pair over the mean across all edges."""
    grp = np.asarray(groups, dtype=np.int64)
    dots = edge_dots(W, g.edges)
    out = np.full((3, 3), np.nan)
    if len(dots) == 0:
        return out
    overall = dots.mean()
    a, b = grp[g.edges[:, 0]], grp[g.edges[:, 1]]
    cell = np.minimum(a, b) * 3 + np.maximum(a, b)
    sums = np.bincount(cell, weights=dots, minlength=9)
    counts = np.bincount(cell, minlength=9)
    for i in range(3):
        for j in range(i, 3):
            c = counts[3 * i + j]
            if c and overall != 0:
                out[i, j] = out[j, i] = sums[3 * i + j] / c / overall
    return out


# Mann-Whitney U

@dataclass(frozen=True)
class MWUResult:
    U: float
    p: float
    method: str  # "exact" or "normal"


def _doubled_rank_sum_counts(doubled: np.ndarray, n1: int) -> list[dict[int, int]]:
    # counts[k][s]: subsets of size k whose doubled ranks sum to s
    counts: list[dict[int, int]] = [dict() for _ in range(n1 + 1)]
    counts[0][0] = 1
    for r in doubled.tolist():
        for k in range(n1, 0, -1):
            prev = counts[k - 1]
            if not prev:
                continue
            cur = counts[k]
            for s, c in prev.items():
                cur[s + r] = cur.get(s + r, 0) + c
    return counts


def mann_whitney_u(a, b, exact: bool | None = None) -> MWUResult:
    """Two-sided Mann-Whitney U test; U is reported for sample ``a``.

    Ties get midranks. With ``exact=None`` the permutation distribution of
    the rank sum is enumerated when ``len(a) + len(b) <= 20``; otherwise a
    normal approximation with tie and continuity correction is used.
    """
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be nonempty")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("samples must be finite")
    n = n1 + n2
    ranks = rankdata(np.concatenate([x, y]))
    r1 = ranks[:n1].sum()
    U = float(r1 - n1 * (n1 + 1) / 2.0)
    if exact is None:
        exact = n <= EXACT_MAX_N
    if exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        obs = int(doubled[:n1].sum())
        dist = _doubled_rank_sum_counts(doubled, n1)[n1]
        total = comb(n, n1)
        lower = sum(c for s, c in dist.items() if s <= obs)
        upper = sum(c for s, c in dist.items() if s >= obs)
        p = min(1.0, 2.0 * min(lower, upper) / total)
        return MWUResult(U, p, "exact")
    _, t = np.unique(ranks, return_counts=True)
    tie = float(np.sum(t.astype(float) ** 3 - t))
    var = n1 * n2 / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return MWUResult(U, 1.0, "normal")
    z = (abs(U - n1 * n2 / 2.0) - 0.5) / np.sqrt(var)
    p = float(min(1.0, 2.0 * ndtr(-max(z, 0.0))))
    return MWUResult(U, p, "normal")


@dataclass
class SimilarityComparison:
    observed: np.ndarray
    null: np.ndarray
    mean_observed: float
    mean_null: float
    test: MWUResult
    bin_edges: np.ndarray
    hist_observed: np.ndarray
    hist_null: np.ndarray


def edge_similarity_distributions(g: SocialGraph, g_null: SocialGraph, W: np.ndarray,
                                  bins: int = 50) -> SimilarityComparison:
    if g.n_nodes != g_null.n_nodes:
        raise ValueError("graphs must share a node set")
    obs = edge_dots(W, g.edges)
    null = edge_dots(W, g_null.edges)
    both = np.concatenate([obs, null])
    lo, hi = (float(both.min()), float(both.max())) if len(both) else (0.0, 1.0)
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    ho, _ = np.histogram(obs, edges)
    hn, _ = np.histogram(null, edges)
    test = mann_whitney_u(obs, null)
    return SimilarityComparison(obs, null, float(obs.mean()), float(null.mean()), test, edges, ho, hn)


def assortativity_table(g: SocialGraph, table: UserFeatureTable, names=FEATURES) -> dict[str, float | None]:
    return {k: numeric_assortativity(g, table.values[k]) for k in names}
