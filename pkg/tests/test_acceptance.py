"""Acceptance criteria, each at its stated tolerance and budget.

Every test records one PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import itertools
import json
import os
import time
from pathlib import Path

import joblib
import numpy as np
import pytest
import scipy.sparse as sp
from scipy.stats import rankdata

from homnet.cli import main
from homnet.features import (REPRESENTATIVE, assign_groups, compute_user_features, genre_features,
                             read_feature_table)
from homnet.graph import SocialGraph, numeric_assortativity
from homnet.homophily import (edge_similarity_distributions, mann_whitney_u, oe_matrix,
                              rewire_preserving, stratum_keys, triple_codes)
from homnet.ingest import load_edges
from homnet.linkpred import STRATIFIED, ExperimentConfig, f1, run_experiment
from homnet.profiles import (build_artist_matrix, build_genre_matrix, l2_normalize_rows, load_dense,
                             nmf)
from homnet.synthetic import SyntheticConfig, generate_synthetic

from conftest import random_graph


def pipeline_inputs(cfg: SyntheticConfig, rank: int = 20):
    log_, gm, edges, _ = generate_synthetic(cfg)
    n = cfg.n_users
    table = compute_user_features(log_, build_genre_matrix(log_, gm, n).data, n, cfg.n_genres)
    W = nmf(l2_normalize_rows(build_artist_matrix(log_, n)), rank, seed=cfg.seed).W
    return SocialGraph(edges, n), table, W


def stub_pearson(g: SocialGraph, x: np.ndarray) -> float:
    a = np.concatenate([x[g.edges[:, 0]], x[g.edges[:, 1]]])
    b = np.concatenate([x[g.edges[:, 1]], x[g.edges[:, 0]]])
    return float(np.corrcoef(a, b)[0, 1])


def test_c1_assortativity_oracle(criterion):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    while checked < 100:
        n = int(rng.integers(3, 51))
        g = random_graph(rng, n, float(rng.uniform(0.05, 0.6)))
        if g.m_edges == 0:
            continue
        x = rng.normal(size=n) * rng.uniform(0.1, 100)
        r = numeric_assortativity(g, x)
        want = stub_pearson(g, x)
        if r is None or not np.isfinite(want):
            continue
        worst = max(worst, abs(r - want))
        checked += 1
    elapsed = time.perf_counter() - t0
    criterion(1, "assortativity matches stub-pair Pearson", worst <= 1e-12 and elapsed < 5,
              f"max |diff| {worst:.2e}, {elapsed:.2f} s")


@pytest.fixture(scope="module")
def planted_world():
    return pipeline_inputs(SyntheticConfig(homophily_strength=1.0, seed=0))


def test_c2_null_model_exact(planted_world, criterion):
    g, table, _ = planted_world
    codes = triple_codes(table)
    keys = stratum_keys(g.edges, codes)
    strata = np.unique(keys, return_counts=True)
    oe = oe_matrix(g, table.groups["M_G"])
    t0 = time.perf_counter()
    failures, worst_fallback = [], 0.0
    for seed in range(20):
        g2, rep = rewire_preserving(g, codes, seed=seed)
        worst_fallback = max(worst_fallback, rep.fallback_fraction(g.m_edges))
        k2 = np.unique(stratum_keys(g2.edges, codes), return_counts=True)
        if not np.array_equal(g2.degree, g.degree):
            failures.append(f"seed {seed}: degrees")
        if not (np.array_equal(k2[0], strata[0]) and np.array_equal(k2[1], strata[1])):
            failures.append(f"seed {seed}: strata")
        for f in REPRESENTATIVE:  # the features that define the strata
            a, b = oe_matrix(g, table.groups[f]), oe_matrix(g2, table.groups[f])
            if not (np.array_equal(a.observed, b.observed)
                    and np.array_equal(a.ratio, b.ratio, equal_nan=True)):
                failures.append(f"seed {seed}: O/E {f}")
        if len(np.unique(g2.edge_keys())) != g2.m_edges or np.any(g2.edges[:, 0] == g2.edges[:, 1]):
            failures.append(f"seed {seed}: not simple")
    elapsed = time.perf_counter() - t0
    assert np.triu(oe.observed).sum() == g.m_edges
    ok = not failures and worst_fallback < 0.05 and elapsed < 30
    criterion(2, "rewiring preserves degrees, strata and O/E", ok,
              f"{len(failures)} violations, max fallback {worst_fallback:.2%}, {elapsed:.1f} s")


def test_c3_homophily_detection_power(criterion):
    outcomes = {}
    for strength in (1.0, 0.0):
        ps = []
        for seed in range(10):
            g, table, W = pipeline_inputs(SyntheticConfig(homophily_strength=strength, seed=seed))
            g_null, _ = rewire_preserving(g, triple_codes(table), seed=seed)
            cmp_ = edge_similarity_distributions(g, g_null, W)
            ps.append((cmp_.mean_observed > cmp_.mean_null, cmp_.test.p))
        outcomes[strength] = ps
    hits = sum(up and p < 0.01 for up, p in outcomes[1.0])
    quiet = sum(p > 0.05 for _, p in outcomes[0.0])
    criterion(3, "planted homophily detected, null not", hits >= 9 and quiet >= 8,
              f"strength 1: {hits}/10 with p<0.01; strength 0: {quiet}/10 with p>0.05")


def test_c4_genre_measures_fuzz(criterion):
    rng = np.random.default_rng(11)
    n, k = 100_000, 40
    rows = rng.random((n, k)) * (rng.random((n, k)) < rng.uniform(0.02, 1, (n, 1)))
    rows *= 10.0 ** rng.uniform(-3, 6, (n, 1))
    G = sp.csr_matrix(rows)
    feats = genre_features(G, k)
    scale = 10.0 ** rng.uniform(-4, 4, (n, 1))
    scaled = genre_features(sp.csr_matrix(rows * scale), k)
    wavg = feats["D_wavg"]
    problems = []
    if not (wavg.min() >= 0 and wavg.max() <= 1):
        problems.append("D_wavg range")
    drift = float(np.max(np.abs(scaled["D_wavg"] - wavg)))
    if drift > 1e-12:
        problems.append(f"scale drift {drift:.1e}")
    if feats["D_GE"].max() > np.log2(k) + 1e-12:
        problems.append("entropy bound")
    if not (feats["D_GC"].min() >= 0 and feats["D_GC"].max() <= 1):
        problems.append("coverage range")
    worst_mass = 0.0
    for f in ("D_wavg", "D_GE", "D_GC"):
        v = feats[f]
        labels = assign_groups(v, f).labels
        if not set(np.unique(labels)) <= {0, 1, 2} or len(labels) != n:
            problems.append(f"{f} grouping not a partition")
        for i in range(3):
            dev = abs(v[labels == i].sum() - v.sum() / 3)
            worst_mass = max(worst_mass, dev / v.max())
    if worst_mass > 1:
        problems.append(f"group mass off by {worst_mass:.2f} users")
    criterion(4, "genre measures bounded, scale-free, grouping balanced", not problems,
              ", ".join(problems) or f"max scale drift {drift:.1e}")


def test_c5_nmf_soundness(criterion):
    rng = np.random.default_rng(5)
    cases = [("rank-1", np.outer(rng.random(40) + 0.1, rng.random(30) + 0.1), 1)]
    for k in (3, 5):
        cases.append((f"rank-{k}", rng.random((50, k)) @ rng.random((k, 35)), k))
    problems, worst = [], 0.0
    for name, M, k in cases:
        for seed in range(3):
            fp = nmf(sp.csr_matrix(M), rank=k, max_iters=20_000, tol=0, seed=seed)
            rel = fp.final_objective / float(np.sum(M ** 2))
            worst = max(worst, rel)
            steps = np.diff(fp.objective_history)
            if rel >= 1e-6:
                problems.append(f"{name} seed {seed}: relative objective {rel:.1e}")
            if np.any(steps > 1e-12):
                problems.append(f"{name} seed {seed}: objective rose by {steps.max():.1e}")
    criterion(5, "NMF recovers exact low-rank matrices monotonically", not problems,
              "; ".join(problems) or f"worst relative objective {worst:.1e}")


@pytest.fixture(scope="module")
def linkpred_grid():
    t0 = time.perf_counter()
    g, table, W = pipeline_inputs(SyntheticConfig(homophily_strength=0.8, seed=0))
    report = run_experiment(g, table, W, ExperimentConfig(master_seed=0), jobs=joblib.cpu_count())
    return report, time.perf_counter() - t0, g.m_edges


def test_c6_linkpred_ordering(linkpred_grid, criterion):
    report, _, m = linkpred_grid
    s = {k: v[0] for k, v in report.summary().items()}
    assert all(len(report.scores(n)) == 100 for n in report.names())
    gf_gap = max(abs(s[c] - s["GF"]) for c in ("MNDF+GF", "APF+GF", "MNDF+APF+GF"))
    ok = (s["GF"] > s["MNDF+APF"] >= max(s["MNDF"], s["APF"]) > 0.55 > s[STRATIFIED]
          and 0.47 <= s[STRATIFIED] <= 0.53 and gf_gap <= 0.02)
    detail = ", ".join(f"{k} {v:.3f}" for k, v in s.items()) + f"; |E|={m}"
    criterion("6a", "link-prediction F1 ordering", ok, detail)


def test_c6_linkpred_runtime(linkpred_grid, criterion):
    _, elapsed, _ = linkpred_grid
    criterion("6b", "link-prediction grid under 5 minutes", elapsed < 300,
              f"{elapsed:.0f} s on {joblib.cpu_count()} core(s)")


def enumerate_pvalue(a, b):
    """U and two-sided p by listing every assignment of pooled ranks to ``a``."""
    ranks = rankdata(np.concatenate([a, b]))
    n1 = len(a)
    base = n1 * (n1 + 1) / 2
    U = ranks[:n1].sum() - base
    us = np.array([ranks[list(c)].sum() - base for c in itertools.combinations(range(len(ranks)), n1)])
    lo, hi = np.mean(us <= U + 1e-9), np.mean(us >= U - 1e-9)
    return U, min(1.0, 2 * min(lo, hi))


def test_c7_statistical_machinery(criterion):
    rng = np.random.default_rng(7)
    worst_p, u_bad = 0.0, 0
    for n in range(2, 11):
        for n1 in range(1, n):
            for trial in range(3):
                pool = rng.integers(0, 4, n).astype(float) if trial else rng.random(n)
                a, b = pool[:n1], pool[n1:]
                res = mann_whitney_u(a, b)
                U, p = enumerate_pvalue(a, b)
                u_bad += res.U != U or res.method != "exact"
                worst_p = max(worst_p, abs(res.p - p))
    f1_ok = (f1([1, 0, 1], [1, 0, 1]) == 1.0 and f1([1, 0], [0, 1]) == 0.0
             and f1([1, 1, 0], [1, 0, 1]) == 0.5 and f1([1, 1, 1, 0], [1, 1, 0, 1]) == 2 * 2 / (2 * 2 + 1 + 1))
    criterion(7, "Mann-Whitney matches enumeration, F1 hand cases", worst_p <= 1e-9 and not u_bad and f1_ok,
              f"max p diff {worst_p:.1e}, {u_bad} U mismatches")


DATA = os.environ.get("HOMNET_REAL_DATA")


@pytest.mark.skipif(not DATA, reason="set HOMNET_REAL_DATA to the converted real dataset directory")
def test_c8_real_dataset(criterion):
    d = Path(DATA)
    table = read_feature_table(d / "features.tsv")
    edges = load_edges(d / "edges.tsv").edges
    g = SocialGraph(edges, len(table))
    targets = {"M_G": 0.104, "N_6m": 0.111, "D_wavg": 0.227}
    got = {f: numeric_assortativity(g, table.values[f]) for f in targets}
    problems = [f"r({f})={got[f]:.3f}" for f in targets if abs(got[f] - targets[f]) > 0.005]
    W_path = d / "artist_nmf_W.tsv"
    if W_path.exists():
        W = load_dense(W_path)
        g_null, _ = rewire_preserving(g, triple_codes(table), seed=0)
        cmp_ = edge_similarity_distributions(g, g_null, W)
        if abs(cmp_.mean_observed - 0.44) > 0.02 or abs(cmp_.mean_null - 0.28) > 0.02:
            problems.append(f"similarity {cmp_.mean_observed:.3f}/{cmp_.mean_null:.3f}")
        rep = run_experiment(g, table, W, ExperimentConfig(), jobs=joblib.cpu_count())
        s = {k: v[0] for k, v in rep.summary().items()}
        if not (s["MNDF+APF"] > max(s["MNDF"], s["APF"]) and s["GF"] > s["MNDF+APF"]):
            problems.append("F1 ordering")
        low_m = rep.group_summary()[("M_G", "low", "MNDF+APF")]
        if abs(low_m - 0.7974) > 0.03:
            problems.append(f"low-M MNDF+APF {low_m:.3f}")
    else:
        problems.append("artist_nmf_W.tsv missing")
    criterion(8, "real-dataset reference values", not problems, ", ".join(problems) or "all within tolerance")


def test_c9_determinism(tmp_path, criterion):
    data = tmp_path / "data"
    synth = ["--users", "400", "--artists", "800", "--genres", "24", "--n-events", "40000",
             "--n-edges", "2500", "--strength", "1", "--seed", "5"]
    assert main(["synth", *synth, "-o", str(data), "--jobs", "1"]) == 0
    inputs = ["--events", str(data / "events.tsv"), "--genres", str(data / "genres.tsv"),
              "--edges", str(data / "edges.tsv"), "--rank", "8", "--datasets", "2", "--splits", "2",
              "--rounds", "20"]
    mismatched = []
    for stage in ("synth", "ingest", "features", "profiles", "homophily", "linkpred", "all"):
        first = tmp_path / f"{stage}_1"
        args = [stage, *synth, "-o", str(first)] if stage == "synth" else [stage, *inputs, "-o", str(first)]
        assert main([*args, "--jobs", "1"]) == 0
        for run, jobs in ((2, "1"), (3, "2")):
            again = tmp_path / f"{stage}_{run}"
            assert main(["rerun", str(first / "manifest.json"), "-o", str(again), "--jobs", jobs]) == 0
            for f in sorted(first.glob("*")):
                if f.name == "manifest.json":
                    continue
                if f.read_bytes() != (again / f.name).read_bytes():
                    mismatched.append(f"{stage}/{f.name} jobs={jobs}")
            m1 = json.loads((first / "manifest.json").read_text())
            m2 = json.loads((again / "manifest.json").read_text())
            if m1["outputs"] != m2["outputs"]:
                mismatched.append(f"{stage} manifest outputs jobs={jobs}")
    criterion(9, "reruns from manifests are byte-identical", not mismatched,
              ", ".join(mismatched) or "7 stages, jobs 1 and 2")
