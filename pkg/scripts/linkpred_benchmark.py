#!/usr/bin/env python3
"""Time the link-prediction grid on a synthetic dataset.

Reports wall time per run and per model so the full 10 x 10 budget can be
extrapolated for a given core count without running it.

    linkpred_benchmark.py --datasets 1 --splits 2 --jobs 4
"""

import argparse
import time

import joblib

from homnet.features import compute_user_features
from homnet.graph import SocialGraph
from homnet.linkpred import COMBOS, ExperimentConfig, run_experiment
from homnet.profiles import build_artist_matrix, build_genre_matrix, l2_normalize_rows, nmf
from homnet.synthetic import SyntheticConfig, generate_synthetic


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=2000)
    ap.add_argument("--edges", type=int, default=15_000)
    ap.add_argument("--strength", type=float, default=0.8)
    ap.add_argument("--datasets", type=int, default=1)
    ap.add_argument("--splits", type=int, default=2)
    ap.add_argument("--jobs", type=int, default=joblib.cpu_count())
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    cfg = SyntheticConfig(n_users=args.users, n_edges=args.edges, homophily_strength=args.strength,
                          seed=args.seed)
    log_, gm, edges, _ = generate_synthetic(cfg)
    n = cfg.n_users
    table = compute_user_features(log_, build_genre_matrix(log_, gm, n).data, n, cfg.n_genres)
    W = nmf(l2_normalize_rows(build_artist_matrix(log_, n)), 20, seed=args.seed).W
    g = SocialGraph(edges, n)
    prep = time.perf_counter() - t0

    t1 = time.perf_counter()
    rep = run_experiment(g, table, W, ExperimentConfig(n_datasets=args.datasets, n_splits=args.splits,
                                                       master_seed=args.seed), jobs=args.jobs)
    grid = time.perf_counter() - t1
    runs = args.datasets * args.splits
    per_run = grid / runs
    print(f"|E|={g.m_edges}  prep {prep:.1f}s  grid {grid:.1f}s over {runs} runs, {args.jobs} jobs")
    print(f"per run {per_run:.2f}s, per model {per_run / len(COMBOS):.3f}s")
    print(f"10x10 estimate at {args.jobs} jobs: {prep + per_run * 100:.0f}s")
    for k, (m, s) in rep.summary().items():
        print(f"  {k:<12} {m:.4f} +- {s:.4f}")


if __name__ == "__main__":
    main()
