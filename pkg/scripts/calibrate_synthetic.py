#!/usr/bin/env python3
"""Scan synthetic-generator weights and report assortativity and F1.

Each grid point generates a dataset, computes features and factors, and
runs a reduced link-prediction grid. Use it to check that a weight setting
keeps the ordering the acceptance suite expects (GF well above the
listening-based families, those above the baseline).

    calibrate_synthetic.py --edge-weight 10 15 --taste 4 8 --splits 1
"""

import argparse
import dataclasses
import itertools
import time
from dataclasses import dataclass

from homnet.features import compute_user_features
from homnet.graph import SocialGraph, numeric_assortativity
from homnet.linkpred import ExperimentConfig, run_experiment
from homnet.profiles import build_artist_matrix, build_genre_matrix, l2_normalize_rows, nmf
from homnet.synthetic import SyntheticConfig, generate_synthetic


@dataclass(frozen=True)
class Point:
    strength: float
    edge_weight: float
    taste: float
    circle_weight: float
    circle_size: int
    seed: int


def evaluate(p: Point, datasets: int, splits: int, combos):
    cfg = dataclasses.replace(SyntheticConfig(), homophily_strength=p.strength,
                              mnd_edge_weights=(p.edge_weight,) * 3, taste_weight=p.taste,
                              circle_weight=p.circle_weight, circle_size=p.circle_size, seed=p.seed)
    log_, gm, edges, _ = generate_synthetic(cfg)
    n = cfg.n_users
    table = compute_user_features(log_, build_genre_matrix(log_, gm, n).data, n, cfg.n_genres)
    W = nmf(l2_normalize_rows(build_artist_matrix(log_, n)), 20, seed=p.seed).W
    g = SocialGraph(edges, n)
    r = {f: numeric_assortativity(g, table.values[f]) for f in ("M_G", "N_6m", "D_wavg")}
    rep = run_experiment(g, table, W, ExperimentConfig(combos=combos, n_datasets=datasets, n_splits=splits))
    return r, {k: v[0] for k, v in rep.summary().items()}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--strength", type=float, nargs="+", default=[0.8])
    ap.add_argument("--edge-weight", type=float, nargs="+", default=[15.0])
    ap.add_argument("--taste", type=float, nargs="+", default=[8.0])
    ap.add_argument("--circle-weight", type=float, nargs="+", default=[5.0])
    ap.add_argument("--circle-size", type=int, nargs="+", default=[20])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--datasets", type=int, default=1)
    ap.add_argument("--splits", type=int, default=1)
    ap.add_argument("--combos", default="MNDF,APF,GF,MNDF+APF")
    args = ap.parse_args(argv)
    combos = tuple(args.combos.split(","))
    grid = itertools.product(args.strength, args.edge_weight, args.taste, args.circle_weight,
                             args.circle_size, args.seeds)
    for values in grid:
        p = Point(*values)
        t0 = time.perf_counter()
        r, s = evaluate(p, args.datasets, args.splits, combos)
        rs = " ".join(f"r({k})={v:.3f}" for k, v in r.items())
        fs = " ".join(f"{k}={v:.3f}" for k, v in s.items())
        print(f"{p}  {rs}  {fs}  [{time.perf_counter() - t0:.0f}s]", flush=True)


if __name__ == "__main__":
    main()
