"""``homnet`` command-line pipeline.

Every command writes into a temporary sibling of the output directory and
moves the files into place only on success, together with a
``manifest.json`` that is sufficient to rerun the command.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from functools import cached_property
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, from_dict, load_config, to_dict
from .errors import ConfigError, DataError, HomnetError
from .features import LEVELS, REPRESENTATIVE, read_feature_table, write_feature_table
from .graph import SocialGraph, density
from .homophily import (assortativity_table, edge_similarity_distributions, group_similarity_matrix,
                        oe_matrix, rewire_preserving, triple_codes)
from .ingest import EventLog, load_edges, load_events, load_genre_map, write_edges, write_events, write_genre_map
from .linkpred import ExperimentConfig, run_experiment
from .plots import bars, heatmap, histogram, write_tsv
from . import profiles as prof
from .synthetic import config_dict, generate_synthetic

log = logging.getLogger("homnet")

NMF_TAG, REWIRE_TAG = 1, 2


def derive_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict[str, str]:
    import joblib
    import matplotlib
    import numba
    import scipy

    return {"homnet": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__,
            "matplotlib": matplotlib.__version__, "joblib": joblib.__version__}


class Pipeline:
    """Lazily loaded inputs and derived artifacts shared by the stages."""

    def __init__(self, cfg: PipelineConfig, out: Path, jobs: int):
        self.cfg = cfg
        self.out = out
        self.jobs = jobs
        self.seeds: dict[str, object] = {"master": cfg.master_seed}
        self.inputs: dict[str, dict[str, str]] = {}

    def _path(self, key: str, required: bool = True) -> Path | None:
        p = getattr(self.cfg.paths, key)
        if p is None:
            if required:
                raise ConfigError(f"missing input path: --{key} (or [paths] {key})")
            return None
        path = Path(p).resolve()
        if not path.is_file():
            raise DataError(f"no such file: {path}")
        self.inputs[key] = {"path": str(path), "sha256": sha256(path)}
        return path

    @cached_property
    def events(self) -> EventLog:
        ev = load_events(self._path("events"), header=self.cfg.paths.header)
        if len(ev) == 0:
            raise DataError("event log is empty")
        return ev

    @cached_property
    def genre_map(self):
        return load_genre_map(self._path("genres"), self.cfg.paths.n_genres, header=self.cfg.paths.header)

    @cached_property
    def edge_list(self):
        el = load_edges(self._path("edges"), header=self.cfg.paths.header)
        if len(el) == 0:
            raise DataError("edge list is empty")
        return el

    @cached_property
    def n_users(self) -> int:
        if self.cfg.paths.n_users is not None:
            return self.cfg.paths.n_users
        n = self.edge_list.n_nodes if self.cfg.paths.edges else 0
        if self.cfg.paths.features:
            n = max(n, len(self.table))
        elif self.cfg.paths.events:
            n = max(n, self.events.n_users)
        return n

    @cached_property
    def graph(self) -> SocialGraph:
        if self.edge_list.n_nodes > self.n_users:
            raise DataError(f"edge endpoints exceed the {self.n_users} users")
        return SocialGraph(self.edge_list, self.n_users)

    @cached_property
    def _genre_profile(self) -> tuple[prof.ProfileMatrix, prof.CoverageReport]:
        cov = prof.CoverageReport()
        return prof.build_genre_matrix(self.events, self.genre_map, self.n_users, cov), cov

    @property
    def genre_matrix(self) -> prof.ProfileMatrix:
        return self._genre_profile[0]

    @property
    def coverage(self) -> prof.CoverageReport:
        return self._genre_profile[1]

    @cached_property
    def artist_matrix(self) -> prof.ProfileMatrix:
        return prof.build_artist_matrix(self.events, self.n_users)

    @cached_property
    def table(self):
        p = self._path("features", required=False)
        if p is not None:
            t = read_feature_table(p, self.cfg.paths.n_genres or 0)
            if not np.array_equal(t.users, np.arange(len(t))):
                raise DataError(f"{p}: user ids must be 0..n-1 in order")
            return t
        from .features import compute_user_features

        return compute_user_features(self.events, self.genre_matrix.data, self.n_users,
                                     self.genre_map.n_genres, self.cfg.features.window_days)

    @cached_property
    def factors(self) -> prof.FactorPair:
        c = self.cfg.nmf
        seed = derive_seed(self.cfg.master_seed, NMF_TAG)
        self.seeds["nmf"] = seed
        m = prof.l2_normalize_rows(self.artist_matrix) if c.normalize_before else self.artist_matrix
        fp = prof.nmf(m, c.rank, c.max_iters, c.tol, seed, inner_updates=c.inner_updates)
        if not c.normalize_before:
            # factorize raw counts, then normalize the user factor rows
            norms = np.linalg.norm(fp.W, axis=1, keepdims=True)
            fp.W = np.divide(fp.W, norms, out=np.zeros_like(fp.W), where=norms > 0)
        return fp

    @cached_property
    def W(self) -> np.ndarray:
        p = self._path("factors", required=False)
        if p is not None:
            W = prof.load_dense(p)
            if W.shape[0] != len(self.table):
                raise DataError(f"{p}: {W.shape[0]} factor rows for {len(self.table)} users")
            if np.any(W < 0) or not np.all(np.isfinite(W)):
                raise DataError(f"{p}: factors must be finite and nonnegative")
            return W
        return self.factors.W

    def check_alignment(self) -> None:
        if len(self.table) != self.n_users:
            raise DataError(f"feature table has {len(self.table)} users, graph needs {self.n_users}")


# stages

def stage_ingest(p: Pipeline) -> None:
    rows: list[tuple[str, object]] = []
    if p.cfg.paths.events:
        ev = p.events
        r = ev.report
        rows += [("events_rows", r.n_rows), ("events_loaded", r.n_loaded), ("events_skipped", r.n_skipped),
                 ("users_with_events", int(len(np.unique(ev.user)))), ("artists", int(len(np.unique(ev.artist)))),
                 ("tracks", int(len(np.unique(ev.track)))),
                 ("artist_matrix_density", prof.density(p.artist_matrix))]
    if p.cfg.paths.genres:
        gm = p.genre_map
        rows += [("genre_rows", gm.report.n_rows), ("genre_rows_skipped", gm.report.n_skipped),
                 ("genres", gm.n_genres), ("artists_with_genres", sum(1 for v in gm.weights.values() if v))]
        if p.cfg.paths.events:
            cov = p.coverage
            rows += [("events_without_genre", cov.n_uncovered_events),
                     ("artists_without_genre", len(cov.uncovered_artists))]
    if p.cfg.paths.edges:
        el = p.edge_list
        rows += [("edge_rows", el.report.n_rows), ("edge_rows_skipped", el.report.n_skipped),
                 ("nodes", p.n_users), ("edges", len(el)), ("graph_density", density(p.graph))]
    if not rows:
        raise ConfigError("ingest needs at least one of --events, --genres, --edges")
    write_tsv(p.out / "ingest.tsv", ["key", "value"], rows)


def stage_features(p: Pipeline) -> None:
    write_feature_table(p.table, p.out / "features.tsv")


def stage_profiles(p: Pipeline) -> None:
    prof.save_profile_matrix(p.artist_matrix, p.out / "artist_matrix.tsv")
    if p.cfg.paths.genres:
        prof.save_profile_matrix(p.genre_matrix, p.out / "genre_matrix.tsv")
    fp = p.factors
    prof.save_factors(fp, p.out)
    write_tsv(p.out / "nmf_objective.tsv", ["iteration", "objective"], enumerate(fp.objective_history))


def stage_homophily(p: Pipeline) -> None:
    p.check_alignment()
    g, t, W, hc = p.graph, p.table, p.W, p.cfg.homophily
    r = assortativity_table(g, t)
    bars(list(r), [np.nan if v is None else v for v in r.values()], None,
         "numeric assortativity", p.out / "assortativity.svg", ylabel="r", columns=("feature", "r"))

    codes = triple_codes(t)
    rewire_seeds = [derive_seed(p.cfg.master_seed, REWIRE_TAG, i) for i in range(hc.null_runs)]
    p.seeds["rewire"] = rewire_seeds
    nulls, rewire_rows, test_rows = [], [], []
    for i, s in enumerate(rewire_seeds):
        gn, rep = rewire_preserving(g, codes, s, hc.max_retries)
        nulls.append(gn)
        rewire_rows.append([i, s, rep.n_strata, len(rep.fallback_strata), rep.fallback_edges,
                            rep.fallback_fraction(g.m_edges), rep.attempts])
        cmp_ = edge_similarity_distributions(g, gn, W, hc.bins)
        test_rows.append([i, cmp_.mean_observed, cmp_.mean_null, cmp_.test.U, cmp_.test.p, cmp_.test.method,
                          len(cmp_.observed), len(cmp_.null)])
        if i == 0:
            histogram(cmp_.bin_edges, {"observed": cmp_.hist_observed, "null": cmp_.hist_null},
                      "edge profile similarity", p.out / "similarity_hist.svg")
    write_tsv(p.out / "rewire.tsv", ["run", "seed", "strata", "fallback_strata", "fallback_edges",
                                      "fallback_fraction", "attempts"], rewire_rows)
    write_tsv(p.out / "similarity_test.tsv", ["run", "mean_observed", "mean_null", "U", "p", "method",
                                              "n_observed", "n_null"], test_rows)

    for feat in REPRESENTATIVE:
        grp = t.groups[feat]
        for tag, graph in (("", g), ("null_", nulls[0])):
            oe = oe_matrix(graph, grp, feat)
            heatmap(oe.ratio, LEVELS, f"O/E {feat} {tag or 'observed'}".strip(), p.out / f"oe_{tag}{feat}.svg")
            counts = []
            for a in range(3):
                for b in range(a, 3):
                    counts.append([LEVELS[a], LEVELS[b], int(oe.observed[a, b]), oe.expected_naive[a, b],
                                   oe.expected_exact[a, b], oe.ratio[a, b], oe.ratio_exact[a, b]])
            write_tsv(p.out / f"oe_counts_{tag}{feat}.tsv",
                      ["group_a", "group_b", "observed", "expected", "expected_exact", "ratio", "ratio_exact"],
                      counts)
            sim = group_similarity_matrix(graph, W, grp)
            heatmap(sim, LEVELS, f"similarity {feat} {tag or 'observed'}".strip(),
                    p.out / f"similarity_{tag}{feat}.svg")


def stage_linkpred(p: Pipeline) -> None:
    p.check_alignment()
    lc = p.cfg.linkpred
    ecfg = ExperimentConfig(combos=lc.combos, n_datasets=lc.n_datasets, n_splits=lc.n_splits,
                            test_fraction=lc.test_fraction, master_seed=p.cfg.master_seed,
                            gf_full_graph=lc.gf_full_graph, group_rule=lc.group_rule,
                            gbdt=lc.gbdt_params())
    p.seeds["linkpred"] = "SeedSequence([master, dataset]) for negatives, [master, dataset, split] per run"
    rep = run_experiment(p.graph, p.table, p.W, ecfg, jobs=p.jobs)
    names = rep.names()
    write_tsv(p.out / "results.tsv", ["combo", "dataset", "split", "f1"],
              [[n, r.dataset, r.split, r.f1[n]] for n in names for r in rep.runs])
    summ = rep.summary()
    bars(names, [summ[n][0] for n in names], [summ[n][1] for n in names], "mean F1",
         p.out / "summary.svg", ylabel="F1", columns=("combo", "mean", "std"))
    write_tsv(p.out / "groups.tsv", ["feature", "group", "combo", "mean_f1"],
              [[f, lvl, c, v] for (f, lvl, c), v in rep.group_summary().items()])
    imp = rep.importance_tables()
    if imp is not None:
        fam = {s.name: s.family for s in rep.schema}
        write_tsv(p.out / "importance.tsv", ["feature", "family", "score"],
                  [[k, fam[k], v] for k, v in imp["feature"].items()])
        write_tsv(p.out / "importance_groups.tsv", ["kind", "name", "score"],
                  [["block", k, v] for k, v in imp["block"].items()]
                  + [["family", k, v] for k, v in imp["family"].items()])
        bars(list(imp["block"]), list(imp["block"].values()), None,
             f"importance by block ({rep.config.importance_combo})", p.out / "importance_blocks.svg",
             columns=("block", "score"))


def stage_synth(p: Pipeline) -> None:
    scfg = dataclasses.replace(p.cfg.synth, seed=p.cfg.master_seed)
    p.seeds["synth"] = scfg.seed
    ev, gm, el, truth = generate_synthetic(scfg)
    write_events(ev, p.out / "events.tsv")
    write_genre_map(gm, p.out / "genres.tsv")
    write_edges(el, p.out / "edges.tsv")
    write_tsv(p.out / "truth.tsv", ["user", "mainstream", "novelty", "diversity", "community", "circle"],
              truth.rows())
    p.extra = {"synthetic": config_dict(scfg), "alpha": truth.alpha}


STAGES = {"synth": [stage_synth], "ingest": [stage_ingest], "features": [stage_features],
          "profiles": [stage_profiles], "homophily": [stage_homophily], "linkpred": [stage_linkpred],
          "all": [stage_ingest, stage_features, stage_profiles, stage_homophily, stage_linkpred]}


def execute(command: str, cfg: PipelineConfig, out, jobs: int = 1) -> Path:
    """Run ``command`` into ``out``; nothing is left behind on failure."""
    out = Path(out).resolve()
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} is not a directory")
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from exc
    try:
        p = Pipeline(cfg, tmp, jobs)
        p.extra = {}
        for stage in STAGES[command]:
            stage(p)
        files = sorted(f.name for f in tmp.iterdir())
        manifest = {
            "command": command,
            "config": to_dict(cfg),
            "seeds": p.seeds,
            "inputs": dict(sorted(p.inputs.items())),
            "outputs": {f: sha256(tmp / f) for f in files},
            "versions": versions(),
            "jobs": jobs,
            **p.extra,
        }
        with open(tmp / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        out.mkdir(exist_ok=True)
        for f in tmp.iterdir():
            os.replace(f, out / f.name)
        tmp.rmdir()
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


# argument parsing

def _add(parser, *flags, section, key, **kw):
    kw.setdefault("default", None)
    parser.add_argument(*flags, dest=f"{section}.{key}", **kw)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="homnet", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"homnet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="INI config file")
    common.add_argument("-o", "--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, help="master seed (overrides config and HOMNET_SEED)")
    common.add_argument("--jobs", type=int, default=None, help="parallel workers (default: all cores)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    inputs = argparse.ArgumentParser(add_help=False)
    for key in ("events", "genres", "edges", "features", "factors"):
        _add(inputs, f"--{key}", section="paths", key=key, help=f"{key} TSV")
    _add(inputs, "--header", section="paths", key="header", action="store_const", const="true",
         help="input files start with a header row")
    _add(inputs, "--n-genres", section="paths", key="n_genres", help="genre id space size")
    _add(inputs, "--n-users", section="paths", key="n_users", help="user id space size")

    analysis = argparse.ArgumentParser(add_help=False)
    _add(analysis, "--rank", section="nmf", key="rank")
    _add(analysis, "--max-iters", section="nmf", key="max_iters")
    _add(analysis, "--tol", section="nmf", key="tol")
    _add(analysis, "--normalize-after-nmf", section="nmf", key="normalize_before", action="store_const",
         const="false", help="factorize raw counts and normalize factor rows afterwards")
    _add(analysis, "--null-runs", section="homophily", key="null_runs")
    _add(analysis, "--bins", section="homophily", key="bins")
    _add(analysis, "--combos", section="linkpred", key="combos", help="comma-separated, e.g. MNDF,GF,MNDF+APF")
    _add(analysis, "--datasets", section="linkpred", key="n_datasets")
    _add(analysis, "--splits", section="linkpred", key="n_splits")
    _add(analysis, "--rounds", section="linkpred", key="n_rounds")
    _add(analysis, "--gf-full-graph", section="linkpred", key="gf_full_graph", action="store_const",
         const="true", help="compute graph features on the full graph (leaks test edges)")
    _add(analysis, "--group-rule", section="linkpred", key="group_rule", choices=("either", "both"))

    synth = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    _add(synth, "--users", section="synth", key="n_users")
    _add(synth, "--artists", section="synth", key="n_artists")
    _add(synth, "--genres", section="synth", key="n_genres")
    _add(synth, "--n-events", section="synth", key="n_events")
    _add(synth, "--n-edges", section="synth", key="n_edges")
    _add(synth, "--strength", section="synth", key="homophily_strength")

    helps = {"ingest": "validate inputs and report statistics", "features": "per-user M/N/D feature table",
             "profiles": "profile matrices and NMF factors", "homophily": "assortativity, null model, O/E",
             "linkpred": "link-prediction experiment grid", "all": "every analysis stage"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common, inputs, analysis], help=text)

    rerun = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    rerun.add_argument("manifest")
    rerun.add_argument("-o", "--out", required=True)
    rerun.add_argument("--jobs", type=int, default=None)
    rerun.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def _overrides(ns: argparse.Namespace) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for dest, val in vars(ns).items():
        if "." in dest and val is not None:
            sec, key = dest.split(".", 1)
            out.setdefault(sec, {})[key] = str(val)
    if getattr(ns, "seed", None) is not None:
        out.setdefault("run", {})["master_seed"] = str(ns.seed)
    return out


def _error(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        jobs = ns.jobs
        if jobs is None:
            import joblib

            jobs = joblib.cpu_count()
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if ns.command == "rerun":
            try:
                manifest = json.loads(Path(ns.manifest).read_text(encoding="utf-8"))
                command, cfg = manifest["command"], from_dict(manifest["config"])
            except (OSError, KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"unreadable manifest {ns.manifest}: {exc}") from exc
        else:
            command = ns.command
            cfg = load_config(ns.config, _overrides(ns))
        execute(command, cfg, ns.out, jobs)
    except HomnetError as exc:
        return _error(exc, exc.exit_code)
    except (ValueError, IndexError) as exc:
        # invalid values that slipped past config validation are data problems
        return _error(exc, DataError.exit_code)
    except KeyboardInterrupt as exc:
        return _error(exc, 130)
    return 0


if __name__ == "__main__":
    sys.exit(main())
