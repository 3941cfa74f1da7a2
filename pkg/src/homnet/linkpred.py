"""Supervised link prediction from listening behavior and graph topology.

A dataset pairs every friendship (label 1) with an equal number of sampled
non-edges (label 0). Each pair gets a feature vector built from up to three
families:

* ``MNDF``: both users' M/N/D values, one-hot low/mid/high groups, per-feature
  relative differences and same-group indicators (120 columns);
* ``APF``: both users' NMF artist-profile rows and their cosine (41 columns
  at rank 20);
* ``GF``: common neighbors, Jaccard and Adamic-Adar on the training graph.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError
from .features import FEATURES, LEVELS, REPRESENTATIVE, UserFeatureTable
from .gbdt import GBDTClassifier, GBDTParams
from .graph import SocialGraph, pair_indices

log = logging.getLogger(__name__)

FAMILIES = ("MNDF", "APF", "GF")
COMBOS = ("MNDF", "APF", "GF", "MNDF+APF", "MNDF+GF", "APF+GF", "MNDF+APF+GF")
STRATIFIED = "stratified"


def parse_combo(combo: str) -> tuple[str, ...]:
    parts = tuple(p.strip() for p in combo.split("+"))
    bad = [p for p in parts if p not in FAMILIES]
    if bad or not parts or len(set(parts)) != len(parts):
        raise ValueError(f"bad feature combination {combo!r}")
    return tuple(f for f in FAMILIES if f in parts)


# negatives

def sample_negatives(g: SocialGraph, count: int, seed=0) -> np.ndarray:
    """``count`` distinct uniformly random non-edges as sorted ``(u, v)`` rows."""
    n = g.n_nodes
    capacity = n * (n - 1) // 2 - g.m_edges
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count > capacity:
        raise InfeasibleError(f"asked for {count} non-edges, only {capacity} exist")
    rng = np.random.default_rng(seed)
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    existing = g.edge_keys()
    if capacity <= 2_000_000 and count * 4 > capacity:
        iu, ju = np.triu_indices(n, k=1)
        keys = iu.astype(np.int64) * n + ju
        keys = keys[~np.isin(keys, existing)]
        chosen = keys[np.sort(rng.choice(len(keys), size=count, replace=False))]
        chosen = chosen[rng.permutation(count)]
    else:
        got = np.zeros(0, dtype=np.int64)
        while len(got) < count:
            k = max(2 * (count - len(got)), 1024)
            u = rng.integers(0, n, k)
            v = rng.integers(0, n, k)
            ok = u != v
            keys = np.minimum(u, v)[ok] * n + np.maximum(u, v)[ok]
            keys = keys[~np.isin(keys, existing)]
            got = np.concatenate([got, keys])
            _, first = np.unique(got, return_index=True)
            got = got[np.sort(first)]
        chosen = got[:count]
    return np.column_stack([chosen // n, chosen % n])


def relative_difference(a, b):
    """``|(a - b) / ((a + b) / 2)|`` elementwise, 0 where both are 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    mean = (a + b) / 2.0
    out = np.divide(np.abs(a - b), np.abs(mean), out=np.zeros(np.broadcast(a, b).shape),
                    where=mean != 0)
    return out if out.ndim else float(out)


# schema

@dataclass(frozen=True)
class FeatureSpec:
    name: str
    family: str  # MNDF, APF or GF
    kind: str  # numeric, onehot or binary
    block: str  # row group used for aggregated importance


def schema_for(families, rank: int = 20) -> list[FeatureSpec]:
    fams = set(families)
    out: list[FeatureSpec] = []
    if "MNDF" in fams:
        for side in ("u", "v"):
            out += [FeatureSpec(f"{k}_{side}", "MNDF", "numeric", "x_user") for k in FEATURES]
        for side in ("u", "v"):
            out += [FeatureSpec(f"{k}_{side}={lvl}", "MNDF", "onehot", "x_user_group")
                    for k in FEATURES for lvl in LEVELS]
        out += [FeatureSpec(f"{k}_reldiff", "MNDF", "numeric", "x_delta") for k in FEATURES]
        out += [FeatureSpec(f"{k}_same_group", "MNDF", "binary", "x_delta_group") for k in FEATURES]
    if "APF" in fams:
        for side in ("u", "v"):
            out += [FeatureSpec(f"W{i}_{side}", "APF", "numeric", "x_W") for i in range(rank)]
        out.append(FeatureSpec("W_cosine", "APF", "numeric", "x_W_cosine"))
    if "GF" in fams:
        out += [FeatureSpec(n, "GF", "numeric", "x_graph") for n in ("CN", "jaccard", "adamic_adar")]
    return out


def feature_letter(spec: FeatureSpec) -> str | None:
    """M, N or D for MNDF columns, ``None`` otherwise."""
    return spec.name[0] if spec.family == "MNDF" else None


@dataclass
class PairFeatureBuilder:
    table: UserFeatureTable
    W: np.ndarray

    def __post_init__(self):
        t = self.table
        self.values = t.matrix()
        groups = t.group_matrix()
        self.groups = groups
        self.onehot = np.zeros((len(t), len(FEATURES) * 3))
        cols = np.arange(len(FEATURES)) * 3
        self.onehot[np.arange(len(t))[:, None], cols + groups] = 1.0
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.shape[0] != len(t):
            raise ValueError("factor rows must match the user table")
        self.w_norm = np.linalg.norm(self.W, axis=1)

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    def mndf(self, u, v) -> np.ndarray:
        xu, xv = self.values[u], self.values[v]
        same = (self.groups[u] == self.groups[v]).astype(np.float64)
        return np.hstack([xu, xv, self.onehot[u], self.onehot[v], relative_difference(xu, xv), same])

    def apf(self, u, v) -> np.ndarray:
        wu, wv = self.W[u], self.W[v]
        denom = self.w_norm[u] * self.w_norm[v]
        dots = np.einsum("ij,ij->i", wu, wv)
        cos = np.divide(dots, denom, out=np.zeros(len(u)), where=denom > 0)
        return np.hstack([wu, wv, cos[:, None]])

    def assemble(self, pairs, families, g_train: SocialGraph | None = None) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        n = len(self.table)
        if len(pairs) and (pairs.min() < 0 or pairs.max() >= n):
            raise IndexError("pair node not covered by the feature tables")
        u, v = pairs[:, 0], pairs[:, 1]
        blocks = []
        fams = parse_combo(families if isinstance(families, str) else "+".join(families))
        if "MNDF" in fams:
            blocks.append(self.mndf(u, v))
        if "APF" in fams:
            blocks.append(self.apf(u, v))
        if "GF" in fams:
            if g_train is None:
                raise ValueError("graph features need a training graph")
            blocks.append(pair_indices(g_train, pairs))
        return np.hstack(blocks) if blocks else np.zeros((len(pairs), 0))


def assemble_features(pair, table: UserFeatureTable, W: np.ndarray, g_train: SocialGraph | None,
                      families) -> np.ndarray:
    """Feature vector of a single pair in fixed schema order."""
    b = PairFeatureBuilder(table, W)
    return b.assemble(np.asarray(pair).reshape(1, 2), families, g_train)[0]


# models and metrics

def train_gbdt(X, y, params: GBDTParams | None = None, sample_weight=None) -> GBDTClassifier:
    return GBDTClassifier(params or GBDTParams()).fit(X, y, sample_weight)


@dataclass
class StratifiedRandom:
    positive_rate: float
    seed: int = 0

    def predict(self, n_or_X) -> np.ndarray:
        n = n_or_X if isinstance(n_or_X, (int, np.integer)) else len(n_or_X)
        rng = np.random.default_rng(self.seed)
        return (rng.random(n) < self.positive_rate).astype(np.int64)


def stratified_random(train_labels, seed=0) -> StratifiedRandom:
    y = np.asarray(train_labels)
    if len(y) == 0:
        raise ValueError("need at least one training label")
    return StratifiedRandom(float(np.mean(y == 1)), seed)


def f1(labels, predictions) -> float:
    y = np.asarray(labels).astype(np.int64).ravel()
    p = np.asarray(predictions).astype(np.int64).ravel()
    if len(y) != len(p):
        raise ValueError(f"length mismatch: {len(y)} labels vs {len(p)} predictions")
    if len(y) == 0:
        raise ValueError("f1 of an empty sample")
    tp = int(np.sum((y == 1) & (p == 1)))
    fp = int(np.sum((y == 0) & (p == 1)))
    fn = int(np.sum((y == 1) & (p == 0)))
    # 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN), exact in rationals
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if tp else 0.0


def feature_importance(model: GBDTClassifier, schema: list[FeatureSpec]) -> dict[str, dict[str, float]]:
    """Normalized gain importance per feature, per schema block and per
    family (MNDF, APF and the M, N, D letters)."""
    imp = np.asarray(model.feature_importances_, dtype=np.float64)
    if len(imp) != len(schema):
        raise ValueError("schema does not match the model's feature count")
    return aggregate_importance(imp, schema)


def aggregate_importance(imp: np.ndarray, schema: list[FeatureSpec]) -> dict[str, dict[str, float]]:
    per_feature = {s.name: float(x) for s, x in zip(schema, imp)}
    blocks: dict[str, float] = {}
    fams: dict[str, float] = {}
    for s, x in zip(schema, imp):
        blocks[s.block] = blocks.get(s.block, 0.0) + float(x)
        fams[s.family] = fams.get(s.family, 0.0) + float(x)
        letter = feature_letter(s)
        if letter:
            fams[letter] = fams.get(letter, 0.0) + float(x)
    return {"feature": per_feature, "block": blocks, "family": fams}


# experiment grid

@dataclass(frozen=True)
class ExperimentConfig:
    combos: tuple[str, ...] = COMBOS
    n_datasets: int = 10
    n_splits: int = 10
    test_fraction: float = 0.2
    master_seed: int = 0
    gf_full_graph: bool = False
    group_rule: str = "either"  # or "both"
    gbdt: GBDTParams = field(default_factory=GBDTParams)
    importance_combo: str = "MNDF+APF"

    def validate(self) -> None:
        for c in self.combos:
            parse_combo(c)
        if self.n_datasets < 1 or self.n_splits < 1:
            raise ValueError("need at least one dataset and one split")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.group_rule not in ("either", "both"):
            raise ValueError("group_rule must be 'either' or 'both'")


def run_seed(master: int, dataset: int, split: int | None = None) -> np.random.SeedSequence:
    key = [int(master), int(dataset)] if split is None else [int(master), int(dataset), int(split)]
    return np.random.SeedSequence(key)


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def build_dataset(g: SocialGraph, master: int, dataset: int) -> tuple[np.ndarray, np.ndarray]:
    """All edges as positives plus as many sampled non-edges, label vector."""
    neg = sample_negatives(g, g.m_edges, run_seed(master, dataset))
    pairs = np.concatenate([g.edges, neg])
    labels = np.concatenate([np.ones(g.m_edges, dtype=np.int64), np.zeros(len(neg), dtype=np.int64)])
    return pairs, labels


def split_indices(n: int, test_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def training_graph(g: SocialGraph, pairs, labels, test_idx, full: bool = False) -> SocialGraph:
    """Graph for GF features: ``g`` minus the test positives unless ``full``."""
    if full:
        return g
    test = np.asarray(test_idx)
    return g.without_edges(pairs[test][labels[test] == 1])


def _group_masks(pairs, table: UserFeatureTable, rule: str) -> dict[tuple[str, str], np.ndarray]:
    masks = {}
    for feat in REPRESENTATIVE:
        grp = table.groups[feat]
        gu, gv = grp[pairs[:, 0]], grp[pairs[:, 1]]
        for i, lvl in enumerate(LEVELS):
            masks[(feat, lvl)] = ((gu == i) | (gv == i)) if rule == "either" else ((gu == i) & (gv == i))
    return masks


@dataclass
class RunResult:
    dataset: int
    split: int
    f1: dict[str, float]
    group_f1: dict[tuple[str, str, str], float]  # (feature, level, combo)
    importance: np.ndarray | None


def run_single(g: SocialGraph, builder: PairFeatureBuilder, cfg: ExperimentConfig,
               dataset: int, split: int) -> RunResult:
    pairs, labels = build_dataset(g, cfg.master_seed, dataset)
    tr, te = split_indices(len(pairs), cfg.test_fraction, run_seed(cfg.master_seed, dataset, split))
    g_train = training_graph(g, pairs, labels, te, cfg.gf_full_graph)
    X = builder.assemble(pairs, FAMILIES, g_train)
    rank = builder.rank
    spans = {"MNDF": slice(0, 120), "APF": slice(120, 120 + 2 * rank + 1),
             "GF": slice(120 + 2 * rank + 1, 120 + 2 * rank + 4)}
    masks = _group_masks(pairs[te], builder.table, cfg.group_rule)
    seed = _int_seed(run_seed(cfg.master_seed, dataset, split))
    scores: dict[str, float] = {}
    group_scores: dict[tuple[str, str, str], float] = {}
    importance = None
    base = stratified_random(labels[tr], seed)
    preds = {STRATIFIED: base.predict(len(te))}
    for combo in cfg.combos:
        cols = np.concatenate([np.arange(X.shape[1])[spans[f]] for f in parse_combo(combo)])
        params = GBDTParams(**{**cfg.gbdt.__dict__, "seed": seed})
        model = train_gbdt(X[tr][:, cols], labels[tr], params)
        preds[combo] = model.predict(X[te][:, cols])
        if combo == cfg.importance_combo:
            importance = np.asarray(model.feature_importances_, dtype=np.float64)
    y = labels[te]
    for name, p in preds.items():
        scores[name] = f1(y, p)
        for (feat, lvl), m in masks.items():
            if m.any():
                group_scores[(feat, lvl, name)] = f1(y[m], p[m])
    return RunResult(dataset, split, scores, group_scores, importance)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    runs: list[RunResult]
    schema: list[FeatureSpec]

    def names(self) -> list[str]:
        return [STRATIFIED, *self.config.combos]

    def scores(self, name: str) -> np.ndarray:
        return np.array([r.f1[name] for r in self.runs])

    def summary(self) -> dict[str, tuple[float, float]]:
        return {n: (float(np.mean(self.scores(n))), float(np.std(self.scores(n)))) for n in self.names()}

    def group_summary(self) -> dict[tuple[str, str, str], float]:
        acc: dict[tuple[str, str, str], list[float]] = {}
        for r in self.runs:
            for k, v in r.group_f1.items():
                acc.setdefault(k, []).append(v)
        return {k: float(np.mean(v)) for k, v in sorted(acc.items())}

    def mean_importance(self) -> np.ndarray | None:
        imps = [r.importance for r in self.runs if r.importance is not None]
        if not imps:
            return None
        m = np.mean(imps, axis=0)
        s = m.sum()
        return m / s if s > 0 else m

    def importance_tables(self) -> dict[str, dict[str, float]] | None:
        m = self.mean_importance()
        return None if m is None else aggregate_importance(m, self.schema)


def run_experiment(g: SocialGraph, table: UserFeatureTable, W: np.ndarray,
                   cfg: ExperimentConfig | None = None, jobs: int = 1) -> ExperimentReport:
    """Every combo over ``n_datasets`` negative samples times ``n_splits``
    train/test splits. Results do not depend on ``jobs``."""
    cfg = cfg or ExperimentConfig()
    cfg.validate()
    builder = PairFeatureBuilder(table, W)
    if g.n_nodes > len(table):
        raise ValueError("graph has nodes without feature rows")
    tasks = [(d, s) for d in range(cfg.n_datasets) for s in range(cfg.n_splits)]
    if jobs == 1:
        runs = [run_single(g, builder, cfg, d, s) for d, s in tasks]
    else:
        from joblib import Parallel, delayed

        runs = Parallel(n_jobs=jobs)(delayed(run_single)(g, builder, cfg, d, s) for d, s in tasks)
    runs.sort(key=lambda r: (r.dataset, r.split))
    schema = schema_for(parse_combo(cfg.importance_combo), builder.rank)
    return ExperimentReport(cfg, runs, schema)
