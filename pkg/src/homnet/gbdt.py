"""Histogram gradient-boosted trees for binary classification.

Second-order boosting on the logistic loss with depth-limited trees over
quantile-binned features (at most 256 bins per feature). Binary columns
whose supports never overlap in the training data are packed into one
internal column (exclusive feature bundling); this is lossless and only
changes the cost of building histograms, not the trees that can be grown.

The hot loops (histogram accumulation, split search, row partitioning)
are compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

ORDINAL = 0  # split: code <= bin goes left
BUNDLE = 1  # split: code == bin goes right


@dataclass(frozen=True)
class GBDTParams:
    n_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    max_bins: int = 256
    bundle_binary: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1 or self.max_depth < 1:
            raise ValueError("n_rounds and max_depth must be >= 1")
        if not 2 <= self.max_bins <= 256:
            raise ValueError("max_bins must lie in [2, 256]")
        if self.learning_rate <= 0 or self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("learning_rate must be > 0; reg_lambda, min_child_weight >= 0")


def _weighted_edges(col: np.ndarray, w: np.ndarray, max_bins: int) -> np.ndarray:
    uniq, inverse = np.unique(col, return_inverse=True)
    if len(uniq) <= max_bins:
        return (uniq[:-1] + uniq[1:]) / 2.0
    # duplicated rows and doubled weights give the same cumulative mass
    mass = np.bincount(inverse, weights=w, minlength=len(uniq))
    cum = np.cumsum(mass) / mass.sum()
    targets = np.arange(1, max_bins) / max_bins
    idx = np.unique(np.searchsorted(cum, targets, side="left"))
    idx = idx[idx < len(uniq) - 1]
    return (uniq[idx] + uniq[idx + 1]) / 2.0


def _exclusive_groups(B: np.ndarray, max_size: int = 255) -> list[list[int]]:
    """Greedy grouping of boolean columns with pairwise disjoint supports."""
    conflicts = B.T.astype(np.int32) @ B.astype(np.int32)
    groups: list[list[int]] = []
    for j in range(B.shape[1]):
        for grp in groups:
            if len(grp) < max_size and not conflicts[j, grp].any():
                grp.append(j)
                break
        else:
            groups.append([j])
    return groups


class Binner:
    """Maps raw features to internal uint8 columns.

    Ordinal columns: code ``b`` is the number of bin edges strictly below
    the value, so ``x <= edges[b]`` iff ``code <= b``. Bundle columns: code
    0 when every member is 0, else ``1 + position`` of the member that is 1.
    """

    def __init__(self, max_bins: int = 256, bundle_binary: bool = True):
        self.max_bins = max_bins
        self.bundle_binary = bundle_binary

    def fit(self, X: np.ndarray, sample_weight: np.ndarray | None = None) -> "Binner":
        X = np.asarray(X, dtype=np.float64)
        n, n_features = X.shape
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, float)
        binary = np.zeros(n_features, dtype=bool)
        if self.bundle_binary:
            binary = (np.all((X == 0.0) | (X == 1.0), axis=0)
                      & np.any(X == 1.0, axis=0) & np.any(X == 0.0, axis=0))
        self.edges = [np.empty(0) if binary[j] else _weighted_edges(X[:, j], w, self.max_bins)
                      for j in range(n_features)]
        self.columns: list[tuple[int, list[int]]] = []
        for j in np.flatnonzero(~binary):
            self.columns.append((ORDINAL, [int(j)]))
        bin_idx = np.flatnonzero(binary)
        if len(bin_idx):
            for grp in _exclusive_groups(X[:, bin_idx] == 1.0):
                self.columns.append((BUNDLE, [int(bin_idx[k]) for k in grp]))
        self.n_features_in_ = n_features
        return self

    @property
    def kinds(self) -> np.ndarray:
        return np.array([k for k, _ in self.columns], dtype=np.int64)

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([len(self.edges[m[0]]) + 1 if k == ORDINAL else len(m) + 1
                         for k, m in self.columns], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        codes = np.zeros((X.shape[0], len(self.columns)), dtype=np.uint8)
        for c, (kind, members) in enumerate(self.columns):
            if kind == ORDINAL:
                j = members[0]
                codes[:, c] = np.searchsorted(self.edges[j], X[:, j], side="left")
            else:
                for pos, j in enumerate(members):
                    codes[X[:, j] > 0.5, c] = pos + 1
        return codes

    def split_feature(self, column: int, bin_: int) -> tuple[int, float]:
        """Original feature index and raw threshold of an internal split."""
        kind, members = self.columns[column]
        if kind == ORDINAL:
            return members[0], float(self.edges[members[0]][bin_])
        return members[bin_ - 1], 0.5


TIE_RTOL = 1e-9


@numba.njit(cache=True)
def _accumulate(codes, rows, start, end, g, h, offsets, hist):
    hist[:] = 0.0
    n_cols = codes.shape[1]
    for i in range(start, end):
        r = rows[i]
        gr = g[r]
        hr = h[r]
        for c in range(n_cols):
            k = 2 * (offsets[c] + codes[r, c])
            hist[k] += gr
            hist[k + 1] += hr


@numba.njit(cache=True)
def _gains(pg, ph, m, G, H, lam, mcw, parent, out):
    for b in range(m):
        gl = pg[b]
        hl = ph[b]
        gr = G - gl
        hr = H - hl
        gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
        out[b] = gain if (hl >= mcw) & (hr >= mcw) else -1.0


@numba.njit(cache=True)
def _best_split(hist, offsets, n_bins, kinds, G, H, lam, mcw, scratch):
    # prefix sums, then an independent (vectorizable) gain pass, then argmax
    pg = scratch[0]
    ph = scratch[1]
    gains = scratch[2]
    best_gain = 0.0
    best_c = -1
    best_b = -1
    parent = G * G / (H + lam)
    for c in range(offsets.shape[0]):
        base = 2 * offsets[c]
        m = n_bins[c]
        if kinds[c] == 0:
            gl = 0.0
            hl = 0.0
            for b in range(m - 1):
                gl += hist[base + 2 * b]
                hl += hist[base + 2 * b + 1]
                pg[b] = gl
                ph[b] = hl
            _gains(pg, ph, m - 1, G, H, lam, mcw, parent, gains)
            shift = 0
        else:
            # left side of a bundle split is "member b is not set"
            for b in range(m - 1):
                pg[b] = G - hist[base + 2 * (b + 1)]
                ph[b] = H - hist[base + 2 * (b + 1) + 1]
            _gains(pg, ph, m - 1, G, H, lam, mcw, parent, gains)
            shift = 1
        for b in range(m - 1):
            # gains equal up to rounding keep the earliest candidate
            if gains[b] > best_gain * (1.0 + TIE_RTOL):
                best_gain = gains[b]
                best_c = c
                best_b = b + shift
    return best_c, best_b, 0.5 * best_gain


@numba.njit(cache=True)
def _build_tree(codes, g, h, offsets, n_bins, kinds, max_depth, lam, mcw, lr,
                rows, buf, pred, node_col, node_bin, node_left, node_right,
                node_value, node_gain):
    """Grow one tree depth-first and add its leaf values to ``pred``.

    Only the smaller child's histogram is accumulated; the sibling's is the
    parent's minus it. Children that cannot split get no histogram.
    """
    n = rows.shape[0]
    hist_size = 0
    for c in range(offsets.shape[0]):
        hist_size += 2 * n_bins[c]
    n_slots = 2 * max_depth + 3
    pool = np.empty((n_slots, hist_size))
    free = np.arange(n_slots)
    scratch = np.empty((3, 256))
    n_free = n_slots

    # stack rows: node id, start, end, depth, hist slot (-1: leaf-bound)
    stack = np.empty((n_slots + 2, 5), dtype=np.int64)
    G = 0.0
    H = 0.0
    for i in range(n):
        G += g[rows[i]]
        H += h[rows[i]]
    slot = -1
    if H >= 2.0 * mcw:
        n_free -= 1
        slot = free[n_free]
        _accumulate(codes, rows, 0, n, g, h, offsets, pool[slot])
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    stack[0, 4] = slot
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node = stack[sp, 0]
        start = stack[sp, 1]
        end = stack[sp, 2]
        depth = stack[sp, 3]
        slot = stack[sp, 4]

        G = 0.0
        H = 0.0
        for i in range(start, end):
            G += g[rows[i]]
            H += h[rows[i]]

        c = -1
        b = -1
        gain = 0.0
        if slot >= 0:
            c, b, gain = _best_split(pool[slot], offsets, n_bins, kinds, G, H, lam, mcw, scratch)

        if c < 0:
            value = -lr * G / (H + lam)
            node_col[node] = -1
            node_value[node] = value
            for i in range(start, end):
                pred[rows[i]] += value
            if slot >= 0:
                free[n_free] = slot
                n_free += 1
            continue

        # stable partition of rows[start:end]; left side first
        nl = 0
        nr = 0
        hl = 0.0
        is_ordinal = kinds[c] == 0
        for i in range(start, end):
            r = rows[i]
            code = codes[r, c]
            if is_ordinal:
                go_left = code <= b
            else:
                go_left = code != b
            if go_left:
                rows[start + nl] = r
                nl += 1
                hl += h[r]
            else:
                buf[nr] = r
                nr += 1
        for i in range(nr):
            rows[start + nl + i] = buf[i]
        mid = start + nl
        hr = H - hl

        left = n_nodes
        right = n_nodes + 1
        n_nodes += 2
        node_col[node] = c
        node_bin[node] = b
        node_left[node] = left
        node_right[node] = right
        node_gain[node] = gain

        child_depth = depth + 1
        splittable = child_depth < max_depth
        left_ok = splittable and hl >= 2.0 * mcw
        right_ok = splittable and hr >= 2.0 * mcw
        left_slot = -1
        right_slot = -1
        parent_hist = pool[slot]
        if left_ok and right_ok:
            n_free -= 1
            small_slot = free[n_free]
            if nl <= nr:
                _accumulate(codes, rows, start, mid, g, h, offsets, pool[small_slot])
                left_slot = small_slot
                right_slot = slot
            else:
                _accumulate(codes, rows, mid, end, g, h, offsets, pool[small_slot])
                left_slot = slot
                right_slot = small_slot
            small = pool[small_slot]
            for k in range(hist_size):
                parent_hist[k] -= small[k]
        elif left_ok:
            _accumulate(codes, rows, start, mid, g, h, offsets, parent_hist)
            left_slot = slot
        elif right_ok:
            _accumulate(codes, rows, mid, end, g, h, offsets, parent_hist)
            right_slot = slot
        else:
            free[n_free] = slot
            n_free += 1

        stack[sp, 0] = right
        stack[sp, 1] = mid
        stack[sp, 2] = end
        stack[sp, 3] = child_depth
        stack[sp, 4] = right_slot
        sp += 1
        stack[sp, 0] = left
        stack[sp, 1] = start
        stack[sp, 2] = mid
        stack[sp, 3] = child_depth
        stack[sp, 4] = left_slot
        sp += 1
    return n_nodes


@numba.njit(cache=True)
def _predict_raw(X, feat, thr, left, right, value, roots, out):
    for i in range(X.shape[0]):
        s = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feat[node] >= 0:
                if X[i, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            s += value[node]
        out[i] = s


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def logloss(y, raw, w=None) -> float:
    """Weighted mean of ``log(1 + e^z) - y z``."""
    w = np.ones_like(raw) if w is None else w
    return float(np.sum(w * (np.logaddexp(0.0, raw) - y * raw)) / np.sum(w))


@dataclass
class GBDTClassifier:
    """Boosted regression trees on the logistic loss.

    Deterministic: there is no row or column subsampling, and split ties
    resolve to the lowest internal column and bin.
    """

    params: GBDTParams = field(default_factory=GBDTParams)

    def fit(self, X, y, sample_weight=None) -> "GBDTClassifier":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be 2-D with one row per label")
        if X.shape[0] < 2:
            raise ValueError("need at least 2 training instances")
        if np.unique(y).size < 2:
            raise ValueError("training labels contain a single class")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
        p = self.params
        self.binner_ = Binner(p.max_bins, p.bundle_binary).fit(X, w)
        codes = np.ascontiguousarray(self.binner_.transform(X))
        n_bins = self.binner_.n_bins
        kinds = self.binner_.kinds
        offsets = np.concatenate([[0], np.cumsum(n_bins)[:-1]]).astype(np.int64)

        n, n_features = X.shape
        max_nodes = 2 ** (p.max_depth + 1) - 1
        raw = np.zeros(n)
        rows = np.empty(n, dtype=np.int64)
        buf = np.empty(n, dtype=np.int64)
        trees = []
        self.loss_history_ = [logloss(y, raw, w)]
        for _ in range(p.n_rounds):
            prob = sigmoid(raw)
            g = w * (prob - y)
            h = w * prob * (1.0 - prob)
            rows[:] = np.arange(n)
            nc = np.full(max_nodes, -1, dtype=np.int64)
            nb = np.zeros(max_nodes, dtype=np.int64)
            nl = np.zeros(max_nodes, dtype=np.int64)
            nr = np.zeros(max_nodes, dtype=np.int64)
            nv = np.zeros(max_nodes)
            ng = np.zeros(max_nodes)
            k = _build_tree(codes, g, h, offsets, n_bins, kinds, p.max_depth, p.reg_lambda,
                            p.min_child_weight, p.learning_rate, rows, buf, raw,
                            nc, nb, nl, nr, nv, ng)
            trees.append((nc[:k], nb[:k], nl[:k], nr[:k], nv[:k], ng[:k]))
            self.loss_history_.append(logloss(y, raw, w))
        self._pack(trees, n_features)
        return self

    def _pack(self, trees, n_features):
        feature, threshold, left, right, value, roots = [], [], [], [], [], []
        importance = np.zeros(n_features)
        offset = 0
        for nc, nb, nl, nr, nv, ng in trees:
            roots.append(offset)
            for i in range(len(nc)):
                if nc[i] < 0:
                    feature.append(-1)
                    threshold.append(0.0)
                    left.append(-1)
                    right.append(-1)
                else:
                    f, t = self.binner_.split_feature(int(nc[i]), int(nb[i]))
                    feature.append(f)
                    threshold.append(t)
                    left.append(offset + int(nl[i]))
                    right.append(offset + int(nr[i]))
                    importance[f] += ng[i]
                value.append(nv[i])
            offset += len(nc)
        self.feature_ = np.array(feature, dtype=np.int64)
        self.threshold_ = np.array(threshold)
        self.left_ = np.array(left, dtype=np.int64)
        self.right_ = np.array(right, dtype=np.int64)
        self.value_ = np.array(value)
        self.roots_ = np.array(roots, dtype=np.int64)
        self.gain_importance_ = importance
        self.n_features_in_ = n_features

    @property
    def n_trees(self) -> int:
        return len(self.roots_)

    def decision_function(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features per row")
        out = np.empty(X.shape[0])
        _predict_raw(X, self.feature_, self.threshold_, self.left_, self.right_,
                     self.value_, self.roots_, out)
        return out

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0.0).astype(np.int64)

    @property
    def feature_importances_(self) -> np.ndarray:
        """Total split gain per feature, normalized to sum to 1."""
        total = self.gain_importance_.sum()
        if total <= 0:
            return np.zeros_like(self.gain_importance_)
        return self.gain_importance_ / total
