"""Per-user mainstreaminess (M), novelty (N) and diversity (D) features.

Time windows are fixed-length intervals anchored at the earliest timestamp
of the log: 1 month = 30 days, 6 months = 180 days, 12 months = 365 days.
Windowed scores are averaged over the windows in which the user is active.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .ingest import EventLog

log = logging.getLogger(__name__)

DAY = 86_400
WINDOW_DAYS = {"1m": 30, "6m": 180, "12m": 365}

FEATURES = ("M_1m", "M_6m", "M_12m", "M_G",
            "N_1m", "N_6m", "N_12m",
            "D_tracks", "D_artists", "D_GC", "D_GE", "D_wavg")
FAMILY_OF = {name: name[0] for name in FEATURES}
REPRESENTATIVE = ("M_G", "N_6m", "D_wavg")
LEVELS = ("low", "mid", "high")


def _window_index(log_: EventLog, window) -> np.ndarray:
    """``window`` is a key of WINDOW_DAYS or a positive number of days."""
    if isinstance(window, str):
        if window not in WINDOW_DAYS:
            raise ValueError(f"unknown window {window!r}; expected one of {sorted(WINDOW_DAYS)}")
        window = WINDOW_DAYS[window]
    if int(window) != window or window < 1:
        raise ValueError(f"window length must be a positive whole number of days, got {window}")
    length = int(window) * DAY
    return (log_.timestamp - log_.timestamp.min()) // length


def _per_user_mean(user_of_row: np.ndarray, values: np.ndarray, n_users: int) -> np.ndarray:
    sums = np.bincount(user_of_row, weights=values, minlength=n_users)
    counts = np.bincount(user_of_row, minlength=n_users)
    return np.divide(sums, counts, out=np.zeros(n_users), where=counts > 0)


def _require_events(log_: EventLog) -> None:
    if len(log_) == 0:
        raise DataError("feature computation needs a nonempty event log")


def mainstreaminess(log_: EventLog, window="G", n_users: int | None = None) -> np.ndarray:
    """Cosine overlap between each user's artist playcounts and the
    all-user aggregate, globally (``window="G"``) or per time window."""
    _require_events(log_)
    n_users = log_.n_users if n_users is None else n_users
    n_artists = log_.n_artists
    if window == "G":
        A = sp.csr_matrix((np.ones(len(log_)), (log_.user, log_.artist)), shape=(n_users, n_artists))
        agg = np.asarray(A.sum(axis=0)).ravel()
        dots = A @ agg
        norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
        denom = norms * np.linalg.norm(agg)
        out = np.divide(dots, denom, out=np.zeros(n_users), where=denom > 0)
    else:
        w = _window_index(log_, window)
        n_w = int(w.max()) + 1
        # (user, window) x artist counts and window x artist aggregate counts
        cell = log_.user * n_w + w
        key = cell * n_artists + log_.artist
        ukey, cnt = np.unique(key, return_counts=True)
        ucell = ukey // n_artists
        uart = ukey % n_artists
        uwin = ucell % n_w
        agg = sp.csr_matrix((cnt.astype(float), (uwin, uart)), shape=(n_w, n_artists))
        agg_vals = np.asarray(agg[uwin, uart]).ravel()
        agg_norm = np.sqrt(np.asarray(agg.multiply(agg).sum(axis=1)).ravel())
        cells, inv = np.unique(ucell, return_inverse=True)
        dot = np.bincount(inv, weights=cnt * agg_vals)
        norm = np.sqrt(np.bincount(inv, weights=cnt.astype(float) ** 2))
        denom = norm * agg_norm[cells % n_w]
        cos = np.divide(dot, denom, out=np.zeros(len(cells)), where=denom > 0)
        out = _per_user_mean(cells // n_w, cos, n_users)
    return np.clip(out, 0.0, 1.0)


def novelty(log_: EventLog, window="6m", n_users: int | None = None) -> np.ndarray:
    """Fraction of a window's distinct artists that the user had never played
    before, averaged over active windows. A user's first window is all new."""
    _require_events(log_)
    n_users = log_.n_users if n_users is None else n_users
    w = _window_index(log_, window)
    n_w = int(w.max()) + 1
    n_artists = log_.n_artists
    key = (log_.user * n_artists + log_.artist) * n_w + w
    ukey = np.unique(key)  # sorted: (user, artist) blocks, windows ascending
    pair = ukey // n_w
    win = ukey % n_w
    first = np.ones(len(ukey), dtype=bool)
    first[1:] = pair[1:] != pair[:-1]
    user = pair // n_artists
    cells, inv = np.unique(user * n_w + win, return_inverse=True)
    distinct = np.bincount(inv)
    new = np.bincount(inv, weights=first.astype(float))
    return _per_user_mean(cells // n_w, new / distinct, n_users)


def diversity_counts(log_: EventLog, n_users: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Log-normalized distinct track and artist counts, ``log(1+c)/max log(1+c)``."""
    _require_events(log_)
    n_users = log_.n_users if n_users is None else n_users
    out = []
    for items in (log_.track, log_.artist):
        key = np.unique(log_.user * (int(items.max()) + 1) + items)
        c = np.bincount(key // (int(items.max()) + 1), minlength=n_users)
        lc = np.log1p(c)
        top = lc.max()
        out.append(lc / top if top > 0 else np.zeros(n_users))
    return out[0], out[1]


def genre_coverage(genre_row, n_genres: int | None = None) -> float:
    row = np.asarray(genre_row, dtype=float)
    n = len(row) if n_genres is None else n_genres
    return float(np.count_nonzero(row)) / n


def genre_entropy(genre_row) -> float:
    """Shannon entropy in bits of the row normalized to sum 1."""
    row = np.asarray(genre_row, dtype=float)
    total = row.sum()
    if total <= 0:
        return 0.0
    p = row[row > 0] / total
    p = p[p > 0]
    return float(max(-np.sum(p * np.log2(p)), 0.0))


def weighted_avg_diversity(genre_row, n_genres: int | None = None) -> float:
    """Mean over all genres of each genre's playcount relative to the
    user's top genre. A zero row scores 0."""
    row = np.asarray(genre_row, dtype=float)
    n = len(row) if n_genres is None else n_genres
    top = row.max() if len(row) else 0.0
    if top <= 0:
        return 0.0
    return float(np.sum(row / top) / n)


def genre_features(genre_matrix, n_genres: int | None = None) -> dict[str, np.ndarray]:
    """Row-wise coverage, entropy and weighted average diversity of a
    (sparse) user x genre playcount matrix."""
    G = sp.csr_matrix(genre_matrix, dtype=float)
    G.eliminate_zeros()
    n_users, n_cols = G.shape
    n = n_cols if n_genres is None else n_genres
    nnz = np.diff(G.indptr)
    totals = np.asarray(G.sum(axis=1)).ravel()
    tops = np.asarray(G.max(axis=1).todense()).ravel()
    rows = np.repeat(np.arange(n_users), nnz)
    p = G.data / totals[rows]
    plogp = np.zeros_like(p)
    pos = p > 0
    plogp[pos] = p[pos] * np.log2(p[pos])
    ent = -np.bincount(rows, weights=plogp, minlength=n_users)
    wavg = np.bincount(rows, weights=G.data / tops[rows], minlength=n_users) / n
    return {"D_GC": nnz / n, "D_GE": np.maximum(ent, 0.0), "D_wavg": wavg}


@dataclass
class GroupAssignment:
    feature: str
    labels: np.ndarray  # 0 = low, 1 = mid, 2 = high, per user
    thresholds: tuple[float, float]

    def names(self) -> list[str]:
        return [LEVELS[i] for i in self.labels]


def assign_groups(values, feature: str = "", users=None) -> GroupAssignment:
    """Cumulative-thirds grouping.

    Users are sorted ascending by (value, user id); walking that order, a
    user whose preceding cumulative sum is below total/3 is low, below
    2*total/3 is mid, and high otherwise.
    """
    v = np.asarray(values, dtype=float)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise DataError(f"{feature or 'values'}: grouping needs finite nonnegative values")
    total = v.sum()
    if total <= 0:
        raise DataError(f"{feature or 'values'}: all values are zero; grouping undefined")
    ids = np.arange(len(v)) if users is None else np.asarray(users)
    order = np.lexsort((ids, v))
    before = np.concatenate([[0.0], np.cumsum(v[order])[:-1]])
    t1, t2 = total / 3.0, 2.0 * total / 3.0
    sorted_labels = np.where(before < t1, 0, np.where(before < t2, 1, 2))
    labels = np.empty(len(v), dtype=np.int64)
    labels[order] = sorted_labels
    return GroupAssignment(feature, labels, (t1, t2))


@dataclass
class UserFeatureTable:
    users: np.ndarray
    values: dict[str, np.ndarray]
    groups: dict[str, np.ndarray] = field(default_factory=dict)
    n_genres: int = 0

    def __len__(self) -> int:
        return len(self.users)

    def matrix(self, names=FEATURES) -> np.ndarray:
        return np.column_stack([self.values[n] for n in names])

    def group_matrix(self, names=FEATURES) -> np.ndarray:
        return np.column_stack([self.groups[n] for n in names])

    def check_ranges(self) -> None:
        for name, v in self.values.items():
            hi = np.log2(max(self.n_genres, 1)) if name == "D_GE" else 1.0
            if np.any(v < 0) or np.any(v > hi + 1e-12):
                raise AssertionError(f"{name} outside [0, {hi}]")


def compute_user_features(log_: EventLog, genre_matrix, n_users: int | None = None,
                          n_genres: int | None = None,
                          window_days=(30, 180, 365)) -> UserFeatureTable:
    """All twelve features plus groups. ``window_days`` gives the lengths
    used for the 1m, 6m and 12m columns."""
    _require_events(log_)
    n_users = log_.n_users if n_users is None else n_users
    if len(window_days) != 3:
        raise ValueError("window_days needs three lengths")
    values: dict[str, np.ndarray] = {}
    for w, days in zip(("1m", "6m", "12m"), window_days):
        values[f"M_{w}"] = mainstreaminess(log_, days, n_users)
    values["M_G"] = mainstreaminess(log_, "G", n_users)
    for w, days in zip(("1m", "6m", "12m"), window_days):
        values[f"N_{w}"] = novelty(log_, days, n_users)
    values["D_tracks"], values["D_artists"] = diversity_counts(log_, n_users)
    G = sp.csr_matrix(genre_matrix)
    if G.shape[0] < n_users:
        G = sp.vstack([G, sp.csr_matrix((n_users - G.shape[0], G.shape[1]))]).tocsr()
    elif G.shape[0] > n_users:
        raise DataError(f"genre matrix has {G.shape[0]} rows for {n_users} users")
    n_genres = G.shape[1] if n_genres is None else n_genres
    values.update(genre_features(G, n_genres))
    idle = np.bincount(log_.user, minlength=n_users) == 0
    if idle.any():
        log.info("%d users without events get zero features", int(idle.sum()))
    table = UserFeatureTable(np.arange(n_users), {k: values[k] for k in FEATURES}, n_genres=n_genres)
    table.groups = {k: assign_groups(table.values[k], k, table.users).labels for k in FEATURES}
    return table


def write_feature_table(t: UserFeatureTable, path) -> None:
    header = ["user", *FEATURES, *(f"{k}_group" for k in FEATURES)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for i, u in enumerate(t.users.tolist()):
            vals = [repr(float(t.values[k][i])) for k in FEATURES]
            grps = [LEVELS[int(t.groups[k][i])] for k in FEATURES]
            fh.write("\t".join([str(u), *vals, *grps]) + "\n")


def read_feature_table(path, n_genres: int = 0) -> UserFeatureTable:
    """Read a feature TSV. Group columns are optional; missing ones are
    recomputed with the cumulative-thirds rule."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split("\t")
    col = {name: i for i, name in enumerate(header)}
    missing = [k for k in FEATURES if k not in col]
    if "user" not in col or missing:
        raise DataError(f"{path}: missing columns {['user'] * ('user' not in col) + missing}")
    rows = [ln.split("\t") for ln in lines[1:] if ln]
    users = np.array([int(r[col["user"]]) for r in rows], dtype=np.int64)
    values = {k: np.array([float(r[col[k]]) for r in rows]) for k in FEATURES}
    t = UserFeatureTable(users, values, n_genres=n_genres)
    for k in FEATURES:
        gk = f"{k}_group"
        if gk in col:
            t.groups[k] = np.array([LEVELS.index(r[col[gk]]) for r in rows], dtype=np.int64)
        else:
            t.groups[k] = assign_groups(values[k], k, users).labels
    return t
