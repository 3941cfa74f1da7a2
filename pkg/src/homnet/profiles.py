"""User listening-profile matrices and their low-rank NMF compression."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleError
from .ingest import EventLog, GenreMap

log = logging.getLogger(__name__)


@dataclass
class ProfileMatrix:
    data: sp.csr_matrix
    flavor: str  # "artist" or "genre"
    normalized: bool = False

    def __post_init__(self):
        self.data = sp.csr_matrix(self.data, dtype=np.float64)
        self.data.sum_duplicates()
        self.data.sort_indices()
        if self.flavor not in ("artist", "genre"):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        vals = self.data.data
        if len(vals) and (vals.min() < 0 or not np.all(np.isfinite(vals))):
            raise ValueError("profile entries must be finite and nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]


@dataclass
class CoverageReport:
    n_events: int = 0
    n_uncovered_events: int = 0
    uncovered_artists: list[int] = field(default_factory=list)


@dataclass
class FactorPair:
    W: np.ndarray
    H: np.ndarray
    final_objective: float
    objective_history: list[float]
    n_iter: int
    seed: int

    @property
    def rank(self) -> int:
        return self.W.shape[1]


def density(m) -> float:
    """Stored nonzeros over ``rows * cols``."""
    a = m.data if isinstance(m, ProfileMatrix) else sp.csr_matrix(m)
    a = a.copy()
    a.eliminate_zeros()
    rows, cols = a.shape
    return a.nnz / (rows * cols) if rows and cols else 0.0


def build_artist_matrix(log_: EventLog, n_users: int | None = None,
                        n_artists: int | None = None) -> ProfileMatrix:
    n_users = log_.n_users if n_users is None else n_users
    n_artists = log_.n_artists if n_artists is None else n_artists
    ones = np.ones(len(log_))
    m = sp.csr_matrix((ones, (log_.user, log_.artist)), shape=(n_users, n_artists))
    return ProfileMatrix(m, "artist")


def build_genre_matrix(log_: EventLog, gm: GenreMap, n_users: int | None = None,
                       report: CoverageReport | None = None) -> ProfileMatrix:
    """Playcount-weighted genre profile: ``sum_a plays(u, a) * weight(a, g)``."""
    artists = build_artist_matrix(log_, n_users)
    n_artists = max(artists.n_cols, max(gm.weights, default=-1) + 1)
    A = artists.data
    A = sp.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], n_artists))
    G = gm.to_matrix(n_artists)
    if report is not None:
        covered = np.zeros(n_artists, dtype=bool)
        covered[[a for a, pairs in gm.weights.items() if pairs]] = True
        heard = np.unique(log_.artist)
        missing = heard[~covered[heard]]
        report.n_events = len(log_)
        report.n_uncovered_events = int(np.isin(log_.artist, missing).sum())
        report.uncovered_artists = missing.tolist()
        if len(missing):
            log.info("%d artists (%d events) have no genre weights",
                     len(missing), report.n_uncovered_events)
    return ProfileMatrix(A @ G, "genre")


def l2_normalize_rows(m: ProfileMatrix) -> ProfileMatrix:
    """Scale each nonzero row to unit Euclidean norm; zero rows stay zero."""
    a = m.data.copy()
    a.eliminate_zeros()
    rows = np.repeat(np.arange(a.shape[0]), np.diff(a.indptr))
    # divide by the row max first so tiny entries do not underflow when squared
    top = np.zeros(a.shape[0])
    np.maximum.at(top, rows, a.data)
    scaled = a.data / top[rows]
    norms = np.sqrt(np.bincount(rows, weights=scaled ** 2, minlength=a.shape[0]))
    a.data = scaled / norms[rows]
    return ProfileMatrix(a, m.flavor, normalized=True)


def _objective(M, W, H, MHt, m_sq):
    # 0.5 * ||M - WH||_F^2; the explicit residual is used when it is small
    # enough to materialize, since it avoids cancellation near zero
    if M.shape[0] * M.shape[1] <= 4_000_000:
        dense = M.toarray() if sp.issparse(M) else M
        return 0.5 * float(np.sum((dense - W @ H) ** 2))
    cross = float(np.sum(W * MHt))
    gram = float(np.sum((W.T @ W) * (H @ H.T)))
    return 0.5 * max(m_sq - 2.0 * cross + gram, 0.0)


def nmf(m, rank: int = 20, max_iters: int = 500, tol: float = 1e-5, seed: int = 0,
        eps: float = 1e-16, inner_updates: int = 10) -> FactorPair:
    """Frobenius NMF ``M ~ W H`` by Lee-Seung multiplicative updates.

    Each iteration applies ``inner_updates`` multiplicative steps to H, then
    as many to W, reusing the products with M; every step is monotone, and
    repeating the cheap dense part converges far faster than alternating
    single steps. Stops after ``max_iters`` iterations or once the relative
    objective decrease falls below ``tol``. Initial factors are
    ``|N(0,1)| * sqrt(mean(M) / rank)``.
    """
    M = m.data if isinstance(m, ProfileMatrix) else m
    M = sp.csr_matrix(M, dtype=np.float64)
    n_rows, n_cols = M.shape
    if rank < 1 or rank > min(n_rows, n_cols):
        raise InfeasibleError(f"rank {rank} outside [1, min{M.shape}]")
    if inner_updates < 1:
        raise ValueError("inner_updates must be >= 1")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(M.sum() / (n_rows * n_cols) / rank) or 1.0
    W = np.abs(rng.standard_normal((n_rows, rank))) * scale
    H = np.abs(rng.standard_normal((rank, n_cols))) * scale
    m_sq = float(M.multiply(M).sum())
    MT = M.T.tocsr()

    history = [_objective(M, W, H, M @ H.T, m_sq)]
    it = 0
    for it in range(1, max_iters + 1):
        WtM = (MT @ W).T
        WtW = W.T @ W
        for _ in range(inner_updates):
            H *= WtM / (WtW @ H + eps)
        MHt = M @ H.T
        HHt = H @ H.T
        for _ in range(inner_updates):
            W *= MHt / (W @ HHt + eps)
        obj = _objective(M, W, H, MHt, m_sq)
        prev = history[-1]
        history.append(obj)
        if obj == 0.0 or (prev - obj) < tol * max(prev, np.finfo(float).tiny):
            break
    return FactorPair(W, H, history[-1], history, it, seed)


def profile_dot(W: np.ndarray, u: int, v: int) -> float:
    n = W.shape[0]
    if not (0 <= u < n and 0 <= v < n):
        raise IndexError(f"user index outside [0, {n})")
    return float(W[u] @ W[v])


def edge_dots(W: np.ndarray, edges: np.ndarray) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return np.einsum("ij,ij->i", W[edges[:, 0]], W[edges[:, 1]])


# persistence: sparse TSV triplets, dense row-major TSV, key/value headers

def write_meta(path, **meta) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k in sorted(meta):
            fh.write(f"{k}\t{meta[k]}\n")


def read_meta(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            k, v = line.split("\t", 1)
            out[k] = v
    return out


def save_profile_matrix(m: ProfileMatrix, path) -> None:
    path = Path(path)
    coo = m.data.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r, c, v in zip(coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()):
            fh.write(f"{r}\t{c}\t{v!r}\n")
    write_meta(path.with_suffix(".meta"), rows=m.n_rows, cols=m.n_cols, flavor=m.flavor,
               normalized=str(m.normalized).lower(), nnz=m.data.nnz)


def load_profile_matrix(path) -> ProfileMatrix:
    path = Path(path)
    meta = read_meta(path.with_suffix(".meta"))
    arr = np.loadtxt(path, delimiter="\t", ndmin=2) if path.stat().st_size else np.zeros((0, 3))
    shape = (int(meta["rows"]), int(meta["cols"]))
    m = sp.csr_matrix((arr[:, 2], (arr[:, 0].astype(int), arr[:, 1].astype(int))), shape=shape)
    return ProfileMatrix(m, meta["flavor"], meta["normalized"] == "true")


def save_dense(a: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(a).tolist():
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")


def load_dense(path) -> np.ndarray:
    return np.loadtxt(path, delimiter="\t", ndmin=2)


def save_factors(fp: FactorPair, directory, prefix: str = "artist_nmf") -> None:
    d = Path(directory)
    save_dense(fp.W, d / f"{prefix}_W.tsv")
    save_dense(fp.H, d / f"{prefix}_H.tsv")
    write_meta(d / f"{prefix}.meta", rows=fp.W.shape[0], cols=fp.H.shape[1], rank=fp.rank,
               seed=fp.seed, n_iter=fp.n_iter, final_objective=repr(fp.final_objective),
               flavor="artist")
