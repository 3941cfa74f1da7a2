"""Loaders for listening events, artist genre maps and friendship edges.

All inputs are UTF-8 TSV with integer ids, ``\\t`` delimiters and no header
unless ``header=True``:

* events: ``user  artist  track  timestamp``
* genres: ``artist  genre  weight``
* edges:  ``user_a  user_b``
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = 0.10
# below this many rows a single bad line would trip the fraction, so tiny
# files only warn
MIN_ROWS_FOR_ABORT = 20


@dataclass
class LoadReport:
    path: str = ""
    n_rows: int = 0
    n_loaded: int = 0
    skipped: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)

    def skip(self, lineno: int, reason: str) -> None:
        self.skipped.append((lineno, reason))

    def summary(self, limit: int = 5) -> str:
        head = "; ".join(f"line {n}: {r}" for n, r in self.skipped[:limit])
        more = f" (+{self.n_skipped - limit} more)" if self.n_skipped > limit else ""
        return f"{self.path}: {self.n_skipped}/{self.n_rows} rows skipped. {head}{more}"


@dataclass
class EventLog:
    """Listening events sorted by (user, timestamp, artist, track)."""

    user: np.ndarray
    artist: np.ndarray
    track: np.ndarray
    timestamp: np.ndarray
    report: LoadReport | None = None

    def __post_init__(self):
        cols = [np.asarray(c, dtype=np.int64) for c in (self.user, self.artist, self.track, self.timestamp)]
        if len({len(c) for c in cols}) != 1:
            raise ValueError("event columns differ in length")
        if any(len(c) and c.min() < 0 for c in cols):
            raise ValueError("event ids and timestamps must be nonnegative")
        order = np.lexsort((cols[2], cols[1], cols[3], cols[0]))
        self.user, self.artist, self.track, self.timestamp = (c[order] for c in cols)

    def __len__(self) -> int:
        return len(self.user)

    @classmethod
    def from_rows(cls, rows) -> "EventLog":
        arr = np.asarray(list(rows), dtype=np.int64).reshape(-1, 4)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    def rows(self) -> list[tuple[int, int, int, int]]:
        return list(zip(self.user.tolist(), self.artist.tolist(),
                        self.track.tolist(), self.timestamp.tolist()))

    @property
    def n_users(self) -> int:
        return int(self.user.max()) + 1 if len(self) else 0

    @property
    def n_artists(self) -> int:
        return int(self.artist.max()) + 1 if len(self) else 0


@dataclass
class GenreMap:
    n_genres: int
    weights: dict[int, list[tuple[int, float]]]
    report: LoadReport | None = None

    def __post_init__(self):
        for artist, pairs in self.weights.items():
            for g, w in pairs:
                if not 0 <= g < self.n_genres:
                    raise ValueError(f"artist {artist}: genre {g} outside [0, {self.n_genres})")
                if not (np.isfinite(w) and w >= 0):
                    raise ValueError(f"artist {artist}: invalid weight {w}")

    def to_matrix(self, n_artists: int):
        """Sparse ``n_artists x n_genres`` weight matrix (duplicate pairs summed)."""
        import scipy.sparse as sp

        rows, cols, vals = [], [], []
        for artist, pairs in self.weights.items():
            if artist >= n_artists:
                continue
            for g, w in pairs:
                rows.append(artist)
                cols.append(g)
                vals.append(w)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n_artists, self.n_genres))


@dataclass
class EdgeList:
    """Undirected simple edges stored as sorted ``(min, max)`` pairs."""

    edges: np.ndarray
    report: LoadReport | None = None

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e) and e.min() < 0:
            raise ValueError("node ids must be nonnegative")
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        self.edges = np.unique(e, axis=0) if len(e) else e

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def n_nodes(self) -> int:
        return int(self.edges.max()) + 1 if len(self) else 0


def _read_rows(path, n_fields: int, header: bool):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, start=1):
            if header and lineno == 1:
                continue
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            yield lineno, parts if len(parts) == n_fields else None


def _check_malformed(report: LoadReport) -> None:
    if report.n_rows and report.n_skipped == report.n_rows:
        raise DataError("no usable rows: " + report.summary())
    if report.n_rows >= MIN_ROWS_FOR_ABORT and report.n_skipped / report.n_rows > MAX_MALFORMED_FRACTION:
        raise DataError("too many malformed rows: " + report.summary())
    if report.n_skipped:
        log.warning(report.summary())


def load_events(path, header: bool = False) -> EventLog:
    report = LoadReport(str(path))
    out = []
    for lineno, parts in _read_rows(path, 4, header):
        report.n_rows += 1
        if parts is None:
            report.skip(lineno, "expected 4 fields")
            continue
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            report.skip(lineno, "non-integer field")
            continue
        if min(vals) < 0:
            report.skip(lineno, "negative id or timestamp")
            continue
        out.append(vals)
    _check_malformed(report)
    report.n_loaded = len(out)
    arr = np.asarray(out, dtype=np.int64).reshape(-1, 4)
    return EventLog(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], report=report)


def load_genre_map(path, n_genres: int | None = None, header: bool = False) -> GenreMap:
    """``n_genres`` defaults to one past the largest genre id seen."""
    report = LoadReport(str(path))
    weights: dict[int, list[tuple[int, float]]] = {}
    max_genre = -1
    for lineno, parts in _read_rows(path, 3, header):
        report.n_rows += 1
        if parts is None:
            report.skip(lineno, "expected 3 fields")
            continue
        try:
            artist, genre, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            report.skip(lineno, "unparsable field")
            continue
        if artist < 0 or genre < 0:
            report.skip(lineno, "negative id")
            continue
        if not np.isfinite(w) or w < 0:
            report.skip(lineno, f"invalid weight {parts[2]}")
            continue
        if n_genres is not None and genre >= n_genres:
            report.skip(lineno, f"genre {genre} >= n_genres {n_genres}")
            continue
        weights.setdefault(artist, []).append((genre, w))
        max_genre = max(max_genre, genre)
    _check_malformed(report)
    report.n_loaded = sum(len(v) for v in weights.values())
    return GenreMap(n_genres if n_genres is not None else max_genre + 1, weights, report=report)


def load_edges(path, header: bool = False) -> EdgeList:
    report = LoadReport(str(path))
    out = []
    seen = set()
    for lineno, parts in _read_rows(path, 2, header):
        report.n_rows += 1
        if parts is None:
            report.skip(lineno, "expected 2 fields")
            continue
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            report.skip(lineno, "non-integer field")
            continue
        if a < 0 or b < 0:
            report.skip(lineno, "negative id")
            continue
        if a == b:
            report.skip(lineno, "self-loop")
            continue
        key = (min(a, b), max(a, b))
        if key not in seen:
            seen.add(key)
            out.append(key)
    _check_malformed(report)
    report.n_loaded = len(out)
    return EdgeList(np.asarray(out, dtype=np.int64).reshape(-1, 2), report=report)


def write_events(log_: EventLog, path) -> None:
    _write_int_table(path, np.column_stack([log_.user, log_.artist, log_.track, log_.timestamp]))


def write_genre_map(gm: GenreMap, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for artist in sorted(gm.weights):
            for g, w in gm.weights[artist]:
                fh.write(f"{artist}\t{g}\t{w!r}\n")


def write_edges(el: EdgeList, path) -> None:
    _write_int_table(path, el.edges)


def _write_int_table(path, arr: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in arr.tolist():
            fh.write("\t".join(map(str, row)) + "\n")
