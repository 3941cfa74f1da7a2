import numpy as np
import pytest

from homnet.features import compute_user_features
from homnet.graph import SocialGraph
from homnet.profiles import build_artist_matrix, build_genre_matrix, l2_normalize_rows, nmf
from homnet.synthetic import SyntheticConfig, generate_synthetic


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


@pytest.fixture
def tsv(tmp_path):
    def make(name, lines):
        return write_lines(tmp_path / name, lines)

    return make


class World:
    """A generated dataset with every derived artifact the analyses need."""

    def __init__(self, cfg: SyntheticConfig, rank: int = 20):
        self.cfg = cfg
        self.log, self.gm, self.edges, self.truth = generate_synthetic(cfg)
        n = cfg.n_users
        self.genre = build_genre_matrix(self.log, self.gm, n)
        self.table = compute_user_features(self.log, self.genre.data, n, cfg.n_genres)
        self.factors = nmf(l2_normalize_rows(build_artist_matrix(self.log, n)), rank, seed=cfg.seed)
        self.W = self.factors.W
        self.graph = SocialGraph(self.edges, n)


@pytest.fixture(scope="session")
def small_world():
    cfg = SyntheticConfig(n_users=300, n_artists=600, n_genres=24, n_events=30_000, n_edges=1500,
                          homophily_strength=1.0, seed=3)
    return World(cfg, rank=8)


@pytest.fixture(scope="session")
def world_factory():
    cache = {}

    def get(**kw):
        key = tuple(sorted(kw.items()))
        if key not in cache:
            cache[key] = World(SyntheticConfig(**kw))
        return cache[key]

    return get


def random_graph(rng, n, p):
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return SocialGraph(np.column_stack([iu[keep], ju[keep]]), n)


ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def check(number, title, ok, detail=""):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
