"""Synthetic listening logs and friendship graphs with planted homophily.

Every user carries latent propensities in [0, 1] for mainstream listening,
novelty seeking and diversity, a taste community (a block of genres), and
a social circle that is unrelated to music. Listening events are simulated
so that the observable features track the latents:

* a user explores (plays an artist drawn afresh) with a probability that
  grows with novelty, otherwise replays an artist from their own history;
* an exploration draw comes from global artist popularity with a
  probability that grows with mainstreaminess, otherwise from the user's
  genre pool;
* the genre pool spans more of the user's community as diversity grows.

Friendships are independent Bernoulli draws per pair with

    logit p(u, v) = alpha + strength * music_sim(u, v) + circle_weight * [same circle]

where ``music_sim`` rewards close latents and a shared taste community, and
``alpha`` is found by bisection so the expected edge count hits the target.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError
from .ingest import EdgeList, EventLog, GenreMap

T0 = 1_200_000_000  # dataset start, seconds since epoch
DAY = 86_400


@dataclass(frozen=True)
class SyntheticConfig:
    n_users: int = 2000
    n_artists: int = 4000
    n_genres: int = 60
    n_events: int = 300_000
    n_edges: int = 15_000
    homophily_strength: float = 0.0
    mnd_edge_weights: tuple[float, float, float] = (15.0, 15.0, 15.0)
    taste_weight: float = 8.0
    n_communities: int = 6
    circle_size: int = 20
    circle_weight: float = 5.0
    tracks_per_artist: int = 8
    days: int = 730
    seed: int = 0

    def validate(self) -> None:
        counts = dict(n_users=self.n_users, n_artists=self.n_artists, n_genres=self.n_genres,
                      n_events=self.n_events, n_edges=self.n_edges,
                      n_communities=self.n_communities, circle_size=self.circle_size,
                      tracks_per_artist=self.tracks_per_artist, days=self.days)
        for name, v in counts.items():
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
        if not 0.0 <= self.homophily_strength <= 1.0:
            raise ConfigError("homophily_strength must lie in [0, 1]")
        if len(self.mnd_edge_weights) != 3:
            raise ConfigError("mnd_edge_weights needs exactly 3 values")
        if self.n_events < self.n_users:
            raise ConfigError("n_events < n_users: every user needs at least one event")
        if self.n_genres < self.n_communities:
            raise ConfigError("need at least one genre per community")
        if self.n_artists < self.n_genres:
            raise ConfigError("need at least one artist per genre")
        if self.n_edges >= self.n_users * (self.n_users - 1) // 2:
            raise ConfigError("n_edges must be below the number of node pairs")


@dataclass
class PlantedTruth:
    mainstream: np.ndarray
    novelty: np.ndarray
    diversity: np.ndarray
    community: np.ndarray
    circle: np.ndarray
    alpha: float

    def rows(self):
        for u in range(len(self.mainstream)):
            yield (u, float(self.mainstream[u]), float(self.novelty[u]), float(self.diversity[u]),
                   int(self.community[u]), int(self.circle[u]))


def _catalog(cfg: SyntheticConfig, rng: np.random.Generator):
    genre_comm = np.arange(cfg.n_genres) % cfg.n_communities
    # every genre gets at least one artist
    primary = np.concatenate([np.arange(cfg.n_genres),
                              rng.integers(0, cfg.n_genres, cfg.n_artists - cfg.n_genres)])
    rng.shuffle(primary)
    popularity = 1.0 / np.arange(1, cfg.n_artists + 1)
    popularity = popularity[rng.permutation(cfg.n_artists)]
    weights: dict[int, list[tuple[int, float]]] = {}
    has_second = rng.random(cfg.n_artists) < 0.5
    for a in range(cfg.n_artists):
        pairs = [(int(primary[a]), 1.0)]
        if has_second[a]:
            same = np.flatnonzero(genre_comm == genre_comm[primary[a]])
            g2 = int(same[rng.integers(len(same))])
            if g2 != primary[a]:
                pairs.append((g2, 0.5))
        weights[a] = pairs
    return genre_comm, primary, popularity, GenreMap(cfg.n_genres, weights)


def _sample_events(cfg, rng, latents, community, genre_comm, primary, popularity):
    m, nov, div = latents
    n_users = cfg.n_users
    act = rng.lognormal(0.0, 0.5, n_users)
    counts = 1 + rng.multinomial(cfg.n_events - n_users, act / act.sum())
    user = np.repeat(np.arange(n_users), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pos = np.arange(cfg.n_events) - starts[user]

    explore_p = 0.05 + 0.55 * nov
    mainstream_p = 0.05 + 0.9 * m
    explore = (rng.random(cfg.n_events) < explore_p[user]) | (pos == 0)
    main = rng.random(cfg.n_events) < mainstream_p[user]

    # genre pools: the first k_u genres of a per-user shuffle of the community
    per_comm = [np.flatnonzero(genre_comm == c) for c in range(cfg.n_communities)]
    pool_size = np.array([1 + int(round(div[u] * (len(per_comm[community[u]]) - 1)))
                          for u in range(n_users)])
    pools = [rng.permutation(per_comm[community[u]])[:pool_size[u]] for u in range(n_users)]

    by_genre = [np.flatnonzero(primary == g) for g in range(cfg.n_genres)]
    genre_cdf = []
    for arts in by_genre:
        c = np.cumsum(popularity[arts])
        genre_cdf.append(c / c[-1])
    global_cdf = np.cumsum(popularity)
    global_cdf /= global_cdf[-1]

    artist = np.full(cfg.n_events, -1, dtype=np.int64)
    ex_main = np.flatnonzero(explore & main)
    artist[ex_main] = np.minimum(np.searchsorted(global_cdf, rng.random(len(ex_main))),
                                 cfg.n_artists - 1)
    ex_pool = np.flatnonzero(explore & ~main)
    u_ex = user[ex_pool]
    pick = (rng.random(len(ex_pool)) * pool_size[u_ex]).astype(np.int64)
    genres = np.array([pools[u][k] for u, k in zip(u_ex.tolist(), pick.tolist())], dtype=np.int64)
    r = rng.random(len(ex_pool))
    for g in np.unique(genres):
        sel = genres == g
        idx = np.minimum(np.searchsorted(genre_cdf[g], r[sel]), len(by_genre[g]) - 1)
        artist[ex_pool[sel]] = by_genre[g][idx]

    # replays copy the artist of a uniformly chosen earlier event of the same user
    ptr = np.arange(cfg.n_events)
    rep = ~explore
    ptr[rep] = starts[user[rep]] + (rng.random(rep.sum()) * pos[rep]).astype(np.int64)
    while True:
        nxt = ptr[ptr]
        if np.array_equal(nxt, ptr):
            break
        ptr = nxt
    artist = artist[ptr]

    track = artist * cfg.tracks_per_artist + rng.integers(0, cfg.tracks_per_artist, cfg.n_events)
    span = cfg.days * DAY
    t = T0 + rng.integers(0, span, cfg.n_events)
    # each user's events are replayed in time order
    order = np.lexsort((t, user))
    t_sorted = t[order]
    return EventLog(user, artist, track, t_sorted)


def _pair_logits(cfg, latents, community, circle):
    n = cfg.n_users
    iu, ju = np.triu_indices(n, k=1)
    music = np.zeros(len(iu))
    for w, z in zip(cfg.mnd_edge_weights, latents):
        music -= w * np.abs(z[iu] - z[ju])
    music += cfg.taste_weight * (community[iu] == community[ju])
    logit = cfg.homophily_strength * music + cfg.circle_weight * (circle[iu] == circle[ju])
    return iu, ju, logit


def _calibrate_alpha(logit: np.ndarray, target: float, iters: int = 100) -> float:
    lo, hi = -60.0, 60.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if expit(logit + mid).sum() < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_synthetic(cfg: SyntheticConfig) -> tuple[EventLog, GenreMap, EdgeList, PlantedTruth]:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    genre_comm, primary, popularity, gm = _catalog(cfg, rng)
    latents = tuple(rng.random(cfg.n_users) for _ in range(3))
    community = rng.integers(0, cfg.n_communities, cfg.n_users)
    circle = rng.permutation(cfg.n_users) // cfg.circle_size
    log = _sample_events(cfg, rng, latents, community, genre_comm, primary, popularity)

    iu, ju, logit = _pair_logits(cfg, latents, community, circle)
    alpha = _calibrate_alpha(logit, cfg.n_edges)
    hit = rng.random(len(iu)) < expit(logit + alpha)
    edges = EdgeList(np.column_stack([iu[hit], ju[hit]]))
    truth = PlantedTruth(*latents, community=community, circle=circle, alpha=alpha)
    return log, gm, edges, truth


def config_dict(cfg: SyntheticConfig) -> dict:
    d = asdict(cfg)
    d["mnd_edge_weights"] = list(cfg.mnd_edge_weights)
    return d
