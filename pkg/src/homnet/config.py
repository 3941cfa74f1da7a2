"""Pipeline configuration: INI sections mapped onto dataclasses.

Precedence, lowest first: dataclass defaults, config file, ``HOMNET_SEED``,
command-line flags.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .gbdt import GBDTParams
from .linkpred import COMBOS, parse_combo
from .synthetic import SyntheticConfig

SEED_ENV = "HOMNET_SEED"


@dataclass
class PathsConfig:
    events: str | None = field(default=None, metadata={"type": str})
    genres: str | None = field(default=None, metadata={"type": str})
    edges: str | None = field(default=None, metadata={"type": str})
    # precomputed inputs that replace the corresponding computed stage
    features: str | None = field(default=None, metadata={"type": str})
    factors: str | None = field(default=None, metadata={"type": str})
    header: bool = False
    n_genres: int | None = field(default=None, metadata={"type": int})
    n_users: int | None = field(default=None, metadata={"type": int})


@dataclass
class NMFConfig:
    rank: int = 20
    max_iters: int = 500
    tol: float = 1e-5
    normalize_before: bool = True
    inner_updates: int = 10


@dataclass
class FeaturesConfig:
    window_days: tuple[int, ...] = (30, 180, 365)


@dataclass
class HomophilyConfig:
    null_runs: int = 1
    bins: int = 50
    max_retries: int = 100


@dataclass
class LinkpredConfig:
    combos: tuple[str, ...] = COMBOS
    n_datasets: int = 10
    n_splits: int = 10
    test_fraction: float = 0.2
    gf_full_graph: bool = False
    group_rule: str = "either"
    n_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    max_bins: int = 256

    def gbdt_params(self) -> GBDTParams:
        return GBDTParams(n_rounds=self.n_rounds, max_depth=self.max_depth,
                          learning_rate=self.learning_rate, reg_lambda=self.reg_lambda,
                          min_child_weight=self.min_child_weight, max_bins=self.max_bins)


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    nmf: NMFConfig = field(default_factory=NMFConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    homophily: HomophilyConfig = field(default_factory=HomophilyConfig)
    linkpred: LinkpredConfig = field(default_factory=LinkpredConfig)
    synth: SyntheticConfig = field(default_factory=SyntheticConfig)
    master_seed: int = 0

    def validate(self) -> None:
        if self.nmf.rank < 1:
            raise ConfigError("nmf.rank must be >= 1")
        if self.nmf.max_iters < 1 or self.nmf.tol < 0 or self.nmf.inner_updates < 1:
            raise ConfigError("nmf.max_iters and nmf.inner_updates must be >= 1, nmf.tol >= 0")
        if len(self.features.window_days) != 3 or min(self.features.window_days) < 1:
            raise ConfigError("features.window_days needs three positive lengths")
        if self.homophily.null_runs < 1 or self.homophily.bins < 1 or self.homophily.max_retries < 1:
            raise ConfigError("homophily counts must be positive")
        lp = self.linkpred
        try:
            for c in lp.combos:
                parse_combo(c)
            lp.gbdt_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if lp.n_datasets < 1 or lp.n_splits < 1 or not 0 < lp.test_fraction < 1:
            raise ConfigError("linkpred needs >= 1 dataset, >= 1 split and test_fraction in (0, 1)")
        if lp.group_rule not in ("either", "both"):
            raise ConfigError("linkpred.group_rule must be 'either' or 'both'")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be nonnegative")


SECTIONS = ("paths", "nmf", "features", "homophily", "linkpred", "synth")


def _coerce(raw: str, f: dataclasses.Field, default):
    kind = f.metadata.get("type") or type(default)
    raw = raw.strip()
    if f.metadata.get("type") and raw.lower() in ("", "none"):
        return None
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is tuple:
        items = [x.strip() for x in raw.split(",") if x.strip()]
        elem = type(default[0]) if default else str
        return tuple(elem(x) for x in items)
    return kind(raw)


def _update(obj, values: dict[str, str], section: str):
    fields = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for key, raw in values.items():
        name = key.replace("-", "_")
        if name not in fields:
            raise ConfigError(f"unknown key [{section}] {key}")
        try:
            changes[name] = _coerce(raw, fields[name], getattr(obj, name))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return dataclasses.replace(obj, **changes)


def load_config(path=None, overrides: dict[str, dict[str, str]] | None = None,
                env=None) -> PipelineConfig:
    """Read an INI file (optional), apply the seed environment variable,
    then string-valued ``overrides`` keyed by section."""
    cfg = PipelineConfig()
    sections: dict[str, dict[str, str]] = {}
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"no such config file: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for sec in parser.sections():
            sections[sec] = dict(parser[sec])
        if parser.defaults():
            sections.setdefault("run", {}).update(parser.defaults())
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        sections.setdefault("run", {})["master_seed"] = env[SEED_ENV]
    for sec, vals in (overrides or {}).items():
        sections.setdefault(sec, {}).update(vals)
    for sec, vals in sections.items():
        if sec == "run":
            for k, v in vals.items():
                if k.replace("-", "_") != "master_seed":
                    raise ConfigError(f"unknown key [run] {k}")
                try:
                    cfg.master_seed = int(v)
                except ValueError as exc:
                    raise ConfigError(f"master_seed: {exc}") from exc
        elif sec in SECTIONS:
            setattr(cfg, sec, _update(getattr(cfg, sec), vals, sec))
        else:
            raise ConfigError(f"unknown config section [{sec}]")
    cfg.validate()
    return cfg


def to_dict(cfg: PipelineConfig) -> dict:
    def plain(x):
        if isinstance(x, tuple):
            return [plain(v) for v in x]
        return x

    out = {"master_seed": cfg.master_seed}
    for sec in SECTIONS:
        out[sec] = {k: plain(v) for k, v in dataclasses.asdict(getattr(cfg, sec)).items()}
    return out


def from_dict(d: dict) -> PipelineConfig:
    """Inverse of :func:`to_dict`, used to rerun from a manifest."""
    cfg = PipelineConfig(master_seed=int(d.get("master_seed", 0)))
    for sec in SECTIONS:
        vals = d.get(sec, {})
        cur = getattr(cfg, sec)
        kw = {}
        for f in dataclasses.fields(cur):
            if f.name in vals:
                v = vals[f.name]
                kw[f.name] = tuple(v) if isinstance(v, list) else v
        setattr(cfg, sec, dataclasses.replace(cur, **kw))
    cfg.validate()
    return cfg
