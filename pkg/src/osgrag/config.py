"""Run configuration: one flat INI namespace over every module's config.

Example::

    [run]
    backend = mock
    seed = 7
    k = 3

    [pairs]
    d_thresh = 0.5

    [client]
    base_url = http://localhost:8000/v1

Unknown sections or keys are rejected so typos do not pass silently.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .best_view import ViewScoreConfig
from .fusion import FusionConfig
from .model_clients import ClientConfig
from .relations import PairFilterConfig


@dataclass(frozen=True)
class MatchSettings:
    object_threshold: float = 0.95
    predicate_threshold: float = 0.9


@dataclass(frozen=True)
class Paths:
    frames_dir: str = ""
    graph_file: str = ""
    db_file: str = ""
    gt_file: str = ""
    output_dir: str = "."


@dataclass(frozen=True)
class RunSettings:
    backend: str = "mock"
    seed: int = 0
    k: int = 3
    max_parallel: int = 1

    def __post_init__(self):
        if self.backend not in ("mock", "http"):
            raise ValueError(f"backend must be mock or http, got {self.backend!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    view: ViewScoreConfig = field(default_factory=ViewScoreConfig)
    pairs: PairFilterConfig = field(default_factory=PairFilterConfig)
    client: ClientConfig = field(default_factory=ClientConfig)
    match: MatchSettings = field(default_factory=MatchSettings)
    paths: Paths = field(default_factory=Paths)

    def to_dict(self) -> dict:
        return {f.name: _section_dict(getattr(self, f.name)) for f in fields(self)}

    def set(self, section: str, key: str, value) -> "RunConfig":
        sub = getattr(self, section)
        return replace(self, **{section: replace(sub, **{key: _coerce(sub, key, value)})})


def _section_dict(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _coerce(obj, key: str, raw):
    names = {f.name for f in fields(obj)}
    if key not in names:
        raise KeyError(f"unknown key {key!r} in section for {type(obj).__name__}")
    current = getattr(obj, key)
    if not isinstance(raw, str):
        return raw
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def load_config(path=None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    with open(Path(path)) as fh:
        parser.read_file(fh)
    sections = {f.name for f in fields(RunConfig)}
    for section in parser.sections():
        if section not in sections:
            raise KeyError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            cfg = cfg.set(section, key, value)
    return cfg
