"""Run configuration read from a flat INI-style file.

Example::

    [paths]
    dataset = data/grid.sgb
    out = results

    [generation]
    n_records = 400
    fs = 2000
    fault_fraction = 0.5
    fault_current_ratio_min = 4

    [windowing]
    step_ms = 5
    trim_margin_ms = 80

    [training]
    n_trees = 100
    max_features = sqrt

    [seeds]
    data_seed = 1
    fold_seed = 2
    model_seed = 3
    loss_seed = 4

    [grid]
    tasks = FD, FLI
    windows = 10, 20, 30, 40, 50
    scenarios =
    mode = retrain
    jobs = 0

Every key is optional; missing keys take the defaults below.  Unknown
sections or keys are rejected so that typos never fall back silently.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .forest import TrainConfig
from .gridsim import ConfigError, ParamRanges
from .preprocess import WINDOW_LENGTHS_MS, WindowingConfig
from .sparsity import TASKS, ScenarioError, SparsityScenario

_SECTIONS = ("paths", "generation", "windowing", "training", "seeds", "grid")


@dataclass(frozen=True)
class Seeds:
    data_seed: int = 0
    fold_seed: int = 0
    model_seed: int = 0
    loss_seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "dataset.sgb"
    out_dir: str = "results"
    fs: int = 2000
    n_records: int = 400
    ranges: ParamRanges = field(default_factory=ParamRanges)
    step_ms: float = 5.0
    trim_margin_ms: float = 80.0
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: Seeds = field(default_factory=Seeds)
    tasks: tuple[str, ...] = TASKS
    windows: tuple[int, ...] = WINDOW_LENGTHS_MS
    scenarios: tuple[str, ...] = ()
    mode: str = "retrain"
    jobs: int = 0  # 0 = available parallelism

    def __post_init__(self):
        if not self.dataset or not self.out_dir:
            raise ConfigError("dataset and out paths must be non-empty")
        if self.fs < 100 or self.n_records < 1:
            raise ConfigError("fs must be >= 100 Hz and n_records >= 1")
        for t in self.tasks:
            if t not in TASKS:
                raise ConfigError(f"unknown task {t!r}")
        for s in self.scenarios:
            try:
                SparsityScenario.parse(s)
            except ScenarioError as exc:
                raise ConfigError(f"[grid] scenarios: {exc}") from None
        if self.mode not in ("retrain", "clean-train"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.jobs < 0:
            raise ConfigError("jobs must be >= 0")

    @property
    def fault_fraction(self) -> float:
        return self.ranges.fault_fraction

    def windowing(self, window_length_ms: float = 20.0) -> WindowingConfig:
        return WindowingConfig(window_length_ms, self.step_ms, self.trim_margin_ms)

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seeds.model_seed)

    def effective_jobs(self) -> int:
        return self.jobs or (os.cpu_count() or 1)


def _split_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.replace("\n", ",").split(",") if p.strip())


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _max_features(text: str):
    v = text.strip().lower()
    if v in ("sqrt", "log2", "all"):
        return v
    if v in ("none", ""):
        return None
    try:
        return int(v)
    except ValueError:
        return float(v)


def _check_keys(section: str, got, allowed):
    unknown = set(got) - set(allowed)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")


def parse_config(text: str, base_dir: str | os.PathLike | None = None) -> RunConfig:
    """Parse configuration text; relative paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    extra = set(cp.sections()) - set(_SECTIONS)
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    sec = {name: dict(cp[name]) if cp.has_section(name) else {} for name in _SECTIONS}
    kw: dict = {}

    try:
        p = sec["paths"]
        _check_keys("paths", p, ("dataset", "out"))
        base = Path(base_dir) if base_dir is not None else None
        for key, attr in (("dataset", "dataset"), ("out", "out_dir")):
            if key in p:
                path = Path(p[key].strip())
                kw[attr] = str(base / path if base is not None and not path.is_absolute() else path)

        g = dict(sec["generation"])
        if "n_records" in g:
            kw["n_records"] = int(g.pop("n_records"))
        if "fs" in g:
            kw["fs"] = int(g.pop("fs"))
        kw["ranges"] = ParamRanges.from_mapping(g)

        w = sec["windowing"]
        _check_keys("windowing", w, ("step_ms", "trim_margin_ms"))
        if "step_ms" in w:
            kw["step_ms"] = float(w["step_ms"])
        if "trim_margin_ms" in w:
            kw["trim_margin_ms"] = float(w["trim_margin_ms"])

        t = sec["training"]
        _check_keys("training", t, ("n_trees", "max_features", "min_samples_leaf", "max_depth", "bootstrap"))
        tk: dict = {}
        if "n_trees" in t:
            tk["n_trees"] = int(t["n_trees"])
        if "max_features" in t:
            tk["max_features"] = _max_features(t["max_features"])
        if "min_samples_leaf" in t:
            tk["min_samples_leaf"] = int(t["min_samples_leaf"])
        if "max_depth" in t:
            md = t["max_depth"].strip().lower()
            tk["max_depth"] = None if md in ("", "none") else int(md)
        if "bootstrap" in t:
            tk["bootstrap"] = _bool(t["bootstrap"])
        kw["train"] = TrainConfig(**tk)

        s = sec["seeds"]
        _check_keys("seeds", s, [f.name for f in fields(Seeds)])
        kw["seeds"] = Seeds(**{k: int(v) for k, v in s.items()})

        gr = sec["grid"]
        _check_keys("grid", gr, ("tasks", "windows", "scenarios", "mode", "jobs"))
        if "tasks" in gr:
            kw["tasks"] = tuple(x.upper() for x in _split_list(gr["tasks"]))
        if "windows" in gr:
            kw["windows"] = tuple(int(x) for x in _split_list(gr["windows"]))
        if "scenarios" in gr:
            kw["scenarios"] = _split_list(gr["scenarios"])
        if "mode" in gr:
            kw["mode"] = gr["mode"].strip()
        if "jobs" in gr:
            kw["jobs"] = int(gr["jobs"])
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)
