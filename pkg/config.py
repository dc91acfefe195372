# -*- coding: utf-8 -*-
"""
Pipeline configuration: a flat `key = value` file with `#` comments.

Parsed with python-dotenv (no environment mutation), each value typed with
yaml.safe_load against DEFAULTS. Every key is also a CLI flag.
"""

import logging
import os
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

import yaml
from dotenv import dotenv_values

from backend import SyntheticWorld
from errors import ConfigError, DataError, MissingPathError
from features import FeatureGroupSelection
from noiser import NoiseConfig
from records import MLQE_COLUMNS

logger = logging.getLogger(__name__)

PATH_KEYS = ("records", "samples", "masks", "corpus", "index", "output_dir")
LIST_KEYS = ("neighbors", "ngrams")
BACKENDS = ("file", "synthetic")

# key -> (default, help); order is the canonical file order
DEFAULTS: Dict[str, Tuple[Any, str]] = {
    "records": ("data/{split}.records.jsonl", "record file per split"),
    "samples": ("data/{split}.samples.jsonl", "sample-set file per split"),
    "masks": ("data/{split}.masks.jsonl", "mask-prediction file per split"),
    "corpus": ("data/corpus.tsv", "parallel corpus, src<TAB>tgt per line"),
    "index": ("data/corpus.idx", "corpus index snapshot"),
    "output_dir": ("out", "reports, models, feature tables"),
    "backend": ("file", "file or synthetic"),
    "vocab_size": (64, "synthetic vocabulary size"),
    "mlm_noise": (0.1, "synthetic MLM error rate"),
    "dropout_jitter": (0.05, "synthetic MC-dropout difficulty jitter"),
    "rounds": (2, "noise rounds"),
    "p_d": (0.15, "deletion probability"),
    "p_i": (0.15, "insertion probability"),
    "n_variants": (4, "PE noised inputs per record"),
    "mc_samples": (30, "MC-dropout sample count"),
    "neighbors": ((1, 3, 5, 10, 30), "DS-neighbors K list"),
    "ngrams": ((1, 2, 3, 4, 5), "DS-gram N list"),
    "ridge_lambda": (1.0, "fusion ridge lambda"),
    "normalize_embedding": (False, "also z-normalize embedding dims"),
    "seed": (42, "root seed"),
    "groups": ("all", "feature selection: all, I..V or family names"),
    "k_max": (24, "top-k upper bound"),
    "n_train": (7000, "synthetic train records"),
    "n_dev": (1000, "synthetic dev records"),
    "n_test": (1000, "synthetic test records"),
    "corpus_size": (2000, "synthetic parallel corpus sentences"),
    "mlqe_id_column": (MLQE_COLUMNS["id"], "MLQE TSV id column"),
    "mlqe_src_column": (MLQE_COLUMNS["src"], "MLQE TSV source column"),
    "mlqe_mt_column": (MLQE_COLUMNS["mt"], "MLQE TSV translation column"),
    "mlqe_score_column": (MLQE_COLUMNS["score"], "MLQE TSV score column"),
}


@dataclass(frozen=True)
class PipelineConfig:
    records: str = DEFAULTS["records"][0]
    samples: str = DEFAULTS["samples"][0]
    masks: str = DEFAULTS["masks"][0]
    corpus: str = DEFAULTS["corpus"][0]
    index: str = DEFAULTS["index"][0]
    output_dir: str = DEFAULTS["output_dir"][0]
    backend: str = DEFAULTS["backend"][0]
    vocab_size: int = DEFAULTS["vocab_size"][0]
    mlm_noise: float = DEFAULTS["mlm_noise"][0]
    dropout_jitter: float = DEFAULTS["dropout_jitter"][0]
    rounds: int = DEFAULTS["rounds"][0]
    p_d: float = DEFAULTS["p_d"][0]
    p_i: float = DEFAULTS["p_i"][0]
    n_variants: int = DEFAULTS["n_variants"][0]
    mc_samples: int = DEFAULTS["mc_samples"][0]
    neighbors: Tuple[int, ...] = DEFAULTS["neighbors"][0]
    ngrams: Tuple[int, ...] = DEFAULTS["ngrams"][0]
    ridge_lambda: float = DEFAULTS["ridge_lambda"][0]
    normalize_embedding: bool = DEFAULTS["normalize_embedding"][0]
    seed: int = DEFAULTS["seed"][0]
    groups: str = DEFAULTS["groups"][0]
    k_max: int = DEFAULTS["k_max"][0]
    n_train: int = DEFAULTS["n_train"][0]
    n_dev: int = DEFAULTS["n_dev"][0]
    n_test: int = DEFAULTS["n_test"][0]
    corpus_size: int = DEFAULTS["corpus_size"][0]
    mlqe_id_column: str = DEFAULTS["mlqe_id_column"][0]
    mlqe_src_column: str = DEFAULTS["mlqe_src_column"][0]
    mlqe_mt_column: str = DEFAULTS["mlqe_mt_column"][0]
    mlqe_score_column: str = DEFAULTS["mlqe_score_column"][0]

    def __post_init__(self):
        for key, issue in _issues(self):
            raise ConfigError(f"{key}: {issue}", key=key)

    def path(self, key: str, split: Optional[str] = None) -> str:
        if key not in PATH_KEYS:
            raise ConfigError(f"{key} is not a path key", key=key)
        value = getattr(self, key)
        if "{split}" in value:
            if split is None:
                raise ConfigError(f"{key}: a split name is needed to resolve {value!r}", key=key)
            value = value.replace("{split}", split)
        return value

    def noise(self) -> NoiseConfig:
        return NoiseConfig(rounds=self.rounds, p_d=self.p_d, p_i=self.p_i,
                           n_variants=self.n_variants, seed=self.seed)

    def world(self) -> SyntheticWorld:
        return SyntheticWorld(vocab_size=self.vocab_size, seed=self.seed,
                              mlm_noise=self.mlm_noise, dropout_jitter=self.dropout_jitter)

    def selection(self) -> FeatureGroupSelection:
        return FeatureGroupSelection.parse(self.groups)

    def mlqe_columns(self) -> Dict[str, str]:
        return {"id": self.mlqe_id_column, "src": self.mlqe_src_column,
                "mt": self.mlqe_mt_column, "score": self.mlqe_score_column}


def _issues(cfg: PipelineConfig) -> Iterable[Tuple[str, str]]:
    if cfg.backend not in BACKENDS:
        yield "backend", f"expected one of {', '.join(BACKENDS)}, got {cfg.backend!r}"
    for key in ("p_d", "p_i"):
        if not 0.0 <= getattr(cfg, key) <= 1.0:
            yield key, f"must be in [0, 1], got {getattr(cfg, key)}"
    if not 0.0 <= cfg.mlm_noise < 1.0:
        yield "mlm_noise", f"must be in [0, 1), got {cfg.mlm_noise}"
    if cfg.dropout_jitter < 0:
        yield "dropout_jitter", f"must be >= 0, got {cfg.dropout_jitter}"
    if cfg.ridge_lambda < 0:
        yield "ridge_lambda", f"must be >= 0, got {cfg.ridge_lambda}"
    minimums = {"vocab_size": 2, "rounds": 1, "n_variants": 1, "mc_samples": 2, "seed": 0, "k_max": 0,
                "n_train": 2, "n_dev": 2, "n_test": 1, "corpus_size": 1}
    for key, low in minimums.items():
        if getattr(cfg, key) < low:
            yield key, f"must be >= {low}, got {getattr(cfg, key)}"
    if not cfg.neighbors:
        yield "neighbors", "K list must not be empty"
    elif list(cfg.neighbors) != sorted(set(cfg.neighbors)) or cfg.neighbors[0] < 1:
        yield "neighbors", f"K list must be positive and strictly ascending, got {list(cfg.neighbors)}"
    if not cfg.ngrams or any(not 1 <= n <= 5 for n in cfg.ngrams) or len(set(cfg.ngrams)) != len(cfg.ngrams):
        yield "ngrams", f"N list must be distinct values within 1..5, got {list(cfg.ngrams)}"
    try:
        FeatureGroupSelection.parse(cfg.groups)
    except DataError as e:
        yield "groups", str(e)


def _coerce(key: str, raw: Any) -> Any:
    """Type one raw value (str from the file or a CLI override) for key."""
    default = DEFAULTS[key][0]
    if raw is None:
        raise ConfigError(f"{key}: missing value", key=key)
    if isinstance(default, str):
        return str(raw).strip()
    if key in LIST_KEYS:
        items = raw if isinstance(raw, (list, tuple)) else str(raw).strip().strip("[]").split(",")
        out = []
        for item in items:
            if isinstance(item, str) and not item.strip():
                continue
            v = yaml.safe_load(item) if isinstance(item, str) else item
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{key}: expected a comma-separated list of integers, got {raw!r}", key=key)
            out.append(v)
        return tuple(out)
    try:
        v = yaml.safe_load(raw) if isinstance(raw, str) else raw
    except yaml.YAMLError:
        raise ConfigError(f"{key}: cannot parse value {raw!r}", key=key)
    if isinstance(default, bool):
        if not isinstance(v, bool):
            raise ConfigError(f"{key}: expected true/false, got {raw!r}", key=key)
        return v
    if isinstance(default, int):
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}", key=key)
        return v
    if isinstance(default, float) and isinstance(v, str):
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(default, float):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {raw!r}", key=key)
        return float(v)
    raise ConfigError(f"{key}: unsupported type", key=key)


def with_overrides(cfg: PipelineConfig, overrides: Mapping[str, Any]) -> PipelineConfig:
    """Apply key -> raw value overrides (None values are ignored) and re-validate."""
    changes = {}
    for key, raw in overrides.items():
        if raw is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        changes[key] = _coerce(key, raw)
    return replace(cfg, **changes) if changes else cfg


def load_config(path: Optional[str] = None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    if not os.path.isfile(path):
        raise MissingPathError(f"config file not found: {path}", key="config")
    raw = dotenv_values(path, encoding="utf-8", interpolate=False)
    for key in raw:
        if key not in DEFAULTS:
            raise ConfigError(f"{path}: unknown config key {key!r}", key=key)
    for key, v in raw.items():
        if v is None:
            raise ConfigError(f"{path}: {key}: missing value (expected `{key} = value`)", key=key)
    cfg = with_overrides(PipelineConfig(), raw)
    logger.debug("config loaded from %s", path)
    return cfg


def _render(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_config(cfg: PipelineConfig, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    values = asdict(cfg)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in DEFAULTS:
            f.write(f"{key} = {_render(values[key])}\n")


def check_paths(cfg: PipelineConfig, keys: Iterable[str], split: Optional[str] = None) -> None:
    for key in keys:
        p = cfg.path(key, split)
        if not os.path.exists(p):
            raise MissingPathError(f"{key}: path does not exist: {p}", key=key)
