# -*- coding: utf-8 -*-
"""
QE data model and file plumbing.

Record / sample / mask files are JSON Lines; feature tables are CSV; the MLQE
adapter reads the WMT 2020 tab-separated release; the parallel corpus is one
`src<TAB>tgt` pair per line.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from errors import DataError
from textmetrics import tokenize

logger = logging.getLogger(__name__)

SAMPLE_KINDS = ("mc_dropout", "noise_simple", "noise_simple_y", "noise_pe", "noise_pe_y")
MASK_VARIANTS = ("simple", "simple_y", "pe", "pe_y")
FORCED_VARIANTS = ("simple", "simple_y")

MLQE_COLUMNS = {"id": "index", "src": "original", "mt": "translation", "score": "z_mean"}

_RECORD_KEYS = ("id", "src", "src_tokens", "mt", "mt_tokens", "step_logprobs", "gold", "embedding")


def _check_logprobs(logprobs: Sequence[float], tokens: Sequence[str], where: str) -> None:
    if len(logprobs) != len(tokens):
        raise DataError(f"{where}: {len(tokens)} tokens but {len(logprobs)} log-probs")
    for lp in logprobs:
        if not math.isfinite(lp) or lp > 0:
            raise DataError(f"{where}: log-prob {lp!r} is not a finite value <= 0")


def _floats(values, where: str, key: str) -> Tuple[float, ...]:
    if not isinstance(values, list):
        raise DataError(f"{where}: '{key}' must be an array")
    try:
        return tuple(float(v) for v in values)
    except (TypeError, ValueError) as e:
        raise DataError(f"{where}: '{key}' holds a non-numeric value") from e


def _strings(values, where: str, key: str) -> Tuple[str, ...]:
    if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
        raise DataError(f"{where}: '{key}' must be an array of strings")
    return tuple(values)


@dataclass(frozen=True)
class QERecord:
    id: str
    src_tokens: Tuple[str, ...]
    mt_tokens: Tuple[str, ...]
    step_logprobs: Optional[Tuple[float, ...]] = None
    gold_score: Optional[float] = None
    embedding: Optional[Tuple[float, ...]] = None
    src: Optional[str] = None
    mt: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise DataError("record id must be non-empty")
        if self.step_logprobs is not None:
            _check_logprobs(self.step_logprobs, self.mt_tokens, f"record {self.id}")

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {
            "id": self.id,
            "src": self.src if self.src is not None else " ".join(self.src_tokens),
            "src_tokens": list(self.src_tokens),
            "mt": self.mt if self.mt is not None else " ".join(self.mt_tokens),
            "mt_tokens": list(self.mt_tokens),
        }
        if self.step_logprobs is not None:
            d["step_logprobs"] = list(self.step_logprobs)
        if self.gold_score is not None:
            d["gold"] = self.gold_score
        if self.embedding is not None:
            d["embedding"] = list(self.embedding)
        for k in sorted(self.extra):
            d[k] = self.extra[k]
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any], where: str = "record") -> QERecord:
        rid = d.get("id")
        if not isinstance(rid, str) or not rid:
            raise DataError(f"{where}: 'id' must be a non-empty string")
        where = f"{where} (record {rid})"
        src = d.get("src")
        mt = d.get("mt")
        src_tokens = _strings(d["src_tokens"], where, "src_tokens") if "src_tokens" in d else tuple(tokenize(src or ""))
        mt_tokens = _strings(d["mt_tokens"], where, "mt_tokens") if "mt_tokens" in d else tuple(tokenize(mt or ""))
        gold = d.get("gold")
        if gold is not None and (isinstance(gold, bool) or not isinstance(gold, (int, float))):
            raise DataError(f"{where}: 'gold' must be a number")
        return cls(
            id=rid,
            src_tokens=src_tokens,
            mt_tokens=mt_tokens,
            step_logprobs=_floats(d["step_logprobs"], where, "step_logprobs") if d.get("step_logprobs") is not None else None,
            gold_score=float(gold) if gold is not None else None,
            embedding=_floats(d["embedding"], where, "embedding") if d.get("embedding") is not None else None,
            src=src,
            mt=mt,
            extra={k: v for k, v in d.items() if k not in _RECORD_KEYS},
        )


@dataclass(frozen=True)
class Sample:
    hyp_tokens: Tuple[str, ...]
    step_logprobs: Optional[Tuple[float, ...]] = None
    noised_src_tokens: Optional[Tuple[str, ...]] = None

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"hyp_tokens": list(self.hyp_tokens)}
        if self.step_logprobs is not None:
            d["step_logprobs"] = list(self.step_logprobs)
        if self.noised_src_tokens is not None:
            d["noised_src_tokens"] = list(self.noised_src_tokens)
        return d


@dataclass(frozen=True)
class SampleSet:
    record_id: str
    kind: str
    samples: Tuple[Sample, ...]
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SAMPLE_KINDS:
            raise DataError(f"sample set for {self.record_id}: unknown kind {self.kind!r}")
        for k, s in enumerate(self.samples):
            if s.step_logprobs is not None:
                _check_logprobs(s.step_logprobs, s.hyp_tokens, f"record {self.record_id} {self.kind} sample {k}")

    @property
    def hyps(self) -> List[Tuple[str, ...]]:
        return [s.hyp_tokens for s in self.samples]

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {
            "record_id": self.record_id,
            "kind": self.kind,
            "samples": [s.to_dict() for s in self.samples],
        }
        for k in sorted(self.extra):
            d[k] = self.extra[k]
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any], where: str = "sample set") -> SampleSet:
        rid = d.get("record_id")
        if not isinstance(rid, str) or not rid:
            raise DataError(f"{where}: 'record_id' must be a non-empty string")
        raw = d.get("samples")
        if not isinstance(raw, list):
            raise DataError(f"{where}: 'samples' must be an array")
        samples = []
        for s in raw:
            if not isinstance(s, dict) or "hyp_tokens" not in s:
                raise DataError(f"{where}: every sample needs 'hyp_tokens'")
            samples.append(Sample(
                hyp_tokens=_strings(s["hyp_tokens"], where, "hyp_tokens"),
                step_logprobs=_floats(s["step_logprobs"], where, "step_logprobs") if s.get("step_logprobs") is not None else None,
                noised_src_tokens=_strings(s["noised_src_tokens"], where, "noised_src_tokens") if s.get("noised_src_tokens") is not None else None,
            ))
        return cls(
            record_id=rid,
            kind=d.get("kind"),
            samples=tuple(samples),
            extra={k: v for k, v in d.items() if k not in ("record_id", "kind", "samples")},
        )


@dataclass(frozen=True)
class MaskPosition:
    index: int
    predicted: str
    pred_logprob: float
    forced_logprob: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {"index": self.index, "predicted": self.predicted, "pred_logprob": self.pred_logprob}
        if self.forced_logprob is not None:
            d["forced_logprob"] = self.forced_logprob
        return d


@dataclass(frozen=True)
class MaskPrediction:
    record_id: str
    variant: str
    positions: Tuple[MaskPosition, ...]
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        where = f"mask prediction for {self.record_id}"
        if self.variant not in MASK_VARIANTS:
            raise DataError(f"{where}: unknown variant {self.variant!r}")
        forced = self.variant in FORCED_VARIANTS
        for p in self.positions:
            if not math.isfinite(p.pred_logprob) or p.pred_logprob > 0:
                raise DataError(f"{where}: pred_logprob {p.pred_logprob!r} is not <= 0")
            if (p.forced_logprob is not None) != forced:
                raise DataError(f"{where}: forced_logprob must be present exactly for simple variants")
            if p.forced_logprob is not None and (not math.isfinite(p.forced_logprob) or p.forced_logprob > 0):
                raise DataError(f"{where}: forced_logprob {p.forced_logprob!r} is not <= 0")

    def to_dict(self) -> Dict[str, Any]:
        d: Dict[str, Any] = {
            "record_id": self.record_id,
            "variant": self.variant,
            "positions": [p.to_dict() for p in self.positions],
        }
        for k in sorted(self.extra):
            d[k] = self.extra[k]
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any], where: str = "mask prediction") -> MaskPrediction:
        rid = d.get("record_id")
        if not isinstance(rid, str) or not rid:
            raise DataError(f"{where}: 'record_id' must be a non-empty string")
        raw = d.get("positions")
        if not isinstance(raw, list):
            raise DataError(f"{where}: 'positions' must be an array")
        try:
            positions = tuple(
                MaskPosition(
                    index=int(p["index"]),
                    predicted=str(p["predicted"]),
                    pred_logprob=float(p["pred_logprob"]),
                    forced_logprob=float(p["forced_logprob"]) if p.get("forced_logprob") is not None else None,
                )
                for p in raw
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{where}: bad position entry ({e})") from e
        return cls(
            record_id=rid,
            variant=d.get("variant"),
            positions=positions,
            extra={k: v for k, v in d.items() if k not in ("record_id", "variant", "positions")},
        )


# ---------------------------------------------------------------------------
# JSON Lines
# ---------------------------------------------------------------------------

def _iter_jsonl(path: str) -> Iterator[Tuple[int, Dict[str, Any]]]:
    with open(path, "r", encoding="utf-8") as f:
        for line_num, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{line_num}: invalid JSON ({e.msg})") from e
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{line_num}: expected an object, got {type(obj).__name__}")
            yield line_num, obj


def _write_jsonl(items, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for it in items:
            f.write(json.dumps(it.to_dict(), ensure_ascii=False) + "\n")


def read_jsonl_records(path: str) -> List[QERecord]:
    records: List[QERecord] = []
    seen = set()
    for line_num, obj in _iter_jsonl(path):
        rec = QERecord.from_dict(obj, where=f"{path}:{line_num}")
        if rec.id in seen:
            raise DataError(f"{path}:{line_num}: duplicate record id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    logger.debug("read %d records from %s", len(records), path)
    return records


def write_jsonl_records(records: Sequence[QERecord], path: str) -> None:
    _write_jsonl(records, path)


def read_sample_sets(path: str) -> List[SampleSet]:
    return [SampleSet.from_dict(obj, where=f"{path}:{n}") for n, obj in _iter_jsonl(path)]


def write_sample_sets(sets: Sequence[SampleSet], path: str) -> None:
    _write_jsonl(sets, path)


def read_mask_predictions(path: str) -> List[MaskPrediction]:
    return [MaskPrediction.from_dict(obj, where=f"{path}:{n}") for n, obj in _iter_jsonl(path)]


def write_mask_predictions(preds: Sequence[MaskPrediction], path: str) -> None:
    _write_jsonl(preds, path)


# ---------------------------------------------------------------------------
# MLQE TSV and parallel corpus
# ---------------------------------------------------------------------------

def read_mlqe_tsv(path: str, columns: Optional[Mapping[str, str]] = None) -> List[QERecord]:
    cols = dict(MLQE_COLUMNS)
    cols.update(columns or {})
    df = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False, quoting=csv.QUOTE_NONE)
    for role in ("id", "src", "mt", "score"):
        if cols[role] not in df.columns:
            raise DataError(f"{path}: missing required column {cols[role]!r}")

    records: List[QERecord] = []
    seen = set()
    for row_num, row in enumerate(df.to_dict("records"), 1):
        rid = str(row[cols["id"]]).strip()
        raw_score = str(row[cols["score"]]).strip()
        try:
            score = float(raw_score)
        except ValueError:
            raise DataError(f"{path}: row {row_num}: non-numeric score {raw_score!r}")
        if not math.isfinite(score):
            raise DataError(f"{path}: row {row_num}: non-finite score {raw_score!r}")
        if rid in seen:
            raise DataError(f"{path}: row {row_num}: duplicate record id {rid!r}")
        seen.add(rid)
        src, mt = row[cols["src"]], row[cols["mt"]]
        records.append(QERecord(id=rid, src_tokens=tuple(tokenize(src)), mt_tokens=tuple(tokenize(mt)),
                                gold_score=score, src=src, mt=mt))
    return records


def read_parallel_corpus(path: str) -> List[Tuple[Tuple[str, ...], Tuple[str, ...]]]:
    pairs = []
    with open(path, "r", encoding="utf-8") as f:
        for line_num, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{line_num}: expected 'src<TAB>tgt'")
            pairs.append((tuple(tokenize(parts[0])), tuple(tokenize(parts[1]))))
    return pairs


def write_parallel_corpus(pairs, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for src, tgt in pairs:
            f.write(" ".join(src) + "\t" + " ".join(tgt) + "\n")


# ---------------------------------------------------------------------------
# Feature tables
# ---------------------------------------------------------------------------

def write_feature_table(rows: Sequence[Tuple[str, Mapping[str, float]]], path: str) -> None:
    if not rows:
        raise DataError("no rows to write")
    names = list(rows[0][1].keys())
    ref = set(names)
    for rid, fv in rows[1:]:
        if list(fv.keys()) != names:
            diff = sorted(ref.symmetric_difference(fv.keys()))
            if not diff:
                raise DataError(f"record {rid}: feature order differs from the first row")
            raise DataError(f"record {rid}: inconsistent feature set, symmetric difference {diff}")
    df = pd.DataFrame([[fv[n] for n in names] for _, fv in rows], columns=names)
    df.insert(0, "id", [rid for rid, _ in rows])
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n")


def read_feature_table(path: str) -> pd.DataFrame:
    """Feature table as a float DataFrame indexed by record id (column order preserved)."""
    df = pd.read_csv(path, dtype={"id": str}, keep_default_na=False, float_precision="round_trip",
                     encoding="utf-8")
    if "id" not in df.columns or df.columns[0] != "id":
        raise DataError(f"{path}: first column must be 'id'")
    df = df.set_index("id")
    try:
        return df.astype("float64")
    except ValueError as e:
        raise DataError(f"{path}: non-numeric feature value ({e})") from e
