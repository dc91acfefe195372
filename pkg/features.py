# -*- coding: utf-8 -*-
"""
Uncertainty features per record, Groups I-V.

Names follow `<group>.<feature>.<component>`, e.g. `II.MC-Sim.E`.
Degenerate inputs materialize as 0.0 and are listed in `degeneracy_flags`.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from tqdm import tqdm

import corpus_index
from backend import FileBackend, ModelBackend
from corpus_index import CorpusIndex
from errors import DataError, InsufficientSamples, UqkitError
from noiser import NoiseConfig, make_noised_inputs
from records import MASK_VARIANTS, FORCED_VARIANTS, MaskPrediction, QERecord, Sample, SampleSet
from stats import triple_stat
from textmetrics import pairwise_mean_sim, sim

logger = logging.getLogger(__name__)

GROUPS = ("I", "II", "III", "IV", "V")
COMPONENTS = ("E", "Std", "Combo")
NGRAM_ORDERS = (1, 2, 3, 4, 5)
NEIGHBOR_KS = (1, 3, 5, 10, 30)
VARIANT_LABELS = {"simple": "Simple", "simple_y": "Simple-y", "pe": "PE", "pe_y": "PE-y"}


def _stat_names(feature: str) -> List[str]:
    return [f"{feature}.{c}" for c in COMPONENTS]


def feature_families(ngrams: Sequence[int] = NGRAM_ORDERS,
                     neighbors: Sequence[int] = NEIGHBOR_KS) -> Dict[str, List[str]]:
    """The single-feature table rows in canonical order, each with its component names."""
    fam: Dict[str, List[str]] = {"I.Psteps": _stat_names("I.Psteps")}
    for f in ("MC-Sim", "MC-Sim-Inner", "MC-Psteps"):
        fam[f"II.{f}"] = _stat_names(f"II.{f}")
    fam["III.DS-gram"] = [f"III.DS-gram.{n}-gram" for n in ngrams]
    fam["III.DS-neighbors"] = ([f"III.DS-neighbors-x.K{k}" for k in neighbors]
                               + [f"III.DS-neighbors-y.K{k}" for k in neighbors])
    for f in ("Noise-Sim", "Noise-Sim-Inner", "Noise-Psteps"):
        for v in MASK_VARIANTS:
            name = f"IV.{f}-{VARIANT_LABELS[v]}"
            fam[name] = _stat_names(name)
    for v in MASK_VARIANTS:
        name = f"V.MLM-Pmask-{VARIANT_LABELS[v]}"
        fam[name] = _stat_names(name)
    fam["V.MLM-FPmask"] = _stat_names("V.MLM-FPmask")
    fam["V.MLM-FPmask-y"] = _stat_names("V.MLM-FPmask-y")
    return fam


FAMILIES = feature_families()


def family_group(family: str) -> str:
    return family.split(".", 1)[0]


def family_of(name: str) -> str:
    """Family of a feature name; DS-gram and DS-neighbors keep every N and K under one family."""
    if name.startswith("III.DS-gram."):
        return "III.DS-gram"
    if name.startswith("III.DS-neighbors-"):
        return "III.DS-neighbors"
    return name.rsplit(".", 1)[0]


def catalog(ngrams: Sequence[int] = NGRAM_ORDERS, neighbors: Sequence[int] = NEIGHBOR_KS) -> List[str]:
    return [n for names in feature_families(ngrams, neighbors).values() for n in names]


class FeatureVector(Mapping):
    """Immutable ordered feature-name -> value map plus the names that hit a guard."""

    def __init__(self, values: Iterable[Tuple[str, float]], degeneracy_flags: Iterable[str] = ()):
        self._values = dict(values)
        for name, v in self._values.items():
            if v != v or v in (float("inf"), float("-inf")):
                raise DataError(f"feature {name} is not finite")
        self.degeneracy_flags: FrozenSet[str] = frozenset(degeneracy_flags)

    def __getitem__(self, name):
        return self._values[name]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __eq__(self, other):
        if isinstance(other, FeatureVector):
            return (list(self._values.items()) == list(other._values.items())
                    and self.degeneracy_flags == other.degeneracy_flags)
        return NotImplemented

    def __repr__(self):
        return f"FeatureVector({len(self)} features, {len(self.degeneracy_flags)} flagged)"


@dataclass(frozen=True)
class FeatureGroupSelection:
    families: Tuple[str, ...]

    @classmethod
    def parse(cls, selection: Union[str, Sequence[str]]) -> "FeatureGroupSelection":
        items = [s.strip() for s in selection.split(",")] if isinstance(selection, str) else [s.strip() for s in selection]
        chosen = set()
        for item in items:
            if not item:
                continue
            if item == "all":
                chosen.update(FAMILIES)
            elif item in GROUPS:
                chosen.update(f for f in FAMILIES if family_group(f) == item)
            elif item in FAMILIES:
                chosen.add(item)
            else:
                raise DataError(f"unknown feature group or family {item!r}")
        if not chosen:
            raise DataError("empty feature selection")
        return cls(tuple(f for f in FAMILIES if f in chosen))

    @property
    def groups(self) -> List[str]:
        present = {family_group(f) for f in self.families}
        return [g for g in GROUPS if g in present]


@dataclass(frozen=True)
class ExtractionContext:
    backend: Optional[ModelBackend] = None
    index: Optional[CorpusIndex] = None
    noise: NoiseConfig = NoiseConfig()
    mc_samples: int = 30
    ngrams: Tuple[int, ...] = NGRAM_ORDERS
    neighbors: Tuple[int, ...] = NEIGHBOR_KS


class _Builder:
    def __init__(self):
        self.values: Dict[str, float] = {}
        self.flags = set()

    def triple(self, feature: str, xs: Sequence[float]) -> None:
        names = _stat_names(feature)
        if not xs:
            for n in names:
                self.values[n] = 0.0
            self.flags.update(names)
            return
        st = triple_stat(xs)
        for n, v in zip(names, st.as_tuple()):
            self.values[n] = v
        if st.guarded:
            self.flags.add(names[2])

    def zero(self, names: Iterable[str]) -> None:
        for n in names:
            self.values[n] = 0.0
            self.flags.add(n)

    def vector(self) -> FeatureVector:
        return FeatureVector(self.values.items(), self.flags)


def _mean_logprobs(samples: Sequence[Sample]) -> List[float]:
    return [sum(s.step_logprobs) / len(s.step_logprobs) for s in samples if s.step_logprobs]


# ---------------------------------------------------------------------------
# Groups
# ---------------------------------------------------------------------------

def group1(record: QERecord) -> FeatureVector:
    if record.step_logprobs is None:
        raise DataError("group I requires decoder log-probs")
    b = _Builder()
    b.triple("I.Psteps", record.step_logprobs)
    return b.vector()


def group2(record: QERecord, samples: SampleSet) -> FeatureVector:
    if len(samples.samples) < 2:
        raise InsufficientSamples(f"record {record.id}: group II needs at least 2 MC samples")
    if any(s.step_logprobs is None for s in samples.samples):
        raise DataError(f"record {record.id}: MC samples need step log-probs")
    y = record.mt_tokens
    b = _Builder()
    b.triple("II.MC-Sim", [sim(h, y) for h in samples.hyps])
    b.triple("II.MC-Sim-Inner", pairwise_mean_sim(samples.hyps)[1])
    b.triple("II.MC-Psteps", _mean_logprobs(samples.samples))
    return b.vector()


def group3(record: QERecord, index: CorpusIndex, ngrams: Sequence[int] = NGRAM_ORDERS,
           neighbors: Sequence[int] = NEIGHBOR_KS) -> FeatureVector:
    b = _Builder()
    for n in ngrams:
        name = f"III.DS-gram.{n}-gram"
        v = corpus_index.ds_gram(record.src_tokens, n, index)
        if v is None:
            b.zero([name])
        else:
            b.values[name] = v
    for side, label, q in (("src", "x", record.src_tokens), ("tgt", "y", record.mt_tokens)):
        scores = corpus_index.ds_neighbors_many(q, neighbors, side, index)
        for k in neighbors:
            name = f"III.DS-neighbors-{label}.K{k}"
            b.values[name] = scores[k]
            if k > len(index):
                b.flags.add(name)
    return b.vector()


def group4(record: QERecord, noised: Dict[str, Optional[SampleSet]]) -> FeatureVector:
    y = record.mt_tokens
    b = _Builder()
    for v in MASK_VARIANTS:
        label = VARIANT_LABELS[v]
        s = noised.get(v)
        if s is None or not s.samples:
            logger.debug("record %s: no %s noised translations", record.id, v)
            b.zero(_stat_names(f"IV.Noise-Sim-{label}") + _stat_names(f"IV.Noise-Sim-Inner-{label}")
                   + _stat_names(f"IV.Noise-Psteps-{label}"))
            continue
        b.triple(f"IV.Noise-Sim-{label}", [sim(h, y) for h in s.hyps])
        if len(s.samples) >= 2:
            b.triple(f"IV.Noise-Sim-Inner-{label}", pairwise_mean_sim(s.hyps)[1])
        else:
            b.zero(_stat_names(f"IV.Noise-Sim-Inner-{label}"))
        b.triple(f"IV.Noise-Psteps-{label}", _mean_logprobs(s.samples))
    # canonical order: feature family first, then variant
    return FeatureVector(((n, b.values[n]) for n in _group_names("IV")), b.flags)


def group5(record: QERecord, masks: Dict[str, Sequence[MaskPrediction]]) -> FeatureVector:
    b = _Builder()
    for v in MASK_VARIANTS:
        positions = [p for pred in masks.get(v, ()) for p in pred.positions]
        b.triple(f"V.MLM-Pmask-{VARIANT_LABELS[v]}", [p.pred_logprob for p in positions])
    for v, name in zip(FORCED_VARIANTS, ("V.MLM-FPmask", "V.MLM-FPmask-y")):
        positions = [p for pred in masks.get(v, ()) for p in pred.positions]
        b.triple(name, [p.forced_logprob for p in positions])
    return b.vector()


def _group_names(group: str) -> List[str]:
    return [n for f, names in FAMILIES.items() if family_group(f) == group for n in names]


# ---------------------------------------------------------------------------
# Backend inputs
# ---------------------------------------------------------------------------

def mc_samples_for(record: QERecord, ctx: ExtractionContext) -> SampleSet:
    backend = ctx.backend
    if backend is None:
        raise DataError("group II requires a backend")
    if isinstance(backend, FileBackend):
        stored = backend.sample_set(record.id, "mc_dropout")
        if stored is None:
            raise DataError(f"record not covered by file backend: {record.id} (mc_dropout samples)")
        return stored
    return backend.mc_sample(record.id, record.src_tokens, ctx.mc_samples)


def noised_outputs_for(record: QERecord, ctx: ExtractionContext) -> Tuple[Dict[str, Optional[SampleSet]],
                                                                      Dict[str, List[MaskPrediction]]]:
    """Noised translations (kind noise_<variant>) and raw MLM predictions per variant."""
    backend = ctx.backend
    if backend is None:
        raise DataError("groups IV/V require a backend")
    if isinstance(backend, FileBackend):
        return ({v: backend.sample_set(record.id, f"noise_{v}") for v in MASK_VARIANTS},
                {v: backend.mask_predictions(record.id, v) for v in MASK_VARIANTS})

    sets, masks = {}, {}
    for v in MASK_VARIANTS:
        inputs, preds = make_noised_inputs(record.src_tokens, ctx.noise, backend, v,
                                           y=record.mt_tokens, record_id=record.id)
        samples = []
        for x_noised in inputs:
            y_noised, _ = backend.translate(record.id, x_noised)
            logprobs = backend.force_decode(record.id, x_noised, y_noised) if y_noised else None
            samples.append(Sample(hyp_tokens=tuple(y_noised), step_logprobs=logprobs,
                                  noised_src_tokens=tuple(x_noised)))
        sets[v] = SampleSet(record_id=record.id, kind=f"noise_{v}", samples=tuple(samples)) if samples else None
        masks[v] = preds
    return sets, masks


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def _compute_group(group: str, record: QERecord, ctx: ExtractionContext, cache: dict) -> FeatureVector:
    if group == "I":
        return group1(record)
    if group == "II":
        return group2(record, mc_samples_for(record, ctx))
    if group == "III":
        if ctx.index is None:
            raise DataError("group III requires a corpus index")
        return group3(record, ctx.index, ctx.ngrams, ctx.neighbors)
    if "noised" not in cache:
        cache["noised"] = noised_outputs_for(record, ctx)
    sets, masks = cache["noised"]
    stored = isinstance(ctx.backend, FileBackend) and bool(record.src_tokens)
    if group == "IV":
        if stored and all(s is None for s in sets.values()):
            raise DataError(f"record not covered by file backend: {record.id} (noised translations)")
        return group4(record, sets)
    if stored and not any(masks.values()):
        raise DataError(f"record not covered by file backend: {record.id} (mask predictions)")
    return group5(record, masks)


def extract(record: QERecord, ctx: ExtractionContext, selection: FeatureGroupSelection) -> FeatureVector:
    wanted = set(selection.families)
    cache: dict = {}
    values: List[Tuple[str, float]] = []
    flags = set()
    for group in selection.groups:
        try:
            fv = _compute_group(group, record, ctx, cache)
        except UqkitError as e:
            raise DataError(f"group {group}, record {record.id}: {e}") from e
        for name, v in fv.items():
            if family_of(name) in wanted:
                values.append((name, v))
        flags.update(fv.degeneracy_flags)
    names = {n for n, _ in values}
    return FeatureVector(values, flags & names)


def extract_many(recs: Sequence[QERecord], ctx: ExtractionContext, selection: FeatureGroupSelection,
                 progress: bool = False) -> List[Tuple[str, FeatureVector]]:
    rows = []
    flagged = 0
    for rec in tqdm(recs, desc="extract", disable=not progress):
        fv = extract(rec, ctx, selection)
        flagged += bool(fv.degeneracy_flags)
        rows.append((rec.id, fv))
    if flagged:
        logger.info("%d of %d records have guarded (zeroed) feature components", flagged, len(recs))
    return rows
