# -*- coding: utf-8 -*-
"""
Model boundary: every call into an NMT system or a masked language model goes
through a ModelBackend.

- FileBackend answers from JSON Lines files produced offline by real models.
- SyntheticBackend is a deterministic cipher world: source token s<i> translates
  to t<i>, and each decoded position is corrupted with the record's difficulty.
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

import records
from errors import DataError, InsufficientSamples, UnsupportedCapability
from records import MaskPosition, MaskPrediction, QERecord, Sample, SampleSet

logger = logging.getLogger(__name__)

MASK = "<mask>"
CAPABILITIES = ("translate", "mc_sample", "force_decode", "fill_masks")
MAX_MC_DIFFICULTY = 0.9
LOG_FLOOR = math.log(1e-12)

# randomness streams of the synthetic world
STREAM_DECODE = 1
STREAM_MC_DECODE = 1000
STREAM_JITTER = 2
STREAM_MLM = 3
STREAM_GENERATE = 4
STREAM_DIFFICULTY = 5
STREAM_EMBED = 6
STREAM_EMBED_NOISE = 7
STREAM_FILLER = 8

_M64 = (1 << 64) - 1


def stable_hash(*parts: str) -> int:
    h = hashlib.blake2b("\x1f".join(parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def _mix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def counter_uniforms(keys: Sequence[int], n: int) -> np.ndarray:
    """n uniforms in [0, 1): element t depends only on (keys, t)."""
    base = 0
    for k in keys:
        base = _mix64(base ^ (int(k) & _M64))
    z = np.uint64(base) + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


class ModelBackend:
    name = "backend"
    capabilities: FrozenSet[str] = frozenset()

    def _require(self, capability: str) -> None:
        if capability not in self.capabilities:
            raise UnsupportedCapability(capability, self.name)

    def translate(self, record_id: str, x: Sequence[str]) -> Tuple[Tuple[str, ...], Tuple[float, ...]]:
        raise UnsupportedCapability("translate", self.name)

    def mc_sample(self, record_id: str, x: Sequence[str], m: int) -> SampleSet:
        raise UnsupportedCapability("mc_sample", self.name)

    def force_decode(self, record_id: str, x: Sequence[str], y: Sequence[str]) -> Tuple[float, ...]:
        raise UnsupportedCapability("force_decode", self.name)

    def fill_masks(self, record_id: str, x_masked: Sequence[str], variant: str,
                   constraint_y: Optional[Sequence[str]] = None,
                   original: Optional[Sequence[str]] = None) -> MaskPrediction:
        raise UnsupportedCapability("fill_masks", self.name)


def mask_indices(x_masked: Sequence[str]) -> List[int]:
    return [i for i, t in enumerate(x_masked) if t == MASK]


# ---------------------------------------------------------------------------
# Synthetic world
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticWorld:
    vocab_size: int = 64
    seed: int = 42
    mlm_noise: float = 0.1
    dropout_jitter: float = 0.05
    min_len: int = 5
    max_len: int = 20
    max_difficulty: float = 0.5
    embedding_dim: int = 16
    embedding_noise: float = 0.25

    def __post_init__(self):
        if self.vocab_size < 2:
            raise DataError("vocab_size must be >= 2")
        if not 0.0 <= self.mlm_noise < 1.0:
            raise DataError("mlm_noise must be in [0, 1)")
        if self.dropout_jitter < 0:
            raise DataError("dropout_jitter must be >= 0")


class SyntheticBackend(ModelBackend):
    name = "synthetic"
    capabilities = frozenset(CAPABILITIES)

    def __init__(self, world: SyntheticWorld = SyntheticWorld(), difficulties: Optional[Dict[str, float]] = None):
        self.world = world
        self._difficulties = dict(difficulties or {})

    # -- vocabulary -------------------------------------------------------

    def _index(self, token: str, prefix: str) -> int:
        if token.startswith(prefix) and token[1:].isdigit():
            i = int(token[1:])
            if i < self.world.vocab_size:
                return i
        return stable_hash(token) % self.world.vocab_size

    def cipher(self, x: Sequence[str]) -> Tuple[str, ...]:
        return tuple(f"t{self._index(tok, 's')}" for tok in x)

    def _keys(self, record_id: str, *rest: int) -> List[int]:
        return [self.world.seed, stable_hash(record_id), *rest]

    def _rng(self, record_id: str, stream: int, *rest: int) -> np.random.Generator:
        return np.random.default_rng([self.world.seed & _M64, stable_hash(record_id), stream, *rest])

    # -- record generation ------------------------------------------------

    def difficulty(self, record_id: str) -> float:
        if record_id in self._difficulties:
            return float(self._difficulties[record_id])
        return float(self._rng(record_id, STREAM_DIFFICULTY).uniform(0.0, self.world.max_difficulty))

    def generate_source(self, record_id: str) -> Tuple[str, ...]:
        rng = self._rng(record_id, STREAM_GENERATE)
        length = int(rng.integers(self.world.min_len, self.world.max_len + 1))
        return tuple(f"s{i}" for i in rng.integers(0, self.world.vocab_size, size=length))

    def accuracy(self, x: Sequence[str], y: Sequence[str]) -> float:
        """Token accuracy of y against the cipher reference of x."""
        ref = self.cipher(x)
        if not ref:
            return 0.0
        return sum(1 for a, b in zip(y, ref) if a == b) / len(ref)

    def embedding(self, record_id: str, x: Sequence[str], y: Sequence[str]) -> Tuple[float, ...]:
        """Dim 0 is a noisy bag-overlap quality proxy; the rest is a hashed bag-of-tokens projection."""
        dim = self.world.embedding_dim
        ref = list(self.cipher(x))
        overlap = 0
        for tok in y:
            if tok in ref:
                ref.remove(tok)
                overlap += 1
        proxy = overlap / len(y) if y else 0.0
        noise = float(self._rng(record_id, STREAM_EMBED_NOISE).normal(0.0, self.world.embedding_noise))
        bag = np.zeros(dim - 1)
        tokens = list(x) + list(y)
        for tok in tokens:
            u = counter_uniforms([self.world.seed, stable_hash(tok), STREAM_EMBED], dim - 1)
            bag += np.where(u < 0.5, -1.0, 1.0)
        if tokens:
            bag /= len(tokens)
        return (proxy + noise,) + tuple(float(v) for v in bag)

    def make_record(self, record_id: str) -> QERecord:
        x = self.generate_source(record_id)
        y, logprobs = self.translate(record_id, x)
        return QERecord(
            id=record_id,
            src_tokens=x,
            mt_tokens=y,
            step_logprobs=logprobs,
            gold_score=self.accuracy(x, y),
            embedding=self.embedding(record_id, x, y),
        )

    def make_corpus(self, n: int, prefix: str = "corpus") -> List[Tuple[Tuple[str, ...], Tuple[str, ...]]]:
        pairs = []
        for i in range(n):
            src = self.generate_source(f"{prefix}-{i}")
            pairs.append((src, self.cipher(src)))
        return pairs

    # -- model operations -------------------------------------------------

    def _step_logprob(self, correct: bool, delta: float) -> float:
        if correct:
            return math.log1p(-delta)
        p = delta / (self.world.vocab_size - 1)
        return math.log(p) if p > 0 else LOG_FLOOR

    def _corrupt(self, x: Sequence[str], u: np.ndarray, w: np.ndarray, delta: float):
        """Position t is wrong iff u[t] < delta; w[t] picks the wrong token."""
        v = self.world.vocab_size
        y, lps = [], []
        for t, tok in enumerate(x):
            c = self._index(tok, "s")
            wrong = u[t] < delta
            if wrong:
                c = (c + 1 + int(w[t] * (v - 1))) % v
            y.append(f"t{c}")
            lps.append(self._step_logprob(not wrong, delta))
        return tuple(y), tuple(lps)

    def _decode(self, record_id: str, x: Sequence[str], delta: float, stream: int):
        n = len(x)
        if n == 0:
            return (), ()
        u = counter_uniforms(self._keys(record_id, stable_hash(*x), stream), 2 * n)
        return self._corrupt(x, u[:n], u[n:], delta)

    def translate(self, record_id, x):
        return self._decode(record_id, x, self.difficulty(record_id), STREAM_DECODE)

    def mc_sample(self, record_id, x, m):
        if m < 2:
            raise InsufficientSamples(f"mc_sample needs m >= 2, got {m}")
        delta = self.difficulty(record_id)
        n = len(x)
        key = stable_hash(*x)
        # same corruption uniforms as the greedy decode, so sample k is wrong at t iff u[t] < delta'_k
        u = counter_uniforms(self._keys(record_id, key, STREAM_DECODE), n)
        samples = []
        for k in range(m):
            jitter = self.world.dropout_jitter * float(self._rng(record_id, STREAM_JITTER, k).standard_normal())
            d = min(max(delta + jitter, 0.0), MAX_MC_DIFFICULTY)
            w = counter_uniforms(self._keys(record_id, key, STREAM_MC_DECODE + k), n)
            y, lps = self._corrupt(x, u, w, d)
            samples.append(Sample(hyp_tokens=y, step_logprobs=lps))
        return SampleSet(record_id=record_id, kind="mc_dropout", samples=tuple(samples))

    def force_decode(self, record_id, x, y):
        if len(y) == 0:
            raise DataError(f"record {record_id}: cannot force-decode an empty hypothesis")
        delta = self.difficulty(record_id)
        ref = self.cipher(x)
        return tuple(self._step_logprob(t < len(ref) and tok == ref[t], delta) for t, tok in enumerate(y))

    def fill_masks(self, record_id, x_masked, variant, constraint_y=None, original=None):
        slots = mask_indices(x_masked)
        if not slots:
            raise DataError(f"record {record_id}: no {MASK} tokens to fill")
        forced = variant in records.FORCED_VARIANTS
        if original is not None and len(original) != len(x_masked):
            original = None
        if forced and original is None:
            raise DataError(f"record {record_id}: variant {variant} needs the original sequence for forced log-probs")
        v = self.world.vocab_size
        noise = self.world.mlm_noise / 2.0 if constraint_y is not None else self.world.mlm_noise
        stream = STREAM_MLM + (1 if constraint_y is not None else 0)
        u = counter_uniforms(self._keys(record_id, stable_hash(*x_masked), stream), 2 * len(slots))
        clean = math.log1p(-noise)
        wrong = math.log(noise / (v - 1)) if noise > 0 else LOG_FLOOR
        positions = []
        for k, i in enumerate(slots):
            if original is not None:
                expected = self._index(original[i], "s")
            else:
                left = next((t for t in reversed(x_masked[:i]) if t != MASK), "")
                expected = stable_hash(left, str(i), str(STREAM_FILLER)) % v
            if u[k] < noise:
                tok, lp = (expected + 1 + int(u[len(slots) + k] * (v - 1))) % v, wrong
            else:
                tok, lp = expected, clean
            positions.append(MaskPosition(index=i, predicted=f"s{tok}", pred_logprob=lp,
                                          forced_logprob=clean if forced else None))
        return MaskPrediction(record_id=record_id, variant=variant, positions=tuple(positions))


# ---------------------------------------------------------------------------
# File-backed outputs of real models
# ---------------------------------------------------------------------------

class FileBackend(ModelBackend):
    name = "file"

    def __init__(self, record_list: Sequence[QERecord] = (), sample_sets: Sequence[SampleSet] = (),
                 mask_predictions: Sequence[MaskPrediction] = ()):
        self._records = {r.id: r for r in record_list}
        self._samples: Dict[Tuple[str, str], SampleSet] = {}
        for s in sample_sets:
            self._samples[(s.record_id, s.kind)] = s
        self._masks: Dict[Tuple[str, str], List[MaskPrediction]] = {}
        for p in mask_predictions:
            self._masks.setdefault((p.record_id, p.variant), []).append(p)

        caps = set()
        if any(r.step_logprobs is not None for r in self._records.values()):
            caps.update(("translate", "force_decode"))
        kinds = {kind for _, kind in self._samples}
        if "mc_dropout" in kinds:
            caps.add("mc_sample")
        if kinds - {"mc_dropout"}:
            caps.add("force_decode")
        if self._masks:
            caps.add("fill_masks")
        self.capabilities = frozenset(caps)

    def _miss(self, record_id: str, what: str):
        return DataError(f"record not covered by file backend: {record_id} ({what})")

    def has_record(self, record_id: str) -> bool:
        return record_id in self._records

    def sample_set(self, record_id: str, kind: str) -> Optional[SampleSet]:
        return self._samples.get((record_id, kind))

    def mask_predictions(self, record_id: str, variant: str) -> List[MaskPrediction]:
        return list(self._masks.get((record_id, variant), []))

    def translate(self, record_id, x):
        self._require("translate")
        rec = self._records.get(record_id)
        if rec is None or rec.step_logprobs is None:
            raise self._miss(record_id, "translate")
        return rec.mt_tokens, rec.step_logprobs

    def mc_sample(self, record_id, x, m):
        self._require("mc_sample")
        if m < 2:
            raise InsufficientSamples(f"mc_sample needs m >= 2, got {m}")
        stored = self.sample_set(record_id, "mc_dropout")
        if stored is None:
            raise self._miss(record_id, "mc_sample")
        if len(stored.samples) < m:
            logger.warning("record %s: %d stored MC samples, %d requested", record_id, len(stored.samples), m)
        return SampleSet(record_id=record_id, kind="mc_dropout", samples=stored.samples[:m])

    def force_decode(self, record_id, x, y):
        self._require("force_decode")
        if len(y) == 0:
            raise DataError(f"record {record_id}: cannot force-decode an empty hypothesis")
        x, y = tuple(x), tuple(y)
        rec = self._records.get(record_id)
        if rec is not None and rec.step_logprobs is not None and rec.src_tokens == x and rec.mt_tokens == y:
            return rec.step_logprobs
        for kind in records.SAMPLE_KINDS[1:]:
            stored = self.sample_set(record_id, kind)
            for s in stored.samples if stored else ():
                if s.noised_src_tokens == x and s.hyp_tokens == y and s.step_logprobs is not None:
                    return s.step_logprobs
        raise self._miss(record_id, "force_decode")

    def fill_masks(self, record_id, x_masked, variant, constraint_y=None, original=None):
        self._require("fill_masks")
        slots = mask_indices(x_masked)
        if not slots:
            raise DataError(f"record {record_id}: no {MASK} tokens to fill")
        for pred in self._masks.get((record_id, variant), []):
            if [p.index for p in pred.positions] == slots:
                return pred
        raise self._miss(record_id, f"fill_masks {variant}")


def file_backend_load(records_path: Optional[str] = None, samples_path: Optional[str] = None,
                      masks_path: Optional[str] = None) -> FileBackend:
    backend = FileBackend(
        records.read_jsonl_records(records_path) if records_path else (),
        records.read_sample_sets(samples_path) if samples_path else (),
        records.read_mask_predictions(masks_path) if masks_path else (),
    )
    logger.info("file backend loaded, capabilities: %s", ", ".join(sorted(backend.capabilities)) or "none")
    return backend
