# -*- coding: utf-8 -*-
"""
Training-data features: n-gram coverage of the source (DS-gram) and mean
similarity to the Levenshtein-nearest training sentences (DS-neighbors).
"""

import heapq
import logging
import os
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from errors import DataError, ModelFormatError
from textmetrics import levenshtein, sim

logger = logging.getLogger(__name__)

MAGIC = "UQKIT-IDX v1"
MAX_ORDER = 5
SIDES = ("src", "tgt")

Sentence = Tuple[str, ...]


def ngrams(tokens: Sequence[str], n: int) -> List[Tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


@dataclass(frozen=True)
class CorpusIndex:
    ngram_sets: Dict[int, FrozenSet[Tuple[str, ...]]]
    src_sentences: Tuple[Sentence, ...]
    tgt_sentences: Tuple[Sentence, ...]

    def __post_init__(self):
        if len(self.src_sentences) != len(self.tgt_sentences):
            raise DataError("source and target sentence stores differ in length")

    def __len__(self):
        return len(self.src_sentences)

    def side(self, side: str) -> Tuple[Sentence, ...]:
        if side == "src":
            return self.src_sentences
        if side == "tgt":
            return self.tgt_sentences
        raise DataError(f"unknown corpus side {side!r}")


def build_index(parallel_corpus: Iterable[Tuple[Sequence[str], Sequence[str]]]) -> CorpusIndex:
    src, tgt = [], []
    for s, t in parallel_corpus:
        src.append(tuple(s))
        tgt.append(tuple(t))
    if not src:
        raise DataError("cannot build an index from an empty corpus")
    sets = {n: set() for n in range(1, MAX_ORDER + 1)}
    for sent in src:
        for n in range(1, MAX_ORDER + 1):
            sets[n].update(ngrams(sent, n))
    logger.info("indexed %d sentence pairs (%s)", len(src),
                ", ".join(f"{n}-grams={len(sets[n])}" for n in sets))
    return CorpusIndex({n: frozenset(v) for n, v in sets.items()}, tuple(src), tuple(tgt))


def ds_gram(x: Sequence[str], n: int, index: CorpusIndex) -> Optional[float]:
    """Share of x's n-grams found in the training source side; None when x is shorter than n."""
    if not 1 <= n <= MAX_ORDER:
        raise DataError(f"n-gram order must be in 1..{MAX_ORDER}, got {n}")
    denom = len(x) - n + 1
    if denom <= 0:
        return None
    known = index.ngram_sets[n]
    return sum(1 for g in ngrams(x, n) if g in known) / denom


def nearest(q: Sequence[str], k: int, side: str, index: CorpusIndex) -> List[Tuple[int, int]]:
    """The k closest sentences as (corpus position, distance), ordered by (distance, position)."""
    if k <= 0:
        raise DataError(f"K must be >= 1, got {k}")
    q = list(q)
    heap: List[Tuple[int, int]] = []  # (-distance, -position): root is the current worst
    for pos, sent in enumerate(index.side(side)):
        if len(heap) < k:
            d = levenshtein(q, sent)
            heapq.heappush(heap, (-d, -pos))
            continue
        worst = -heap[0][0]
        if worst == 0 or abs(len(q) - len(sent)) >= worst:
            continue
        d = levenshtein(q, sent, cutoff=worst - 1)
        if d < worst:
            heapq.heapreplace(heap, (-d, -pos))
    return sorted(((-p, -d) for d, p in heap), key=lambda t: (t[1], t[0]))


def ds_neighbors_many(q: Sequence[str], ks: Sequence[int], side: str, index: CorpusIndex) -> Dict[int, float]:
    """Mean Sim(q, neighbor) over the K nearest for every K in ks, from a single scan."""
    if not ks:
        return {}
    if min(ks) <= 0:
        raise DataError(f"K must be >= 1, got {min(ks)}")
    if len(index) == 0:
        raise DataError("empty corpus index")
    found = nearest(q, max(ks), side, index)
    sents = index.side(side)
    scores = [sim(q, sents[pos]) for pos, _ in found]
    out = {}
    for k in ks:
        if k > len(scores):
            logger.debug("corpus has %d sentences, fewer than K=%d", len(scores), k)
        top = scores[:k]
        out[k] = sum(top) / len(top)
    return out


def ds_neighbors(q: Sequence[str], k: int, side: str, index: CorpusIndex) -> float:
    return ds_neighbors_many(q, [k], side, index)[k]


# ---------------------------------------------------------------------------
# Snapshot
# ---------------------------------------------------------------------------

def save_index(index: CorpusIndex, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(MAGIC + "\n")
        for n in range(1, MAX_ORDER + 1):
            lines = sorted(" ".join(g) for g in index.ngram_sets[n])
            f.write(f"[NGRAMS N={n}]\ncount={len(lines)}\n")
            for line in lines:
                f.write(line + "\n")
        for name, sents in (("SRC", index.src_sentences), ("TGT", index.tgt_sentences)):
            # corpus order, since neighbor ties break by position
            f.write(f"[{name}]\ncount={len(sents)}\n")
            for s in sents:
                f.write(" ".join(s) + "\n")


def load_index(path: str) -> CorpusIndex:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")
    if not lines or lines[0] != MAGIC:
        raise ModelFormatError(f"{path}: not an index snapshot (expected header {MAGIC!r})")
    pos = 1

    def section(header: str) -> List[str]:
        nonlocal pos
        if pos + 1 >= len(lines) or lines[pos] != header or not lines[pos + 1].startswith("count="):
            raise ModelFormatError(f"{path}: expected section {header} at line {pos + 1}")
        try:
            count = int(lines[pos + 1][len("count="):])
        except ValueError:
            raise ModelFormatError(f"{path}: bad count at line {pos + 2}")
        body = lines[pos + 2:pos + 2 + count]
        if len(body) != count:
            raise ModelFormatError(f"{path}: truncated section {header}")
        pos += 2 + count
        return body

    sets = {}
    for n in range(1, MAX_ORDER + 1):
        sets[n] = frozenset(tuple(line.split(" ")) for line in section(f"[NGRAMS N={n}]"))
    src = tuple(tuple(line.split()) for line in section("[SRC]"))
    tgt = tuple(tuple(line.split()) for line in section("[TGT]"))
    return CorpusIndex(sets, src, tgt)
