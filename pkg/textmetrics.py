# -*- coding: utf-8 -*-
"""
Tokenization, token-level edit distance and the sentence similarity Sim.

Sim is an exact-match Meteor: unigram matches, F-mean with recall weighted 9:1,
fragmentation penalty 0.5 * (chunks / matches) ** 3. No stemming or synonyms.
"""

import itertools
import re
import unicodedata
from typing import Dict, List, Optional, Sequence, Tuple

import Levenshtein

from errors import InsufficientSamples

Tokens = Sequence[str]

_WS = re.compile(r"\s+")

PENALTY_WEIGHT = 0.5
PENALTY_EXPONENT = 3.0


def tokenize(text: str) -> List[str]:
    if not text:
        return []
    return [t for t in _WS.split(unicodedata.normalize("NFC", text)) if t]


def levenshtein(a: Tokens, b: Tokens, cutoff: Optional[int] = None) -> int:
    """Token edit distance. With `cutoff`, any distance above it is reported as cutoff + 1."""
    return Levenshtein.distance(list(a), list(b), score_cutoff=cutoff)


def align(hyp: Tokens, ref: Tokens) -> List[Tuple[int, int]]:
    """Greedy left-to-right unigram alignment as (hyp index, ref index) pairs.

    Each hyp token takes the smallest free ref index holding the same token.
    """
    free: Dict[str, List[int]] = {}
    for j, tok in enumerate(ref):
        free.setdefault(tok, []).append(j)

    pairs: List[Tuple[int, int]] = []
    for i, tok in enumerate(hyp):
        slots = free.get(tok)
        if slots:
            pairs.append((i, slots.pop(0)))
    return pairs


def count_chunks(pairs: List[Tuple[int, int]]) -> int:
    if not pairs:
        return 0
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if i1 != i0 + 1 or j1 != j0 + 1:
            chunks += 1
    return chunks


def sim(hyp: Tokens, ref: Tokens) -> float:
    if not hyp or not ref:
        return 0.0
    pairs = align(hyp, ref)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(hyp)
    recall = m / len(ref)
    fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = PENALTY_WEIGHT * (count_chunks(pairs) / m) ** PENALTY_EXPONENT
    return fmean * (1.0 - penalty)


def pairwise_mean_sim(hyps: Sequence[Tokens]) -> Tuple[float, List[float]]:
    """Mean Sim over all unordered pairs i < j, plus the per-pair scores in (i, j) order."""
    if len(hyps) < 2:
        raise InsufficientSamples("insufficient samples: pairwise similarity needs at least 2 hypotheses")
    scores = [sim(a, b) for a, b in itertools.combinations(hyps, 2)]
    return sum(scores) / len(scores), scores
