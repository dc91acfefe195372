# -*- coding: utf-8 -*-
"""
Noised source inputs.

simple: mask each source position in turn and let the MLM refill it.
pe:     "post-editing" noise, R rounds of random deletion then random <mask>
        insertion, refilled by the MLM.
The `_y` variants pass the machine translation to the MLM as a constraint.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from backend import MASK, ModelBackend, counter_uniforms, stable_hash
from errors import DataError, UnsupportedCapability
from records import MASK_VARIANTS, MaskPrediction

logger = logging.getLogger(__name__)

STREAM_PE = 20


@dataclass(frozen=True)
class NoiseConfig:
    rounds: int = 2
    p_d: float = 0.15
    p_i: float = 0.15
    n_variants: int = 4
    seed: int = 42

    def __post_init__(self):
        if self.rounds < 1:
            raise DataError(f"rounds must be >= 1, got {self.rounds}")
        for name in ("p_d", "p_i"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise DataError(f"{name} must be in [0, 1], got {p}")
        if self.n_variants < 1:
            raise DataError(f"n_variants must be >= 1, got {self.n_variants}")


def mask_each_position(x: Sequence[str]) -> List[List[str]]:
    if not x:
        raise DataError("cannot mask an empty sequence")
    out = []
    for t in range(len(x)):
        masked = list(x)
        masked[t] = MASK
        out.append(masked)
    return out


def pe_noise(x: Sequence[str], cfg: NoiseConfig, variant_index: int, record_id: str = "") -> List[str]:
    if not x:
        raise DataError("cannot noise an empty sequence")
    cur = list(x)
    rid = stable_hash(record_id)
    for r in range(cfg.rounds):
        # delete, then insert
        u = counter_uniforms([cfg.seed, rid, STREAM_PE, variant_index, r, 0], len(cur))
        cur = [tok for tok, ud in zip(cur, u) if ud >= cfg.p_d]
        u = counter_uniforms([cfg.seed, rid, STREAM_PE, variant_index, r, 1], len(cur) + 1)
        grown = []
        for slot in range(len(cur) + 1):
            if u[slot] < cfg.p_i:
                grown.append(MASK)
            if slot < len(cur):
                grown.append(cur[slot])
        cur = grown
    return cur


def _substitute(masked: Sequence[str], pred: MaskPrediction, record_id: str) -> List[str]:
    fills = {p.index: p.predicted for p in pred.positions}
    out = []
    for i, tok in enumerate(masked):
        if tok != MASK:
            out.append(tok)
        elif i in fills:
            out.append(fills[i])
        else:
            logger.warning("record %s: residual mask at %d dropped", record_id, i)
    return out


def make_noised_inputs(x: Sequence[str], cfg: NoiseConfig, backend: ModelBackend, variant: str,
                       y: Optional[Sequence[str]] = None,
                       record_id: str = "") -> Tuple[List[List[str]], List[MaskPrediction]]:
    if variant not in MASK_VARIANTS:
        raise DataError(f"unknown noise variant {variant!r}")
    with_y = variant.endswith("_y")
    if with_y and y is None:
        raise DataError(f"variant {variant} needs the machine translation")
    if "fill_masks" not in backend.capabilities:
        raise UnsupportedCapability("fill_masks", backend.name)
    if not x:
        logger.debug("record %s: empty source, no %s noise", record_id, variant)
        return [], []

    simple = variant.startswith("simple")
    if simple:
        masked_inputs = mask_each_position(x)
    else:
        masked_inputs = [pe_noise(x, cfg, j, record_id) for j in range(cfg.n_variants)]

    noised, preds = [], []
    for masked in masked_inputs:
        if MASK not in masked:
            noised.append(list(masked))
            continue
        pred = backend.fill_masks(record_id, masked, variant,
                                  constraint_y=y if with_y else None,
                                  original=x if simple else None)
        preds.append(pred)
        noised.append(_substitute(masked, pred, record_id))
    return noised, preds
