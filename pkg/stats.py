# -*- coding: utf-8 -*-
"""Expectation / standard deviation / combo triple and Pearson correlation."""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from errors import DataError

logger = logging.getLogger(__name__)

EPS = 1e-12


@dataclass(frozen=True)
class TripleStat:
    mean: float
    std: float
    combo: float

    @property
    def guarded(self) -> bool:
        """True when combo was forced to 0 because std <= EPS."""
        return self.std <= EPS

    def as_tuple(self):
        return (self.mean, self.std, self.combo)


def triple_stat(xs: Sequence[float]) -> TripleStat:
    arr = np.asarray(xs, dtype=np.float64)
    if arr.size == 0:
        raise DataError("empty statistic input")
    mean = float(arr.mean())
    # population form: divide by T
    std = float(np.sqrt(np.mean((arr - mean) ** 2)))
    if std <= EPS:
        logger.debug("combo guard: std=%g over %d values", std, arr.size)
        return TripleStat(mean, std, 0.0)
    return TripleStat(mean, std, mean / std)


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise DataError("pearson needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    # constant columns leave rounding residue around the mean
    tol_x = x.size * (EPS * max(1.0, float(np.abs(x).max()))) ** 2
    tol_y = y.size * (EPS * max(1.0, float(np.abs(y).max()))) ** 2
    if sxx <= tol_x or syy <= tol_y:
        raise DataError("degenerate correlation input")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def abs_pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    return abs(pearson(xs, ys))
