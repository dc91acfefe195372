# -*- coding: utf-8 -*-
"""
Fusion head: frozen sentence embedding ++ z-normalized uncertainty features
through a closed-form ridge regression layer.
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.preprocessing import StandardScaler

from errors import DataError, InsufficientSamples, ModelFormatError

logger = logging.getLogger(__name__)

MODEL_MAGIC = "UQKIT-MODEL v1"
CONSTANT_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool per column; constant columns transform to 0

    def __post_init__(self):
        if not (len(self.mean) == len(self.std) == len(self.constant)):
            raise DataError("normalizer vectors differ in length")
        if np.any((self.std <= 0) & ~self.constant):
            raise DataError("non-constant normalizer column with std <= 0")

    def __len__(self):
        return len(self.mean)

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != len(self):
            raise DataError(f"normalizer expects {len(self)} columns, got {matrix.shape[-1]}")
        safe = np.where(self.constant, 1.0, self.std)
        out = (matrix - self.mean) / safe
        out[:, self.constant] = 0.0
        return out


def fit_normalizer(train_features) -> Normalizer:
    matrix = np.asarray(train_features, dtype=np.float64)
    if matrix.ndim != 2:
        raise DataError("normalizer input must be a matrix")
    if matrix.shape[0] < 2:
        raise InsufficientSamples(f"normalizer needs at least 2 rows, got {matrix.shape[0]}")
    if matrix.shape[1] == 0:
        empty = np.zeros(0)
        return Normalizer(empty, empty, np.zeros(0, dtype=bool))
    scaler = StandardScaler().fit(matrix)
    std = np.sqrt(scaler.var_)
    constant = std <= CONSTANT_EPS * np.maximum(1.0, np.abs(scaler.mean_))
    if constant.any():
        logger.debug("%d constant feature column(s) normalize to 0", int(constant.sum()))
    return Normalizer(scaler.mean_.copy(), np.where(constant, 0.0, std), constant)


@dataclass(frozen=True, eq=False)
class FusionModel:
    normalizer: Normalizer
    weights: np.ndarray
    bias: float
    ridge_lambda: float
    embedding_dim: int
    feature_names: Tuple[str, ...] = ()
    normalize_embedding: bool = False

    def __post_init__(self):
        if len(self.weights) != self.embedding_dim + self.feature_count:
            raise DataError(f"weight length {len(self.weights)} != embedding_dim + feature_count "
                            f"({self.embedding_dim} + {self.feature_count})")
        expected = self.embedding_dim + self.feature_count if self.normalize_embedding else self.feature_count
        if len(self.normalizer) != expected:
            raise DataError(f"normalizer covers {len(self.normalizer)} columns, expected {expected}")
        if self.ridge_lambda < 0:
            raise DataError("ridge_lambda must be >= 0")

    @property
    def feature_count(self) -> int:
        return len(self.weights) - self.embedding_dim if not self.feature_names else len(self.feature_names)

    def design(self, embeddings, features) -> np.ndarray:
        """[embedding ++ normalized features] rows, as the regression layer sees them."""
        emb = _as_matrix(embeddings, "embedding")
        feats = _as_matrix(features, "features", rows=emb.shape[0])
        if emb.shape[1] != self.embedding_dim or feats.shape[1] != self.feature_count:
            raise DataError(f"dimension mismatch: model expects embedding={self.embedding_dim}, "
                            f"features={self.feature_count}; got embedding={emb.shape[1]}, "
                            f"features={feats.shape[1]}")
        if self.normalize_embedding:
            return self.normalizer.transform(np.hstack([emb, feats]))
        return np.hstack([emb, self.normalizer.transform(feats)])


def _as_matrix(values, what: str, rows: Optional[int] = None) -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 1 and m.size == 0 and rows is not None:
        m = np.zeros((rows, 0))
    if m.ndim != 2:
        raise DataError(f"{what} must be a matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows:
        raise DataError(f"{what} has {m.shape[0]} rows, expected {rows}")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{what} contains non-finite values")
    return m


def train(embeddings, features, labels, ridge_lambda: float = 1.0,
          feature_names: Sequence[str] = (), normalize_embedding: bool = False) -> FusionModel:
    """
    Ridge fit of labels on [embedding ++ z(features)] with an unpenalized bias.

    Constant columns get weight 0 and stay out of the solve.
    """
    emb = _as_matrix(embeddings, "embedding")
    feats = _as_matrix(features, "features", rows=emb.shape[0])
    y = np.asarray(labels, dtype=np.float64)
    n = emb.shape[0]
    if n < 2:
        raise InsufficientSamples(f"training needs at least 2 rows, got {n}")
    if y.shape != (n,):
        raise DataError(f"expected {n} labels, got {y.shape[0] if y.ndim else 0}")
    if not np.all(np.isfinite(y)):
        raise DataError("labels contain non-finite values")
    if ridge_lambda < 0:
        raise DataError(f"ridge_lambda must be >= 0, got {ridge_lambda}")
    if feature_names and len(feature_names) != feats.shape[1]:
        raise DataError(f"{len(feature_names)} feature names for {feats.shape[1]} feature columns")

    if normalize_embedding:
        normalizer = fit_normalizer(np.hstack([emb, feats]))
        z = normalizer.transform(np.hstack([emb, feats]))
        active = ~normalizer.constant
    else:
        normalizer = fit_normalizer(feats)
        z = np.hstack([emb, normalizer.transform(feats)])
        active = np.concatenate([np.ones(emb.shape[1], dtype=bool), ~normalizer.constant])

    a = np.hstack([np.ones((n, 1)), z[:, active]])
    if ridge_lambda == 0 and np.linalg.matrix_rank(a) < a.shape[1]:
        raise DataError("design matrix is rank deficient with ridge_lambda=0; use ridge_lambda > 0")
    penalty = np.full(a.shape[1], float(ridge_lambda))
    penalty[0] = 0.0
    gram = a.T @ a + np.diag(penalty)
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise DataError("normal equations are not positive definite; use ridge_lambda > 0")
    beta = np.linalg.solve(chol.T, np.linalg.solve(chol, a.T @ y))

    weights = np.zeros(z.shape[1])
    weights[active] = beta[1:]
    logger.debug("trained fusion head: n=%d, dims=%d (+%d constant), lambda=%g",
                 n, int(active.sum()), int((~active).sum()), ridge_lambda)
    return FusionModel(normalizer=normalizer, weights=weights, bias=float(beta[0]),
                       ridge_lambda=float(ridge_lambda), embedding_dim=emb.shape[1],
                       feature_names=tuple(feature_names), normalize_embedding=normalize_embedding)


def predict_many(model: FusionModel, embeddings, features) -> np.ndarray:
    return model.design(embeddings, features) @ model.weights + model.bias


def predict(model: FusionModel, embedding: Sequence[float], features: Sequence[float]) -> float:
    return float(predict_many(model, [list(embedding)], [list(features)])[0])


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "%.17g" % v


def save_model(model: FusionModel, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    lines = [MODEL_MAGIC,
             f"lambda {_fmt(model.ridge_lambda)}",
             f"dims {model.embedding_dim} {model.feature_count}",
             f"normalize_embedding {int(model.normalize_embedding)}",
             " ".join(["features", *model.feature_names])]
    for mu, sd, const in zip(model.normalizer.mean, model.normalizer.std, model.normalizer.constant):
        lines.append(f"norm {_fmt(mu)} {_fmt(sd)} {int(const)}")
    for w in model.weights:
        lines.append(f"weight {_fmt(w)}")
    lines.append(f"bias {_fmt(model.bias)}")
    lines.append("end")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path: str) -> FusionModel:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")
    if not lines or lines[0] != MODEL_MAGIC:
        found = lines[0] if lines else ""
        raise ModelFormatError(f"{path}: unsupported model file version {found!r}, expected {MODEL_MAGIC!r}")
    pos = 1

    def take(tag: str) -> List[str]:
        nonlocal pos
        if pos >= len(lines):
            raise ModelFormatError(f"{path}: truncated model file, expected {tag!r}")
        parts = lines[pos].split(" ")
        if parts[0] != tag:
            raise ModelFormatError(f"{path}: line {pos + 1}: expected {tag!r}, got {parts[0]!r}")
        pos += 1
        return parts[1:]

    try:
        lam = float(take("lambda")[0])
        e_dim, f_dim = (int(v) for v in take("dims"))
        norm_emb = take("normalize_embedding")[0] == "1"
        names = tuple(take("features"))
        n_norm = e_dim + f_dim if norm_emb else f_dim
        rows = [take("norm") for _ in range(n_norm)]
        weights = [float(take("weight")[0]) for _ in range(e_dim + f_dim)]
        bias = float(take("bias")[0])
        take("end")
        normalizer = Normalizer(np.array([float(r[0]) for r in rows]),
                                np.array([float(r[1]) for r in rows]),
                                np.array([r[2] == "1" for r in rows], dtype=bool))
    except (ValueError, IndexError) as e:
        raise ModelFormatError(f"{path}: malformed model file near line {pos}: {e}")

    return FusionModel(normalizer=normalizer, weights=np.array(weights), bias=bias, ridge_lambda=lam,
                       embedding_dim=e_dim, feature_names=names, normalize_embedding=norm_emb)
