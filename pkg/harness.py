# -*- coding: utf-8 -*-
"""
Evaluation protocols: unsupervised per-component Pearson, single-family
enhanced ranking, top-k family selection and the final test report.
"""

import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import fusion
from errors import DataError, UqkitError
from features import FAMILIES, family_group, family_of
from records import QERecord
from stats import abs_pearson, pearson

logger = logging.getLogger(__name__)

TIE_NOTE = "ties in dev Pearson are broken by canonical family order"
RANKING_COLUMNS = ["rank", "family", "dev_pearson", "increment", "baseline", "skipped"]


@dataclass(frozen=True, eq=False)
class Split:
    """One data split aligned row-by-row: ids, frozen embeddings, feature table, optional gold."""
    ids: Tuple[str, ...]
    embeddings: np.ndarray
    features: pd.DataFrame
    gold: Optional[np.ndarray] = None

    @classmethod
    def from_records(cls, recs: Sequence[QERecord], table: pd.DataFrame) -> "Split":
        if not recs:
            raise DataError("empty split")
        missing = [r.id for r in recs if r.id not in table.index]
        if missing:
            raise DataError(f"feature table lacks {len(missing)} record(s), e.g. {missing[0]}")
        no_emb = [r.id for r in recs if r.embedding is None]
        if no_emb:
            raise DataError(f"record {no_emb[0]} has no embedding; the fusion head needs one per record")
        dims = {len(r.embedding) for r in recs}
        if len(dims) != 1:
            raise DataError(f"embedding dims differ across records: {sorted(dims)}")
        golds = [r.gold_score for r in recs]
        gold = None if any(g is None for g in golds) else np.array(golds, dtype=np.float64)
        return cls(ids=tuple(r.id for r in recs),
                   embeddings=np.array([r.embedding for r in recs], dtype=np.float64),
                   features=table.loc[[r.id for r in recs]],
                   gold=gold)

    def require_gold(self, what: str) -> np.ndarray:
        if self.gold is None:
            raise DataError(f"{what} needs gold scores for every record")
        return self.gold

    def columns_for(self, families: Sequence[str]) -> List[str]:
        """Table columns of the given families, family by family in the given order."""
        cols = []
        for f in families:
            own = [c for c in self.features.columns if family_of(c) == f]
            if not own:
                raise DataError(f"features not extracted for family {f}")
            cols.extend(own)
        return cols


def _fit_and_score(train: Split, dev: Split, families: Sequence[str], ridge_lambda: float,
                   normalize_embedding: bool) -> Tuple[fusion.FusionModel, float]:
    cols = train.columns_for(families)
    dev.columns_for(families)
    model = fusion.train(train.embeddings, train.features[cols].to_numpy(), train.require_gold("training"),
                         ridge_lambda=ridge_lambda, feature_names=cols, normalize_embedding=normalize_embedding)
    preds = fusion.predict_many(model, dev.embeddings, dev.features[cols].to_numpy())
    return model, pearson(preds, dev.require_gold("dev scoring"))


# ---------------------------------------------------------------------------
# Unsupervised
# ---------------------------------------------------------------------------

def unsupervised_eval(features: pd.DataFrame, gold) -> pd.DataFrame:
    """abs-Pearson of every extracted component with gold; degenerate components are NaN (absent)."""
    if gold is None:
        raise DataError("unsupervised evaluation needs gold scores")
    gold = np.asarray(gold, dtype=np.float64)
    if len(gold) != len(features) or not np.all(np.isfinite(gold)):
        raise DataError("unsupervised evaluation needs a finite gold score for every row")
    rows = []
    for name in features.columns:
        family = family_of(name)
        if family not in FAMILIES:
            continue
        try:
            r = abs_pearson(features[name].to_numpy(), gold)
        except DataError:
            logger.debug("component %s has degenerate variance", name)
            r = float("nan")
        rows.append({"group": family_group(family), "family": family, "component": name[len(family) + 1:],
                     "feature": name, "abs_pearson": r})
    return pd.DataFrame(rows, columns=["group", "family", "component", "feature", "abs_pearson"])


# ---------------------------------------------------------------------------
# Ranking and top-k
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankRow:
    family: str
    dev_pearson: float
    increment: float
    reason: str = ""

    @property
    def skipped(self) -> bool:
        return bool(self.reason)


@dataclass(frozen=True)
class Ranking:
    baseline: float
    rows: Tuple[RankRow, ...]

    @property
    def ranked(self) -> List[str]:
        return [r.family for r in self.rows if not r.skipped]


def baseline_pearson(train: Split, dev: Split, ridge_lambda: float = 1.0,
                     normalize_embedding: bool = False) -> float:
    return _fit_and_score(train, dev, [], ridge_lambda, normalize_embedding)[1]


def single_feature_ranking(train: Split, dev: Split, families: Sequence[str] = tuple(FAMILIES),
                           ridge_lambda: float = 1.0, normalize_embedding: bool = False) -> Ranking:
    for f in families:
        if f not in FAMILIES:
            raise DataError(f"unknown feature family {f!r}")
    base = baseline_pearson(train, dev, ridge_lambda, normalize_embedding)
    logger.info("baseline (embedding only) dev pearson=%.6f", base)
    scored, skipped = [], []
    order = {f: i for i, f in enumerate(FAMILIES)}
    for f in families:
        try:
            _, r = _fit_and_score(train, dev, [f], ridge_lambda, normalize_embedding)
        except UqkitError as e:
            logger.warning("family %s skipped: %s", f, e)
            skipped.append(RankRow(f, float("nan"), float("nan"), reason=str(e)))
            continue
        scored.append(RankRow(f, r, r - base))
    scored.sort(key=lambda row: (-row.dev_pearson, order[row.family]))
    return Ranking(base, tuple(scored + skipped))


@dataclass(frozen=True)
class TopkPoint:
    k: int
    families: Tuple[str, ...]
    dev_pearson: float


def topk_select(train: Split, dev: Split, ranking: Ranking, k_max: int,
                ridge_lambda: float = 1.0, normalize_embedding: bool = False) -> List[TopkPoint]:
    """Dev Pearson of the union of the top-k ranked families for k = 0..k_max; k=0 is the baseline."""
    if k_max < 0:
        raise DataError(f"k_max must be >= 0, got {k_max}")
    order = ranking.ranked
    if k_max > len(order):
        logger.warning("k_max=%d exceeds the %d ranked families; clamped", k_max, len(order))
        k_max = len(order)
    curve = [TopkPoint(0, (), ranking.baseline)]
    for k in range(1, k_max + 1):
        _, r = _fit_and_score(train, dev, order[:k], ridge_lambda, normalize_embedding)
        curve.append(TopkPoint(k, tuple(order[:k]), r))
        logger.debug("top-%d dev pearson=%.6f", k, r)
    return curve


def best_k(curve: Sequence[TopkPoint]) -> int:
    """Smallest k reaching the maximum dev Pearson."""
    best = max(p.dev_pearson for p in curve)
    return min(p.k for p in curve if p.dev_pearson == best)


def top_features(ranking: Ranking, unsupervised: Optional[pd.DataFrame] = None, n: int = 5) -> pd.DataFrame:
    """The n most useful families by enhanced dev Pearson, and by best unsupervised component."""
    rows = []
    for i, row in enumerate([r for r in ranking.rows if not r.skipped][:n], 1):
        rows.append({"order": "enhanced_dev_pearson", "rank": i, "family": row.family,
                     "value": row.dev_pearson})
    if unsupervised is not None and len(unsupervised):
        best = (unsupervised.dropna(subset=["abs_pearson"])
                .groupby("family", sort=False)["abs_pearson"].max())
        order = {f: i for i, f in enumerate(FAMILIES)}
        ranked = sorted(best.items(), key=lambda kv: (-kv[1], order[kv[0]]))[:n]
        for i, (family, v) in enumerate(ranked, 1):
            rows.append({"order": "unsupervised_abs_pearson", "rank": i, "family": family, "value": float(v)})
    return pd.DataFrame(rows, columns=["order", "rank", "family", "value"])


# ---------------------------------------------------------------------------
# Final report
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FinalReport:
    rows: Tuple[Tuple[str, int, Optional[float]], ...]  # (label, families used, test pearson)
    predictions: pd.DataFrame
    ridge_lambda: float
    chosen_families: Tuple[str, ...]

    @property
    def test_pearson(self) -> Optional[float]:
        return self.rows[-1][2]


def final_report(train: Split, test: Split, ranking: Ranking, curve: Sequence[TopkPoint],
                 chosen_k: Optional[int] = None, ridge_lambda: float = 1.0,
                 normalize_embedding: bool = False) -> FinalReport:
    """
    Train on train, score on test: baseline, best single family, best top-k and
    the chosen k (dev-selected when not given). Test gold is optional; without it
    Pearson is omitted and only predictions are produced.
    """
    k_best = best_k(curve)
    if chosen_k is None:
        chosen_k = k_best
    by_k = {p.k: p.families for p in curve}
    if chosen_k not in by_k:
        raise DataError(f"chosen k={chosen_k} is not on the top-k curve (0..{max(by_k)})")
    ranked = ranking.ranked
    plan = [("embedding-only baseline", ())]
    if ranked:
        plan.append((f"best single feature (+{ranked[0]})", (ranked[0],)))
    plan.append((f"best multiple features (top-{k_best})", by_k[k_best]))
    plan.append((f"chosen model (top-{chosen_k})", by_k[chosen_k]))

    if test.gold is None:
        logger.warning("test split has no gold scores; prediction-only mode")
    rows, preds = [], None
    for label, fams in plan:
        cols = train.columns_for(fams)
        model = fusion.train(train.embeddings, train.features[cols].to_numpy(), train.require_gold("training"),
                             ridge_lambda=ridge_lambda, feature_names=cols, normalize_embedding=normalize_embedding)
        p = fusion.predict_many(model, test.embeddings, test.features[test.columns_for(fams)].to_numpy())
        rows.append((label, len(fams), pearson(p, test.gold) if test.gold is not None else None))
        preds = p

    out = pd.DataFrame({"id": list(test.ids), "prediction": preds})
    if test.gold is not None:
        out["gold"] = test.gold
    return FinalReport(tuple(rows), out, ridge_lambda, tuple(by_k[chosen_k]))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _fmt(v: Optional[float]) -> str:
    return "" if v is None or v != v else f"{v:.6f}"


def write_csv(frame: pd.DataFrame, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


def ranking_frame(ranking: Ranking) -> pd.DataFrame:
    """One row per requested family; the embedding-only baseline rides along as a column."""
    rows = []
    for i, r in enumerate(ranking.rows, 1):
        rows.append({"rank": "" if r.skipped else i, "family": r.family, "dev_pearson": r.dev_pearson,
                     "increment": r.increment, "baseline": ranking.baseline, "skipped": r.reason})
    return pd.DataFrame(rows, columns=RANKING_COLUMNS)


def topk_frame(curve: Sequence[TopkPoint]) -> pd.DataFrame:
    return pd.DataFrame([{"k": p.k, "dev_pearson": p.dev_pearson,
                          "added": p.families[-1] if p.families else ""} for p in curve],
                        columns=["k", "dev_pearson", "added"])


def read_ranking(path: str) -> Ranking:
    df = pd.read_csv(path, keep_default_na=False, dtype=str)
    if list(df.columns) != RANKING_COLUMNS or not len(df):
        raise DataError(f"{path}: not a ranking report")

    def num(v: str) -> float:
        return float(v) if v != "" else float("nan")

    rows = tuple(RankRow(rec["family"], num(rec["dev_pearson"]), num(rec["increment"]), reason=rec["skipped"])
                 for rec in df.to_dict("records"))
    return Ranking(num(df.iloc[0]["baseline"]), rows)


def render_final(report: FinalReport, ranking: Ranking, curve: Sequence[TopkPoint],
                 top: Optional[pd.DataFrame] = None) -> str:
    width = max(len(r[0]) for r in report.rows) + 2
    lines = ["QE final report",
             f"fusion head: ridge regression, lambda={report.ridge_lambda:g}",
             TIE_NOTE,
             "",
             f"{'model':<{width}}{'families':>9}{'test pearson':>14}"]
    for label, n, r in report.rows:
        lines.append(f"{label:<{width}}{n:>9}{_fmt(r) or 'n/a':>14}")
    lines += ["", f"chosen families: {', '.join(report.chosen_families) or '(none)'}", "",
              "single feature ranking (dev)", f"{'family':<28}{'pearson':>10}{'increment':>11}",
              f"{'baseline':<28}{_fmt(ranking.baseline):>10}{'':>11}"]
    for r in ranking.rows:
        if r.skipped:
            lines.append(f"{r.family:<28}{'skipped':>10}  {r.reason}")
        else:
            lines.append(f"{r.family:<28}{_fmt(r.dev_pearson):>10}{r.increment:>+11.6f}")
    lines += ["", "top-k (dev)", f"{'k':>3}{'pearson':>10}  added"]
    for p in curve:
        lines.append(f"{p.k:>3}{_fmt(p.dev_pearson):>10}  {p.families[-1] if p.families else '-'}")
    if top is not None and len(top):
        lines += ["", "most useful feature families"]
        for rec in top.to_dict("records"):
            lines.append(f"{rec['order']:<26}{rec['rank']:>3}  {rec['family']:<28}{_fmt(rec['value'])}")
    return "\n".join(lines) + "\n"


def write_text(text: str, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def read_topk(path: str, ranking: Ranking) -> List[TopkPoint]:
    df = pd.read_csv(path, keep_default_na=False)
    if list(df.columns) != ["k", "dev_pearson", "added"]:
        raise DataError(f"{path}: not a top-k report")
    order = ranking.ranked
    return [TopkPoint(int(k), tuple(order[:int(k)]), float(r)) for k, r in zip(df["k"], df["dev_pearson"])]
