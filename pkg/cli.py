# -*- coding: utf-8 -*-
"""
Command-line surface.

    python cli.py synth   --out data
    python cli.py index   --corpus data/corpus.tsv --out data/corpus.idx
    python cli.py extract --split train --groups all
    python cli.py report

stdout carries `key=value` results only; logging goes to stderr.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal error.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

import pandas as pd
from tqdm import tqdm

import config as config_mod
import corpus_index
import fusion
import harness
import records
from backend import SyntheticBackend, file_backend_load
from config import DEFAULTS, PipelineConfig
from errors import ConfigError, DataError, MissingPathError, UnsupportedCapability, UqkitError
from features import ExtractionContext, extract_many, family_of, mc_samples_for, noised_outputs_for
from stats import pearson

logger = logging.getLogger("uqkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
SPLITS = ("train", "dev", "test")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(**values) -> None:
    for k, v in values.items():
        if isinstance(v, float):
            v = f"{v:.6f}"
        print(f"{k}={v}")


def _progress(args) -> bool:
    return not args.quiet and sys.stderr.isatty()


# ---------------------------------------------------------------------------
# Shared setup
# ---------------------------------------------------------------------------

def _config(args) -> PipelineConfig:
    cfg = config_mod.load_config(args.config)
    return config_mod.with_overrides(cfg, {k: getattr(args, k, None) for k in DEFAULTS})


def _load_split_records(cfg: PipelineConfig, split: str) -> List[records.QERecord]:
    config_mod.check_paths(cfg, ["records"], split)
    return records.read_jsonl_records(cfg.path("records", split))


def _features_path(cfg: PipelineConfig, split: str, given: Optional[str]) -> str:
    return given or os.path.join(cfg.output_dir, f"{split}.features.csv")


def _load_split(cfg: PipelineConfig, split: str, features_path: Optional[str] = None) -> harness.Split:
    path = _features_path(cfg, split, features_path)
    if not os.path.exists(path):
        raise MissingPathError(f"feature table not found: {path} (run extract --split {split})", key="features")
    return harness.Split.from_records(_load_split_records(cfg, split), records.read_feature_table(path))


def _selected_families(cfg: PipelineConfig) -> List[str]:
    return list(cfg.selection().families)


def _selected_columns(table, families) -> List[str]:
    wanted = set(families)
    return [c for c in table.columns if family_of(c) in wanted]


# stored model outputs each feature group reads from
GROUP_INPUTS = {"II": "samples", "IV": "samples", "V": "masks"}


def _check_group_inputs(cfg: PipelineConfig, groups: List[str], split: str) -> None:
    for group in groups:
        key = GROUP_INPUTS.get(group)
        if key is None:
            continue
        p = cfg.path(key, split)
        if not os.path.exists(p):
            raise MissingPathError(f"group {group} needs the {key} file: {p}", key=key)


def _backend(cfg: PipelineConfig, split: str, groups: Optional[List[str]] = None):
    if cfg.backend == "synthetic":
        return SyntheticBackend(cfg.world())
    config_mod.check_paths(cfg, ["records"], split)
    _check_group_inputs(cfg, groups or [], split)
    samples = cfg.path("samples", split)
    masks = cfg.path("masks", split)
    return file_backend_load(cfg.path("records", split),
                             samples if os.path.exists(samples) else None,
                             masks if os.path.exists(masks) else None)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_index(args) -> int:
    cfg = _config(args)
    config_mod.check_paths(cfg, ["corpus"])
    index = corpus_index.build_index(records.read_parallel_corpus(cfg.corpus))
    out = args.out or cfg.index
    corpus_index.save_index(index, out)
    logger.info("index snapshot written to %s", out)
    _emit(sentences=len(index))
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    backend = SyntheticBackend(cfg.world())
    ctx = ExtractionContext(backend=backend, noise=cfg.noise(), mc_samples=cfg.mc_samples)
    out = args.out
    os.makedirs(out, exist_ok=True)

    sizes = {"train": cfg.n_train, "dev": cfg.n_dev, "test": cfg.n_test}
    for split in SPLITS:
        recs, sets, masks = [], [], []
        for i in tqdm(range(sizes[split]), desc=f"synth {split}", disable=not _progress(args)):
            rec = backend.make_record(f"{split}-{i:05d}")
            recs.append(rec)
            sets.append(mc_samples_for(rec, ctx))
            noised, preds = noised_outputs_for(rec, ctx)
            sets.extend(s for s in noised.values() if s is not None)
            for variant_preds in preds.values():
                masks.extend(variant_preds)
        records.write_jsonl_records(recs, os.path.join(out, f"{split}.records.jsonl"))
        records.write_sample_sets(sets, os.path.join(out, f"{split}.samples.jsonl"))
        records.write_mask_predictions(masks, os.path.join(out, f"{split}.masks.jsonl"))
        logger.info("%s: %d records", split, len(recs))

    records.write_parallel_corpus(backend.make_corpus(cfg.corpus_size), os.path.join(out, "corpus.tsv"))
    _emit(**{f"records_{s}": sizes[s] for s in SPLITS}, corpus=cfg.corpus_size)
    return EXIT_OK


def cmd_import_mlqe(args) -> int:
    cfg = _config(args)
    recs = records.read_mlqe_tsv(args.tsv, cfg.mlqe_columns())
    out = args.out or cfg.path("records", args.split)
    records.write_jsonl_records(recs, out)
    _emit(records=len(recs))
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config(args)
    selection = cfg.selection()
    recs = _load_split_records(cfg, args.split)
    index = None
    if "III" in selection.groups:
        config_mod.check_paths(cfg, ["index"])
        index = corpus_index.load_index(cfg.index)
    backend = None
    if any(g in selection.groups for g in ("II", "IV", "V")):
        backend = _backend(cfg, args.split, selection.groups)
    ctx = ExtractionContext(backend=backend, index=index, noise=cfg.noise(), mc_samples=cfg.mc_samples,
                            ngrams=cfg.ngrams, neighbors=cfg.neighbors)
    rows = extract_many(recs, ctx, selection, progress=_progress(args))
    out = _features_path(cfg, args.split, args.out)
    records.write_feature_table(rows, out)
    logger.info("feature table written to %s", out)
    _emit(records=len(rows), features=len(rows[0][1]) if rows else 0)
    return EXIT_OK


def _model_path(cfg: PipelineConfig, given: Optional[str]) -> str:
    return given or os.path.join(cfg.output_dir, "model.txt")


def cmd_train(args) -> int:
    cfg = _config(args)
    split = _load_split(cfg, args.split, args.features)
    cols = _selected_columns(split.features, _selected_families(cfg))
    model = fusion.train(split.embeddings, split.features[cols].to_numpy(), split.require_gold("training"),
                         ridge_lambda=cfg.ridge_lambda, feature_names=cols,
                         normalize_embedding=cfg.normalize_embedding)
    path = _model_path(cfg, args.model)
    fusion.save_model(model, path)
    logger.info("model written to %s (%d features)", path, len(cols))
    preds = fusion.predict_many(model, split.embeddings, split.features[cols].to_numpy())
    _emit(pearson=pearson(preds, split.gold))
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args)
    model = fusion.load_model(_model_path(cfg, args.model))
    path = _features_path(cfg, args.split, args.features)
    if not os.path.exists(path):
        raise MissingPathError(f"feature table not found: {path}", key="features")
    table = records.read_feature_table(path)
    recs = _load_split_records(cfg, args.split)
    missing = [c for c in model.feature_names if c not in table.columns]
    if missing:
        raise DataError(f"feature table lacks model features: {', '.join(missing[:3])}")
    split = harness.Split.from_records(recs, table)
    preds = fusion.predict_many(model, split.embeddings, split.features[list(model.feature_names)].to_numpy())
    frame = pd.DataFrame({"id": list(split.ids), "prediction": preds})
    if split.gold is not None:
        frame["gold"] = split.gold
    out = args.out or os.path.join(cfg.output_dir, f"{args.split}.predictions.csv")
    harness.write_csv(frame, out)
    if split.gold is not None:
        _emit(pearson=pearson(preds, split.gold))
    else:
        _emit(records=len(preds))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    split = _load_split(cfg, args.split, args.features)
    cols = _selected_columns(split.features, _selected_families(cfg))
    table = harness.unsupervised_eval(split.features[cols], split.require_gold("eval"))
    harness.write_csv(table, os.path.join(cfg.output_dir, "unsupervised.csv"))
    scored = table.dropna(subset=["abs_pearson"])
    if not len(scored):
        raise DataError("no feature component has usable variance")
    best = scored.loc[scored["abs_pearson"].idxmax()]
    _emit(feature=best["feature"], pearson=float(best["abs_pearson"]))
    return EXIT_OK


def _train_dev(cfg: PipelineConfig, args):
    return _load_split(cfg, args.train_split), _load_split(cfg, args.dev_split)


def cmd_rank(args) -> int:
    cfg = _config(args)
    train, dev = _train_dev(cfg, args)
    ranking = harness.single_feature_ranking(train, dev, _selected_families(cfg), cfg.ridge_lambda,
                                             cfg.normalize_embedding)
    harness.write_csv(harness.ranking_frame(ranking), os.path.join(cfg.output_dir, "ranking.csv"))
    best = ranking.rows[0].dev_pearson if ranking.ranked else ranking.baseline
    _emit(baseline=ranking.baseline, pearson=best)
    return EXIT_OK


def _read_ranking(cfg: PipelineConfig) -> harness.Ranking:
    path = os.path.join(cfg.output_dir, "ranking.csv")
    if not os.path.exists(path):
        raise MissingPathError(f"ranking report not found: {path} (run rank first)", key="ranking")
    return harness.read_ranking(path)


def cmd_topk(args) -> int:
    cfg = _config(args)
    train, dev = _train_dev(cfg, args)
    curve = harness.topk_select(train, dev, _read_ranking(cfg), cfg.k_max, cfg.ridge_lambda,
                                cfg.normalize_embedding)
    harness.write_csv(harness.topk_frame(curve), os.path.join(cfg.output_dir, "topk.csv"))
    k = harness.best_k(curve)
    _emit(k=k, pearson=curve[k].dev_pearson)
    return EXIT_OK


def _final(cfg: PipelineConfig, args, train, ranking, curve, top=None) -> int:
    test = _load_split(cfg, args.test_split)
    report = harness.final_report(train, test, ranking, curve, args.k, cfg.ridge_lambda, cfg.normalize_embedding)
    harness.write_text(harness.render_final(report, ranking, curve, top), os.path.join(cfg.output_dir, "final.txt"))
    harness.write_csv(report.predictions, os.path.join(cfg.output_dir, f"{args.test_split}.predictions.csv"))
    if report.test_pearson is None:
        _emit(families=len(report.chosen_families))
    else:
        _emit(families=len(report.chosen_families), pearson=report.test_pearson)
    return EXIT_OK


def cmd_final(args) -> int:
    cfg = _config(args)
    ranking = _read_ranking(cfg)
    path = os.path.join(cfg.output_dir, "topk.csv")
    if not os.path.exists(path):
        raise MissingPathError(f"top-k report not found: {path} (run topk first)", key="topk")
    curve = harness.read_topk(path, ranking)
    return _final(cfg, args, _load_split(cfg, args.train_split), ranking, curve)


def cmd_report(args) -> int:
    cfg = _config(args)
    train, dev = _train_dev(cfg, args)
    families = _selected_families(cfg)
    ranking = harness.single_feature_ranking(train, dev, families, cfg.ridge_lambda, cfg.normalize_embedding)
    curve = harness.topk_select(train, dev, ranking, cfg.k_max, cfg.ridge_lambda, cfg.normalize_embedding)
    unsup = harness.unsupervised_eval(dev.features[_selected_columns(dev.features, families)],
                                      dev.require_gold("eval"))
    top = harness.top_features(ranking, unsup)
    out = cfg.output_dir
    harness.write_csv(harness.ranking_frame(ranking), os.path.join(out, "ranking.csv"))
    harness.write_csv(harness.topk_frame(curve), os.path.join(out, "topk.csv"))
    harness.write_csv(unsup, os.path.join(out, "unsupervised.csv"))
    harness.write_csv(top, os.path.join(out, "top_features.csv"))
    return _final(cfg, args, train, ranking, curve, top)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _config_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=None, help="flat key = value config file (default: built-in defaults)")
    parent.add_argument("--verbose", action="store_true", help="debug logging (default: off)")
    parent.add_argument("--quiet", action="store_true", help="no progress counter (default: off)")
    group = parent.add_argument_group("config overrides")
    for key, (default, text) in DEFAULTS.items():
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        group.add_argument(*flags, dest=key, default=None, metavar=key.upper(),
                           help=f"{text} (default: {config_mod._render(default)})")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_flags()
    ap = _Parser(prog="uqkit", description="Uncertainty features for MT quality estimation.")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, func, text):
        p = sub.add_parser(name, parents=[parent], help=text, description=text)
        p.set_defaults(func=func)
        return p

    p = add("index", cmd_index, "build and snapshot the corpus index")
    p.add_argument("--out", default=None, help="snapshot path (default: the index key)")

    p = add("synth", cmd_synth, "write a synthetic train/dev/test world")
    p.add_argument("--out", default="data", help="output directory (default: data)")

    p = add("import-mlqe", cmd_import_mlqe, "convert an MLQE TSV file into a record file")
    p.add_argument("--tsv", required=True, help="MLQE TSV path (required)")
    p.add_argument("--split", default="train", help="split name for the default output path (default: train)")
    p.add_argument("--out", default=None, help="record file path (default: the records key)")

    p = add("extract", cmd_extract, "write the feature table of one split")
    p.add_argument("--split", default="train", help="split name (default: train)")
    p.add_argument("--out", default=None, help="feature table path (default: OUTPUT_DIR/SPLIT.features.csv)")

    p = add("train", cmd_train, "fit the fusion head on one split")
    p.add_argument("--split", default="train", help="split name (default: train)")
    p.add_argument("--features", default=None, help="feature table (default: OUTPUT_DIR/SPLIT.features.csv)")
    p.add_argument("--model", default=None, help="model path (default: OUTPUT_DIR/model.txt)")

    p = add("predict", cmd_predict, "score one split with a trained model")
    p.add_argument("--split", default="test", help="split name (default: test)")
    p.add_argument("--features", default=None, help="feature table (default: OUTPUT_DIR/SPLIT.features.csv)")
    p.add_argument("--model", default=None, help="model path (default: OUTPUT_DIR/model.txt)")
    p.add_argument("--out", default=None, help="predictions CSV (default: OUTPUT_DIR/SPLIT.predictions.csv)")

    p = add("eval", cmd_eval, "unsupervised per-component Pearson against gold")
    p.add_argument("--split", default="dev", help="split name (default: dev)")
    p.add_argument("--features", default=None, help="feature table (default: OUTPUT_DIR/SPLIT.features.csv)")

    for name, func, text in (("rank", cmd_rank, "rank feature families by enhanced dev Pearson"),
                             ("topk", cmd_topk, "dev Pearson of the top-k family unions"),
                             ("final", cmd_final, "test report from saved ranking and top-k curve"),
                             ("report", cmd_report, "rank, top-k and final report in one run")):
        p = add(name, func, text)
        p.add_argument("--train-split", dest="train_split", default="train", help="(default: train)")
        p.add_argument("--dev-split", dest="dev_split", default="dev", help="(default: dev)")
        if name in ("final", "report"):
            p.add_argument("--test-split", dest="test_split", default="test", help="(default: test)")
            p.add_argument("--k", type=int, default=None, help="families in the chosen model (default: best dev k)")
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s - %(levelname)s - %(message)s")
    try:
        return args.func(args)
    except MissingPathError as e:
        logger.error("%s", e)
        return EXIT_DATA
    except ConfigError as e:
        logger.error("config: %s", e)
        return EXIT_USAGE
    except (DataError, UnsupportedCapability) as e:
        logger.error("%s", e)
        return EXIT_DATA
    except OSError as e:
        logger.error("%s", e)
        return EXIT_DATA
    except UqkitError as e:
        logger.error("%s", e)
        return EXIT_INTERNAL
    except Exception:
        logger.debug("unexpected failure", exc_info=True)
        logger.error("internal error (rerun with --verbose for the traceback)")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
