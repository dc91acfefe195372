# -*- coding: utf-8 -*-
import json

import numpy as np
import pytest

from errors import DataError
from records import (MaskPosition, MaskPrediction, QERecord, Sample, SampleSet, read_feature_table,
                     read_jsonl_records, read_mask_predictions, read_mlqe_tsv, read_parallel_corpus,
                     read_sample_sets, write_feature_table, write_jsonl_records, write_mask_predictions,
                     write_parallel_corpus, write_sample_sets)


def make_record(rid="r1", **kw):
    base = dict(id=rid, src_tokens=("s1", "s2"), mt_tokens=("t1", "t2"), step_logprobs=(-0.1, -0.2),
                gold_score=0.5, embedding=(0.1, 0.2))
    base.update(kw)
    return QERecord(**base)


def random_record(rng, i):
    n, m = int(rng.integers(1, 12)), int(rng.integers(1, 12))
    return QERecord(
        id=f"rec-{i:03d}",
        src_tokens=tuple(f"s{v}" for v in rng.integers(0, 50, size=n)),
        mt_tokens=tuple(f"t{v}" for v in rng.integers(0, 50, size=m)),
        step_logprobs=tuple(float(-v) for v in rng.exponential(2.0, size=m)) if rng.random() < 0.8 else None,
        gold_score=float(rng.normal()) if rng.random() < 0.8 else None,
        embedding=tuple(float(v) for v in rng.normal(size=4)) if rng.random() < 0.8 else None,
    )


class TestQERecord:
    def test_logprob_length_must_match(self):
        with pytest.raises(DataError, match="2 tokens but 1 log-probs"):
            make_record(step_logprobs=(-0.1,))

    def test_positive_logprob_rejected(self):
        with pytest.raises(DataError, match="not a finite value <= 0"):
            make_record(step_logprobs=(-0.1, 0.2))

    def test_empty_id_rejected(self):
        with pytest.raises(DataError):
            make_record(rid="")

    def test_tokens_derived_from_text(self):
        rec = QERecord.from_dict({"id": "a", "src": "hello  world", "mt": "hallo welt"})
        assert rec.src_tokens == ("hello", "world")
        assert rec.mt_tokens == ("hallo", "welt")
        assert rec.step_logprobs is None and rec.gold_score is None

    def test_unknown_keys_preserved(self, tmp_path):
        path = tmp_path / "r.jsonl"
        path.write_text(json.dumps({"id": "a", "src": "x", "mt": "y", "lp": "en-de"}) + "\n", encoding="utf-8")
        rec = read_jsonl_records(str(path))[0]
        assert rec.extra == {"lp": "en-de"}
        write_jsonl_records([rec], str(tmp_path / "out.jsonl"))
        assert json.loads((tmp_path / "out.jsonl").read_text(encoding="utf-8"))["lp"] == "en-de"


class TestJsonl:
    def test_round_trip(self, tmp_path):
        recs = [make_record("r1"), make_record("r2", gold_score=None, embedding=None)]
        path = str(tmp_path / "r.jsonl")
        write_jsonl_records(recs, path)
        back = read_jsonl_records(path)
        assert [r.to_dict() for r in back] == [r.to_dict() for r in recs]

    def test_random_records_are_byte_stable(self, tmp_path):
        rng = np.random.default_rng(11)
        recs = [random_record(rng, i) for i in range(100)]
        first, second = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_jsonl_records(recs, str(first))
        back = read_jsonl_records(str(first))
        assert [r.to_dict() for r in back] == [r.to_dict() for r in recs]
        write_jsonl_records(back, str(second))
        assert first.read_bytes() == second.read_bytes()

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a", "src": "x", "mt": "y"}\n{oops\n', encoding="utf-8")
        with pytest.raises(DataError, match=r"bad\.jsonl:2"):
            read_jsonl_records(str(path))

    def test_duplicate_id(self, tmp_path):
        path = str(tmp_path / "dup.jsonl")
        write_jsonl_records([make_record("a")], path)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(make_record("a").to_dict()) + "\n")
        with pytest.raises(DataError, match="duplicate record id"):
            read_jsonl_records(path)

    def test_sample_sets(self, tmp_path):
        s = SampleSet("r1", "noise_pe", (Sample(("t1",), (-0.3,), ("s1",)), Sample((), ())))
        path = str(tmp_path / "s.jsonl")
        write_sample_sets([s], path)
        assert read_sample_sets(path) == [s]

    def test_unknown_sample_kind(self):
        with pytest.raises(DataError, match="unknown kind"):
            SampleSet("r1", "beam", ())

    def test_mask_predictions(self, tmp_path):
        preds = [MaskPrediction("r1", "simple", (MaskPosition(0, "s3", -0.1, -0.1),)),
                 MaskPrediction("r1", "pe", (MaskPosition(2, "s4", -2.0),))]
        path = str(tmp_path / "m.jsonl")
        write_mask_predictions(preds, path)
        assert read_mask_predictions(path) == preds


class TestMaskPrediction:
    def test_forced_only_for_simple(self):
        with pytest.raises(DataError, match="exactly for simple variants"):
            MaskPrediction("r1", "pe", (MaskPosition(0, "a", -0.1, -0.2),))
        with pytest.raises(DataError, match="exactly for simple variants"):
            MaskPrediction("r1", "simple_y", (MaskPosition(0, "a", -0.1),))

    def test_logprob_sign(self):
        with pytest.raises(DataError):
            MaskPrediction("r1", "pe", (MaskPosition(0, "a", 0.5),))


class TestMlqe:
    def test_reads_default_columns(self, tmp_path):
        path = tmp_path / "mlqe.tsv"
        path.write_text("index\toriginal\ttranslation\tscores\tmean\tz_scores\tz_mean\n"
                        "0\tHello world\tHallo Welt\t[1]\t70\t[0.1]\t0.25\n"
                        "1\tA \"quoted\" text\tEin Text\t[1]\t50\t[0.1]\t-1.5\n", encoding="utf-8")
        recs = read_mlqe_tsv(str(path))
        assert [r.id for r in recs] == ["0", "1"]
        assert recs[0].src_tokens == ("Hello", "world")
        assert recs[1].src_tokens == ("A", '"quoted"', "text")
        assert recs[1].gold_score == -1.5

    def test_configurable_columns(self, tmp_path):
        path = tmp_path / "x.tsv"
        path.write_text("sid\tsrc\tmt\tda\nA\ta b\tc d\t3\n", encoding="utf-8")
        recs = read_mlqe_tsv(str(path), {"id": "sid", "src": "src", "mt": "mt", "score": "da"})
        assert recs[0].id == "A" and recs[0].gold_score == 3.0

    def test_missing_column(self, tmp_path):
        path = tmp_path / "x.tsv"
        path.write_text("index\toriginal\ttranslation\n0\ta\tb\n", encoding="utf-8")
        with pytest.raises(DataError, match="z_mean"):
            read_mlqe_tsv(str(path))

    def test_non_numeric_score(self, tmp_path):
        path = tmp_path / "x.tsv"
        path.write_text("index\toriginal\ttranslation\tz_mean\n0\ta\tb\thigh\n", encoding="utf-8")
        with pytest.raises(DataError, match="row 1"):
            read_mlqe_tsv(str(path))


class TestParallelCorpus:
    def test_round_trip(self, tmp_path, fixture_corpus):
        path = str(tmp_path / "c.tsv")
        write_parallel_corpus(fixture_corpus, path)
        assert read_parallel_corpus(path) == fixture_corpus

    def test_bad_line(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("a b\tc d\nno tab here\n", encoding="utf-8")
        with pytest.raises(DataError, match="c.tsv:2"):
            read_parallel_corpus(str(path))


class TestFeatureTable:
    def test_read_back(self, tmp_path):
        rows = [("r1", {"I.Psteps.E": -0.123456789123, "I.Psteps.Std": 0.0}),
                ("r2", {"I.Psteps.E": -1.5, "I.Psteps.Std": 0.25})]
        path = str(tmp_path / "f.csv")
        write_feature_table(rows, path)
        df = read_feature_table(path)
        assert list(df.index) == ["r1", "r2"]
        assert list(df.columns) == ["I.Psteps.E", "I.Psteps.Std"]
        assert df.loc["r1", "I.Psteps.E"] == -0.123456789123

    def test_random_values_read_back_exactly(self, tmp_path):
        rng = np.random.default_rng(12)
        values = rng.normal(scale=1e3, size=(50, 3)) * rng.exponential(size=(50, 1))
        rows = [(f"r{i}", dict(zip(("a", "b", "c"), map(float, v)))) for i, v in enumerate(values)]
        path = str(tmp_path / "f.csv")
        write_feature_table(rows, path)
        np.testing.assert_allclose(read_feature_table(path).to_numpy(), values, rtol=0, atol=1e-9)

    def test_first_column_is_id(self, tmp_path):
        path = str(tmp_path / "f.csv")
        write_feature_table([("007", {"a": 1.0})], path)
        with open(path, encoding="utf-8") as f:
            assert f.readline().strip() == "id,a"
        assert list(read_feature_table(path).index) == ["007"]

    def test_inconsistent_features(self, tmp_path):
        rows = [("r1", {"a": 1.0, "b": 2.0}), ("r2", {"a": 1.0, "c": 2.0})]
        with pytest.raises(DataError, match=r"\['b', 'c'\]"):
            write_feature_table(rows, str(tmp_path / "f.csv"))
