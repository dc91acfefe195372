# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from backend import FileBackend, SyntheticBackend, file_backend_load
from errors import DataError, InsufficientSamples
from features import (FAMILIES, ExtractionContext, FeatureGroupSelection, FeatureVector, catalog, extract,
                      extract_many, family_of, group1, group2, group4, group5, mc_samples_for,
                      noised_outputs_for)
from noiser import NoiseConfig
from records import (MaskPosition, MaskPrediction, QERecord, Sample, SampleSet, read_jsonl_records,
                     write_jsonl_records, write_mask_predictions, write_sample_sets)

SELF_SIM_3 = 1 - 0.5 / 27


def record(**kw):
    base = dict(id="r1", src_tokens=("a", "b", "c"), mt_tokens=("A", "B", "C"), step_logprobs=(-1.0, -2.0, -3.0))
    base.update(kw)
    return QERecord(**base)


class TestCatalog:
    def test_sizes(self):
        names = catalog()
        assert len(names) == 81
        assert len(set(names)) == 81
        assert len(FAMILIES) == 24

    def test_first_and_last(self):
        names = catalog()
        assert names[:3] == ["I.Psteps.E", "I.Psteps.Std", "I.Psteps.Combo"]
        assert names[-1] == "V.MLM-FPmask-y.Combo"

    def test_every_name_maps_to_its_family(self):
        for fam, names in FAMILIES.items():
            assert {family_of(n) for n in names} == {fam}

    def test_custom_orders_stay_in_family(self):
        assert family_of("III.DS-gram.7-gram") == "III.DS-gram"
        assert family_of("III.DS-neighbors-y.K100") == "III.DS-neighbors"
        assert len(catalog(ngrams=(1, 2), neighbors=(1,))) == 81 - 3 - 8


class TestSelection:
    def test_group(self):
        sel = FeatureGroupSelection.parse("I")
        assert sel.families == ("I.Psteps",)
        assert sel.groups == ["I"]

    def test_all(self):
        assert FeatureGroupSelection.parse("all").families == tuple(FAMILIES)

    def test_canonical_order(self):
        sel = FeatureGroupSelection.parse("V.MLM-FPmask,I,III.DS-gram")
        assert sel.families == ("I.Psteps", "III.DS-gram", "V.MLM-FPmask")
        assert sel.groups == ["I", "III", "V"]

    def test_unknown(self):
        with pytest.raises(DataError, match="unknown feature group"):
            FeatureGroupSelection.parse("VI")

    def test_empty(self):
        with pytest.raises(DataError):
            FeatureGroupSelection.parse(" , ")


class TestFeatureVector:
    def test_rejects_nan(self):
        with pytest.raises(DataError, match="not finite"):
            FeatureVector([("a", float("nan"))])

    def test_keeps_order(self):
        fv = FeatureVector([("b", 1.0), ("a", 2.0)])
        assert list(fv) == ["b", "a"]


class TestGroup1:
    def test_statistics(self):
        fv = group1(record())
        std = math.sqrt(2 / 3)
        np.testing.assert_allclose([fv["I.Psteps.E"], fv["I.Psteps.Std"], fv["I.Psteps.Combo"]],
                                   [-2.0, std, -2.0 / std], rtol=1e-12)
        assert not fv.degeneracy_flags

    def test_needs_logprobs(self):
        with pytest.raises(DataError, match="group I requires decoder log-probs"):
            group1(record(step_logprobs=None))

    def test_single_token_guard(self):
        fv = group1(record(src_tokens=("a",), mt_tokens=("A",), step_logprobs=(-0.4,)))
        assert fv["I.Psteps.Combo"] == 0.0
        assert fv.degeneracy_flags == {"I.Psteps.Combo"}


class TestGroup2:
    def test_identical_samples(self):
        y = ("A", "B", "C")
        ss = SampleSet("r1", "mc_dropout", (Sample(y, (-0.5, -0.5, -0.5)), Sample(y, (-0.7, -0.7, -0.7))))
        fv = group2(record(), ss)
        np.testing.assert_allclose(fv["II.MC-Sim.E"], SELF_SIM_3, rtol=1e-12)
        assert fv["II.MC-Sim.Std"] == 0.0
        np.testing.assert_allclose(fv["II.MC-Sim-Inner.E"], SELF_SIM_3, rtol=1e-12)
        np.testing.assert_allclose([fv["II.MC-Psteps.E"], fv["II.MC-Psteps.Std"], fv["II.MC-Psteps.Combo"]],
                                   [-0.6, 0.1, -6.0], rtol=1e-9)

    def test_needs_two_samples(self):
        ss = SampleSet("r1", "mc_dropout", (Sample(("A",), (-0.1,)),))
        with pytest.raises(InsufficientSamples):
            group2(record(), ss)


class TestGroup4:
    def test_missing_variant_is_zero_and_flagged(self):
        y = ("A", "B", "C")
        pe = SampleSet("r1", "noise_pe", (Sample(y, (-0.2, -0.2, -0.2), ("a", "b", "c")),
                                          Sample(("A", "B"), (-0.4, -0.4), ("a", "b"))))
        fv = group4(record(), {"pe": pe})
        assert len(fv) == 36
        assert fv["IV.Noise-Sim-Simple.E"] == 0.0
        assert "IV.Noise-Sim-Simple.E" in fv.degeneracy_flags
        assert fv["IV.Noise-Sim-PE.E"] > 0.0
        np.testing.assert_allclose(fv["IV.Noise-Psteps-PE.E"], -0.3, rtol=1e-12)
        assert list(fv) == [n for f, names in FAMILIES.items() if f.startswith("IV.") for n in names]


class TestGroup5:
    def test_pred_and_forced(self):
        lp = [math.log(0.9), math.log(0.9), math.log(0.8)]
        simple = [MaskPrediction("r1", "simple", (MaskPosition(i, "a", v, -0.05),)) for i, v in enumerate(lp)]
        pe = [MaskPrediction("r1", "pe", (MaskPosition(0, "a", lp[0]), MaskPosition(2, "b", lp[2])))]
        fv = group5(record(), {"simple": simple, "pe": pe})
        np.testing.assert_allclose(fv["V.MLM-Pmask-Simple.E"], np.mean(lp), rtol=1e-12)
        np.testing.assert_allclose(fv["V.MLM-Pmask-Simple.Std"], np.std(lp), rtol=1e-12)
        np.testing.assert_allclose(fv["V.MLM-FPmask.E"], -0.05, rtol=1e-12)
        np.testing.assert_allclose(fv["V.MLM-Pmask-PE.E"], (lp[0] + lp[2]) / 2, rtol=1e-12)
        assert fv["V.MLM-Pmask-Simple-y.E"] == 0.0
        assert "V.MLM-FPmask-y.Std" in fv.degeneracy_flags
        assert len(fv) == 18


class TestExtract:
    def ctx(self, backend, index=None):
        return ExtractionContext(backend=backend, index=index, noise=NoiseConfig(n_variants=2), mc_samples=4)

    def test_full_catalog(self, synthetic, fixture_index):
        rec = synthetic.make_record("r1")
        fv = extract(rec, self.ctx(synthetic, fixture_index), FeatureGroupSelection.parse("all"))
        assert list(fv) == catalog()

    def test_deterministic(self, synthetic, fixture_index):
        rec = synthetic.make_record("r2")
        sel = FeatureGroupSelection.parse("all")
        assert extract(rec, self.ctx(synthetic, fixture_index), sel) == \
            extract(rec, self.ctx(synthetic, fixture_index), sel)

    def test_group_one_only(self, synthetic):
        rec = synthetic.make_record("r1")
        fv = extract(rec, self.ctx(synthetic), FeatureGroupSelection.parse("I"))
        assert list(fv) == ["I.Psteps.E", "I.Psteps.Std", "I.Psteps.Combo"]

    def test_single_family_within_group(self, synthetic):
        rec = synthetic.make_record("r1")
        fv = extract(rec, self.ctx(synthetic), FeatureGroupSelection.parse("V.MLM-FPmask"))
        assert list(fv) == ["V.MLM-FPmask.E", "V.MLM-FPmask.Std", "V.MLM-FPmask.Combo"]

    def test_missing_index_names_group(self, synthetic):
        with pytest.raises(DataError, match="group III, record r1"):
            extract(synthetic.make_record("r1"), self.ctx(synthetic), FeatureGroupSelection.parse("III"))

    def test_missing_logprobs_names_group(self):
        with pytest.raises(DataError, match="group I, record r1"):
            extract(record(step_logprobs=None), self.ctx(None), FeatureGroupSelection.parse("I"))

    def test_file_backend_misses_record(self):
        backend = FileBackend([record()])
        with pytest.raises(DataError, match="not covered by file backend"):
            extract(record(), self.ctx(backend), FeatureGroupSelection.parse("II"))

    def test_file_backend_replays_stored_outputs(self):
        y = ("A", "B", "C")
        mc = SampleSet("r1", "mc_dropout", (Sample(y, (-0.5, -0.5, -0.5)), Sample(y, (-0.7, -0.7, -0.7))))
        backend = FileBackend([record()], [mc])
        fv = extract(record(), self.ctx(backend), FeatureGroupSelection.parse("II"))
        np.testing.assert_allclose(fv["II.MC-Psteps.Combo"], -6.0, rtol=1e-9)

    def test_extract_many_keeps_order(self, synthetic):
        recs = [synthetic.make_record(f"r{i}") for i in range(3)]
        rows = extract_many(recs, self.ctx(synthetic), FeatureGroupSelection.parse("I"))
        assert [rid for rid, _ in rows] == ["r0", "r1", "r2"]


class TestDifficultySignal:
    def test_psteps_drops_with_difficulty(self, world):
        diffs = {f"e{i}": 0.05 for i in range(30)}
        diffs.update({f"h{i}": 0.45 for i in range(30)})
        backend = SyntheticBackend(world, difficulties=diffs)
        ctx = ExtractionContext(backend=backend, mc_samples=4)
        sel = FeatureGroupSelection.parse("I,II.MC-Sim")

        def mean_of(prefix, name):
            return np.mean([extract(backend.make_record(f"{prefix}{i}"), ctx, sel)[name] for i in range(30)])
        assert mean_of("e", "I.Psteps.E") > mean_of("h", "I.Psteps.E")
        assert mean_of("e", "II.MC-Sim.E") > mean_of("h", "II.MC-Sim.E")


class TestDegenerateNoise:
    def test_all_deleted_pe_inputs(self):
        empty = SampleSet("r1", "noise_pe", (Sample((), None, ()), Sample((), None, ())))
        fv = group4(record(), {"pe": empty})
        assert fv["IV.Noise-Sim-PE.E"] == 0.0
        assert fv["IV.Noise-Sim-Inner-PE.E"] == 0.0
        assert fv["IV.Noise-Psteps-PE.E"] == 0.0
        assert "IV.Noise-Psteps-PE.E" in fv.degeneracy_flags


class TestStoredOutputs:
    def test_file_backend_replays_synthetic_features(self, synthetic, tmp_path):
        ctx = ExtractionContext(backend=synthetic, noise=NoiseConfig(n_variants=2), mc_samples=4)
        recs = [synthetic.make_record(f"r{i}") for i in range(6)]
        sets, masks = [], []
        for rec in recs:
            sets.append(mc_samples_for(rec, ctx))
            noised, preds = noised_outputs_for(rec, ctx)
            sets.extend(s for s in noised.values() if s is not None)
            for variant_preds in preds.values():
                masks.extend(variant_preds)
        paths = [str(tmp_path / name) for name in ("r.jsonl", "s.jsonl", "m.jsonl")]
        write_jsonl_records(recs, paths[0])
        write_sample_sets(sets, paths[1])
        write_mask_predictions(masks, paths[2])

        stored = ExtractionContext(backend=file_backend_load(*paths), mc_samples=4)
        sel = FeatureGroupSelection.parse("I,II,IV,V")
        for rec, back in zip(recs, read_jsonl_records(paths[0])):
            assert extract(back, stored, sel) == extract(rec, ctx, sel)

    @pytest.mark.parametrize("group, what", [("IV", "noised translations"), ("V", "mask predictions")])
    def test_missing_noised_outputs_name_the_group(self, group, what):
        ctx = ExtractionContext(backend=FileBackend([record()]))
        with pytest.raises(DataError, match=f"group {group}, record r1: .*{what}"):
            extract(record(), ctx, FeatureGroupSelection.parse(group))


@pytest.mark.slow
class TestDifficultyMonotonicity:
    def test_means_do_not_increase_with_difficulty(self, world):
        levels = (0.05, 0.25, 0.45)
        ids = {lvl: [f"m{lvl}-{i}" for i in range(500)] for lvl in levels}
        backend = SyntheticBackend(world, difficulties={rid: lvl for lvl in levels for rid in ids[lvl]})
        ctx = ExtractionContext(backend=backend, noise=NoiseConfig(n_variants=2), mc_samples=4)
        sel = FeatureGroupSelection.parse("I,II.MC-Sim,IV.Noise-Sim-Simple,IV.Noise-Sim-PE")
        names = ("I.Psteps.E", "II.MC-Sim.E", "IV.Noise-Sim-Simple.E", "IV.Noise-Sim-PE.E")
        means = {}
        for lvl in levels:
            rows = [extract(backend.make_record(rid), ctx, sel) for rid in ids[lvl]]
            means[lvl] = {n: np.mean([fv[n] for fv in rows]) for n in names}
        for n in names:
            assert means[0.05][n] >= means[0.25][n] >= means[0.45][n], n
