# -*- coding: utf-8 -*-
import numpy as np
import pytest

from backend import MASK, FileBackend
from errors import DataError, UnsupportedCapability
from noiser import NoiseConfig, make_noised_inputs, mask_each_position, pe_noise

X = ("s1", "s2", "s3", "s4", "s5")


class TestNoiseConfig:
    @pytest.mark.parametrize("kw", [{"rounds": 0}, {"p_d": 1.5}, {"p_i": -0.1}, {"n_variants": 0}])
    def test_invalid(self, kw):
        with pytest.raises(DataError):
            NoiseConfig(**kw)


class TestMaskEachPosition:
    def test_one_mask_per_input(self):
        out = mask_each_position(X)
        assert len(out) == 5
        for t, masked in enumerate(out):
            assert masked[t] == MASK
            assert [tok for i, tok in enumerate(masked) if i != t] == [tok for i, tok in enumerate(X) if i != t]

    def test_empty(self):
        with pytest.raises(DataError):
            mask_each_position([])


class TestPeNoise:
    def test_zero_rates_are_identity(self):
        cfg = NoiseConfig(p_d=0.0, p_i=0.0)
        for j in range(4):
            assert pe_noise(X, cfg, j, "r1") == list(X)

    def test_deterministic(self):
        cfg = NoiseConfig()
        assert pe_noise(X, cfg, 1, "r1") == pe_noise(X, cfg, 1, "r1")

    def test_variants_differ(self):
        cfg = NoiseConfig(p_d=0.5, p_i=0.5)
        x = tuple(f"s{i}" for i in range(30))
        assert len({tuple(pe_noise(x, cfg, j, "r1")) for j in range(4)}) > 1

    def test_deletion_and_insertion_rates(self):
        cfg = NoiseConfig(rounds=1, p_d=0.15, p_i=0.15)
        x = tuple(f"s{i}" for i in range(20))
        kept = masks = slots = 0
        for j in range(10000):
            out = pe_noise(x, cfg, j, "r1")
            survivors = [t for t in out if t != MASK]
            kept += len(survivors)
            masks += len(out) - len(survivors)
            slots += len(survivors) + 1
        assert abs(1 - kept / (10000 * len(x)) - 0.15) < 0.01
        assert abs(masks / slots - 0.15) < 0.01

    def test_survivors_are_a_subsequence(self):
        rng = np.random.default_rng(9)
        for trial in range(1000):
            x = tuple(f"s{v}" for v in rng.integers(0, 6, size=int(rng.integers(1, 15))))
            cfg = NoiseConfig(rounds=int(rng.integers(1, 4)), p_d=float(rng.uniform(0, 0.6)),
                              p_i=float(rng.uniform(0, 0.6)))
            survivors = [t for t in pe_noise(x, cfg, trial % 4, f"r{trial}") if t != MASK]
            rest = iter(x)
            assert all(tok in rest for tok in survivors)

    def test_full_deletion(self):
        cfg = NoiseConfig(rounds=1, p_d=1.0, p_i=0.0)
        assert pe_noise(X, cfg, 0, "r1") == []


class TestMakeNoisedInputs:
    def test_simple_gives_one_input_per_position(self, synthetic):
        noised, preds = make_noised_inputs(X, NoiseConfig(), synthetic, "simple", record_id="r1")
        assert len(noised) == 5 and len(preds) == 5
        assert all(len(n) == 5 for n in noised)
        assert all(p.positions[0].forced_logprob is not None for p in preds)

    def test_noiseless_simple_restores_source(self, noiseless):
        noised, _ = make_noised_inputs(X, NoiseConfig(), noiseless, "simple", record_id="r1")
        assert noised == [list(X)] * 5

    def test_pe_variant_count(self, synthetic):
        cfg = NoiseConfig(n_variants=3)
        noised, preds = make_noised_inputs(X, cfg, synthetic, "pe", record_id="r1")
        assert len(noised) == 3
        assert all(MASK not in n for n in noised)
        assert all(p.positions[0].forced_logprob is None for p in preds)

    def test_pe_without_noise_skips_the_mlm(self, synthetic):
        cfg = NoiseConfig(p_d=0.0, p_i=0.0)
        noised, preds = make_noised_inputs(X, cfg, synthetic, "pe_y", y=("t1",), record_id="r1")
        assert noised == [list(X)] * 4
        assert preds == []

    def test_y_variant_needs_translation(self, synthetic):
        with pytest.raises(DataError, match="needs the machine translation"):
            make_noised_inputs(X, NoiseConfig(), synthetic, "simple_y", record_id="r1")

    def test_unknown_variant(self, synthetic):
        with pytest.raises(DataError, match="unknown noise variant"):
            make_noised_inputs(X, NoiseConfig(), synthetic, "shuffle")

    def test_needs_mlm(self):
        with pytest.raises(UnsupportedCapability):
            make_noised_inputs(X, NoiseConfig(), FileBackend(), "pe")

    def test_empty_source(self, synthetic):
        assert make_noised_inputs((), NoiseConfig(), synthetic, "pe") == ([], [])
