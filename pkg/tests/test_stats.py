# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest

from errors import DataError
from stats import abs_pearson, pearson, triple_stat


def two_pass_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


class TestTripleStat:
    def test_three_values(self):
        st = triple_stat([-1.0, -2.0, -3.0])
        np.testing.assert_allclose(st.as_tuple(), (-2.0, math.sqrt(2 / 3), -2.0 / math.sqrt(2 / 3)), rtol=1e-12)

    def test_single_value_guard(self):
        st = triple_stat([-0.7])
        assert st.as_tuple() == (-0.7, 0.0, 0.0)
        assert st.guarded

    def test_constant(self):
        st = triple_stat([0.0, 0.0, 0.0])
        assert st.as_tuple() == (0.0, 0.0, 0.0)

    def test_empty(self):
        with pytest.raises(DataError, match="empty statistic input"):
            triple_stat([])

    def test_scale_covariance(self):
        xs = [-0.3, -1.2, -0.05, -2.5]
        a = 3.5
        base, scaled = triple_stat(xs), triple_stat([a * v for v in xs])
        np.testing.assert_allclose(scaled.mean, a * base.mean, rtol=1e-12)
        np.testing.assert_allclose(scaled.std, a * base.std, rtol=1e-12)
        np.testing.assert_allclose(scaled.combo, base.combo, rtol=1e-12)


    def test_permutation_invariant(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            xs = rng.normal(size=int(rng.integers(2, 20)))
            np.testing.assert_allclose(triple_stat(rng.permutation(xs)).as_tuple(), triple_stat(xs).as_tuple(),
                                       rtol=1e-12, atol=1e-12)

    def test_affine_shift(self):
        xs = [-0.3, -1.2, -0.05, -2.5]
        base, moved = triple_stat(xs), triple_stat([-2.0 * v + 4.0 for v in xs])
        np.testing.assert_allclose(moved.mean, -2.0 * base.mean + 4.0, rtol=1e-12)
        np.testing.assert_allclose(moved.std, 2.0 * base.std, rtol=1e-12)


class TestPearson:
    def test_positive_affine_invariance(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            x, y = rng.normal(size=25), rng.normal(size=25)
            a, b = rng.uniform(0.1, 10.0, size=2)
            c, d = rng.normal(size=2)
            r = pearson(x, y)
            np.testing.assert_allclose(pearson(a * x + c, y), r, atol=1e-12)
            np.testing.assert_allclose(pearson(x, b * y + d), r, atol=1e-12)

    def test_perfect(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_negative_abs(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
        assert abs_pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(1.0)

    def test_zero_variance(self):
        with pytest.raises(DataError, match="degenerate correlation input"):
            pearson([1, 1, 1], [1, 2, 3])

    def test_constant_float_column_is_degenerate(self):
        with pytest.raises(DataError, match="degenerate"):
            pearson([0.1, 0.1, 0.1, 0.1, 0.1], [1, 2, 3, 4, 5])

    def test_length_mismatch(self):
        with pytest.raises(DataError, match="length mismatch"):
            pearson([1, 2], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(DataError):
            pearson([1.0], [2.0])

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = int(rng.integers(3, 30))
            x, y = rng.normal(size=n), rng.normal(size=n)
            np.testing.assert_allclose(pearson(x, y), two_pass_pearson(list(x), list(y)), atol=1e-10)

    def test_bounded(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=50)
        assert -1.0 <= pearson(x, 2 * x + 1e-15) <= 1.0
