import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uhnsw.metrics import (
    MetricParam,
    Tier,
    lp_distance,
    lp_distance_pth_power,
    reference_lp_distance,
    tier_of,
    time_distance_kernel,
)

SPECIAL_P = (0.5, 1.0, 1.5, 2.0)


def scalar_reference(x, y, p):
    # plain python, float64, written out longhand
    return sum(abs(float(a) - float(b)) ** p for a, b in zip(x, y)) ** (1.0 / p)


class TestExamples:
    @pytest.mark.parametrize("p", [0.2, 0.5, 0.7, 1.0, 1.5, 2.0])
    def test_identity_pair_is_zero(self, p):
        assert lp_distance([0, 0], [0, 0], p) == 0.0

    def test_unit_diagonal(self):
        assert lp_distance([0, 0], [1, 1], 2) == pytest.approx(math.sqrt(2), rel=1e-7)
        assert lp_distance([0, 0], [1, 1], 0.5) == pytest.approx(4.0, rel=1e-7)
        assert lp_distance([0, 0], [1, 1], 1) == pytest.approx(2.0, rel=1e-7)

    def test_pth_power(self):
        assert lp_distance_pth_power([0, 0], [1, 1], 0.5) == pytest.approx(2.0)
        assert lp_distance_pth_power([0, 0], [3, 4], 2) == pytest.approx(25.0)

    def test_random_d128_p07_against_scalar_loop(self, rng):
        x = rng.standard_normal(128).astype(np.float32)
        y = rng.standard_normal(128).astype(np.float32)
        assert lp_distance(x, y, 0.7) == pytest.approx(scalar_reference(x, y, 0.7), rel=1e-5)

    def test_pth_power_argmin_matches_distance_argmin(self, rng):
        q = rng.standard_normal(32).astype(np.float32)
        pts = rng.standard_normal((100, 32)).astype(np.float32)
        by_pow = [lp_distance_pth_power(q, x, 1.3) for x in pts]
        by_dist = [lp_distance(q, x, 1.3) for x in pts]
        assert int(np.argmin(by_pow)) == int(np.argmin(by_dist))


class TestValidation:
    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            lp_distance([0, 0], [0, 0, 0], 1)

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite(self, bad):
        with pytest.raises(ValueError, match="finite"):
            lp_distance([0, bad], [0, 0], 1)

    @pytest.mark.parametrize("p", [0.0, -1.0, 2.0001, 3.0, float("nan"), float("inf")])
    def test_p_out_of_range(self, p):
        with pytest.raises(ValueError):
            MetricParam(p)
        with pytest.raises(ValueError):
            lp_distance([0.0], [1.0], p)

    def test_empty_vectors(self):
        with pytest.raises(ValueError):
            lp_distance([], [], 1)


class TestTiers:
    @pytest.mark.parametrize("p,tier", [
        (1.0, Tier.FAST), (2.0, Tier.FAST),
        (0.5, Tier.SQRT_FAST), (1.5, Tier.SQRT_FAST),
        (0.7, Tier.GENERAL), (1.3, Tier.GENERAL), (0.2, Tier.GENERAL),
        (1.0000001, Tier.GENERAL),
    ])
    def test_classification(self, p, tier):
        assert tier_of(p) is tier
        assert MetricParam(p).tier is tier

    @pytest.mark.parametrize("d", [4, 128, 960])
    @pytest.mark.parametrize("p", SPECIAL_P)
    def test_fast_paths_match_general_path(self, rng, d, p):
        for _ in range(200):
            x = rng.standard_normal(d).astype(np.float32)
            y = rng.standard_normal(d).astype(np.float32)
            fast = lp_distance(x, y, p)
            slow = lp_distance(x, y, p, force_general=True)
            assert fast == pytest.approx(slow, rel=1e-5)

    @pytest.mark.parametrize("d", [1, 7, 128, 4096])
    @pytest.mark.parametrize("p", [0.3, 0.5, 0.7, 1.0, 1.3, 1.5, 2.0])
    def test_oracle_agreement(self, rng, d, p):
        for _ in range(20):
            x = rng.standard_normal(d).astype(np.float32)
            y = rng.standard_normal(d).astype(np.float32)
            assert lp_distance(x, y, p) == pytest.approx(reference_lp_distance(x, y, p), rel=1e-4)

    def test_reference_matches_longhand_loop(self, rng):
        x = rng.standard_normal(50)
        y = rng.standard_normal(50)
        for p in (0.5, 0.9, 1.7):
            assert reference_lp_distance(x, y, p) == pytest.approx(
                scalar_reference(x.astype(np.float32), y.astype(np.float32), p), rel=1e-12)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False, width=32)
ps = st.sampled_from([0.3, 0.5, 0.7, 1.0, 1.3, 1.5, 1.8, 2.0])


@st.composite
def vector_pair(draw):
    d = draw(st.integers(1, 40))
    x = draw(arrays(np.float32, d, elements=finite))
    y = draw(arrays(np.float32, d, elements=finite))
    return x, y


class TestProperties:
    @given(vector_pair(), ps)
    def test_symmetry_is_bit_exact(self, pair, p):
        x, y = pair
        assert lp_distance(x, y, p) == lp_distance(y, x, p)

    @given(vector_pair(), ps)
    def test_identity(self, pair, p):
        x, _ = pair
        assert lp_distance(x, x, p) == 0.0

    @given(vector_pair(), ps)
    def test_non_negative(self, pair, p):
        x, y = pair
        assert lp_distance(x, y, p) >= 0.0

    @settings(max_examples=50)
    @given(st.integers(2, 60), st.integers(1, 16), ps, st.integers(0, 2**32 - 1))
    def test_rank_surrogate(self, n, d, p, seed):
        rng = np.random.default_rng(seed)
        # small integer grid so exact ties occur
        q = rng.integers(-3, 4, d).astype(np.float32)
        pts = rng.integers(-3, 4, (n, d)).astype(np.float32)
        by_pow = [lp_distance_pth_power(q, x, p) for x in pts]
        by_dist = [lp_distance(q, x, p) for x in pts]
        assert np.argsort(by_pow, kind="stable").tolist() == \
            np.argsort(by_dist, kind="stable").tolist()

    @settings(max_examples=100)
    @given(st.integers(1, 32), st.sampled_from([1.0, 1.2, 1.5, 1.8, 2.0]),
           st.integers(0, 2**32 - 1))
    def test_triangle_inequality_for_p_at_least_one(self, d, p, seed):
        rng = np.random.default_rng(seed)
        x, y, z = rng.standard_normal((3, d)).astype(np.float32)
        lhs = lp_distance(x, z, p)
        rhs = lp_distance(x, y, p) + lp_distance(y, z, p)
        assert lhs <= rhs * (1 + 1e-5) + 1e-6


class TestTiming:
    def test_d1_returns_positive(self):
        for p in (0.5, 1.0, 1.3):
            assert time_distance_kernel(1, p, reps=1000) > 0

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            time_distance_kernel(0, 1.0, 10)
        with pytest.raises(ValueError):
            time_distance_kernel(8, 1.0, 0)
        with pytest.raises(ValueError):
            time_distance_kernel(8, 2.5, 10)

    def test_general_tier_is_slowest_at_d960(self):
        fast = time_distance_kernel(960, 2.0, reps=20_000)
        sqrt_fast = time_distance_kernel(960, 0.5, reps=20_000)
        general = time_distance_kernel(960, 1.3, reps=20_000)
        assert general >= 5 * fast
        assert sqrt_fast < general
