import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachecast.errors import ValidationError
from cachecast.rates import (
    CacheAllocation,
    PopularityProfile,
    SystemConfig,
    default_config,
    joint_rate,
    joint_time,
    mutual_info,
    noise_power_watts,
    rate_report,
    separate_rate,
    separate_time,
)


class TestSystemConfig:
    def test_defaults_noise_power(self):
        cfg = default_config()
        # -150 dBm/Hz over 20 MHz -> about 2e-11 W
        assert cfg.sigma2 == pytest.approx(2.0e-11, rel=0.02)

    def test_noise_override(self):
        cfg = default_config(noise_dbm_per_hz=-140.0)
        assert cfg.sigma2 == pytest.approx(noise_power_watts(-140.0, 2.0e7))

    def test_invalid_budget(self):
        with pytest.raises(ValidationError):
            SystemConfig(total_cache=1e9)

    def test_invalid_power(self):
        with pytest.raises(ValidationError):
            default_config(power=0.0)


class TestCacheAllocation:
    def test_vector_promoted_to_matrix(self):
        alloc = CacheAllocation(np.array([10.0, 20.0]), file_size=100.0)
        assert alloc.sizes.shape == (2, 1)
        assert alloc.fractions[1, 0] == pytest.approx(0.2)

    def test_rejects_oversized_entry(self):
        with pytest.raises(ValidationError):
            CacheAllocation(np.array([150.0]), file_size=100.0)

    def test_budget_check(self):
        alloc = CacheAllocation(np.array([60.0, 60.0]), file_size=100.0)
        with pytest.raises(ValidationError):
            alloc.validate_budget(100.0)


class TestPopularity:
    def test_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            PopularityProfile(np.array([0.5, 0.6]))

    def test_valid(self):
        p = PopularityProfile(np.array([0.7, 0.3]))
        assert len(p) == 2


class TestMutualInfo:
    def test_unit_snr(self):
        # tr(H W)/sigma2 == 1 -> log2(2) == 1
        h = np.array([1.0 + 0j])
        w = np.array([[2.0 + 0j]])
        assert mutual_info(h, w, sigma2=2.0) == pytest.approx(1.0)

    def test_zero_signal(self):
        h = np.array([1.0 + 0j, 0.5j])
        assert mutual_info(h, np.zeros((2, 2)), sigma2=1.0) == pytest.approx(0.0)

    def test_snr_three(self):
        h = np.array([1.0 + 0j])
        w = np.array([[3.0 + 0j]])
        assert mutual_info(h, w, sigma2=1.0) == pytest.approx(2.0)

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValidationError):
            mutual_info(np.array([1.0 + 0j]), np.eye(1), sigma2=0.0)


class TestTimes:
    def test_fully_cached(self):
        assert separate_time([1.0, 2.0], [100.0, 100.0], 100.0) == 0.0
        assert joint_time([1.0, 2.0], [100.0, 100.0], 100.0) == 0.0

    def test_separate_hand_example(self):
        # F=100, C=(50,0), I=(1,2): max residual 100 over min rate 1
        assert separate_time([1.0, 2.0], [50.0, 0.0], 100.0) == pytest.approx(100.0)

    def test_separate_bottleneck(self):
        t = separate_time([1.0, 2.0], [30.0, 30.0], 100.0)
        assert t == pytest.approx(70.0 / 1.0)

    def test_joint_hand_example(self):
        # max(50/1, 100/2) = 50
        assert joint_time([1.0, 2.0], [50.0, 0.0], 100.0) == pytest.approx(50.0)

    def test_equal_cache_collapses_to_separate(self):
        info = [1.3, 2.7, 0.9]
        cache = [40.0, 40.0, 40.0]
        assert joint_time(info, cache, 100.0) == pytest.approx(
            separate_time(info, cache, 100.0)
        )

    def test_zero_rate_uncached_is_infinite(self):
        assert math.isinf(separate_time([0.0, 1.0], [0.0, 0.0], 100.0))
        assert math.isinf(joint_time([0.0, 1.0], [0.0, 0.0], 100.0))

    def test_zero_rate_fully_cached_bs_ignored(self):
        # 0/0 convention: the dead BS is fully cached and needs nothing
        assert joint_time([0.0, 2.0], [100.0, 0.0], 100.0) == pytest.approx(50.0)

    def test_rate_time_product(self):
        info = [1.1, 2.2]
        cache = [25.0, 10.0]
        d = joint_rate(info, cache, 100.0)
        t = joint_time(info, cache, 100.0)
        assert d * t == pytest.approx(100.0, rel=1e-12)

    def test_report_invariants(self):
        rep = rate_report([1.0, 2.0], [50.0, 0.0], 100.0)
        assert rep.joint_rate >= rep.separate_rate - 1e-12
        assert rep.joint_time <= rep.separate_time + 1e-12


@st.composite
def rate_instances(draw):
    L = draw(st.integers(1, 6))
    f = draw(st.floats(1.0, 1000.0))
    info = [draw(st.floats(0.01, 50.0)) for _ in range(L)]
    cache = [draw(st.floats(0.0, 1.0)) * f for _ in range(L)]
    return np.array(info), np.array(cache), f


class TestDominance:
    @settings(max_examples=200, deadline=None)
    @given(rate_instances())
    def test_joint_dominates_separate(self, inst):
        info, cache, f = inst
        assert joint_time(info, cache, f) <= separate_time(info, cache, f) + 1e-12
        assert joint_rate(info, cache, f) >= separate_rate(info, cache, f) - 1e-12

    @settings(max_examples=100, deadline=None)
    @given(rate_instances())
    def test_equality_when_rates_equal(self, inst):
        info, cache, f = inst
        info = np.full_like(info, info[0])
        tj, ts = joint_time(info, cache, f), separate_time(info, cache, f)
        assert tj == pytest.approx(ts, rel=1e-12, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(rate_instances(), st.integers(0, 5), st.floats(0.0, 1.0))
    def test_monotone_in_cache(self, inst, which, bump):
        info, cache, f = inst
        l = which % len(cache)
        before = joint_time(info, cache, f)
        cache2 = cache.copy()
        cache2[l] = min(f, cache2[l] + bump * (f - cache2[l]))
        after = joint_time(info, cache2, f)
        assert after <= before + 1e-9 * max(1.0, before if math.isfinite(before) else 1.0)

    @settings(max_examples=100, deadline=None)
    @given(rate_instances())
    def test_scaling(self, inst):
        info, cache, f = inst
        t1 = joint_time(info, cache, f)
        d1 = joint_rate(info, cache, f)
        t2 = joint_time(info, 2.0 * cache, 2.0 * f)
        d2 = joint_rate(info, 2.0 * cache, 2.0 * f)
        if math.isfinite(t1) and t1 > 0:
            assert t2 == pytest.approx(2.0 * t1, rel=1e-12)
            assert d2 == pytest.approx(d1, rel=1e-12)
