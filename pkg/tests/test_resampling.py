import numpy as np
import pytest

from src.smc.resampling import (
    RESAMPLERS,
    get_resampler,
    resample_multinomial,
    resample_stratified,
    resample_systematic,
)
from src.utils.errors import ConfigError, UnnormalizedWeights


class FixedUniform:
    """random() 总是返回同一个值的桩生成器"""

    def __init__(self, value):
        self.value = value

    def random(self, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)


class TestSystematic:
    def test_two_equal_weights(self):
        ancestors = resample_systematic(np.array([0.5, 0.5]), 4, FixedUniform(0.5))
        np.testing.assert_array_equal(ancestors, [0, 0, 1, 1])

    @pytest.mark.parametrize("u", [0.3, 0.5, 0.999])
    def test_uniform_weights_are_identity(self, u):
        ancestors = resample_systematic(np.full(5, 0.2), 5, FixedUniform(u))
        np.testing.assert_array_equal(ancestors, np.arange(5))

    def test_counts_within_one_of_expectation(self, rng):
        W = np.array([0.47, 0.23, 0.17, 0.13])
        for _ in range(100):
            counts = np.bincount(resample_systematic(W, 10, rng), minlength=4)
            assert np.all(np.abs(counts - 10 * W) < 1.0)


class TestDegenerateWeights:
    @pytest.mark.parametrize("name", sorted(RESAMPLERS))
    def test_point_mass(self, name, rng):
        ancestors = get_resampler(name)(np.array([1.0, 0.0, 0.0]), 6, rng)
        np.testing.assert_array_equal(ancestors, np.zeros(6, dtype=int))

    @pytest.mark.parametrize("name", sorted(RESAMPLERS))
    def test_sorted_and_in_range(self, name, rng):
        W = rng.dirichlet(np.ones(7))
        ancestors = get_resampler(name)(W, 20, rng)
        assert ancestors.shape == (20,)
        assert np.all(np.diff(ancestors) >= 0)
        assert ancestors.min() >= 0 and ancestors.max() < 7


class TestValidation:
    def test_unnormalized(self, rng):
        with pytest.raises(UnnormalizedWeights):
            resample_stratified(np.array([0.5, 0.6]), 4, rng)

    def test_negative(self, rng):
        with pytest.raises(UnnormalizedWeights):
            resample_multinomial(np.array([1.5, -0.5]), 4, rng)

    def test_unknown_scheme(self):
        with pytest.raises(ConfigError):
            get_resampler("residual")


class TestCountVariance:
    def test_ordering(self, rng):
        W = np.array([0.47, 0.23, 0.17, 0.13])
        variances = {}
        for name, resample in RESAMPLERS.items():
            counts = np.array([np.bincount(resample(W, 10, rng), minlength=4) for _ in range(4000)])
            variances[name] = float(np.sum(np.var(counts, axis=0, ddof=1)))
        assert variances["systematic"] < variances["stratified"] < variances["multinomial"]

    def test_multinomial_mean_counts(self, rng):
        W = np.array([0.47, 0.23, 0.17, 0.13])
        counts = np.array([np.bincount(resample_multinomial(W, 10, rng), minlength=4) for _ in range(4000)])
        se = np.sqrt(10 * W * (1 - W) / 4000)
        assert np.all(np.abs(counts.mean(axis=0) - 10 * W) <= 4 * se)
