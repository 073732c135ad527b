import numpy as np
import pytest

from src.models.linear_gaussian_ssm import kalman_filter
from src.smc.proposals import BootstrapProposal
from src.smc.replicates import FilterSpec, replicate_filters, summarize
from src.utils.errors import ConfigError


@pytest.fixture
def spec(poisson_model, poisson_data, theta):
    return FilterSpec(poisson_model, poisson_data, theta, BootstrapProposal(), 50, method="bootstrap")


class TestReplicateFilters:
    def test_independent_of_thread_count(self, spec):
        serial = replicate_filters(spec, 6, base_seed=10, max_workers=1)
        parallel = replicate_filters(spec, 6, base_seed=10, max_workers=4)
        np.testing.assert_array_equal(serial.loglik, parallel.loglik)
        np.testing.assert_array_equal(serial.mean_ess, parallel.mean_ess)

    def test_replicates_differ(self, spec):
        summary = replicate_filters(spec, 4, base_seed=10, max_workers=2)
        assert len(set(summary.loglik.tolist())) == 4
        assert summary.loglik_var > 0

    def test_frames(self, spec):
        summary = replicate_filters(spec, 3, base_seed=1, max_workers=1)
        frame = summary.loglik_frame()
        assert list(frame.columns) == ["replicate", "loglik"]
        assert frame["replicate"].tolist() == [1, 2, 3]
        assert summary.ess_frame().shape == (spec.dataset.T, 2)

    def test_progress_callback(self, spec):
        calls = []
        replicate_filters(spec, 3, base_seed=1, max_workers=2,
                          progress_callback=lambda done, total, label: calls.append((done, total, label)))
        assert sorted(calls) == [(1, 3, "bootstrap"), (2, 3, "bootstrap"), (3, 3, "bootstrap")]

    def test_reference_error(self, gaussian_model, gaussian_data, theta):
        spec = FilterSpec(gaussian_model, gaussian_data, theta, BootstrapProposal(), 100)
        reference = kalman_filter(gaussian_data, theta, 1.0).filt_mean
        summary = replicate_filters(spec, 3, base_seed=2, max_workers=1, reference=reference)
        assert summary.abs_error.shape == (gaussian_data.T,)
        assert np.all(summary.abs_error >= 0)

    def test_invalid_count(self, spec):
        with pytest.raises(ConfigError):
            replicate_filters(spec, 0, base_seed=1)


class TestSummarize:
    def test_single_output_has_zero_variance(self, spec):
        summary = summarize([spec.run(1)])
        assert summary.R == 1
        assert summary.loglik_var == 0.0
        assert summary.abs_error is None

    def test_empty(self):
        with pytest.raises(ConfigError):
            summarize([])
