# tests/test_estimates.py

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from bethe_transport.errors import NumericalAbort
from bethe_transport.estimates import mean_estimate, proportion_estimate, weighted_linear_fit
from bethe_transport.utils import block_generator, block_ranges, derive_seed, run_blocks, stable_hash


class TestEstimators:
    """Means, proportions and their standard errors."""

    def test_mean_estimate(self):
        est = mean_estimate(np.array([1.0, 2.0, 3.0, 4.0]))
        assert est.mean == pytest.approx(2.5)
        assert est.std_error == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
        assert est.n_samples == 4
        assert est.upper(2.0) > est.mean > est.lower(2.0)

    def test_complex_mean(self):
        est = mean_estimate(np.array([1 + 1j, 1 - 1j]))
        assert est.mean == 1 + 0j

    def test_proportion(self):
        est = proportion_estimate(np.array([True, False, False, False]))
        assert est.mean == 0.25
        assert est.std_error == pytest.approx(math.sqrt(0.25 * 0.75 / 4))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            mean_estimate(np.array([1.0]))
        with pytest.raises(ValueError):
            proportion_estimate(np.array([True]))


class TestLinearFit:
    """Weighted least squares."""

    def test_exact_line(self):
        fit = weighted_linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.slope_std_error == pytest.approx(0.0, abs=1e-12)
        assert fit.predict(4) == pytest.approx(9.0)

    def test_quoted_errors(self):
        fit = weighted_linear_fit([0, 1, 2], [0.0, 1.0, 2.0], [0.1, 0.1, 0.1])
        # Unscaled covariance of three equally weighted points.
        assert fit.slope_std_error == pytest.approx(0.1 / math.sqrt(2))

    def test_zero_errors_are_floored(self):
        fit = weighted_linear_fit([0, 1, 2], [0.0, 1.0, 2.0], [0.0, 0.1, 0.1])
        assert math.isfinite(fit.slope_std_error)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            weighted_linear_fit([1.0], [1.0])


class TestStreams:
    """Counter-based random streams."""

    def test_block_generators_are_keyed(self):
        a = block_generator(1, 2, 3).random(4)
        b = block_generator(1, 2, 3).random(4)
        c = block_generator(1, 2, 4).random(4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_derive_seed(self):
        assert derive_seed(7, 1, 0) == derive_seed(7, 1, 0)
        assert derive_seed(7, 1, 0) != derive_seed(7, 1, 1)
        assert 0 <= derive_seed(7, 1, 0) < 2**63

    def test_block_ranges(self):
        assert block_ranges(5, 2) == [(0, 0, 2), (1, 2, 4), (2, 4, 5)]
        assert block_ranges(0) == []

    def test_run_blocks_keeps_order(self):
        blocks = block_ranges(10, 3)
        serial = run_blocks(lambda b: b[0], blocks)
        with ThreadPoolExecutor(max_workers=2) as pool:
            parallel = run_blocks(lambda b: b[0], blocks, pool)
        assert serial == parallel == [0, 1, 2, 3]


class TestHelpers:
    def test_stable_hash_ignores_key_order(self):
        assert stable_hash({"a": 1, "b": 2}) == stable_hash({"b": 2, "a": 1})
        assert stable_hash({"a": 1}) != stable_hash({"a": 2})

    def test_abort_diagnostics_in_message(self):
        err = NumericalAbort("non-finite value", {"vertex": 3})
        assert "vertex=3" in str(err)
        assert err.exit_code == 3
