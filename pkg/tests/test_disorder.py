# tests/test_disorder.py

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import stats

from bethe_transport.disorder import (
    FreeDistribution,
    GaussianDistribution,
    TabulatedDistribution,
    UniformDistribution,
    abs_moment,
    almost_sure_spectrum,
    density_sup,
    distribution_label,
    make_distribution,
    sample_field,
    tail_probability,
)
from bethe_transport.errors import ParameterError
from bethe_transport.tree import TreeGeometry


class TestDistributions:
    """Closed-form properties of the single-site distributions."""

    def test_make_from_mapping(self):
        dist = make_distribution({"kind": "uniform", "width": 2.0})
        assert isinstance(dist, UniformDistribution)
        assert distribution_label(dist) == "uniform(W=2)"
        assert isinstance(make_distribution({"kind": "free"}), FreeDistribution)

    def test_invalid_specs(self):
        with pytest.raises(ParameterError):
            make_distribution({"kind": "uniform", "width": 0})
        with pytest.raises(ParameterError):
            make_distribution({"kind": "cauchy"})

    def test_uniform(self):
        dist = UniformDistribution(width=4.0)
        assert density_sup(dist) == pytest.approx(0.25)
        assert abs_moment(dist, 2) == pytest.approx(4.0 / 3.0)
        assert tail_probability(dist, 1.0) == pytest.approx(0.5)
        assert tail_probability(dist, 3.0) == 0.0

    def test_gaussian(self):
        dist = GaussianDistribution(sigma=2.0)
        assert abs_moment(dist, 2) == pytest.approx(4.0)
        assert abs_moment(dist, 1) == pytest.approx(2.0 * math.sqrt(2.0 / math.pi))
        assert density_sup(dist) == pytest.approx(1.0 / (2.0 * math.sqrt(2.0 * math.pi)))
        assert tail_probability(dist, 2.0) == pytest.approx(0.3173105, rel=1e-6)

    def test_free(self):
        dist = FreeDistribution()
        assert density_sup(dist) == math.inf
        assert abs_moment(dist, 3) == 0.0
        assert tail_probability(dist, 0.1) == 0.0

    def test_table_matches_uniform(self):
        table = TabulatedDistribution(grid=[-1.0, 1.0], density=[1.0, 1.0])
        assert density_sup(table) == pytest.approx(0.5)
        assert abs_moment(table, 2) == pytest.approx(1.0 / 3.0)
        assert tail_probability(table, 0.5) == pytest.approx(0.5)

    def test_table_tail_moment_diverges(self):
        table = TabulatedDistribution(grid=[-1.0, 0.0, 1.0], density=[1.0, 2.0, 1.0], tail_exponent=2.5)
        assert abs_moment(table, 2) == math.inf
        assert almost_sure_spectrum(table, 2) == (-math.inf, math.inf)

    def test_negative_moment_order(self):
        with pytest.raises(ParameterError):
            abs_moment(UniformDistribution(width=1.0), -1)

    def test_spectrum_enclosure(self):
        low, high = almost_sure_spectrum(UniformDistribution(width=2.0), 2)
        assert low == pytest.approx(-1.0 - 2.0 * math.sqrt(2.0))
        assert high == pytest.approx(1.0 + 2.0 * math.sqrt(2.0))


class TestSampleField:
    """Seeded fields are reproducible and independent of the thread count."""

    def test_reproducible(self):
        geometry = TreeGeometry(branching=2, depth=6)
        dist = UniformDistribution(width=1.0)
        a = sample_field(dist, geometry, seed=5)
        b = sample_field(dist, geometry, seed=5)
        c = sample_field(dist, geometry, seed=6)
        np.testing.assert_array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
        assert a.values.shape == (geometry.vertex_count,)
        assert np.all(np.abs(a.values) <= 0.5)

    def test_thread_count_independent(self):
        geometry = TreeGeometry(branching=2, depth=17)
        dist = GaussianDistribution(sigma=1.0)
        serial = sample_field(dist, geometry, seed=11)
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = sample_field(dist, geometry, seed=11, executor=pool)
        np.testing.assert_array_equal(serial.values, parallel.values)

    def test_free_field_is_zero(self):
        field = sample_field(FreeDistribution(), TreeGeometry(branching=3, depth=3), seed=0)
        assert field.max_abs == 0.0

    def test_uniform_field_statistics(self):
        geometry = TreeGeometry(branching=2, depth=19)
        values = sample_field(UniformDistribution(width=2.0), geometry, seed=21).values
        n = values.size
        assert n > 1_000_000
        assert abs(values.mean()) < 4 * math.sqrt(1 / 3) / math.sqrt(n)
        assert values.var() == pytest.approx(1 / 3, rel=0.05)
        assert stats.kstest(values, stats.uniform(loc=-1.0, scale=2.0).cdf).statistic < 0.002
        # neighbouring vertices, including ones split across draw blocks
        for lag in (1, 2, 3):
            assert abs(np.corrcoef(values[:-lag], values[lag:])[0, 1]) < 4 / math.sqrt(n)
