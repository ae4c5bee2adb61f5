# tests/test_bounds.py

import math

import numpy as np
import pytest

from bethe_transport.bounds import (
    LingeringScan,
    ballistic_certificate,
    check_ballistic_tail,
    check_F_power_law,
    check_free_energy_apriori,
    check_hat_moment_growth,
    check_lemma6,
    check_oracle_equivalence,
    check_rage_trend,
    check_recursion_step,
    check_recursive_inequality,
    check_second_moment_decay,
    check_theorem1,
    check_transport_regime,
    check_wegner,
    lingering_scan,
    one_sided_margin,
    verdict_from_margin,
)
from bethe_transport.disorder import FreeDistribution, UniformDistribution, sample_field
from bethe_transport.dynamics import EnergyWindow, ShellProfile, transport_report
from bethe_transport.errors import ParameterError
from bethe_transport.green import energy
from bethe_transport.population import FreeEnergyEstimate, evolve_pool, init_pool, power_law_tail, root_samples_with_children
from bethe_transport.presets import get_preset
from bethe_transport.tree import TreeGeometry


@pytest.fixture(scope="module")
def root_draws():
    """Root samples and child sums at zeta = 0 + 0.1i, uniform W = 1."""
    zeta = energy(0.0, 0.1)
    pool = init_pool(UniformDistribution(width=1.0), 2, zeta, 20_000, seed=5, min_burn_in=40)
    pool = evolve_pool(pool, 40)
    samples, child_sums = root_samples_with_children(pool, 20_000)
    return zeta, samples, child_sums


@pytest.fixture(scope="module")
def weak_scan():
    """Lingering scan for uniform W = 0.5 on a depth-8 tree, window [-1, 1]."""
    geometry = TreeGeometry(branching=2, depth=8)
    fields = [sample_field(UniformDistribution(width=0.5), geometry, seed) for seed in range(4)]
    window = EnergyWindow(lower=-1.0, upper=1.0)
    return lingering_scan(fields, geometry, window, [0.25, 0.5, 0.75, 1.0], [0.5, 0.25])


def _transport_reports(preset, depth, t_grid, count):
    dist = get_preset(preset)["distribution"]
    geometry = TreeGeometry(branching=2, depth=depth)
    fields = [sample_field(dist, geometry, seed) for seed in range(count)]
    return [transport_report(field, geometry, t_grid, betas=[1.0]) for field in fields]


def _free_energy(slope: float, s: float = 1.0, error: float = 0.01) -> FreeEnergyEstimate:
    return FreeEnergyEstimate(
        s=s,
        energy=energy(0.0, 0.05),
        slope=slope,
        intercept=0.0,
        slope_std_error=error,
        per_length=[(5, 5 * slope, error), (10, 10 * slope, error), (15, 15 * slope, error), (20, 20 * slope, error)],
        fit_residual=0.5,
    )


class TestMarginHelpers:
    """Margins and verdicts."""

    def test_one_sided_margin(self):
        assert one_sided_margin(1.0, 2.0, 0.5) == pytest.approx(2.0)
        assert one_sided_margin(1.0, 2.0, 0.0) == math.inf
        assert one_sided_margin(3.0, 2.0, 0.0) == -math.inf
        assert one_sided_margin(2.0, 2.0, 0.0) == 0.0

    def test_verdicts(self):
        assert verdict_from_margin(-2.9, 3.0) == "pass"
        assert verdict_from_margin(-3.1, 3.0) == "fail"
        assert verdict_from_margin(math.nan, 3.0) == "inconclusive"


class TestBallisticCertificate:
    """Speed bound of the nearest-neighbour kernel."""

    @pytest.mark.parametrize("branching", [2, 3, 5])
    def test_closed_form(self, branching):
        cert = ballistic_certificate(branching)
        assert cert.v_hat == pytest.approx((branching + 1) * math.e, rel=1e-8)
        assert cert.mu == pytest.approx(1.0, abs=1e-8)
        assert cert.tail_bound(cert.v_hat + 1.0, 2.0) == pytest.approx(math.exp(-2.0), rel=1e-6)

    def test_custom_kernel(self):
        cert = ballistic_certificate(2, {1: 3.0, 2: 1.0})
        assert cert.v_hat > 3 * math.e

    def test_invalid_branching(self):
        with pytest.raises(ParameterError):
            ballistic_certificate(1)

    def test_tail_check_on_free_tree(self):
        geometry = TreeGeometry(branching=2, depth=15)
        field = sample_field(FreeDistribution(), geometry, 0)
        report = transport_report(field, geometry, [1.0, 2.0])
        cert = ballistic_certificate(2)
        assert check_ballistic_tail(report, cert).verdict == "pass"
        assert check_ballistic_tail(report, cert, negative_control=True).verdict == "fail"


class TestTransportRegime:
    """First moment of the spreading packet: ballistic under weak, bounded under strong disorder."""

    def test_weak_disorder_is_ballistic(self):
        reports = _transport_reports("transport-weak", 12, [0.25, 0.5, 0.75, 1.0, 1.25], 3)
        report = check_transport_regime(reports, "ballistic")
        assert report.verdict == "pass"
        assert report.estimates["ci_low"] > 0
        assert check_transport_regime(reports, "ballistic", negative_control=True).verdict == "fail"

    def test_strong_disorder_is_bounded(self):
        t_grid = get_preset("transport-strong")["dynamics"]["t_grid"]
        reports = _transport_reports("transport-strong", 8, t_grid, 60)
        report = check_transport_regime(reports, "bounded")
        assert report.verdict == "pass"
        assert report.estimates["ratio"] < 3.0
        assert check_transport_regime(reports, "bounded", negative_control=True).verdict == "fail"

    def test_no_clean_times(self):
        assert check_transport_regime([], "ballistic").verdict == "inconclusive"
        assert check_transport_regime([], "bounded").verdict == "inconclusive"


class TestHatAndLingering:
    """Checks on time-averaged distributions."""

    def test_hat_moment_growth(self):
        profiles = [ShellProfile(masses=np.array([0.9, 0.1, 0.0]), eta=eta) for eta in (0.4, 0.2, 0.1)]
        assert check_hat_moment_growth(profiles, 1.0).verdict == "pass"
        assert check_hat_moment_growth(profiles, 1.0, negative_control=True).verdict == "fail"
        assert check_hat_moment_growth(profiles[:2], 1.0).verdict == "inconclusive"

    def _scan(self):
        b_grid = [0.1, 0.2, 0.3, 0.4, 0.5]
        means = [[0.8 * b for b in b_grid] for _ in range(3)]
        errors = [[0.01] * 5 for _ in range(3)]
        return LingeringScan(etas=[0.1, 0.05, 0.025], b_grid=b_grid, means=means, std_errors=errors, n_fields=50, depth=20)

    def test_theorem1_linear_scan(self):
        report = check_theorem1(self._scan())
        assert report.verdict == "pass"
        assert len(report.children) == 4
        assert report.estimates["C_f"] == pytest.approx(0.8)

    def test_theorem1_negative_control(self):
        assert check_theorem1(self._scan(), negative_control=True).verdict == "fail"

    def test_theorem1_without_safe_points(self):
        scan = self._scan()
        empty = scan.model_copy(update={"means": [[None] * 5] * 3, "std_errors": [[None] * 5] * 3})
        assert check_theorem1(empty).verdict == "inconclusive"

    def test_lingering_scan_masks_unsafe_radii(self):
        geometry = TreeGeometry(branching=2, depth=6)
        fields = [sample_field(UniformDistribution(width=1.0), geometry, seed) for seed in range(3)]
        scan = lingering_scan(fields, geometry, EnergyWindow(lower=-1.0, upper=1.0), [0.5, 1.25], [0.25, 0.5])
        assert scan.etas == [0.5, 0.25]
        assert scan.n_fields == 3
        # b / eta = 5 passes depth - 2; b / eta = 2 stays inside.
        assert scan.means[1][1] is None
        assert scan.means[1][0] is not None
        assert len(scan.means[0]) == 2
        assert len(scan.fixed_values) == 2 and len(scan.fixed_values[0]) == 3

    def test_scan_keeps_profiles_that_reach_the_boundary(self, weak_scan):
        assert all(m is not None for row in weak_scan.means for m in row)
        assert len(weak_scan.boundary_share) == 2
        report = check_theorem1(weak_scan)
        assert report.verdict != "inconclusive"
        assert len(report.children) == 3
        assert report.flags == weak_scan.flags

    def test_rage_trend_on_weak_disorder(self, weak_scan):
        report = check_rage_trend(weak_scan.etas, weak_scan.fixed_values, weak_scan.fixed_radius)
        assert report.bound_id == "rage_trend"
        assert report.verdict == "pass"
        assert report.estimates["lingering_eta=0.25"] < report.estimates["lingering_eta=0.5"]

    def test_rage_trend_verdicts(self):
        etas = [0.4, 0.2, 0.1]
        shrinking = [[0.5 * eta + d for d in (-0.01, 0.0, 0.01)] for eta in etas]
        growing = [[1.0 - 0.5 * eta + d for d in (-0.01, 0.0, 0.01)] for eta in etas]
        report = check_rage_trend(etas, shrinking, 1.0)
        assert report.verdict == "pass"
        assert report.estimates["slope"] == pytest.approx(0.5)
        assert check_rage_trend(etas, growing, 1.0).verdict == "fail"
        assert check_rage_trend(etas, shrinking, 1.0, negative_control=True).verdict == "fail"
        assert check_rage_trend(etas[:1], shrinking[:1], 1.0).verdict == "inconclusive"


class TestGreenDistributionChecks:
    """Inequalities on root Green samples."""

    def test_free_energy_apriori(self):
        log2 = math.log(2)
        assert check_free_energy_apriori(_free_energy(-0.6 * log2), 2).verdict == "pass"
        assert check_free_energy_apriori(_free_energy(-0.3 * log2), 2).verdict == "fail"
        assert check_free_energy_apriori(_free_energy(-0.6 * log2), 2, negative_control=True).verdict == "fail"

    def test_free_energy_low_confidence(self):
        fe = _free_energy(-1.0).model_copy(update={"flags": ["low_confidence"]})
        assert check_free_energy_apriori(fe, 2).verdict == "inconclusive"

    def test_wegner(self, root_draws):
        _, samples, _ = root_draws
        report = check_wegner(samples, rho_sup=1.0)
        assert report.verdict == "pass"
        assert 0 < report.estimates["dos"] < 1.0
        assert check_wegner(samples, rho_sup=1.0, negative_control=True).verdict == "fail"

    def test_lemma6(self, root_draws):
        zeta, samples, _ = root_draws
        grid = [0.02, 0.05, 0.1, 0.2, 0.5]
        report = check_lemma6(samples, UniformDistribution(width=1.0), 2, zeta, grid)
        assert report.verdict != "fail"
        assert [c.bound_id for c in report.children] == ["lemma6_1", "lemma6_2"]
        control = check_lemma6(samples, UniformDistribution(width=1.0), 2, zeta, grid, negative_control=True)
        assert control.verdict == "fail"

    def test_lemma6_free_skips_density_item(self, root_draws):
        zeta, samples, _ = root_draws
        report = check_lemma6(samples, FreeDistribution(), 2, zeta, [0.1])
        assert report.children[1].verdict == "inconclusive"

    def test_recursion_step(self, root_draws):
        zeta, samples, _ = root_draws
        grid = [0.05, 0.1, 0.5]
        assert check_recursion_step(samples, UniformDistribution(width=1.0), 2, zeta, grid, grid).verdict == "pass"
        control = check_recursion_step(samples, UniformDistribution(width=1.0), 2, zeta, grid, grid, negative_control=True)
        assert control.verdict == "fail"

    def test_recursive_inequality(self, root_draws):
        _, samples, child_sums = root_draws
        assert check_recursive_inequality(samples, child_sums).verdict == "pass"
        assert check_recursive_inequality(samples, child_sums, negative_control=True).verdict == "fail"

    def test_power_law_check(self):
        u = np.random.default_rng(1).uniform(0.0, 1.0, 100_000)
        fit = power_law_tail(1j * u**0.5, x_grid=np.geomspace(0.01, 0.1, 5))
        assert fit.exponent == pytest.approx(2.0, abs=0.2)
        assert check_F_power_law(fit).verdict == "pass"
        assert check_F_power_law(fit, negative_control=True).verdict == "fail"

    def test_power_law_check_inconclusive(self):
        fit = power_law_tail(np.full(100, 1j), x_grid=[0.1, 0.2, 0.3, 0.4, 0.5])
        assert check_F_power_law(fit).verdict == "inconclusive"

    def test_second_moment_structure(self):
        report = check_second_moment_decay(
            UniformDistribution(width=0.5), [0.0, 1.0], 0.1, (5, 10, 15, 20), 2000, pool_size=5000, burn_in_sweeps=20
        )
        assert report.bound_id == "second_moment_decay"
        assert len(report.children) == 2
        assert report.estimates["C_plus"] > 0


class TestOracleEquivalence:
    """Recursion-vs-dense error summary."""

    def test_verdicts(self):
        assert check_oracle_equivalence([1e-14, 3e-13], 1e-10).verdict == "pass"
        assert check_oracle_equivalence([1e-14, 1e-9], 1e-10).verdict == "fail"
        assert check_oracle_equivalence([], 1e-10).verdict == "inconclusive"
