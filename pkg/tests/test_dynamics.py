# tests/test_dynamics.py

import math

import numpy as np
import pytest

from scipy import special

from bethe_transport.disorder import FreeDistribution, UniformDistribution, sample_field
from bethe_transport.dynamics import (
    EnergyWindow,
    ShellProfile,
    ballistic_fit,
    chebyshev_coefficients,
    default_v_grid,
    delta_packet,
    dense_hat_total,
    dense_propagator,
    front_tail,
    hamiltonian_operator,
    hat_distribution,
    hat_moments,
    lingering,
    moments,
    propagate,
    shell_profile,
    spectral_enclosure,
    starting_nodes,
    transport_report,
)
from bethe_transport.errors import ParameterError
from bethe_transport.green import hamiltonian_matrix
from bethe_transport.tree import TreeGeometry


@pytest.fixture
def small_field():
    geometry = TreeGeometry(branching=2, depth=5)
    return sample_field(UniformDistribution(width=1.0), geometry, 7), geometry


class TestOperator:
    """Matrix-free Hamiltonian and its spectral enclosure."""

    def test_matches_dense(self, small_field):
        field, geometry = small_field
        psi = np.random.default_rng(0).normal(size=geometry.vertex_count) + 0j
        op = hamiltonian_operator(field, geometry)
        np.testing.assert_allclose(op.matvec(psi), hamiltonian_matrix(field, geometry) @ psi, atol=1e-12)

    def test_enclosure_contains_spectrum(self, small_field):
        field, geometry = small_field
        low, high = spectral_enclosure(field, geometry)
        eigenvalues = np.linalg.eigvalsh(hamiltonian_matrix(field, geometry))
        assert low <= eigenvalues.min() and eigenvalues.max() <= high

    def test_coefficients_truncate(self):
        coeffs = chebyshev_coefficients(10.0, 1e-12)
        assert coeffs[0] == pytest.approx(special.jv(0, 10.0))
        assert abs(coeffs[-1]) < 1e-10
        assert len(coeffs) > 10


class TestPropagation:
    """Chebyshev evolution against the dense eigendecomposition."""

    def test_matches_dense(self, small_field):
        field, geometry = small_field
        psi0 = delta_packet(geometry)
        packets = propagate(field, geometry, psi0, [0.0, 0.5, 1.0, 2.5])
        for packet in packets:
            reference = dense_propagator(field, geometry, psi0, packet.time)
            np.testing.assert_allclose(packet.amplitudes, reference.amplitudes, atol=1e-9)

    def test_norm_preserved(self, small_field):
        field, geometry = small_field
        packets = propagate(field, geometry, delta_packet(geometry), [1.0, 2.0, 3.0])
        assert all(p.norm_drift < 1e-9 for p in packets)
        assert packets[-1].norm == pytest.approx(1.0, abs=1e-9)

    def test_invalid_arguments(self, small_field):
        field, geometry = small_field
        with pytest.raises(ParameterError):
            propagate(field, geometry, delta_packet(geometry), [1.0], tol=1e-3)
        with pytest.raises(ParameterError):
            propagate(field, geometry, delta_packet(geometry), [2.0, 1.0])

    def test_boundary_contamination(self):
        geometry = TreeGeometry(branching=2, depth=3)
        field = sample_field(FreeDistribution(), geometry, 0)
        packets = propagate(field, geometry, delta_packet(geometry), [0.0, 3.0])
        assert "boundary_contaminated" not in packets[0].flags
        assert "boundary_contaminated" in packets[1].flags
        assert shell_profile(packets[1], geometry).contaminated


class TestProfiles:
    """Shell profiles, moments and front tails."""

    def test_initial_profile(self, small_field):
        _, geometry = small_field
        profile = shell_profile(delta_packet(geometry), geometry)
        assert list(profile.masses) == [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        assert moments(profile, 0.0) == 1.0
        assert moments(profile, 1.0) == 0.0
        assert front_tail(profile, 1.0, 1.0) == 0.0

    def test_moments_and_tails(self):
        profile = ShellProfile(masses=np.array([0.5, 0.25, 0.25]), time=1.0)
        assert moments(profile, 1.0) == pytest.approx(0.75)
        assert moments(profile, 2.0) == pytest.approx(1.25)
        assert front_tail(profile, 1.0, 1.0) == pytest.approx(0.25)
        assert lingering(profile, 1.5) == pytest.approx(0.75)
        assert lingering(profile, 0.0) == 0.0
        assert hat_moments(profile, 0.0) == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            ShellProfile(masses=np.array([1.0, -0.1]))
        with pytest.raises(ParameterError):
            front_tail(ShellProfile(masses=np.array([1.0])), 1.0, 0.0)
        with pytest.raises(ParameterError):
            lingering(ShellProfile(masses=np.array([1.0])), -1.0)
        with pytest.raises(ValueError):
            EnergyWindow(lower=1.0, upper=-1.0)


class TestHatDistribution:
    """Time-averaged window distribution through the resolvent."""

    def test_total_mass_matches_dense(self):
        geometry = TreeGeometry(branching=2, depth=4)
        field = sample_field(UniformDistribution(width=1.0), geometry, 2)
        window = EnergyWindow(lower=-1.0, upper=1.0)
        profile = hat_distribution(field, geometry, window, 0.5, rtol=1e-8, max_doublings=4)
        assert "quadrature_not_converged" not in profile.flags
        assert profile.eta == 0.5
        assert profile.total_mass == pytest.approx(dense_hat_total(field, geometry, window, 0.5), rel=1e-6)
        assert profile.total_mass <= 1.0

    def test_unconverged_is_flagged(self):
        geometry = TreeGeometry(branching=2, depth=3)
        field = sample_field(UniformDistribution(width=1.0), geometry, 2)
        profile = hat_distribution(field, geometry, EnergyWindow(lower=-1.0, upper=1.0), 0.2, max_doublings=0)
        assert "quadrature_not_converged" in profile.flags

    def test_strong_damping_stays_near_root(self, small_field):
        field, geometry = small_field
        profile = hat_distribution(field, geometry, EnergyWindow(lower=-1.0, upper=1.0), 1.0)
        assert profile.masses[0] > profile.masses[-1]

    def test_window_outside_spectrum_is_nearly_empty(self, small_field):
        field, geometry = small_field
        profile = hat_distribution(field, geometry, EnergyWindow(lower=10.0, upper=12.0), 0.01)
        assert profile.total_mass < 1e-3

    def test_starting_nodes_scale_with_inverse_damping(self):
        window = EnergyWindow(lower=-1.0, upper=1.0)
        assert starting_nodes(window, 1.0) == 32
        assert starting_nodes(window, 0.05) == 160
        assert starting_nodes(window, 0.05, quad_nodes=256) == 256
        assert starting_nodes(EnergyWindow(lower=-2.0, upper=2.0), 0.025) == 640

    def test_small_damping_converges_at_default_tolerance(self, small_field):
        field, geometry = small_field
        window = EnergyWindow(lower=-1.0, upper=1.0)
        profile = hat_distribution(field, geometry, window, 0.05, rtol=1e-4, max_doublings=4)
        assert "quadrature_not_converged" not in profile.flags
        assert profile.total_mass == pytest.approx(dense_hat_total(field, geometry, window, 0.05), rel=1e-3)

    def test_invalid_arguments(self, small_field):
        field, geometry = small_field
        window = EnergyWindow(lower=-1.0, upper=1.0)
        with pytest.raises(ParameterError):
            hat_distribution(field, geometry, window, 0.0)
        with pytest.raises(ParameterError):
            hat_distribution(field, geometry, window, 0.1, quad_nodes=16)


class TestTransportReport:
    """Assembled propagation report."""

    def test_ballistic_fit_on_line(self):
        fit = ballistic_fit([1.0, 2.0, 3.0, 4.0], [0.5, 1.1, 1.4, 2.05])
        assert fit.slope == pytest.approx(0.5, abs=0.1)
        assert fit.ci_low < fit.slope < fit.ci_high
        assert fit.ci_low > 0
        assert fit.points == 4

    def test_ballistic_fit_needs_two_points(self):
        with pytest.raises(ParameterError):
            ballistic_fit([1.0], [1.0])

    def test_default_speeds_above_certificate(self):
        grid = default_v_grid(2)
        assert min(grid) > 3 * math.e
        assert max(grid) == pytest.approx(6 * math.e)

    def test_report_contents(self):
        geometry = TreeGeometry(branching=2, depth=10)
        field = sample_field(UniformDistribution(width=1.0), geometry, 1)
        report = transport_report(field, geometry, [0.0, 0.5, 1.0], betas=[0.0, 1.0])
        assert report.times == [0.0, 0.5, 1.0]
        assert len(report.profiles) == 3
        assert report.moments[0.0] == pytest.approx([1.0, 1.0, 1.0], abs=1e-9)
        assert report.moments[1.0][0] == 0.0
        assert report.front_tails[0] == [0.0] * len(report.v_grid)
        assert report.ballistic_fit is not None
