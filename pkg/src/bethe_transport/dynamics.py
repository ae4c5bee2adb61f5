# src/bethe_transport/dynamics.py

"""
Wave-packet evolution and time-averaged position distributions on a truncated tree.

``propagate`` applies ``exp(-i t H)`` with a Chebyshev expansion whose
coefficients are Bessel functions; only matrix-free products with
``H = -A + V`` are needed. ``hat_distribution`` computes the time-averaged
distribution of a window state through the resolvent,

    K(x) = (eta / pi) * integral over the window of |G(x, 0; E + i eta)|**2 dE,

with Gauss-Legendre quadrature and node doubling until the shell masses settle.
"""

import logging
import math
from concurrent.futures import Executor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg, special, stats
from scipy.sparse.linalg import LinearOperator
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from .config import RefinementConfig
from .disorder import PotentialField
from .errors import ParameterError, QuadratureNotConverged
from .green import ComplexEnergy, hamiltonian_matrix, resolvent_column
from .tree import TreeGeometry
from .utils import run_blocks

logger = logging.getLogger(__name__)

BOUNDARY_SHELLS = 2
BOUNDARY_MASS = 1e-6
# Gauss-Legendre nodes per unit of window width / eta; the integrand has poles at distance eta.
NODES_PER_DAMPING = 4.0


class WavePacket(BaseModel):
    """Amplitudes over the vertices at one time."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    amplitudes: np.ndarray
    time: float = 0.0
    norm_drift: float = 0.0
    flags: List[str] = Field(default_factory=list)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


class ShellProfile(BaseModel):
    """Probability mass per shell, tagged with the time or the damping it belongs to."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    masses: np.ndarray
    time: Optional[float] = None
    eta: Optional[float] = None
    flags: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_masses(self):
        if self.masses.ndim != 1 or self.masses.size == 0:
            raise ValueError("a shell profile needs at least one shell")
        if np.any(self.masses < 0):
            raise ValueError("shell masses must be non-negative")
        return self

    @property
    def depth(self) -> int:
        return self.masses.size - 1

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def contaminated(self) -> bool:
        return "boundary_contaminated" in self.flags


class EnergyWindow(BaseModel):
    """Indicator window ``[lower, upper]``."""

    model_config = ConfigDict(frozen=True)

    lower: float
    upper: float

    @model_validator(mode="after")
    def _check_order(self):
        if not self.lower < self.upper:
            raise ValueError(f"window [{self.lower}, {self.upper}] is empty")
        return self

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def inside(self, enclosure: Tuple[float, float]) -> bool:
        return enclosure[0] <= self.lower and self.upper <= enclosure[1]


class BallisticFit(BaseModel):
    """Line through ``M(1, t)`` against ``t`` with a confidence interval on the slope."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    confidence: float = 0.95
    points: int


class TransportReport(BaseModel):
    """Everything measured along one propagation."""

    model_config = ConfigDict(arbitrary_types_allowed=True, ser_json_inf_nan="constants")

    times: List[float]
    profiles: List[ShellProfile]
    betas: List[float]
    moments: Dict[float, List[float]]
    v_grid: List[float]
    front_tails: List[List[float]]
    ballistic_fit: Optional[BallisticFit] = None
    norm_drifts: List[float]
    flags: List[str] = Field(default_factory=list)

    def moment_series(self, beta: float) -> List[float]:
        return self.moments[beta]


# -- operators ---------------------------------------------------------------------


def spectral_enclosure(field: PotentialField, geometry: TreeGeometry) -> Tuple[float, float]:
    """Interval containing the truncated spectrum: degree bound plus realized potential range."""
    degree = geometry.branching + 1
    if geometry.vertex_count == 0:
        return -1.0, 1.0
    low = float(field.values.min()) - degree
    high = float(field.values.max()) + degree
    return low, high


def hamiltonian_operator(field: PotentialField, geometry: TreeGeometry) -> LinearOperator:
    """Matrix-free ``H = -A + V`` as a scipy LinearOperator."""
    n = geometry.vertex_count
    V = field.values

    def matvec(psi):
        psi = np.asarray(psi).reshape(-1)
        return V * psi - geometry.apply_adjacency(psi)

    return LinearOperator((n, n), matvec=matvec, rmatvec=matvec, dtype=complex)


def delta_packet(geometry: TreeGeometry) -> WavePacket:
    """Particle localized at the root."""
    amplitudes = np.zeros(geometry.vertex_count, dtype=complex)
    amplitudes[0] = 1.0
    return WavePacket(amplitudes=amplitudes)


def chebyshev_coefficients(x: float, tol: float) -> np.ndarray:
    """``(2 - delta_k0) (-i)**k J_k(x)`` truncated once ``|J_k(x)| < tol`` past the peak."""
    k_max = int(math.ceil(1.5 * abs(x))) + 40
    orders = np.arange(k_max + 1)
    bessel = special.jv(orders, x)
    above = np.nonzero(np.abs(bessel) >= tol)[0]
    last = int(above[-1]) if above.size else 0
    coeffs = bessel[: last + 1] * (-1j) ** orders[: last + 1]
    coeffs[1:] *= 2.0
    return coeffs


def _chebyshev_step(op: LinearOperator, psi: np.ndarray, dt: float, center: float, half_width: float, tol: float) -> np.ndarray:
    coeffs = chebyshev_coefficients(half_width * dt, tol)

    def scaled(v):
        return (op.matvec(v) - center * v) / half_width

    previous = psi
    result = coeffs[0] * previous
    if coeffs.size > 1:
        current = scaled(psi)
        result = result + coeffs[1] * current
        for c in coeffs[2:]:
            previous, current = current, 2.0 * scaled(current) - previous
            result = result + c * current
    return np.exp(-1j * center * dt) * result


def shell_profile(psi: WavePacket, geometry: TreeGeometry, boundary_mass: float = BOUNDARY_MASS) -> ShellProfile:
    """``profile[n] = sum over shell n of |psi|**2``, flagged when mass reaches the last shells."""
    masses = geometry.shell_masses(np.abs(psi.amplitudes) ** 2)
    flags = list(psi.flags)
    if boundary_contaminated(masses, boundary_mass) and "boundary_contaminated" not in flags:
        flags.append("boundary_contaminated")
    return ShellProfile(masses=masses, time=psi.time, flags=flags)


def boundary_contaminated(masses: np.ndarray, threshold: float = BOUNDARY_MASS) -> bool:
    """More than ``threshold`` mass within two shells of the truncation depth."""
    depth = masses.size - 1
    near = masses[max(0, depth - BOUNDARY_SHELLS) :]
    return bool(near.sum() > threshold)


def propagate(
    field: PotentialField,
    geometry: TreeGeometry,
    psi0: WavePacket,
    t_grid: Sequence[float],
    tol: float = 1e-12,
    boundary_mass: float = BOUNDARY_MASS,
) -> List[WavePacket]:
    """
    ``exp(-i t H) psi0`` at every grid time (Dirichlet truncation).

    The expansion is applied step by step between consecutive grid times.

    Args:
        field: Potential on the truncated tree
        geometry: Tree shape
        psi0: Initial packet, taken to sit at time 0
        t_grid: Non-decreasing non-negative times
        tol: Bessel coefficients below this magnitude are dropped
        boundary_mass: Mass near the last shells above which a time is flagged

    Returns:
        One WavePacket per grid time
    """
    if not 1e-14 < tol < 1e-6:
        raise ParameterError(f"tol must lie in (1e-14, 1e-6), got {tol}")
    times = [float(t) for t in t_grid]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise ParameterError("t_grid must be non-negative and non-decreasing")
    low, high = spectral_enclosure(field, geometry)
    center, half_width = 0.5 * (low + high), 0.5 * (high - low)
    op = hamiltonian_operator(field, geometry)
    norm0 = float(np.linalg.norm(psi0.amplitudes))

    packets = []
    psi = np.array(psi0.amplitudes, dtype=complex)
    now = 0.0
    for t in times:
        if t > now:
            psi = _chebyshev_step(op, psi, t - now, center, half_width, tol)
            now = t
        drift = abs(float(np.linalg.norm(psi)) - norm0)
        flags = []
        if boundary_contaminated(geometry.shell_masses(np.abs(psi) ** 2), boundary_mass):
            flags.append("boundary_contaminated")
            logger.warning(f"Wave packet reached the truncation boundary at t={t:g}")
        packets.append(WavePacket(amplitudes=psi.copy(), time=t, norm_drift=drift, flags=flags))
    logger.debug(f"Propagated to t={now:g} on {geometry.vertex_count} vertices, spectrum in [{low:.3g}, {high:.3g}]")
    return packets


def dense_propagator(field: PotentialField, geometry: TreeGeometry, psi0: WavePacket, t: float) -> WavePacket:
    """Oracle ``exp(-i t H) psi0`` through a dense eigendecomposition."""
    H = hamiltonian_matrix(field, geometry)
    eigenvalues, vectors = linalg.eigh(H)
    coefficients = vectors.T @ psi0.amplitudes
    amplitudes = vectors @ (np.exp(-1j * t * eigenvalues) * coefficients)
    return WavePacket(amplitudes=amplitudes, time=t)


def moments(profile: ShellProfile, beta: float) -> float:
    """``M(beta) = sum_n n**beta * profile[n]``; ``beta = 0`` gives the total mass."""
    shells = np.arange(profile.masses.size, dtype=float)
    return float(np.sum(shells ** beta * profile.masses))


def front_tail(profile: ShellProfile, v: float, t: float) -> float:
    """Mass strictly beyond distance ``v * t``."""
    if t <= 0:
        raise ParameterError(f"t must be > 0, got {t}")
    shells = np.arange(profile.masses.size)
    return float(profile.masses[shells > v * t].sum())


# -- time-averaged distribution ----------------------------------------------------


def _hat_vertex_masses(
    field: PotentialField,
    geometry: TreeGeometry,
    window: EnergyWindow,
    eta: float,
    nodes: int,
    executor: Optional[Executor],
) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * window.width
    energies = window.lower + half * (x + 1.0)
    weights = half * w

    def integrand(node):
        E, weight = node
        column = resolvent_column(field, geometry, ComplexEnergy(real_part=E, imag_part=eta))
        return geometry.shell_masses(weight * np.abs(column.g0x) ** 2)

    # Shell sums per node keep memory at O(depth) per task; order is fixed.
    per_node = run_blocks(integrand, list(zip(energies, weights)), executor)
    return (eta / math.pi) * np.sum(per_node, axis=0)


def starting_nodes(window: EnergyWindow, eta: float, quad_nodes: int = 32) -> int:
    """
    Node count the hat quadrature starts from.

    ``|G(x, 0; E + i eta)|**2`` has poles at distance ``eta`` from the real axis,
    so Gauss-Legendre needs a node count proportional to ``width / eta`` before
    doubling can settle. Never fewer than ``quad_nodes``.
    """
    return max(int(quad_nodes), int(math.ceil(NODES_PER_DAMPING * window.width / eta)))


def hat_distribution(
    field: PotentialField,
    geometry: TreeGeometry,
    window: EnergyWindow,
    eta: float,
    quad_nodes: int = 32,
    rtol: Optional[float] = None,
    max_doublings: Optional[int] = None,
    executor: Optional[Executor] = None,
    boundary_mass: float = BOUNDARY_MASS,
) -> ShellProfile:
    """
    Time-averaged shell distribution of the window state started at the root.

    Quadrature starts from ``starting_nodes(window, eta, quad_nodes)`` nodes and
    doubles until no shell mass moves by more than ``rtol`` relative; after
    ``max_doublings`` the last profile is returned flagged
    ``quadrature_not_converged``.
    """
    if not 0 < eta <= 1:
        raise ParameterError(f"eta must lie in (0, 1], got {eta}")
    if quad_nodes < 32:
        raise ParameterError(f"need at least 32 quadrature nodes, got {quad_nodes}")
    refinement = RefinementConfig()
    rtol = refinement.quadrature_rtol if rtol is None else rtol
    max_doublings = refinement.max_quadrature_doublings if max_doublings is None else max_doublings

    nodes = starting_nodes(window, eta, quad_nodes)
    if nodes > quad_nodes:
        logger.debug(f"Starting quadrature at {nodes} nodes for eta={eta:g} on a window of width {window.width:g}")
    state = {"nodes": nodes, "masses": _hat_vertex_masses(field, geometry, window, eta, nodes, executor)}

    @retry(
        stop=stop_after_attempt(max_doublings),
        retry=retry_if_exception_type(QuadratureNotConverged),
        reraise=True,
    )
    def _refine():
        nodes = 2 * state["nodes"]
        masses = _hat_vertex_masses(field, geometry, window, eta, nodes, executor)
        floor = 1e-8 * max(float(masses.sum()), 1e-300)
        change = float(np.max(np.abs(masses - state["masses"]) / np.maximum(masses, floor)))
        state.update(nodes=nodes, masses=masses)
        if change > rtol:
            logger.debug(f"Quadrature with {nodes} nodes still moves shell masses by {change:.2e}")
            raise QuadratureNotConverged(nodes, change)
        return masses

    flags: List[str] = []
    if max_doublings > 0:
        try:
            _refine()
        except QuadratureNotConverged as e:
            flags.append("quadrature_not_converged")
            logger.warning(f"Hat distribution at eta={eta:g} not converged with {e.nodes} nodes ({e.change:.2e})")
    else:
        flags.append("quadrature_not_converged")
    masses = np.clip(state["masses"], 0.0, None)
    if boundary_contaminated(masses, boundary_mass):
        flags.append("boundary_contaminated")
    return ShellProfile(masses=masses, eta=eta, flags=flags)


def dense_hat_total(field: PotentialField, geometry: TreeGeometry, window: EnergyWindow, eta: float) -> float:
    """
    Oracle for the total hat mass: the Lorentzian-smoothed spectral measure of the
    root integrated over the window.
    """
    eigenvalues, vectors = linalg.eigh(hamiltonian_matrix(field, geometry))
    weights = vectors[0, :] ** 2
    smoothed = (np.arctan((window.upper - eigenvalues) / eta) - np.arctan((window.lower - eigenvalues) / eta)) / math.pi
    return float(np.sum(weights * smoothed))


def lingering(profile: ShellProfile, R: float) -> float:
    """Mass inside the open ball ``|x| < R``."""
    if R < 0:
        raise ParameterError(f"R must be >= 0, got {R}")
    shells = np.arange(profile.masses.size)
    return float(profile.masses[shells < R].sum())


def hat_moments(profile: ShellProfile, beta: float) -> float:
    return moments(profile, beta)


# -- reports -------------------------------------------------------------------------


def ballistic_fit(times: Sequence[float], first_moments: Sequence[float], confidence: float = 0.95) -> BallisticFit:
    """Ordinary least squares of ``M(1, t)`` on ``t`` with a Student-t interval."""
    t = np.asarray(times, dtype=float)
    m = np.asarray(first_moments, dtype=float)
    if t.size < 2:
        raise ParameterError("a ballistic fit needs at least two times")
    result = stats.linregress(t, m)
    if t.size > 2:
        half = float(stats.t.ppf(0.5 + 0.5 * confidence, t.size - 2)) * float(result.stderr)
    else:
        half = math.inf
    return BallisticFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        ci_low=float(result.slope) - half,
        ci_high=float(result.slope) + half,
        confidence=confidence,
        points=int(t.size),
    )


def default_v_grid(branching: int, points: int = 6) -> List[float]:
    """Speeds above the certificate speed ``(K + 1) e``, up to twice it."""
    v_hat = (branching + 1) * math.e
    return [float(v) for v in np.linspace(v_hat * 1.05, 2.0 * v_hat, points)]


def transport_report(
    field: PotentialField,
    geometry: TreeGeometry,
    t_grid: Sequence[float],
    betas: Sequence[float] = (0.0, 1.0, 2.0),
    v_grid: Optional[Sequence[float]] = None,
    tol: float = 1e-12,
    boundary_mass: float = BOUNDARY_MASS,
) -> TransportReport:
    """Propagate ``delta_0`` and collect profiles, moments, front tails and the ballistic fit."""
    v_grid = list(v_grid) if v_grid is not None else default_v_grid(geometry.branching)
    packets = propagate(field, geometry, delta_packet(geometry), t_grid, tol, boundary_mass)
    profiles = [shell_profile(p, geometry, boundary_mass) for p in packets]
    betas = [float(b) for b in betas]
    series = {b: [moments(p, b) for p in profiles] for b in betas}
    tails = [[front_tail(p, v, p.time) if p.time > 0 else 0.0 for v in v_grid] for p in profiles]

    flags: List[str] = []
    if any(p.contaminated for p in profiles):
        flags.append("boundary_contaminated")
    clean = [(p.time, moments(p, 1.0)) for p in profiles if p.time > 0 and not p.contaminated]
    fit = ballistic_fit([c[0] for c in clean], [c[1] for c in clean]) if len(clean) >= 2 else None
    if fit is None:
        flags.append("no_ballistic_fit")
    return TransportReport(
        times=[p.time for p in profiles],
        profiles=profiles,
        betas=betas,
        moments=series,
        v_grid=v_grid,
        front_tails=tails,
        ballistic_fit=fit,
        norm_drifts=[p.norm_drift for p in packets],
        flags=flags,
    )
