# src/bethe_transport/green.py

"""
Exact resolvent column ``G(0, x; zeta)`` on a truncated tree.

The upward sweep computes, shell by shell from the leaves, the forward Green
function ``gamma[x]`` of the subtree below ``x`` with the parent removed:

    gamma[x] = 1 / (V(x) - zeta - sum_{c child of x} gamma[c])

At the root this is ``G(0, 0)``. The downward sweep multiplies along the
path, ``G(0, x) = G(0, parent x) * gamma[x]``.
"""

import logging
import math
from typing import TYPE_CHECKING, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg

from .disorder import PotentialField
from .errors import NumericalAbort, OracleSizeError, ParameterError
from .tree import TreeGeometry
from .utils import STREAM_BOUNDARY, block_generator, block_ranges

if TYPE_CHECKING:
    from .population import GreenPool

logger = logging.getLogger(__name__)

ORACLE_LIMIT = 5000

BoundaryMode = Literal["zero", "pool"]


class ComplexEnergy(BaseModel):
    """Spectral parameter ``zeta = E + i eta`` with ``eta > 0``."""

    model_config = ConfigDict(frozen=True)

    real_part: float = 0.0
    imag_part: float = Field(..., gt=0)

    @property
    def zeta(self) -> complex:
        return complex(self.real_part, self.imag_part)

    @property
    def E(self) -> float:
        return self.real_part

    @property
    def eta(self) -> float:
        return self.imag_part

    def conjugate_zeta(self) -> complex:
        return complex(self.real_part, -self.imag_part)

    def label(self) -> str:
        return f"{self.real_part:g}{self.imag_part:+g}i"


def energy(E: float, eta: float) -> ComplexEnergy:
    if not eta > 0:
        raise ParameterError(f"imaginary part must be > 0, got {eta}")
    return ComplexEnergy(real_part=E, imag_part=eta)


class ForwardGreenField(BaseModel):
    """``gamma[x]``: forward Green function of the subtree hanging below ``x``."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gamma: np.ndarray
    boundary_mode: BoundaryMode
    energy: ComplexEnergy


class GreenColumn(BaseModel):
    """Resolvent column ``G(0, x; zeta)`` over all vertices."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g0x: np.ndarray
    g00: complex
    energy: Optional[ComplexEnergy] = None

    @model_validator(mode="after")
    def check_root(self):
        if self.g0x.size and self.g0x[0] != self.g00:
            raise ValueError("g0x[0] must equal g00")
        return self

    def l2_mass(self) -> float:
        """``sum_x |G(0,x)|**2``."""
        return float(np.sum(np.abs(self.g0x) ** 2))

    def l2_identity_error(self) -> float:
        """Relative violation of ``sum_x |G(0,x)|**2 = Im G(0,0) / eta``."""
        if self.energy is None:
            raise ValueError("column has no energy attached")
        expected = self.g00.imag / self.energy.eta
        return abs(self.l2_mass() - expected) / abs(expected)


def free_forward_green(zeta: complex, branching: int) -> complex:
    """Root of ``K G**2 + zeta G + 1 = 0`` in the upper half plane (``V = 0``)."""
    disc = np.lib.scimath.sqrt(zeta * zeta - 4.0 * branching)
    roots = ((-zeta + disc) / (2.0 * branching), (-zeta - disc) / (2.0 * branching))
    return complex(max(roots, key=lambda g: g.imag))


def free_root_green(zeta: complex, branching: int) -> complex:
    """``G(0,0; zeta)`` of the free rooted tree: the root also has K children."""
    return 1.0 / (-zeta - branching * free_forward_green(zeta, branching))


def _abort_if_not_finite(values: np.ndarray, where: str, offset: int = 0) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        first = int(np.argmax(bad))
        raise NumericalAbort(
            "non-finite forward Green value",
            {"where": where, "vertex": offset + first, "value": values[first]},
        )


def _leaf_boundary(
    geometry: TreeGeometry, pool: "GreenPool", seed: int
) -> np.ndarray:
    """Sum of K independent pool draws for every leaf, reproducible from ``seed``."""
    n_leaves = geometry.vertex_count - geometry.interior_count
    sums = np.empty(n_leaves, dtype=complex)
    for block_id, start, stop in block_ranges(n_leaves):
        rng = block_generator(seed, STREAM_BOUNDARY, block_id)
        sums[start:stop] = pool.draw_sums(rng, stop - start, geometry.branching)
    return sums


def forward_sweep(
    field: PotentialField,
    geometry: TreeGeometry,
    zeta: ComplexEnergy,
    boundary: BoundaryMode = "zero",
    pool: Optional["GreenPool"] = None,
) -> ForwardGreenField:
    """
    Upward pass, deepest shell first.

    With ``boundary="pool"`` every leaf sees K independent draws from ``pool``,
    which must have been built at the same ``zeta``.
    """
    if boundary == "pool":
        if pool is None:
            raise ParameterError("pool boundary needs a GreenPool")
        if abs(pool.energy.zeta - zeta.zeta) > 1e-12:
            raise ParameterError(f"pool built at {pool.energy.label()} used at {zeta.label()}")
    z = zeta.zeta
    V = field.values
    gamma = np.empty(geometry.vertex_count, dtype=complex)

    leaves = geometry.shell_slice(geometry.depth)
    if boundary == "pool":
        gamma[leaves] = 1.0 / (V[leaves] - z - _leaf_boundary(geometry, pool, field.seed))
    else:
        gamma[leaves] = 1.0 / (V[leaves] - z)
    _abort_if_not_finite(gamma[leaves], f"shell {geometry.depth}", leaves.start)

    for n in range(geometry.depth - 1, -1, -1):
        shell = geometry.shell_slice(n)
        below = geometry.shell_slice(n + 1)
        child_sum = gamma[below].reshape(-1, geometry.branching).sum(axis=1)
        gamma[shell] = 1.0 / (V[shell] - z - child_sum)
        _abort_if_not_finite(gamma[shell], f"shell {n}", shell.start)

    logger.debug(f"Forward sweep at zeta={zeta.label()} over {geometry.depth + 1} shells ({boundary} boundary)")
    return ForwardGreenField(gamma=gamma, boundary_mode=boundary, energy=zeta)


def column_from_forward(forward: ForwardGreenField, geometry: TreeGeometry) -> GreenColumn:
    """Downward pass ``G(0, x) = G(0, parent x) * gamma[x]``."""
    gamma = forward.gamma
    g0x = np.empty_like(gamma)
    g0x[0] = gamma[0]
    for n in range(geometry.depth):
        shell = geometry.shell_slice(n)
        below = geometry.shell_slice(n + 1)
        g0x[below] = np.repeat(g0x[shell], geometry.branching) * gamma[below]
    return GreenColumn(g0x=g0x, g00=complex(g0x[0]), energy=forward.energy)


def resolvent_column(
    field: PotentialField,
    geometry: TreeGeometry,
    zeta: ComplexEnergy,
    boundary: BoundaryMode = "zero",
    pool: Optional["GreenPool"] = None,
) -> GreenColumn:
    """``G(0, x; zeta)`` for every vertex in O(N) work."""
    forward = forward_sweep(field, geometry, zeta, boundary, pool)
    return column_from_forward(forward, geometry)


def hamiltonian_matrix(field: PotentialField, geometry: TreeGeometry) -> np.ndarray:
    """Dense ``H = -A + V`` of the truncated tree (oracle sizes only)."""
    if geometry.vertex_count > ORACLE_LIMIT:
        raise OracleSizeError(f"{geometry.vertex_count} vertices exceed the dense guard {ORACLE_LIMIT}")
    return -geometry.dense_adjacency() + np.diag(field.values)


def dense_oracle(field: PotentialField, geometry: TreeGeometry, zeta: ComplexEnergy) -> GreenColumn:
    """Solve ``(H - zeta) u = delta_0`` by direct elimination."""
    H = hamiltonian_matrix(field, geometry)
    rhs = np.zeros(geometry.vertex_count, dtype=complex)
    rhs[0] = 1.0
    u = linalg.solve(H - zeta.zeta * np.eye(geometry.vertex_count), rhs)
    return GreenColumn(g0x=u, g00=complex(u[0]), energy=zeta)


def recursive_inequality_gap(forward: ForwardGreenField, geometry: TreeGeometry) -> float:
    """
    ``Im G(0,0) - |G(0,0)|**2 * sum_c Im gamma[c]`` over the root's children,
    scaled by ``Im G(0,0)``. Non-negative up to rounding.
    """
    g00 = forward.gamma[0]
    children = forward.gamma[1 : 1 + geometry.branching] if geometry.depth > 0 else np.zeros(0)
    gap = g00.imag - abs(g00) ** 2 * float(np.sum(children.imag))
    return float(gap / g00.imag)


def relative_column_error(column: GreenColumn, reference: GreenColumn) -> float:
    """Max-norm relative difference between two columns."""
    scale = float(np.max(np.abs(reference.g0x)))
    if scale == 0 or math.isnan(scale):
        return float(np.max(np.abs(column.g0x - reference.g0x)))
    return float(np.max(np.abs(column.g0x - reference.g0x)) / scale)
