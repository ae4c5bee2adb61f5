# src/bethe_transport/disorder.py

"""
Single-site potential distributions and seeded potential fields.

Fields are drawn block by block, each block from its own Philox stream keyed by
``(seed, STREAM_FIELD, block)``, so the array is the same whether the blocks
run on one thread or many.
"""

import logging
import math
from concurrent.futures import Executor
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, model_validator
from scipy import integrate, special

from .errors import ParameterError
from .tree import TreeGeometry
from .utils import STREAM_FIELD, block_generator, block_ranges, run_blocks

logger = logging.getLogger(__name__)


class UniformDistribution(BaseModel):
    """Uniform density on ``[-W/2, W/2]``."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["uniform"] = "uniform"
    width: float = Field(..., gt=0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(-0.5 * self.width, 0.5 * self.width, size)

    def density_sup(self) -> float:
        return 1.0 / self.width

    def abs_moment(self, r: float) -> float:
        return (0.5 * self.width) ** r / (r + 1.0)

    def tail_probability(self, t: float) -> float:
        if t <= 0:
            return 1.0
        return float(max(0.0, 1.0 - 2.0 * t / self.width))

    def cdf(self, v: np.ndarray) -> np.ndarray:
        return np.clip((np.asarray(v, dtype=float) + 0.5 * self.width) / self.width, 0.0, 1.0)

    def support(self) -> Tuple[float, float]:
        return -0.5 * self.width, 0.5 * self.width


class GaussianDistribution(BaseModel):
    """Centred normal density with standard deviation ``sigma``."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["gaussian"] = "gaussian"
    sigma: float = Field(..., gt=0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.normal(0.0, self.sigma, size)

    def density_sup(self) -> float:
        return 1.0 / (self.sigma * math.sqrt(2.0 * math.pi))

    def abs_moment(self, r: float) -> float:
        return float(self.sigma ** r * 2.0 ** (r / 2.0) * special.gamma((r + 1.0) / 2.0) / math.sqrt(math.pi))

    def tail_probability(self, t: float) -> float:
        if t <= 0:
            return 1.0
        return float(special.erfc(t / (self.sigma * math.sqrt(2.0))))

    def cdf(self, v: np.ndarray) -> np.ndarray:
        return special.ndtr(np.asarray(v, dtype=float) / self.sigma)

    def support(self) -> Tuple[float, float]:
        return -math.inf, math.inf


class TabulatedDistribution(BaseModel):
    """
    User density given on a grid, linearly interpolated and renormalised.

    ``tail_exponent`` declares a power-law tail ``|v|**-tail_exponent`` beyond the
    grid; moments of order ``r >= tail_exponent - 1`` are then reported as
    infinite. The table must describe a bounded density; that is not checked.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["table"] = "table"
    grid: List[float]
    density: List[float]
    tail_exponent: Optional[float] = Field(None, gt=1)

    @model_validator(mode="after")
    def _check_table(self):
        if len(self.grid) < 2 or len(self.grid) != len(self.density):
            raise ValueError("grid and density need the same length >= 2")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if min(self.density) < 0 or integrate.trapezoid(self.density, self.grid) <= 0:
            raise ValueError("density must be non-negative with positive mass")
        return self

    @property
    def _v(self) -> np.ndarray:
        return np.asarray(self.grid, dtype=float)

    @property
    def _rho(self) -> np.ndarray:
        rho = np.asarray(self.density, dtype=float)
        return rho / integrate.trapezoid(rho, self._v)

    def _cumulative(self) -> np.ndarray:
        cumulative = integrate.cumulative_trapezoid(self._rho, self._v, initial=0.0)
        return cumulative / cumulative[-1]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.interp(rng.random(size), self._cumulative(), self._v)

    def density_sup(self) -> float:
        return float(self._rho.max())

    def abs_moment(self, r: float) -> float:
        if self.tail_exponent is not None and r >= self.tail_exponent - 1.0:
            logger.warning(f"moment of order {r} diverges for tail exponent {self.tail_exponent}")
            return math.inf
        return float(integrate.trapezoid(np.abs(self._v) ** r * self._rho, self._v))

    def tail_probability(self, t: float) -> float:
        if t <= 0:
            return 1.0
        inside = self.cdf(np.array([t]))[0] - self.cdf(np.array([-t]))[0]
        return float(max(0.0, 1.0 - inside))

    def cdf(self, v: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(v, dtype=float), self._v, self._cumulative(), left=0.0, right=1.0)

    def support(self) -> Tuple[float, float]:
        if self.tail_exponent is not None:
            return -math.inf, math.inf
        nonzero = self._v[self._rho > 0]
        return float(nonzero.min()), float(nonzero.max())


class FreeDistribution(BaseModel):
    """The degenerate potential ``V = 0``, used for closed-form anchors."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["free"] = "free"

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.zeros(size)

    def density_sup(self) -> float:
        return math.inf

    def abs_moment(self, r: float) -> float:
        return 1.0 if r == 0 else 0.0

    def tail_probability(self, t: float) -> float:
        return 1.0 if t <= 0 else 0.0

    def cdf(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v, dtype=float) >= 0).astype(float)

    def support(self) -> Tuple[float, float]:
        return 0.0, 0.0


PotentialDistribution = Annotated[
    Union[UniformDistribution, GaussianDistribution, TabulatedDistribution, FreeDistribution],
    Field(discriminator="kind"),
]

_distribution_adapter = TypeAdapter(PotentialDistribution)


def make_distribution(spec) -> PotentialDistribution:
    """Build a distribution from a mapping such as ``{"kind": "uniform", "width": 1}``."""
    if isinstance(spec, (UniformDistribution, GaussianDistribution, TabulatedDistribution, FreeDistribution)):
        return spec
    try:
        return _distribution_adapter.validate_python(spec)
    except ValidationError as e:
        raise ParameterError(f"invalid potential distribution {spec!r}: {e}") from e


def distribution_label(dist: PotentialDistribution) -> str:
    if isinstance(dist, UniformDistribution):
        return f"uniform(W={dist.width:g})"
    if isinstance(dist, GaussianDistribution):
        return f"gaussian(sigma={dist.sigma:g})"
    if isinstance(dist, TabulatedDistribution):
        return f"table({len(dist.grid)} points)"
    return "free"


class PotentialField(BaseModel):
    """Potential values in shell-major order together with their provenance."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    seed: int
    distribution: PotentialDistribution
    geometry: TreeGeometry

    @model_validator(mode="after")
    def _check_length(self):
        if self.values.shape != (self.geometry.vertex_count,):
            raise ValueError(
                f"field has {self.values.shape} values for {self.geometry.vertex_count} vertices"
            )
        return self

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def sample_field(
    dist: PotentialDistribution,
    geometry: TreeGeometry,
    seed: int,
    executor: Optional[Executor] = None,
) -> PotentialField:
    """Draw one i.i.d. value per vertex, reproducibly from ``(dist, geometry, seed)``."""
    dist = make_distribution(dist)
    n = geometry.vertex_count

    def draw(block):
        block_id, start, stop = block
        return dist.sample(block_generator(seed, STREAM_FIELD, block_id), stop - start)

    values = np.concatenate(run_blocks(draw, block_ranges(n), executor)) if n else np.zeros(0)
    logger.debug(f"Sampled {distribution_label(dist)} field on {n} vertices (seed={seed})")
    return PotentialField(values=values, seed=seed, distribution=dist, geometry=geometry)


def density_sup(dist: PotentialDistribution) -> float:
    """``||rho||_inf``."""
    return make_distribution(dist).density_sup()


def abs_moment(dist: PotentialDistribution, r: float) -> float:
    """``E|V|**r``; ``inf`` when the declared tail makes it diverge."""
    if r < 0:
        raise ParameterError(f"moment order must be >= 0, got {r}")
    return make_distribution(dist).abs_moment(r)


def tail_probability(dist: PotentialDistribution, t: float) -> float:
    """``P(|V| >= t)``."""
    return make_distribution(dist).tail_probability(t)


def almost_sure_spectrum(dist: PotentialDistribution, branching: int) -> Tuple[float, float]:
    """Enclosure ``[-2 sqrt K, 2 sqrt K] + supp rho`` of the almost-sure spectrum."""
    low, high = make_distribution(dist).support()
    edge = 2.0 * math.sqrt(branching)
    return low - edge, high + edge
