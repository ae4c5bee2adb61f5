# src/bethe_transport/population.py

"""
Population dynamics for the forward Green function of the infinite tree.

A pool of complex samples represents the distributional fixed point of

    Gamma = 1 / (V - zeta - Gamma_1 - ... - Gamma_K)

Each sweep replaces the whole pool synchronously; entry blocks draw from their
own Philox streams keyed by ``(seed, STREAM_POOL_SWEEP, sweep, block)`` so the
result does not depend on how blocks are scheduled.
"""

import logging
import math
from concurrent.futures import Executor
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from .config import RefinementConfig
from .disorder import PotentialDistribution, distribution_label, make_distribution
from .errors import NumericalAbort, ParameterError, PoolNotStationary
from .estimates import LinearFit, MomentEstimate, mean_estimate, proportion_estimate, weighted_linear_fit
from .green import ComplexEnergy, free_forward_green
from .utils import (
    STREAM_PATH,
    STREAM_POOL_SWEEP,
    STREAM_ROOT,
    block_generator,
    block_ranges,
    run_blocks,
)

logger = logging.getLogger(__name__)

HEAVY_TAIL_SHARE = 0.1
DEFAULT_S_GRID = (0.7, 0.8, 0.9, 0.95)
PHASE_MARGIN = 2.0
LOW_CONFIDENCE_RESIDUAL = 3.0


class GreenPool(BaseModel):
    """Population of forward Green samples at one spectral parameter."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    entries: np.ndarray
    energy: ComplexEnergy
    distribution: PotentialDistribution
    branching: int = Field(..., ge=2)
    sweeps_done: int = Field(0, ge=0)
    seed: int = 0
    min_burn_in: int = Field(100, ge=0)
    flags: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_entries(self):
        if self.entries.ndim != 1 or self.entries.size < 2:
            raise ValueError("a pool needs a 1-d array of at least two entries")
        if not np.all(self.entries.imag > 0):
            raise ValueError("pool entries must have positive imaginary part")
        return self

    @property
    def size(self) -> int:
        return int(self.entries.size)

    @property
    def zeta(self) -> complex:
        return self.energy.zeta

    @property
    def is_burned_in(self) -> bool:
        return self.sweeps_done >= self.min_burn_in

    def require_burned_in(self) -> None:
        if not self.is_burned_in:
            raise ParameterError(
                f"pool has {self.sweeps_done} sweeps, below the burn-in minimum {self.min_burn_in}"
            )

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        """Entries chosen uniformly with replacement."""
        return self.entries[rng.integers(0, self.size, size=size)]

    def draw_sums(self, rng: np.random.Generator, size: int, count: int) -> np.ndarray:
        """``size`` sums of ``count`` independent draws each."""
        if count == 0:
            return np.zeros(size, dtype=complex)
        return self.draw(rng, (size, count)).sum(axis=1)

    def describe(self) -> str:
        return (
            f"pool[{self.size}] K={self.branching} zeta={self.energy.label()} "
            f"{distribution_label(self.distribution)} sweeps={self.sweeps_done}"
        )


class StationarityReport(BaseModel):
    """Drift of the mean and variance of ``Im Gamma`` between two pool states."""

    mean_before: float
    mean_after: float
    mean_drift: float
    variance_drift: float
    stationary: bool


class FreeEnergyEstimate(BaseModel):
    """Slope of ``log E|G(0,x_n)|**s`` against ``n``."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    s: float
    energy: ComplexEnergy
    slope: float
    intercept: float
    slope_std_error: float
    per_length: List[Tuple[int, float, float]]
    fit_residual: float
    flags: List[str] = Field(default_factory=list)


class InverseMomentEstimate(MomentEstimate):
    """``E[(Im G)**-p]`` with its heavy-tail diagnostics."""

    max_share: float = 0.0
    tail_exponent: Optional[float] = None


class PowerLawFit(BaseModel):
    """Fit of ``log F(x) = exponent * log x + const`` over the smallest resolvable decade."""

    exponent: float
    std_error: float
    x_grid: List[float]
    values: List[float]
    counts: List[int]
    flags: List[str] = Field(default_factory=list)


class PhaseVerdict(BaseModel):
    """Phase label at one energy, with the extrapolated value at ``s = 1`` and its margin."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    classification: Literal["ac-like", "pp-like", "undetermined"]
    margin: float
    value_at_one: float
    std_error: float
    per_s: List[Tuple[float, float, float]]
    lyapunov: Optional[float] = None
    lyapunov_std_error: Optional[float] = None
    flags: List[str] = Field(default_factory=list)


# -- pool construction and evolution --------------------------------------------


def init_pool(
    dist: PotentialDistribution,
    branching: int,
    zeta: ComplexEnergy,
    size: int,
    seed: int,
    min_burn_in: int = 100,
) -> GreenPool:
    """Pool with every entry at the free fixed point ``Gamma_free(zeta)``."""
    if size < 2:
        raise ParameterError(f"pool size must be >= 2, got {size}")
    entries = np.full(size, free_forward_green(zeta.zeta, branching), dtype=complex)
    return GreenPool(
        entries=entries,
        energy=zeta,
        distribution=make_distribution(dist),
        branching=branching,
        seed=seed,
        min_burn_in=min_burn_in,
    )


def _check_herglotz(values: np.ndarray, where: str, potentials: Optional[np.ndarray] = None) -> None:
    bad = ~(np.isfinite(values) & (values.imag > 0))
    if np.any(bad):
        first = int(np.argmax(bad))
        diagnostics = {"where": where, "index": first, "value": values[first]}
        if potentials is not None:
            diagnostics["potential"] = float(potentials[first])
        raise NumericalAbort("pool update left the upper half plane", diagnostics)


def _sweep(pool: GreenPool, sweep_index: int, executor: Optional[Executor]) -> np.ndarray:
    z = pool.zeta

    def update(block):
        block_id, start, stop = block
        rng = block_generator(pool.seed, STREAM_POOL_SWEEP, sweep_index, block_id)
        V = pool.distribution.sample(rng, stop - start)
        new = 1.0 / (V - z - pool.draw_sums(rng, stop - start, pool.branching))
        _check_herglotz(new, f"sweep {sweep_index}, block {block_id}", V)
        return new

    return np.concatenate(run_blocks(update, block_ranges(pool.size), executor))


def evolve_pool(pool: GreenPool, sweeps: int, executor: Optional[Executor] = None) -> GreenPool:
    """Apply ``sweeps`` synchronous full-pool replacements."""
    if sweeps < 1:
        raise ParameterError(f"sweeps must be >= 1, got {sweeps}")
    current = pool
    for _ in range(sweeps):
        entries = _sweep(current, current.sweeps_done, executor)
        current = current.model_copy(update={"entries": entries, "sweeps_done": current.sweeps_done + 1})
    logger.debug(f"Evolved {current.describe()}")
    return current


def check_stationarity(before: GreenPool, after: GreenPool) -> StationarityReport:
    """
    Compare mean and variance of ``Im Gamma`` between two pool states.

    Drifts are measured in combined standard errors; the variance error uses the
    empirical fourth central moment.
    """

    def stats(pool):
        im = pool.entries.imag
        n = im.size
        mean = float(im.mean())
        var = float(im.var(ddof=1))
        m4 = float(np.mean((im - mean) ** 4))
        return mean, var, var / n, max(m4 - var * var, 0.0) / n

    m1, v1, se_m1, se_v1 = stats(before)
    m2, v2, se_m2, se_v2 = stats(after)
    mean_scale = math.sqrt(se_m1 + se_m2)
    var_scale = math.sqrt(se_v1 + se_v2)
    mean_drift = abs(m2 - m1) / mean_scale if mean_scale > 0 else (0.0 if math.isclose(m1, m2, rel_tol=1e-12) else math.inf)
    var_drift = abs(v2 - v1) / var_scale if var_scale > 0 else (0.0 if math.isclose(v1, v2, rel_tol=1e-12, abs_tol=1e-300) else math.inf)
    return StationarityReport(
        mean_before=m1,
        mean_after=m2,
        mean_drift=mean_drift,
        variance_drift=var_drift,
        stationary=mean_drift < 2.0 and var_drift < 2.0,
    )


def burn_in(
    pool: GreenPool,
    sweeps: Optional[int] = None,
    window: int = 10,
    max_extensions: Optional[int] = None,
    executor: Optional[Executor] = None,
) -> GreenPool:
    """
    Run the burn-in sweeps, then extend by ``window`` sweeps until the drift
    test passes.

    Args:
        pool: Freshly initialised pool
        sweeps: Initial sweeps (defaults to the pool's burn-in minimum)
        window: Sweeps between the two states compared by the drift test
        max_extensions: Extra windows allowed after the first; defaults to
            ``RefinementConfig.max_burn_in_extensions``
        executor: Optional executor for the sweep blocks

    Returns:
        The evolved pool, flagged ``not_stationary`` when every window failed
    """
    if max_extensions is None:
        max_extensions = RefinementConfig().max_burn_in_extensions
    sweeps = pool.min_burn_in if sweeps is None else sweeps
    state = {"pool": evolve_pool(pool, sweeps, executor) if sweeps > 0 else pool}

    @retry(
        stop=stop_after_attempt(max_extensions + 1),
        retry=retry_if_exception_type(PoolNotStationary),
        reraise=True,
    )
    def _extend():
        before = state["pool"]
        after = evolve_pool(before, window, executor)
        state["pool"] = after
        report = check_stationarity(before, after)
        if not report.stationary:
            logger.debug(f"Drift {report.mean_drift:.2f}/{report.variance_drift:.2f} sigma after {after.sweeps_done} sweeps")
            raise PoolNotStationary(after.sweeps_done, max(report.mean_drift, report.variance_drift))
        return after

    try:
        result = _extend()
        logger.info(f"Burn-in done: {result.describe()}")
        return result
    except PoolNotStationary as e:
        logger.warning(f"Pool still drifting after {e.sweeps_done} sweeps ({e.drift:.2f} sigma)")
        current = state["pool"]
        return current.model_copy(update={"flags": current.flags + ["not_stationary"]})


# -- root samples and distribution functions --------------------------------------


def root_samples_with_children(
    pool: GreenPool, n: int, executor: Optional[Executor] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    ``n`` draws of ``G(0,0)`` together with ``sum Im Gamma`` over the K root
    children used for each draw.
    """
    pool.require_burned_in()
    if n < 1:
        raise ParameterError(f"need at least one root sample, got {n}")
    z = pool.zeta

    def draw(block):
        block_id, start, stop = block
        rng = block_generator(pool.seed, STREAM_ROOT, pool.sweeps_done, block_id)
        V = pool.distribution.sample(rng, stop - start)
        children = pool.draw(rng, (stop - start, pool.branching))
        g = 1.0 / (V - z - children.sum(axis=1))
        _check_herglotz(g, f"root block {block_id}", V)
        return g, children.imag.sum(axis=1)

    parts = run_blocks(draw, block_ranges(n), executor)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def root_samples(pool: GreenPool, n: int, executor: Optional[Executor] = None) -> np.ndarray:
    """``n`` independent draws of ``G(0,0; zeta)``; the root has K children."""
    return root_samples_with_children(pool, n, executor)[0]


def cdf_im(samples: np.ndarray, x: float) -> MomentEstimate:
    """``F(x) = P(Im G <= x)``."""
    if x < 0:
        raise ParameterError(f"x must be >= 0, got {x}")
    return proportion_estimate(np.asarray(samples).imag <= x)


def cdf_abs(samples: np.ndarray, y: float) -> MomentEstimate:
    """``H(y) = P(|G| <= y)``."""
    if y < 0:
        raise ParameterError(f"y must be >= 0, got {y}")
    return proportion_estimate(np.abs(np.asarray(samples)) <= y)


def power_law_tail(
    samples: np.ndarray,
    x_grid: Optional[Sequence[float]] = None,
    min_count: int = 10,
    points: int = 5,
) -> PowerLawFit:
    """
    Fit the small-``x`` power law of ``F(x) = P(Im G <= x)``.

    Without ``x_grid`` the grid is ``points`` log-spaced values over the decade
    starting at the ``min_count``-th smallest ``Im G``, so every grid point has
    at least ``min_count`` samples below it.
    """
    im = np.sort(np.asarray(samples).imag)
    n = im.size
    flags: List[str] = []
    if x_grid is None:
        if n < min_count or im[min_count - 1] <= 0:
            return PowerLawFit(exponent=math.nan, std_error=math.inf, x_grid=[], values=[], counts=[], flags=["insufficient_counts"])
        x_low = float(im[min_count - 1])
        x_grid = np.geomspace(x_low, 10.0 * x_low, points)
    x_grid = np.asarray(x_grid, dtype=float)
    counts = np.searchsorted(im, x_grid, side="right")
    values = counts / n
    if np.any(counts < min_count):
        flags.append("insufficient_counts")
    if np.all(counts == counts[0]):
        flags.append("degenerate")
    usable = counts > 0
    if "degenerate" in flags or usable.sum() < 2:
        return PowerLawFit(
            exponent=math.nan,
            std_error=math.inf,
            x_grid=x_grid.tolist(),
            values=values.tolist(),
            counts=counts.tolist(),
            flags=flags,
        )
    p = values[usable]
    # Binomial error of F propagated to log F.
    sigma = np.sqrt(p * (1.0 - p) / n) / p
    fit = weighted_linear_fit(np.log(x_grid[usable]), np.log(p), sigma)
    return PowerLawFit(
        exponent=fit.slope,
        std_error=fit.slope_std_error,
        x_grid=x_grid.tolist(),
        values=values.tolist(),
        counts=counts.tolist(),
        flags=flags,
    )


def inverse_moment(samples: np.ndarray, p: float) -> InverseMomentEstimate:
    """
    ``E[(Im G)**-p]``.

    When one sample carries more than a tenth of the sum the estimate is flagged
    ``heavy_tail`` and the tail exponent of ``F`` is attached.
    """
    im = np.asarray(samples).imag
    if p < 0:
        raise ParameterError(f"p must be >= 0, got {p}")
    if p == 0:
        return InverseMomentEstimate(mean=1.0, std_error=0.0, n_samples=im.size)
    values = im ** (-p)
    est = mean_estimate(values)
    total = float(values.sum())
    share = float(values.max()) / total if total > 0 else 0.0
    flags: List[str] = []
    tail_exponent = None
    if share > HEAVY_TAIL_SHARE:
        flags.append("heavy_tail")
        tail = power_law_tail(samples)
        tail_exponent = None if math.isnan(tail.exponent) else tail.exponent
        logger.warning(f"Inverse moment p={p:g}: one sample carries {share:.0%} of the sum (tail exponent {tail_exponent})")
    return InverseMomentEstimate(
        mean=est.mean,
        std_error=est.std_error,
        n_samples=est.n_samples,
        flags=flags,
        max_share=share,
        tail_exponent=tail_exponent,
    )


# -- path moments and free energy ---------------------------------------------------


def path_log_amplitudes(
    pool: GreenPool, n: int, n_samples: int, executor: Optional[Executor] = None
) -> np.ndarray:
    """
    ``log |G(0, x_n)|`` along independent root-to-depth-``n`` paths.

    The path is built from its far end: the end vertex sees K pool draws, every
    other path vertex (root included) sees its on-path child plus K-1 pool
    draws. Samples for a given ``n`` are shared by every exponent ``s``.
    """
    pool.require_burned_in()
    if n < 1:
        raise ParameterError(f"path length must be >= 1, got {n}")
    if n_samples < 2:
        raise ParameterError(f"need at least two path samples, got {n_samples}")
    z = pool.zeta
    K = pool.branching

    def draw(block):
        block_id, start, stop = block
        m = stop - start
        rng = block_generator(pool.seed, STREAM_PATH, pool.sweeps_done, n, block_id)
        gamma = 1.0 / (pool.distribution.sample(rng, m) - z - pool.draw_sums(rng, m, K))
        log_abs = np.log(np.abs(gamma))
        for _ in range(n - 1):
            gamma = 1.0 / (pool.distribution.sample(rng, m) - z - gamma - pool.draw_sums(rng, m, K - 1))
            log_abs += np.log(np.abs(gamma))
        g00 = 1.0 / (pool.distribution.sample(rng, m) - z - gamma - pool.draw_sums(rng, m, K - 1))
        log_abs += np.log(np.abs(g00))
        bad = ~np.isfinite(log_abs)
        if np.any(bad):
            first = int(np.argmax(bad))
            raise NumericalAbort("non-finite path product", {"n": n, "block": block_id, "sample": first})
        return log_abs

    return np.concatenate(run_blocks(draw, block_ranges(n_samples), executor))


def _log_moment(log_abs: np.ndarray, s: float) -> Tuple[float, float]:
    """``log mean exp(s * log_abs)`` and the standard error of that logarithm."""
    scaled = s * log_abs
    top = float(scaled.max())
    weights = np.exp(scaled - top)
    mean = float(weights.mean())
    rel_error = float(weights.std(ddof=1)) / (mean * math.sqrt(weights.size))
    return top + math.log(mean), rel_error


def fractional_path_moment(
    pool: GreenPool,
    s: float,
    n: int,
    n_samples: int,
    executor: Optional[Executor] = None,
) -> MomentEstimate:
    """``E|G(0, x_n; zeta)|**s`` from fresh paths hanging off the pool."""
    if not 0 < s <= 2:
        raise ParameterError(f"s must lie in (0, 2], got {s}")
    values = np.exp(s * path_log_amplitudes(pool, n, n_samples, executor))
    return mean_estimate(values)


def free_energy(
    pool: GreenPool,
    s: float,
    n_range: Sequence[int],
    n_samples: int,
    executor: Optional[Executor] = None,
    log_amplitudes: Optional[dict] = None,
) -> FreeEnergyEstimate:
    """
    Weighted least-squares slope of ``log E|G(0,x_n)|**s`` against ``n``.

    Args:
        pool: Burned-in pool at the target ``zeta``
        s: Fractional exponent in ``[0, 2]``
        n_range: At least four path lengths, the largest >= 20
        n_samples: Paths per length
        executor: Optional executor for the path blocks
        log_amplitudes: Optional cache ``{n: log|G(0,x_n)|}`` shared across
            exponents

    Returns:
        FreeEnergyEstimate whose per-length values are the finite-volume
        log-moments
    """
    n_range = sorted(set(int(n) for n in n_range))
    if len(n_range) < 4 or n_range[-1] < 20:
        raise ParameterError(f"need >= 4 path lengths with max >= 20, got {n_range}")
    if not 0 <= s <= 2:
        raise ParameterError(f"s must lie in [0, 2], got {s}")
    cache = log_amplitudes if log_amplitudes is not None else {}
    per_length = []
    for n in n_range:
        if s == 0:
            per_length.append((n, 0.0, 0.0))
            continue
        if n not in cache:
            cache[n] = path_log_amplitudes(pool, n, n_samples, executor)
        value, error = _log_moment(cache[n], s)
        per_length.append((n, value, error))

    ns = [row[0] for row in per_length]
    fit = weighted_linear_fit(ns, [row[1] for row in per_length], [row[2] for row in per_length])
    flags: List[str] = []
    if fit.residual > LOW_CONFIDENCE_RESIDUAL:
        flags.append("low_confidence")
        logger.warning(f"Free energy fit at s={s:g}, zeta={pool.energy.label()} has residual {fit.residual:.2f}")
    bound = -0.5 * s * math.log(pool.branching)
    if fit.slope > bound + 3.0 * fit.slope_std_error:
        flags.append("apriori_violation")
        logger.warning(f"Free energy slope {fit.slope:.4f} above the a-priori line {bound:.4f}")
    return FreeEnergyEstimate(
        s=s,
        energy=pool.energy,
        slope=fit.slope,
        intercept=fit.intercept,
        slope_std_error=fit.slope_std_error,
        per_length=per_length,
        fit_residual=fit.residual,
        flags=flags,
    )


def lyapunov_exponent(
    pool: GreenPool, n: int, n_samples: int, executor: Optional[Executor] = None
) -> MomentEstimate:
    """Typical decay rate ``-(1/n) E log|G(0, x_n)|``."""
    log_abs = path_log_amplitudes(pool, n, n_samples, executor)
    return mean_estimate(-log_abs / n)


def phase_from_pool(
    pool: GreenPool,
    s_grid: Sequence[float] = DEFAULT_S_GRID,
    n_range: Sequence[int] = (5, 10, 15, 20),
    n_samples: int = 100_000,
    executor: Optional[Executor] = None,
) -> PhaseVerdict:
    """
    Classify the pool's energy from ``phi(s) + s log K`` on an s-grid below one.

    The values are extrapolated linearly to ``s = 1``. The uncertainty combines
    the fit error with the gap between the extrapolation and the last grid value.
    Positive at ``s = 1`` means the path moments do not beat the branching
    entropy (ac-like), negative means they do (pp-like).
    """
    if any(not 0 < s < 1 for s in s_grid) or len(s_grid) < 2:
        raise ParameterError(f"s-grid must hold at least two exponents in (0, 1), got {list(s_grid)}")
    log_k = math.log(pool.branching)
    cache: dict = {}
    per_s = []
    for s in sorted(s_grid):
        fe = free_energy(pool, s, n_range, n_samples, executor, log_amplitudes=cache)
        per_s.append((s, fe.slope + s * log_k, fe.slope_std_error))

    fit: LinearFit = weighted_linear_fit([r[0] for r in per_s], [r[1] for r in per_s], [r[2] for r in per_s])
    value = fit.predict(1.0)
    spread = value - per_s[-1][1]
    sigma = math.sqrt(fit.predict_std_error(1.0) ** 2 + spread ** 2)
    if sigma > 0:
        margin = value / sigma
    else:
        margin = math.copysign(math.inf, value) if value != 0 else 0.0
    if margin >= PHASE_MARGIN:
        classification = "ac-like"
    elif margin <= -PHASE_MARGIN:
        classification = "pp-like"
    else:
        classification = "undetermined"

    lyapunov = mean_estimate(-cache[max(cache)] / max(cache)) if cache else None
    flags: List[str] = []
    if lyapunov is not None and lyapunov.upper(3.0) < log_k:
        # Typical decay slower than the branching entropy forces phi(1) > -log K.
        flags.append("lyapunov_ac")
    if pool.flags:
        flags.extend(pool.flags)
    logger.info(f"Phase at {pool.energy.label()}: {classification} (margin {margin:.2f})")
    return PhaseVerdict(
        classification=classification,
        margin=margin,
        value_at_one=value,
        std_error=sigma,
        per_s=per_s,
        lyapunov=None if lyapunov is None else float(lyapunov.mean),
        lyapunov_std_error=None if lyapunov is None else lyapunov.std_error,
        flags=flags,
    )


def phase_classify(
    dist: PotentialDistribution,
    E: float,
    eta_probe: float = 1e-3,
    s_grid: Sequence[float] = DEFAULT_S_GRID,
    branching: int = 2,
    pool_size: int = 100_000,
    burn_in_sweeps: int = 100,
    n_range: Sequence[int] = (5, 10, 15, 20),
    n_samples: int = 100_000,
    seed: int = 0,
    executor: Optional[Executor] = None,
) -> PhaseVerdict:
    """Build and burn in a pool at ``E + i eta_probe`` and classify it."""
    zeta = ComplexEnergy(real_part=E, imag_part=eta_probe)
    pool = init_pool(dist, branching, zeta, pool_size, seed, min_burn_in=burn_in_sweeps)
    pool = burn_in(pool, executor=executor)
    return phase_from_pool(pool, s_grid, n_range, n_samples, executor)


def second_moment_profile(
    pool: GreenPool,
    n_range: Sequence[int],
    n_samples: int,
    executor: Optional[Executor] = None,
) -> List[Tuple[int, float, float]]:
    """``(n, log(K**n E|G(0,x_n)|**2), std error)`` for every length."""
    rows = []
    log_k = math.log(pool.branching)
    for n in sorted(set(int(n) for n in n_range)):
        value, error = _log_moment(path_log_amplitudes(pool, n, n_samples, executor), 2.0)
        rows.append((n, n * log_k + value, error))
    return rows


def free_density_of_states(E: float, branching: int) -> float:
    """``Im G(0,0; E + i0) / pi`` of the free tree; zero outside ``|E| < 2 sqrt K``."""
    edge = 2.0 * math.sqrt(branching)
    if abs(E) >= edge:
        return 0.0
    # Imaginary part of the upper-half-plane branch at eta -> 0.
    g = 1.0 / (-E - branching * complex(-E, math.sqrt(edge * edge - E * E)) / (2.0 * branching))
    return float(g.imag / math.pi)
