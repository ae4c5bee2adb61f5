# src/bethe_transport/estimates.py

import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)


class MomentEstimate(BaseModel):
    """Monte-Carlo estimate of an expectation; every ``E[.]`` estimator returns one."""

    model_config = ConfigDict(frozen=True)

    mean: Union[float, complex]
    std_error: float = Field(..., ge=0)
    n_samples: int = Field(..., ge=2)
    flags: List[str] = Field(default_factory=list)

    def upper(self, sigmas: float) -> float:
        return float(np.real(self.mean)) + sigmas * self.std_error

    def lower(self, sigmas: float) -> float:
        return float(np.real(self.mean)) - sigmas * self.std_error


class LinearFit(BaseModel):
    """Weighted least-squares line ``y = slope * x + intercept``."""

    slope: float
    intercept: float
    slope_std_error: float
    intercept_std_error: float
    covariance: float = 0.0
    residual: float
    r_squared: float

    def predict(self, x: float) -> float:
        return self.slope * x + self.intercept

    def predict_std_error(self, x: float) -> float:
        var = (x * self.slope_std_error) ** 2 + self.intercept_std_error ** 2 + 2.0 * x * self.covariance
        return math.sqrt(max(var, 0.0))


def mean_estimate(values: np.ndarray, flags: Optional[List[str]] = None) -> MomentEstimate:
    """Sample mean with ``std_error = sample std / sqrt(n)``."""
    values = np.asarray(values)
    n = values.size
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    std = float(np.std(values.real, ddof=1)) if not np.iscomplexobj(values) else float(
        np.sqrt(np.var(values.real, ddof=1) + np.var(values.imag, ddof=1))
    )
    mean = complex(values.mean()) if np.iscomplexobj(values) else float(values.mean())
    return MomentEstimate(mean=mean, std_error=std / math.sqrt(n), n_samples=n, flags=flags or [])


def proportion_estimate(mask: np.ndarray) -> MomentEstimate:
    """Empirical probability with binomial standard error."""
    mask = np.asarray(mask, dtype=bool)
    n = mask.size
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    p = float(np.count_nonzero(mask)) / n
    return MomentEstimate(mean=p, std_error=math.sqrt(p * (1.0 - p) / n), n_samples=n)


def weighted_linear_fit(x: Sequence[float], y: Sequence[float], sigma: Optional[Sequence[float]] = None) -> LinearFit:
    """
    Fit a line through ``(x, y)`` with weights ``1/sigma``.

    Zero ``sigma`` entries (exact data) are replaced by a tiny floor so the
    weights stay finite. Standard errors come from the unscaled covariance when
    ``sigma`` is given and from the residual scatter otherwise.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("a line needs at least two points")
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)
        positive = sigma[sigma > 0]
        if positive.size == 0:
            sigma = None
        else:
            sigma = np.where(sigma > 0, sigma, 1e-3 * positive.min())
    weights = np.ones_like(x) if sigma is None else 1.0 / sigma
    design = np.vstack([x, np.ones_like(x)]).T
    wd = design * weights[:, None]
    wy = y * weights
    coeffs, *_ = np.linalg.lstsq(wd, wy, rcond=None)
    slope, intercept = (float(c) for c in coeffs)
    fitted = design @ coeffs
    residuals = y - fitted
    chi2 = float(np.sum((residuals * weights) ** 2))
    dof = max(x.size - 2, 1)
    normal = wd.T @ wd
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.inf)
    if sigma is None or x.size > 2 and chi2 / dof > 1.0:
        # Scatter larger than the quoted errors inflates the covariance.
        cov = cov * (chi2 / dof)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum(residuals ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(
        slope=slope,
        intercept=intercept,
        slope_std_error=float(math.sqrt(max(cov[0, 0], 0.0))),
        intercept_std_error=float(math.sqrt(max(cov[1, 1], 0.0))),
        covariance=float(cov[0, 1]),
        residual=math.sqrt(chi2 / dof),
        r_squared=r_squared,
    )
