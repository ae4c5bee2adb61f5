# src/bethe_transport/bounds.py

"""
Verification harness: the ballistic certificate and one check per inequality.

Every check returns a BoundReport whose verdict follows from its margin alone.
For a one-sided statement ``estimate <= threshold`` the margin is
``(threshold - estimate) / std_error`` and the check passes when the margin is
at least ``-sigmas``. Deterministic checks (no sampling error) use a log ratio
or relative gap as their margin and pass at margin >= 0.

Each check takes ``negative_control=True`` to inject a violation into its own
inputs; a harness that still passes then is broken.
"""

import logging
import math
from concurrent.futures import Executor
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize

from .disorder import PotentialDistribution, PotentialField, density_sup, make_distribution, tail_probability
from .dynamics import (
    BOUNDARY_SHELLS,
    EnergyWindow,
    ShellProfile,
    TransportReport,
    ballistic_fit,
    hat_distribution,
    hat_moments,
    lingering,
)
from .errors import ParameterError
from .estimates import mean_estimate, weighted_linear_fit
from .green import ComplexEnergy
from .population import (
    FreeEnergyEstimate,
    PowerLawFit,
    burn_in,
    cdf_abs,
    cdf_im,
    init_pool,
    path_log_amplitudes,
)
from .tree import TreeGeometry
from .utils import stable_hash

logger = logging.getLogger(__name__)

BoundId = Literal[
    "ballistic_tail",
    "second_moment_decay",
    "free_energy_apriori",
    "wegner",
    "lemma6",
    "lemma6_1",
    "lemma6_2",
    "theorem1_lingering",
    "F_power_law",
    "recursion_step",
    "recursive_inequality",
    "hat_moment_growth",
    "oracle_equivalence",
    "rage_trend",
    "transport_regime",
]

Verdict = Literal["pass", "fail", "inconclusive"]

INEQUALITY_SLACK = 4.0
HEAVY_TAIL_SHARE = 0.1

REFERENCES: Dict[str, str] = {
    "ballistic_tail": "Pr(|x| > v t) <= exp(-mu t (v - v_hat)) for v > v_hat, any potential",
    "second_moment_decay": "E|G(0,x;E+i eta)|^2 <= C K^-|x| inside the ac window",
    "free_energy_apriori": "phi(s; zeta) <= -(s/2) log K for s in [0, 2]",
    "wegner": "E[Im G(0,0;E+i eta)] / pi <= ||rho||_inf (reference constant)",
    "lemma6": "distribution-function bounds for |G(0,0)| and Im G(0,0)",
    "lemma6_1": "H(x) <= P(|V| >= 1/(4x)) + K P(|G| >= 1/(2Kx)) for |zeta| <= 1/(4x)",
    "lemma6_2": "1 - H(1/x) <= 2 ||rho||_inf x F(x)^K",
    "theorem1_lingering": "E[lingering(b / eta)] <= C(f) b + o(eta), C(f) stable as eta -> 0",
    "F_power_law": "F(x) <= C x^gamma near 0 with gamma >= 1 at desk scale",
    "recursion_step": "F(x) <= F(x/y^2)^K + H(y) and its 4 K^2 ||rho||_inf form",
    "recursive_inequality": "Im G >= |G|^2 sum_children Im Gamma",
    "hat_moment_growth": "M_hat(beta, eta) <= C eta^-beta",
    "oracle_equivalence": "recursive column equals the dense solve",
    "rage_trend": "lim_{eta -> 0} E[lingering(b)] = 0 at fixed b inside an ac window",
    "transport_regime": "M(1,t) grows linearly under weak disorder and stays bounded under strong disorder",
}


class BallisticCertificate(BaseModel):
    """Speed bound ``v_hat = min g(alpha)/alpha`` for ``g(alpha) = sum_d c_d exp(alpha d)``."""

    model_config = ConfigDict(frozen=True)

    branching: int
    v_hat: float
    mu: float
    closed_form_v_hat: float
    closed_form_mu: float

    def g(self, alpha: float) -> float:
        return (self.branching + 1) * math.exp(alpha)

    def tail_bound(self, v: float, t: float) -> float:
        return math.exp(-self.mu * t * (v - self.v_hat))


class BoundReport(BaseModel):
    """Verdict of one inequality check."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    bound_id: BoundId
    inputs_digest: str
    estimates: Dict[str, float] = Field(default_factory=dict)
    thresholds: Dict[str, float] = Field(default_factory=dict)
    margin: float
    verdict: Verdict
    reference: str = ""
    flags: List[str] = Field(default_factory=list)
    children: List["BoundReport"] = Field(default_factory=list)

    @property
    def failed(self) -> bool:
        return self.verdict == "fail"


def _report(
    bound_id: str,
    inputs: Mapping,
    margin: float,
    verdict: Verdict,
    estimates: Optional[Dict[str, float]] = None,
    thresholds: Optional[Dict[str, float]] = None,
    flags: Optional[List[str]] = None,
    children: Optional[List[BoundReport]] = None,
) -> BoundReport:
    report = BoundReport(
        bound_id=bound_id,
        inputs_digest=stable_hash(dict(inputs)),
        estimates=estimates or {},
        thresholds=thresholds or {},
        margin=margin,
        verdict=verdict,
        reference=REFERENCES[bound_id],
        flags=flags or [],
        children=children or [],
    )
    log = logger.warning if verdict == "fail" else logger.info
    log(f"{bound_id}: {verdict} (margin {margin:.3g})")
    return report


def one_sided_margin(estimate: float, threshold: float, std_error: float) -> float:
    """``(threshold - estimate) / std_error``; infinite either way when the error is zero."""
    if std_error > 0 and math.isfinite(std_error):
        return (threshold - estimate) / std_error
    if estimate < threshold:
        return math.inf
    return 0.0 if estimate == threshold else -math.inf


def verdict_from_margin(margin: float, sigmas: float) -> Verdict:
    if math.isnan(margin):
        return "inconclusive"
    return "pass" if margin >= -sigmas else "fail"


def _combine(reports: Sequence[BoundReport]) -> Verdict:
    verdicts = [r.verdict for r in reports]
    if "fail" in verdicts:
        return "fail"
    if verdicts and all(v == "pass" for v in verdicts):
        return "pass"
    return "inconclusive"


# -- certificate ----------------------------------------------------------------------


def ballistic_certificate(branching: int, distance_weights: Optional[Mapping[int, float]] = None) -> BallisticCertificate:
    """
    Minimise ``g(alpha) / alpha`` for the hopping kernel's exponential weight.

    ``distance_weights`` maps hopping distance to the number of partners at that
    distance (default: ``K + 1`` nearest neighbours, the tree adjacency). The
    bounded minimiser brackets the optimum and the stationarity condition
    ``alpha g'(alpha) = g(alpha)`` is then solved to machine precision.
    """
    if branching < 2:
        raise ParameterError(f"branching must be >= 2, got {branching}")
    weights = dict(distance_weights or {1: branching + 1})

    def g(alpha):
        return sum(c * math.exp(alpha * d) for d, c in weights.items())

    def dg(alpha):
        return sum(c * d * math.exp(alpha * d) for d, c in weights.items())

    coarse = optimize.minimize_scalar(lambda a: g(a) / a, bounds=(1e-6, 50.0), method="bounded", options={"xatol": 1e-10})
    lo, hi = 0.5 * coarse.x, 2.0 * coarse.x
    mu = optimize.brentq(lambda a: a * dg(a) - g(a), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    v_hat = g(mu) / mu
    closed_v_hat = (branching + 1) * math.e
    if distance_weights is None and abs(v_hat - closed_v_hat) > 1e-8 * closed_v_hat:
        logger.warning(f"Numeric speed {v_hat} differs from (K+1)e = {closed_v_hat}")
    return BallisticCertificate(
        branching=branching,
        v_hat=v_hat,
        mu=mu,
        closed_form_v_hat=closed_v_hat,
        closed_form_mu=1.0,
    )


# -- dynamics checks -------------------------------------------------------------------


def check_ballistic_tail(
    report: TransportReport, cert: BallisticCertificate, negative_control: bool = False
) -> BoundReport:
    """Front tails against ``exp(-mu t (v - v_hat))`` at every clean time and every ``v > v_hat``."""
    worst = math.inf
    tested = 0
    violations = 0
    for profile, tails in zip(report.profiles, report.front_tails):
        t = profile.time
        if t is None or t <= 0 or profile.contaminated:
            continue
        for v, tail in zip(report.v_grid, tails):
            if v <= cert.v_hat:
                continue
            bound = cert.tail_bound(v, t)
            if negative_control:
                tail = max(tail, bound) * math.exp(t)
            tested += 1
            margin = math.log(bound) - math.log(max(tail, 1e-300))
            worst = min(worst, margin)
            if tail > bound * (1.0 + 1e-12):
                violations += 1
    inputs = {"v_grid": report.v_grid, "times": report.times, "v_hat": cert.v_hat, "negative_control": negative_control}
    if tested == 0:
        return _report("ballistic_tail", inputs, math.nan, "inconclusive", flags=["no_clean_points"])
    verdict: Verdict = "fail" if violations else "pass"
    return _report(
        "ballistic_tail",
        inputs,
        worst,
        verdict,
        estimates={"tested": float(tested), "violations": float(violations)},
        thresholds={"v_hat": cert.v_hat, "mu": cert.mu},
    )


TransportRegime = Literal["ballistic", "bounded"]


def ensemble_first_moment(reports: Sequence[TransportReport]) -> Tuple[List[float], List[float]]:
    """Mean ``M(1, t)`` over the fields at every positive time clean in all of them."""
    if not reports:
        return [], []
    times, means = [], []
    for k, t in enumerate(reports[0].times):
        profiles = [r.profiles[k] for r in reports]
        if t <= 0 or any(p.contaminated for p in profiles):
            continue
        shells = np.arange(profiles[0].masses.size, dtype=float)
        times.append(float(t))
        means.append(float(np.mean([np.dot(shells, p.masses) for p in profiles])))
    return times, means


def check_transport_regime(
    reports: Sequence[TransportReport],
    regime: TransportRegime,
    bounded_factor: float = 3.0,
    confidence: float = 0.95,
    negative_control: bool = False,
) -> BoundReport:
    """
    Ensemble first moment against the expected transport regime.

    ``ballistic``: the slope of ``M(1, t)`` on ``t`` has a confidence interval
    above zero; the margin is ``slope / half_width - 1``. ``bounded``:
    ``max_t M(1, t) < bounded_factor * M(1, t_0)`` at the first clean time
    ``t_0``; the margin is the log of their ratio.
    """
    times, m1 = ensemble_first_moment(reports)
    inputs = {"regime": regime, "times": times, "m1": m1, "fields": len(reports), "negative_control": negative_control}
    t = np.asarray(times)
    m = np.asarray(m1)
    if regime == "ballistic":
        if t.size < 3:
            return _report("transport_regime", inputs, math.nan, "inconclusive", flags=["too_few_clean_times", regime])
        if negative_control:
            m = np.full_like(m, m[0])
        fit = ballistic_fit(t, m, confidence)
        half = fit.slope - fit.ci_low
        if half > 0:
            margin = fit.slope / half - 1.0
        else:
            margin = math.inf if fit.slope > 0 else -math.inf
        return _report(
            "transport_regime",
            inputs,
            margin,
            "pass" if fit.ci_low > 0 else "fail",
            estimates={"slope": fit.slope, "ci_low": fit.ci_low, "ci_high": fit.ci_high},
            thresholds={"ci_low": 0.0, "confidence": confidence},
            flags=[regime],
        )
    if t.size < 2 or m[0] <= 0:
        return _report("transport_regime", inputs, math.nan, "inconclusive", flags=["too_few_clean_times", regime])
    if negative_control:
        m = m.copy()
        m[-1] = max(m[-1], 2.0 * bounded_factor * m[0])
    ratio = float(m.max() / m[0])
    margin = math.log(bounded_factor) - math.log(ratio)
    return _report(
        "transport_regime",
        inputs,
        margin,
        "pass" if ratio < bounded_factor else "fail",
        estimates={"m1_first": float(m[0]), "m1_max": float(m.max()), "ratio": ratio},
        thresholds={"ratio": bounded_factor},
        flags=[regime],
    )


def check_hat_moment_growth(
    profiles: Sequence[ShellProfile], beta: float, sigmas: float = 3.0, negative_control: bool = False
) -> BoundReport:
    """Exponent of ``M_hat(beta, eta)`` against ``eta`` must not fall below ``-beta``."""
    clean = [p for p in profiles if p.eta is not None and not p.contaminated and hat_moments(p, beta) > 0]
    inputs = {"beta": beta, "etas": [p.eta for p in profiles], "negative_control": negative_control}
    if len(clean) < 3:
        return _report("hat_moment_growth", inputs, math.nan, "inconclusive", flags=["too_few_clean_etas"])
    log_eta = np.log([p.eta for p in clean])
    log_m = np.log([hat_moments(p, beta) for p in clean])
    if negative_control:
        log_m = log_m - (2.0 * beta + 1.0) * log_eta
    fit = weighted_linear_fit(log_eta, log_m)
    margin = one_sided_margin(-fit.slope, beta, fit.slope_std_error)
    return _report(
        "hat_moment_growth",
        inputs,
        margin,
        verdict_from_margin(margin, sigmas),
        estimates={"exponent": fit.slope, "exponent_std_error": fit.slope_std_error},
        thresholds={"min_exponent": -beta},
    )


class LingeringScan(BaseModel):
    """
    Ensemble means of the lingering probability at radius ``b / eta``, plus the
    per-field lingering at the fixed radius ``fixed_radius`` for the damping trend.
    """

    etas: List[float]
    b_grid: List[float]
    means: List[List[Optional[float]]]
    std_errors: List[List[Optional[float]]]
    n_fields: int
    depth: int
    fixed_radius: float = 1.0
    fixed_values: List[List[float]] = Field(default_factory=list)
    boundary_share: List[float] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)


def lingering_scan(
    fields: Sequence[PotentialField],
    geometry: TreeGeometry,
    window: EnergyWindow,
    b_grid: Sequence[float],
    eta_grid: Sequence[float],
    quad_nodes: int = 32,
    safety_shells: int = BOUNDARY_SHELLS,
    executor: Optional[Executor] = None,
    fixed_radius: float = 1.0,
    rtol: Optional[float] = None,
    max_doublings: Optional[int] = None,
) -> LingeringScan:
    """
    Average ``lingering(hat profile, b / eta)`` over the field ensemble.

    Truncation is judged per radius: a point is left empty (None) when
    ``b / eta`` comes within ``safety_shells`` of the depth, since only then do
    the shells it sums overlap the boundary band. Every profile contributes to
    the points that stay inside. Profiles flagged ``boundary_contaminated`` or
    ``quadrature_not_converged`` are counted in ``flags`` and the mean mass in
    the boundary band is kept per eta in ``boundary_share``.
    """
    etas = sorted((float(e) for e in eta_grid), reverse=True)
    depth = geometry.depth
    means, errors, fixed_values, shares = [], [], [], []
    flags: List[str] = []
    for eta in etas:
        profiles = [
            hat_distribution(f, geometry, window, eta, quad_nodes, rtol, max_doublings, executor=executor) for f in fields
        ]
        for p in profiles:
            flags.extend(flag for flag in p.flags if flag not in flags)
        shares.append(float(np.mean([p.masses[max(0, depth - safety_shells) :].sum() for p in profiles])))
        fixed_values.append([lingering(p, fixed_radius) for p in profiles])
        row_mean, row_error = [], []
        for b in b_grid:
            radius = b / eta
            if radius > depth - safety_shells or len(profiles) < 2:
                row_mean.append(None)
                row_error.append(None)
                continue
            est = mean_estimate(np.asarray([lingering(p, radius) for p in profiles]))
            row_mean.append(float(est.mean))
            row_error.append(est.std_error)
        means.append(row_mean)
        errors.append(row_error)
        logger.info(f"Lingering scan at eta={eta:g} over {len(fields)} fields, boundary share {shares[-1]:.2e}")
    return LingeringScan(
        etas=etas,
        b_grid=[float(b) for b in b_grid],
        means=means,
        std_errors=errors,
        n_fields=len(fields),
        depth=depth,
        fixed_radius=float(fixed_radius),
        fixed_values=fixed_values,
        boundary_share=shares,
        flags=sorted(flags),
    )


def check_theorem1(scan: LingeringScan, sigmas: float = 3.0, min_points: int = 3, negative_control: bool = False) -> BoundReport:
    """
    Linearity in ``b`` at every ``eta`` (R^2 > 0.9) and a slope that does not
    grow as ``eta`` decreases.
    """
    slopes: List[Tuple[float, float, float, float]] = []
    for i, eta in enumerate(scan.etas):
        points = [
            (b, m, e)
            for b, m, e in zip(scan.b_grid, scan.means[i], scan.std_errors[i])
            if m is not None and e is not None
        ]
        if len(points) < min_points:
            continue
        b = np.array([p[0] for p in points])
        m = np.array([p[1] for p in points])
        e = np.array([p[2] for p in points])
        if negative_control:
            m = m * 2.0 ** len(slopes) + 0.5 * len(slopes) * b
        fit = weighted_linear_fit(b, m, e)
        slopes.append((eta, fit.slope, fit.slope_std_error, fit.r_squared))

    inputs = {"scan": scan.model_dump(), "negative_control": negative_control}
    if len(slopes) < 2:
        return _report("theorem1_lingering", inputs, math.nan, "inconclusive", flags=["too_few_safe_points"] + scan.flags)

    children = []
    for eta, slope, error, r2 in slopes:
        margin = r2 - 0.9
        children.append(
            _report(
                "theorem1_lingering",
                {"eta": eta, "slope": slope, "r_squared": r2},
                margin,
                "pass" if r2 > 0.9 else "fail",
                estimates={"eta": eta, "slope": slope, "slope_std_error": error, "r_squared": r2},
                thresholds={"r_squared": 0.9},
                flags=["linearity"],
            )
        )
    worst = math.inf
    for (eta_a, slope_a, err_a, _), (eta_b, slope_b, err_b, _) in zip(slopes, slopes[1:]):
        # eta_b < eta_a: the slope may not grow.
        worst = min(worst, one_sided_margin(slope_b, slope_a, math.hypot(err_a, err_b)))
    trend = _report(
        "theorem1_lingering",
        {"slopes": slopes},
        worst,
        verdict_from_margin(worst, sigmas),
        estimates={f"C_eta={eta:g}": slope for eta, slope, _, _ in slopes},
        flags=["eta_trend"],
    )
    children.append(trend)
    verdict = _combine(children)
    return _report(
        "theorem1_lingering",
        inputs,
        min(worst, min(c.margin for c in children[:-1])),
        verdict,
        estimates={"C_f": slopes[-1][1], "C_f_std_error": slopes[-1][2]},
        flags=list(scan.flags),
        children=children,
    )


def check_rage_trend(
    etas: Sequence[float],
    values: Sequence[Sequence[float]],
    radius: float,
    sigmas: float = 3.0,
    negative_control: bool = False,
    flags: Optional[List[str]] = None,
) -> BoundReport:
    """
    Lingering inside the fixed ball ``|x| < radius`` may not grow as ``eta``
    decreases: the weighted slope of the ensemble mean against ``eta`` must
    stay above ``-sigmas`` standard errors.

    ``values[i]`` holds one lingering value per field at ``etas[i]``.
    """
    rows = []
    for eta, per_field in zip(etas, values):
        if len(per_field) < 2:
            continue
        est = mean_estimate(np.asarray(per_field, dtype=float))
        rows.append((float(eta), float(est.mean), est.std_error))
    rows.sort()
    inputs = {"etas": list(etas), "values": [list(v) for v in values], "radius": radius, "negative_control": negative_control}
    if len(rows) < 2:
        return _report("rage_trend", inputs, math.nan, "inconclusive", flags=["too_few_etas"] + list(flags or []))

    fit = weighted_linear_fit([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])
    slope = fit.slope
    if negative_control:
        slope = -abs(slope) - 1.0 - 10.0 * fit.slope_std_error
    margin = one_sided_margin(-slope, 0.0, fit.slope_std_error)
    return _report(
        "rage_trend",
        inputs,
        margin,
        verdict_from_margin(margin, sigmas),
        estimates={
            "slope": slope,
            "slope_std_error": fit.slope_std_error,
            **{f"lingering_eta={eta:g}": mean for eta, mean, _ in rows},
        },
        thresholds={"slope": 0.0},
        flags=list(flags or []),
    )


# -- Green-function distribution checks ---------------------------------------------


def check_free_energy_apriori(fe: FreeEnergyEstimate, branching: int, sigmas: float = 3.0, negative_control: bool = False) -> BoundReport:
    """``slope + (s/2) log K <= sigmas * fit std error``."""
    estimate = fe.slope + 0.5 * fe.s * math.log(branching)
    if negative_control:
        estimate = estimate + 1.0 + 10.0 * fe.slope_std_error
    inputs = {"fe": fe.model_dump(mode="json"), "K": branching, "negative_control": negative_control}
    if "low_confidence" in fe.flags:
        return _report("free_energy_apriori", inputs, math.nan, "inconclusive", estimates={"excess": estimate}, flags=["low_confidence"])
    margin = one_sided_margin(estimate, 0.0, fe.slope_std_error)
    return _report(
        "free_energy_apriori",
        inputs,
        margin,
        verdict_from_margin(margin, sigmas),
        estimates={"slope": fe.slope, "excess": estimate, "slope_std_error": fe.slope_std_error},
        thresholds={"excess": 0.0},
    )


def check_wegner(
    samples: np.ndarray,
    rho_sup: float,
    sigmas: float = 3.0,
    reference_constant: Optional[float] = None,
    negative_control: bool = False,
) -> BoundReport:
    """Smoothed density of states ``E[Im G]/pi`` against the reference constant ``||rho||_inf``."""
    est = mean_estimate(np.asarray(samples).imag / math.pi)
    threshold = rho_sup if reference_constant is None else reference_constant
    if negative_control:
        threshold = 0.5 * float(est.mean)
    margin = one_sided_margin(float(est.mean), threshold, est.std_error)
    return _report(
        "wegner",
        {"n": est.n_samples, "mean": est.mean, "threshold": threshold, "negative_control": negative_control},
        margin,
        verdict_from_margin(margin, sigmas),
        estimates={"dos": float(est.mean), "dos_std_error": est.std_error},
        thresholds={"reference_constant": threshold},
        flags=["reference_constant"],
    )


def check_lemma6(
    samples: np.ndarray,
    dist: PotentialDistribution,
    branching: int,
    zeta: ComplexEnergy,
    x_grid: Sequence[float],
    sigmas: float = INEQUALITY_SLACK,
    negative_control: bool = False,
) -> BoundReport:
    """Both distribution-function bounds at every admissible grid point."""
    dist = make_distribution(dist)
    K = branching
    rho = density_sup(dist)
    abs_g = np.abs(samples)
    n = abs_g.size
    z = abs(zeta.zeta)

    margins_1, margins_2 = [], []
    for x in x_grid:
        if z <= 1.0 / (4.0 * x):
            lhs = cdf_abs(samples, x)
            far = float(np.count_nonzero(abs_g >= 1.0 / (2.0 * K * x))) / n
            rhs = tail_probability(dist, 1.0 / (4.0 * x)) + K * far
            error = math.hypot(lhs.std_error, K * math.sqrt(far * (1.0 - far) / n))
            value = float(lhs.mean)
            if negative_control:
                value = rhs + 0.1 + 10.0 * error
            margins_1.append((x, one_sided_margin(value, rhs, error)))
        if math.isfinite(rho):
            h = cdf_abs(samples, 1.0 / x)
            f = cdf_im(samples, x)
            F = float(f.mean)
            rhs = 2.0 * rho * x * F ** K
            rhs_error = 2.0 * rho * x * K * F ** (K - 1) * f.std_error
            error = math.hypot(h.std_error, rhs_error)
            value = 1.0 - float(h.mean)
            if negative_control:
                value = rhs + 0.1 + 10.0 * error
            margins_2.append((x, one_sided_margin(value, rhs, error)))

    inputs = {"n": n, "zeta": zeta.label(), "x_grid": list(x_grid), "K": K, "negative_control": negative_control}
    children = []
    for bound_id, margins in (("lemma6_1", margins_1), ("lemma6_2", margins_2)):
        if not margins:
            children.append(_report(bound_id, inputs, math.nan, "inconclusive", flags=["no_admissible_points"]))
            continue
        worst = min(m for _, m in margins)
        children.append(
            _report(
                bound_id,
                inputs,
                worst,
                verdict_from_margin(worst, sigmas),
                estimates={f"margin_x={x:g}": m for x, m in margins},
            )
        )
    margin = min((c.margin for c in children if not math.isnan(c.margin)), default=math.nan)
    return _report("lemma6", inputs, margin, _combine(children), children=children)


def check_recursion_step(
    samples: np.ndarray,
    dist: PotentialDistribution,
    branching: int,
    zeta: ComplexEnergy,
    x_grid: Sequence[float],
    y_grid: Sequence[float],
    sigmas: float = INEQUALITY_SLACK,
    negative_control: bool = False,
) -> BoundReport:
    """
    ``F(x) <= F(x/y^2)^K + H(y)`` on the whole grid and, for ``y < 1/(4|zeta|)``,
    ``F(x) <= F(x/y^2)^K + 4 K^2 ||rho||_inf y F(2Ky)^K + P(|V| >= 1/(4y))``.
    """
    dist = make_distribution(dist)
    K = branching
    rho = density_sup(dist)
    z = abs(zeta.zeta)
    plain, explicit = [], []
    for x in x_grid:
        f_x = cdf_im(samples, x)
        for y in y_grid:
            f_small = cdf_im(samples, x / (y * y))
            power = float(f_small.mean) ** K
            power_error = K * float(f_small.mean) ** (K - 1) * f_small.std_error
            h_y = cdf_abs(samples, y)
            lhs = float(f_x.mean)
            if negative_control:
                lhs = power + float(h_y.mean) + 0.1 + 10.0 * (f_x.std_error + power_error + h_y.std_error)
            rhs = power + float(h_y.mean)
            error = math.sqrt(f_x.std_error ** 2 + power_error ** 2 + h_y.std_error ** 2)
            plain.append(one_sided_margin(lhs, rhs, error))
            if math.isfinite(rho) and y < 1.0 / (4.0 * z):
                f_far = cdf_im(samples, 2.0 * K * y)
                middle = 4.0 * K * K * rho * y * float(f_far.mean) ** K
                middle_error = 4.0 * K ** 3 * rho * y * float(f_far.mean) ** (K - 1) * f_far.std_error
                rhs = power + middle + tail_probability(dist, 1.0 / (4.0 * y))
                error = math.sqrt(f_x.std_error ** 2 + power_error ** 2 + middle_error ** 2)
                explicit.append(one_sided_margin(lhs, rhs, error))

    inputs = {"zeta": zeta.label(), "x_grid": list(x_grid), "y_grid": list(y_grid), "negative_control": negative_control}
    margins = plain + explicit
    worst = min(margins)
    return _report(
        "recursion_step",
        inputs,
        worst,
        verdict_from_margin(worst, sigmas),
        estimates={"worst_plain": min(plain), "worst_explicit": min(explicit) if explicit else math.nan},
        flags=[] if explicit else ["explicit_form_skipped"],
    )


def check_recursive_inequality(
    samples: np.ndarray, child_im_sums: np.ndarray, rtol: float = 1e-12, negative_control: bool = False
) -> BoundReport:
    """Per sample, ``Im G - |G|^2 sum Im Gamma >= -rtol Im G``."""
    g = np.asarray(samples)
    sums = np.asarray(child_im_sums) * (2.0 if negative_control else 1.0)
    gaps = (g.imag - np.abs(g) ** 2 * sums) / g.imag
    worst = float(gaps.min())
    verdict: Verdict = "pass" if worst >= -rtol else "fail"
    return _report(
        "recursive_inequality",
        {"n": g.size, "negative_control": negative_control},
        worst,
        verdict,
        estimates={"worst_relative_gap": worst},
        thresholds={"rtol": rtol},
    )


def check_F_power_law(
    fit: PowerLawFit, floor: float = 1.0, sigmas: float = 3.0, min_points: int = 5, min_count: int = 10,
    negative_control: bool = False,
) -> BoundReport:
    """Fitted small-``x`` exponent of ``F`` must reach ``floor`` at ``sigmas``."""
    inputs = {"fit": fit.model_dump(mode="json"), "floor": floor, "negative_control": negative_control}
    resolvable = sum(1 for c in fit.counts if c >= min_count)
    if "degenerate" in fit.flags or math.isnan(fit.exponent) or resolvable < min_points:
        return _report("F_power_law", inputs, math.nan, "inconclusive", flags=list(fit.flags) or ["insufficient_counts"])
    exponent = 0.0 if negative_control else fit.exponent
    margin = one_sided_margin(-exponent, -floor, fit.std_error)
    return _report(
        "F_power_law",
        inputs,
        margin,
        verdict_from_margin(margin, sigmas),
        estimates={"exponent": exponent, "exponent_std_error": fit.std_error},
        thresholds={"floor": floor},
    )


def check_second_moment_decay(
    dist: PotentialDistribution,
    energies: Sequence[float],
    eta: float,
    n_range: Sequence[int],
    n_samples: int,
    branching: int = 2,
    pool_size: int = 100_000,
    burn_in_sweeps: int = 100,
    seed: int = 0,
    sigmas: float = 3.0,
    negative_control: bool = False,
    executor: Optional[Executor] = None,
) -> BoundReport:
    """
    ``K^n E|G(0,x_n)|^2`` must not grow with ``n`` at any energy of the window.

    Reports the largest value seen as the fitted constant. A path length where
    one sample dominates the second moment makes the check inconclusive.
    """
    log_k = math.log(branching)
    children = []
    c_plus = 0.0
    for i, E in enumerate(energies):
        zeta = ComplexEnergy(real_part=E, imag_part=eta)
        pool = burn_in(init_pool(dist, branching, zeta, pool_size, seed + i, min_burn_in=burn_in_sweeps), executor=executor)
        rows = []
        heavy = False
        for n in sorted(set(int(n) for n in n_range)):
            scaled = 2.0 * path_log_amplitudes(pool, n, n_samples, executor)
            top = float(scaled.max())
            weights = np.exp(scaled - top)
            total = float(weights.sum())
            heavy = heavy or float(weights.max()) / total > HEAVY_TAIL_SHARE
            mean = total / weights.size
            error = float(weights.std(ddof=1)) / (mean * math.sqrt(weights.size))
            value = n * log_k + top + math.log(mean)
            if negative_control:
                value += 0.5 * n
            rows.append((n, value, error))
        c_plus = max(c_plus, max(math.exp(r[1]) for r in rows))
        inputs = {"E": E, "eta": eta, "rows": rows}
        if heavy:
            children.append(_report("second_moment_decay", inputs, math.nan, "inconclusive", flags=["heavy_tail"]))
            continue
        fit = weighted_linear_fit([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])
        margin = one_sided_margin(fit.slope, 0.0, fit.slope_std_error)
        children.append(
            _report(
                "second_moment_decay",
                inputs,
                margin,
                verdict_from_margin(margin, sigmas),
                estimates={"E": E, "slope": fit.slope, "slope_std_error": fit.slope_std_error},
                thresholds={"slope": 0.0},
            )
        )
    margin = min((c.margin for c in children if not math.isnan(c.margin)), default=math.nan)
    return _report(
        "second_moment_decay",
        {"dist": make_distribution(dist).model_dump(), "energies": list(energies), "eta": eta, "negative_control": negative_control},
        margin,
        _combine(children),
        estimates={"C_plus": c_plus},
        children=children,
    )


def check_oracle_equivalence(errors: Sequence[float], rtol: float) -> BoundReport:
    """Largest recursion-vs-dense relative error against ``rtol``."""
    worst = max(errors) if errors else math.nan
    if math.isnan(worst):
        return _report("oracle_equivalence", {"rtol": rtol}, math.nan, "inconclusive")
    margin = math.log10(rtol) - math.log10(max(worst, 1e-300))
    return _report(
        "oracle_equivalence",
        {"errors": list(errors), "rtol": rtol},
        margin,
        "pass" if worst < rtol else "fail",
        estimates={"max_relative_error": worst},
        thresholds={"rtol": rtol},
    )


BoundReport.model_rebuild()
