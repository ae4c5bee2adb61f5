# src/bethe_transport/processor.py

import logging
import math
import time
from concurrent.futures import Executor
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from .bounds import (
    BoundReport,
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
)
from .config import AppConfig, ExperimentConfig
from .disorder import PotentialField, density_sup, sample_field
from .dynamics import EnergyWindow, hat_distribution, hat_moments, lingering, transport_report
from .errors import BetheTransportError, OutputExistsError
from .estimates import mean_estimate
from .green import column_from_forward, dense_oracle, energy, forward_sweep, recursive_inequality_gap, relative_column_error
from .population import (
    GreenPool,
    burn_in,
    cdf_abs,
    cdf_im,
    free_energy,
    init_pool,
    inverse_moment,
    phase_from_pool,
    power_law_tail,
    root_samples_with_children,
)
from .tree import TreeGeometry
from .utils import STREAM_FIELD, STREAM_INIT, derive_seed
from .writers import ESTIMATOR_COLUMNS, Column, CsvWriter, ManifestWriter, ReportWriter, write_pool_snapshot

logger = logging.getLogger(__name__)

# Pool index used for the second-moment check, apart from the per-energy pools.
SECOND_MOMENT_POOL = 1 << 20


class RunResult(BaseModel):
    """What one mode produced."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mode: str
    output_dir: Path
    exit_status: int
    files: List[Path] = Field(default_factory=list)
    flags: List[str] = Field(default_factory=list)
    reports: List[BoundReport] = Field(default_factory=list)
    wall_time: float = 0.0


class ExperimentProcessor:
    """Runs one experiment mode end to end and writes its outputs."""

    def __init__(
        self,
        config: ExperimentConfig,
        output_dir: Path,
        csv_writer: CsvWriter,
        report_writer: ReportWriter,
        manifest_writer: ManifestWriter,
        executor: Optional[Executor] = None,
        app_config: Optional[AppConfig] = None,
        threads: int = 1,
    ):
        """
        Initialize the processor with its writers.

        Args:
            config: Validated experiment config
            output_dir: Directory the run writes into
            csv_writer: Writer for plot-ready tables
            report_writer: Writer for BoundReport batches
            manifest_writer: Writer for the run manifest
            executor: Optional executor for block-parallel work
            app_config: Process-wide defaults (confidence, refinement limits)
            threads: Worker count recorded in the manifest
        """
        self.config = config
        self.output_dir = Path(output_dir)
        self.csv_writer = csv_writer
        self.report_writer = report_writer
        self.manifest_writer = manifest_writer
        self.executor = executor
        self.app_config = app_config or AppConfig()
        self.threads = threads
        self.geometry = TreeGeometry(branching=config.geometry.branching, depth=config.geometry.depth)
        self._pools: Dict[Tuple[float, float], GreenPool] = {}
        self._files: List[Path] = []
        self._flags: List[str] = []
        self._reports: List[BoundReport] = []

    # -- shared helpers -----------------------------------------------------------

    @property
    def sigmas(self) -> float:
        confidence = self.config.tolerances.confidence
        return confidence if confidence is not None else self.app_config.confidence

    @property
    def negative_control(self) -> bool:
        return self.config.checks.negative_control

    def enabled(self, check_id: str) -> bool:
        return check_id in self.config.checks.enabled

    def prepare_output_dir(self, force: bool = False) -> Path:
        """
        Create the output directory, refusing to reuse a non-empty one.

        Raises:
            OutputExistsError: the directory holds files and ``force`` is False
        """
        if self.output_dir.exists():
            if not self.output_dir.is_dir():
                raise OutputExistsError(f"{self.output_dir} exists and is not a directory")
            if any(self.output_dir.iterdir()) and not force:
                raise OutputExistsError(f"{self.output_dir} already holds results; pass --force to overwrite")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir

    def fields(self, count: Optional[int] = None, desc: str = "fields") -> Iterator[Tuple[int, PotentialField]]:
        """Ensemble members with seeds derived from the master seed."""
        count = self.config.sampling.field_count if count is None else count
        for i in tqdm(range(count), desc=desc, unit="field", disable=None):
            seed = derive_seed(self.config.seed, STREAM_FIELD, i)
            yield i, sample_field(self.config.distribution, self.geometry, seed, self.executor)

    def pool(self, E: float, eta: float, index: int) -> GreenPool:
        """Burned-in pool at ``E + i eta``, built once per run."""
        key = (float(E), float(eta))
        if key not in self._pools:
            section = self.config.pool
            pool = init_pool(
                self.config.distribution,
                self.geometry.branching,
                energy(E, eta),
                section.size,
                derive_seed(self.config.seed, STREAM_INIT, index),
                min_burn_in=section.burn_in,
            )
            pool = burn_in(
                pool,
                window=section.window,
                max_extensions=self.app_config.refinement.max_burn_in_extensions,
                executor=self.executor,
            )
            self._flags.extend(pool.flags)
            self._pools[key] = pool
        return self._pools[key]

    def _quadrature_rtol(self) -> float:
        rtol = self.config.tolerances.quadrature_rtol
        return rtol if rtol is not None else self.app_config.refinement.quadrature_rtol

    def _hat_profile(self, field: PotentialField, eta: float):
        profile = hat_distribution(
            field,
            self.geometry,
            EnergyWindow(lower=self.config.spectral.window[0], upper=self.config.spectral.window[1]),
            eta,
            quad_nodes=self.config.spectral.quad_nodes,
            rtol=self._quadrature_rtol(),
            max_doublings=self.app_config.refinement.max_quadrature_doublings,
            executor=self.executor,
            boundary_mass=self.config.tolerances.boundary_mass,
        )
        self._flags.extend(profile.flags)
        return profile

    def _write(self, name: str, columns: List[Column], rows) -> Path:
        path = self.csv_writer.write_table(name, columns, rows)
        self._files.append(path)
        return path

    # -- modes ------------------------------------------------------------------------

    def green_validate(self) -> None:
        """Recursive columns against the dense solve, plus the l2 identity and the root inequality."""
        tol = self.config.tolerances
        rows, errors = [], []
        g00s, child_sums = [], []
        for i, field in self.fields():
            for E in self.config.spectral.energies:
                for eta in self.config.spectral.etas:
                    zeta = energy(E, eta)
                    forward = forward_sweep(field, self.geometry, zeta)
                    column = column_from_forward(forward, self.geometry)
                    error = relative_column_error(column, dense_oracle(field, self.geometry, zeta))
                    l2_error = column.l2_identity_error()
                    gap = recursive_inequality_gap(forward, self.geometry)
                    if l2_error > tol.l2_rtol:
                        logger.warning(f"l2 identity off by {l2_error:.2e} at field {i}, zeta={zeta.label()}")
                        self._flags.append("l2_identity_violation")
                    errors.append(error)
                    g00s.append(column.g00)
                    child_sums.append(float(np.sum(forward.gamma[1 : 1 + self.geometry.branching].imag)))
                    rows.append((i, field.seed, E, eta, column.g00, error, l2_error, gap, column.l2_mass()))
        self._write(
            "green_validate",
            [
                Column("field", "index"),
                Column("field_seed", "-"),
                Column("E", "energy"),
                Column("eta", "energy"),
                Column("g00", "1/energy", complex=True),
                Column("max_relative_error", "1"),
                Column("l2_identity_error", "1"),
                Column("root_inequality_gap", "1"),
                Column("l2_mass", "1/energy^2"),
            ],
            rows,
        )
        self._reports.append(check_oracle_equivalence(errors, tol.oracle_rtol))
        if self.enabled("recursive_inequality"):
            self._reports.append(
                check_recursive_inequality(np.asarray(g00s), np.asarray(child_sums), negative_control=self.negative_control)
            )

    def pool_run(self) -> None:
        """Burned-in pools per spectral parameter: distribution functions, moments, free energies, snapshots."""
        spectral = self.config.spectral
        sampling = self.config.sampling
        rows, fe_rows = [], []
        points = [(E, eta) for E in spectral.energies for eta in spectral.etas]
        for index, (E, eta) in enumerate(tqdm(points, desc="pools", unit="pool", disable=None)):
            pool = self.pool(E, eta, index)
            zeta = pool.zeta
            samples, _ = root_samples_with_children(pool, self.config.pool.root_samples, self.executor)
            n = samples.size
            im_mean = mean_estimate(samples.imag)
            rows.append(("im_g_mean", float(im_mean.mean), im_mean.std_error, n, zeta, ""))
            rows.append(("density_of_states", float(im_mean.mean) / math.pi, im_mean.std_error / math.pi, n, zeta, ""))
            for x in spectral.x_grid:
                f = cdf_im(samples, x)
                h = cdf_abs(samples, x)
                rows.append(("F", float(f.mean), f.std_error, n, zeta, x))
                rows.append(("H", float(h.mean), h.std_error, n, zeta, x))
            for p in spectral.inverse_powers:
                inv = inverse_moment(samples, p)
                rows.append(("inverse_moment", float(inv.mean), inv.std_error, n, zeta, p))
            tail = power_law_tail(samples)
            rows.append(("F_exponent", tail.exponent, tail.std_error, n, zeta, ""))

            cache: dict = {}
            for s in spectral.s_values:
                fe = free_energy(pool, s, sampling.n_range, sampling.path_samples, self.executor, log_amplitudes=cache)
                self._flags.extend(fe.flags)
                rows.append(("free_energy", fe.slope, fe.slope_std_error, sampling.path_samples, zeta, s))
                for length, value, error in fe.per_length:
                    fe_rows.append((E, eta, s, length, value, error))

            snapshot, sidecar = write_pool_snapshot(pool, self.output_dir / f"pool_{index:03d}.bin")
            self._files.extend([snapshot, sidecar])
        self._write("pool_estimates", ESTIMATOR_COLUMNS, rows)
        self._write(
            "free_energy",
            [
                Column("E", "energy"),
                Column("eta", "energy"),
                Column("s", "1"),
                Column("n", "shells"),
                Column("log_moment", "1"),
                Column("std_error", "1"),
            ],
            fe_rows,
        )

    def phase_map(self) -> None:
        """Phase label per energy from the path moments near ``s = 1``."""
        spectral = self.config.spectral
        sampling = self.config.sampling
        eta = spectral.etas[0]
        rows, per_s_rows = [], []
        for index, E in enumerate(tqdm(spectral.energies, desc="energies", unit="E", disable=None)):
            pool = self.pool(E, eta, index)
            verdict = phase_from_pool(pool, spectral.s_grid, sampling.n_range, sampling.path_samples, self.executor)
            samples, _ = root_samples_with_children(pool, self.config.pool.root_samples, self.executor)
            f_small = cdf_im(samples, 0.01)
            self._flags.extend(verdict.flags)
            rows.append(
                (
                    E,
                    eta,
                    verdict.classification,
                    verdict.margin,
                    verdict.value_at_one,
                    verdict.std_error,
                    verdict.lyapunov,
                    verdict.lyapunov_std_error,
                    float(f_small.mean),
                    ";".join(verdict.flags),
                )
            )
            per_s_rows.extend((E, eta, s, value, error) for s, value, error in verdict.per_s)
        self._write(
            "phase_map",
            [
                Column("E", "energy"),
                Column("eta", "energy"),
                Column("classification", "-"),
                Column("margin", "sigma"),
                Column("value_at_one", "1/shell"),
                Column("std_error", "1/shell"),
                Column("lyapunov", "1/shell"),
                Column("lyapunov_std_error", "1/shell"),
                Column("F_0.01", "1"),
                Column("flags", "-"),
            ],
            rows,
        )
        self._write(
            "phase_per_s",
            [Column("E", "energy"), Column("eta", "energy"), Column("s", "1"), Column("value", "1/shell"), Column("std_error", "1/shell")],
            per_s_rows,
        )

    def dynamics_run(self) -> None:
        """Propagate ``delta_0`` per field: shell profiles, moments, front tails and the ballistic fit."""
        dyn = self.config.dynamics
        cert = ballistic_certificate(self.geometry.branching)
        shell_rows, moment_rows, tail_rows, fit_rows = [], [], [], []
        checks, reports = [], []
        for i, field in self.fields():
            report = transport_report(
                field, self.geometry, dyn.t_grid, dyn.betas, dyn.v_grid, dyn.tol, self.config.tolerances.boundary_mass
            )
            self._flags.extend(report.flags)
            reports.append(report)
            for k, (profile, drift) in enumerate(zip(report.profiles, report.norm_drifts)):
                t = profile.time
                shell_rows.extend((i, t, shell, float(mass)) for shell, mass in enumerate(profile.masses))
                for beta in report.betas:
                    moment_rows.append((i, t, beta, report.moments[beta][k], drift, profile.contaminated))
            for t, tails in zip(report.times, report.front_tails):
                tail_rows.extend((i, t, v, tail) for v, tail in zip(report.v_grid, tails))
            fit = report.ballistic_fit
            if fit is not None:
                fit_rows.append((i, fit.slope, fit.intercept, fit.ci_low, fit.ci_high, fit.points))
            if self.enabled("ballistic_tail"):
                checks.append(check_ballistic_tail(report, cert, self.negative_control))
        self._write(
            "shell_profiles",
            [Column("field", "index"), Column("t", "time"), Column("shell", "shells"), Column("mass", "1")],
            shell_rows,
        )
        self._write(
            "moments",
            [
                Column("field", "index"),
                Column("t", "time"),
                Column("beta", "1"),
                Column("moment", "shells^beta"),
                Column("norm_drift", "1"),
                Column("contaminated", "-"),
            ],
            moment_rows,
        )
        self._write(
            "front_tails",
            [Column("field", "index"), Column("t", "time"), Column("v", "shells/time"), Column("tail", "1")],
            tail_rows,
        )
        self._write(
            "ballistic_fit",
            [
                Column("field", "index"),
                Column("slope", "shells/time"),
                Column("intercept", "shells"),
                Column("ci_low", "shells/time"),
                Column("ci_high", "shells/time"),
                Column("points", "count"),
            ],
            fit_rows,
        )
        if dyn.expected_regime is not None and self.enabled("transport_regime"):
            checks.append(check_transport_regime(reports, dyn.expected_regime, negative_control=self.negative_control))
        self._reports.extend(checks)

    def hatp_run(self) -> None:
        """Time-averaged window distributions per field and damping."""
        spectral = self.config.spectral
        betas = self.config.dynamics.betas
        shell_rows, summary_rows = [], []
        first_profiles = []
        fixed: Dict[float, List[float]] = {eta: [] for eta in spectral.etas}
        for i, field in self.fields():
            for eta in spectral.etas:
                profile = self._hat_profile(field, eta)
                if i == 0:
                    first_profiles.append(profile)
                fixed[eta].append(lingering(profile, spectral.rage_radius))
                shell_rows.extend((i, eta, shell, float(mass)) for shell, mass in enumerate(profile.masses))
                for b in spectral.b_grid:
                    summary_rows.append(("lingering", i, eta, b, lingering(profile, b / eta), profile.contaminated))
                for beta in betas:
                    summary_rows.append(("hat_moment", i, eta, beta, hat_moments(profile, beta), profile.contaminated))
                summary_rows.append(("total_mass", i, eta, "", profile.total_mass, profile.contaminated))
        self._write(
            "hat_profiles",
            [Column("field", "index"), Column("eta", "energy"), Column("shell", "shells"), Column("mass", "1")],
            shell_rows,
        )
        self._write(
            "hat_summary",
            [
                Column("quantity", "-"),
                Column("field", "index"),
                Column("eta", "energy"),
                Column("parameter", "-"),
                Column("value", "1"),
                Column("contaminated", "-"),
            ],
            summary_rows,
        )
        if self.enabled("hat_moment_growth"):
            self._reports.extend(self._hat_growth_reports(first_profiles))
        if self.enabled("rage_trend"):
            self._reports.append(
                check_rage_trend(
                    list(fixed),
                    list(fixed.values()),
                    spectral.rage_radius,
                    self.sigmas,
                    self.negative_control,
                    flags=sorted(set(self._flags)),
                )
            )

    def _hat_growth_reports(self, profiles) -> List[BoundReport]:
        return [
            check_hat_moment_growth(profiles, beta, self.sigmas, self.negative_control)
            for beta in self.config.dynamics.betas
            if beta > 0
        ]

    def theorem1_scan(self) -> None:
        """Lingering probability at radius ``b / eta`` over the field ensemble, and its linearity check."""
        spectral = self.config.spectral
        scan = self._lingering_scan()
        rows = []
        for i, eta in enumerate(scan.etas):
            for b, mean, error in zip(scan.b_grid, scan.means[i], scan.std_errors[i]):
                rows.append((eta, b, b / eta, mean, error, scan.n_fields))
        self._write(
            "theorem1_scan",
            [
                Column("eta", "energy"),
                Column("b", "1"),
                Column("radius", "shells"),
                Column("mean_lingering", "1"),
                Column("std_error", "1"),
                Column("n_fields", "count"),
            ],
            rows,
        )
        logger.info(f"Scanned {len(scan.etas)} etas x {len(spectral.b_grid)} b values")
        self._reports.extend(self._scan_reports(scan))

    def _scan_reports(self, scan) -> List[BoundReport]:
        reports = []
        if self.enabled("theorem1_lingering"):
            reports.append(check_theorem1(scan, self.sigmas, negative_control=self.negative_control))
        if self.enabled("rage_trend"):
            reports.append(
                check_rage_trend(
                    scan.etas, scan.fixed_values, scan.fixed_radius, self.sigmas, self.negative_control, flags=scan.flags
                )
            )
        return reports

    def _lingering_scan(self):
        spectral = self.config.spectral
        fields = [field for _, field in self.fields(desc="ensemble")]
        scan = lingering_scan(
            fields,
            self.geometry,
            EnergyWindow(lower=spectral.window[0], upper=spectral.window[1]),
            spectral.b_grid,
            spectral.etas,
            quad_nodes=spectral.quad_nodes,
            executor=self.executor,
            fixed_radius=spectral.rage_radius,
            rtol=self._quadrature_rtol(),
            max_doublings=self.app_config.refinement.max_quadrature_doublings,
        )
        self._flags.extend(scan.flags)
        return scan

    def bounds_check(self) -> None:
        """Every enabled inequality check, each as one BoundReport."""
        spectral = self.config.spectral
        sampling = self.config.sampling
        eta = spectral.etas[0]
        sigmas = self.sigmas
        control = self.negative_control

        if self.enabled("ballistic_tail"):
            dyn = self.config.dynamics
            _, field = next(self.fields(count=1, desc="ballistic"))
            report = transport_report(
                field, self.geometry, dyn.t_grid, dyn.betas, dyn.v_grid, dyn.tol, self.config.tolerances.boundary_mass
            )
            self._reports.append(check_ballistic_tail(report, ballistic_certificate(self.geometry.branching), control))

        pool_checks = {"free_energy_apriori", "wegner", "lemma6", "F_power_law", "recursion_step", "recursive_inequality"}
        if any(self.enabled(c) for c in pool_checks):
            for index, E in enumerate(spectral.energies):
                pool = self.pool(E, eta, index)
                samples, child_sums = root_samples_with_children(pool, self.config.pool.root_samples, self.executor)
                if self.enabled("wegner"):
                    self._reports.append(check_wegner(samples, density_sup(pool.distribution), sigmas, negative_control=control))
                if self.enabled("lemma6"):
                    self._reports.append(
                        check_lemma6(samples, pool.distribution, pool.branching, pool.energy, spectral.x_grid, negative_control=control)
                    )
                if self.enabled("F_power_law"):
                    self._reports.append(check_F_power_law(power_law_tail(samples), sigmas=sigmas, negative_control=control))
                if self.enabled("recursion_step"):
                    self._reports.append(
                        check_recursion_step(
                            samples,
                            pool.distribution,
                            pool.branching,
                            pool.energy,
                            spectral.x_grid,
                            spectral.x_grid,
                            negative_control=control,
                        )
                    )
                if self.enabled("recursive_inequality"):
                    self._reports.append(check_recursive_inequality(samples, child_sums, negative_control=control))
                if self.enabled("free_energy_apriori"):
                    cache: dict = {}
                    for s in spectral.s_values:
                        fe = free_energy(pool, s, sampling.n_range, sampling.path_samples, self.executor, log_amplitudes=cache)
                        self._reports.append(check_free_energy_apriori(fe, pool.branching, sigmas, control))

        if self.enabled("second_moment_decay"):
            self._reports.append(
                check_second_moment_decay(
                    self.config.distribution,
                    spectral.energies,
                    eta,
                    sampling.n_range,
                    sampling.path_samples,
                    branching=self.geometry.branching,
                    pool_size=self.config.pool.size,
                    burn_in_sweeps=self.config.pool.burn_in,
                    seed=derive_seed(self.config.seed, STREAM_INIT, SECOND_MOMENT_POOL),
                    sigmas=sigmas,
                    negative_control=control,
                    executor=self.executor,
                )
            )

        if self.enabled("hat_moment_growth"):
            _, field = next(self.fields(count=1, desc="hat"))
            self._reports.extend(self._hat_growth_reports([self._hat_profile(field, e) for e in spectral.etas]))

        if self.enabled("theorem1_lingering") or self.enabled("rage_trend"):
            self._reports.extend(self._scan_reports(self._lingering_scan()))

    # -- driver ---------------------------------------------------------------------

    def mode_handlers(self) -> Dict[str, Callable[[], None]]:
        return {
            "green-validate": self.green_validate,
            "pool-run": self.pool_run,
            "phase-map": self.phase_map,
            "dynamics-run": self.dynamics_run,
            "hatp-run": self.hatp_run,
            "bounds-check": self.bounds_check,
            "theorem1-scan": self.theorem1_scan,
        }

    def exit_status(self) -> int:
        if any(r.failed for r in self._reports) or "l2_identity_violation" in self._flags:
            return 1
        return 0

    def run(self, force: bool = False) -> RunResult:
        """
        Run the configured mode and write its tables, reports and manifest.

        Args:
            force: Reuse a non-empty output directory

        Returns:
            RunResult with exit status 0 (all good) or 1 (a check failed)

        Raises:
            OutputExistsError: output directory in use and ``force`` not given
            BetheTransportError: numeric aborts and parameter errors, after the
                manifest has recorded them
        """
        mode = self.config.mode
        self.prepare_output_dir(force)
        started = datetime.now(timezone.utc)
        start = time.perf_counter()
        logger.info(f"Running {mode} into {self.output_dir} (config {self.config.config_hash()[:12]})")
        try:
            self.mode_handlers()[mode]()
            if self._reports:
                self._files.extend(self.report_writer.write_reports(self._reports))
            status = self.exit_status()
        except BetheTransportError as e:
            logger.error(f"{mode} stopped: {e}")
            self.manifest_writer.write_manifest(
                self.config, time.perf_counter() - start, self._flags + [type(e).__name__], self._files,
                e.exit_code, self.threads, started,
            )
            raise
        wall_time = time.perf_counter() - start
        self.manifest_writer.write_manifest(self.config, wall_time, self._flags, self._files, status, self.threads, started)
        logger.info(f"{mode} finished in {wall_time:.1f}s with exit status {status}")
        return RunResult(
            mode=mode,
            output_dir=self.output_dir,
            exit_status=status,
            files=list(self._files),
            flags=sorted(set(self._flags)),
            reports=list(self._reports),
            wall_time=wall_time,
        )
