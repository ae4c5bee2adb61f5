# src/bethe_transport/container.py

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from .config import AppConfig, ExperimentConfig
from .processor import ExperimentProcessor
from .writers import CsvWriter, ManifestWriter, ReportWriter

logger = logging.getLogger(__name__)


class LabContainer:
    """
    Owns the process-wide configuration and the worker pool, and builds the
    writers and processors bound to one output directory.
    """

    def __init__(self, config: Optional[AppConfig] = None, threads: Optional[int] = None):
        """
        Initialize the container with configuration and shared resources.

        Args:
            config: Optional AppConfig; loaded from the environment when omitted
            threads: Worker count overriding ``config.threads``
        """
        if config is None:
            logger.info("Loading settings from environment")
            self.config = AppConfig.load()
        else:
            logger.info("Using provided config instance")
            self.config = config
        self.config.validate_paths()

        self.threads = threads if threads is not None else self.config.threads
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        # One worker runs inline; results do not depend on the count.
        self.executor = ThreadPoolExecutor(max_workers=self.threads) if self.threads > 1 else None
        logger.debug(f"LabContainer initialized with {self.threads} thread(s)")

    def resolve_output_dir(self, experiment: ExperimentConfig, out: Optional[Path] = None) -> Path:
        """``--out`` first, then the file's ``output_dir``, then ``<output_root>/<mode>/<hash>``."""
        if out is not None:
            return Path(out)
        if experiment.output_dir is not None:
            return Path(experiment.output_dir)
        return self.config.output_root / experiment.mode / experiment.config_hash()[:12]

    def get_csv_writer(self, output_dir: Path, experiment: ExperimentConfig) -> CsvWriter:
        return CsvWriter(output_dir, experiment.config_hash(), experiment.seed)

    def get_report_writer(self, output_dir: Path, experiment: ExperimentConfig) -> ReportWriter:
        return ReportWriter(output_dir, experiment.config_hash(), experiment.seed)

    def get_manifest_writer(self, output_dir: Path) -> ManifestWriter:
        return ManifestWriter(output_dir)

    def create_processor(self, experiment: ExperimentConfig, out: Optional[Path] = None) -> ExperimentProcessor:
        """
        Factory method to create an experiment processor.

        Args:
            experiment: Validated experiment config
            out: Explicit output directory

        Returns:
            ExperimentProcessor wired to this container's writers and executor
        """
        output_dir = self.resolve_output_dir(experiment, out)
        return ExperimentProcessor(
            config=experiment,
            output_dir=output_dir,
            csv_writer=self.get_csv_writer(output_dir, experiment),
            report_writer=self.get_report_writer(output_dir, experiment),
            manifest_writer=self.get_manifest_writer(output_dir),
            executor=self.executor,
            app_config=self.config,
            threads=self.threads,
        )

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        """Shut the worker pool down; exceptions propagate."""
        if self.executor is not None:
            self.executor.shutdown(wait=True)
            logger.debug("Worker pool shut down")
        return False
