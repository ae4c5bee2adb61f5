import logging
import sys
from pathlib import Path
from typing import Optional

import click
from pydantic import ValidationError

from .config import AppConfig, load_experiment_config
from .container import LabContainer
from .errors import BetheTransportError, ConfigError
from .presets import get_preset, list_available_presets

# --- Logging Configuration ---
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    handlers=[logging.StreamHandler(sys.stdout)],
)
logger = logging.getLogger(__name__)


EXPERIMENT_OPTIONS = [
    click.option(
        "--config",
        "config_path",
        type=click.Path(exists=False, dir_okay=False, path_type=Path),
        help="YAML experiment file.",
    ),
    click.option("--preset", type=str, default=None, help="Start from a named preset (see `presets`)."),
    click.option("--seed", type=click.IntRange(min=0), default=None, help="Master seed (overrides the file)."),
    click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads; results do not depend on it."),
    click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None, help="Output directory."),
    click.option("--force", is_flag=True, default=False, help="Overwrite results in a non-empty output directory."),
    click.option("--dry-run", is_flag=True, default=False, help="Print the resolved config and output directory only."),
    click.option("--verbose", "-v", is_flag=True, default=False, help="Enable detailed (DEBUG) logging."),
]


def experiment_options(func):
    """Attach the options shared by every mode command."""
    for option in reversed(EXPERIMENT_OPTIONS):
        func = option(func)
    return func


def run_mode(
    mode: str,
    config_path: Optional[Path] = None,
    preset: Optional[str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out: Optional[Path] = None,
    force: bool = False,
    dry_run: bool = False,
    verbose: bool = False,
) -> int:
    """
    Resolve the experiment config and run one mode.

    Returns:
        Exit status: 0 ok, 1 a check failed, 2 config or output problem, 3 numeric abort
    """
    try:
        app_config = AppConfig.load()
    except ValidationError as e:
        logger.error(f"Invalid environment settings: {e}")
        return 2
    root = logging.getLogger()
    root.setLevel(logging.DEBUG if verbose else app_config.log_level.upper())
    if verbose:
        logger.debug("Verbose logging enabled.")

    overrides = {"mode": mode}
    if seed is not None:
        overrides["seed"] = seed
    try:
        base = get_preset(preset) if preset else None
    except KeyError as e:
        logger.error(str(e.args[0]))
        return 2

    try:
        experiment = load_experiment_config(config_path, overrides, base=base)
        with LabContainer(app_config, threads=threads) as container:
            processor = container.create_processor(experiment, out)
            if dry_run:
                click.echo("--- Dry Run Plan ---")
                click.echo(f"Output Directory: {processor.output_dir}")
                click.echo(f"Config Hash: {experiment.config_hash()}")
                click.echo(experiment.to_yaml().rstrip())
                click.echo("--------------------")
                return 0
            result = processor.run(force=force)
    except ConfigError as e:
        logger.error(str(e))
        for field, message in e.fields.items():
            click.echo(f"  {field}: {message}", err=True)
        return e.exit_code
    except BetheTransportError as e:
        logger.error(f"{mode} aborted: {e}", exc_info=verbose)
        return e.exit_code

    failed = [r.bound_id for r in result.reports if r.failed]
    if failed:
        logger.error(f"Checks failed: {', '.join(failed)}")
    click.echo(f"{mode}: exit {result.exit_status}, {len(result.files)} files in {result.output_dir}")
    return result.exit_status


# --- CLI Definition ---


@click.group()
def cli():
    """
    Quantum transport experiments on the regular tree with random potential.
    """
    pass


@cli.command()
def presets():
    """
    List the named presets for the acceptance-scale runs.
    """
    click.echo(list_available_presets())


def _mode_command(mode: str, summary: str):
    @cli.command(name=mode, help=summary)
    @experiment_options
    def command(**kwargs):
        sys.exit(run_mode(mode, **kwargs))

    return command


green_validate = _mode_command("green-validate", "Check recursive Green columns against the dense solve.")
pool_run = _mode_command("pool-run", "Run pool population dynamics and write root-Green estimates and snapshots.")
phase_map = _mode_command("phase-map", "Classify energies as ac-like or pp-like from fractional path moments.")
dynamics_run = _mode_command("dynamics-run", "Propagate a root-localised packet and record shell profiles.")
hatp_run = _mode_command("hatp-run", "Compute time-averaged window distributions per damping.")
bounds_check = _mode_command("bounds-check", "Run every enabled inequality check and report verdicts.")
theorem1_scan = _mode_command("theorem1-scan", "Scan the lingering probability over damping and radius.")


if __name__ == "__main__":
    cli()
