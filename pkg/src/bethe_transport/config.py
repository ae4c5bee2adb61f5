# src/bethe_transport/config.py

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings

from .disorder import PotentialDistribution, UniformDistribution
from .errors import ConfigError
from .utils import stable_hash

logger = logging.getLogger(__name__)

Mode = Literal[
    "green-validate",
    "pool-run",
    "phase-map",
    "dynamics-run",
    "hatp-run",
    "bounds-check",
    "theorem1-scan",
]

CHECK_IDS = (
    "ballistic_tail",
    "second_moment_decay",
    "free_energy_apriori",
    "wegner",
    "lemma6",
    "theorem1_lingering",
    "F_power_law",
    "recursion_step",
    "recursive_inequality",
    "hat_moment_growth",
    "rage_trend",
    "transport_regime",
)


class RefinementConfig(BaseSettings):
    """Limits of the bounded refinement loops (quadrature doubling, burn-in extension)."""

    max_quadrature_doublings: int = Field(4, ge=0)
    quadrature_rtol: float = Field(1e-4, gt=0)
    max_burn_in_extensions: int = Field(3, ge=0)

    model_config = {
        "env_prefix": "BETHE_TRANSPORT_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }


class AppConfig(BaseSettings):
    """
    Process-wide defaults loaded from the environment and ``.env``.

    Experiment files and command-line flags take precedence over these values.
    """

    output_root: Path = Field(default_factory=lambda: Path("runs"))
    threads: int = Field(1, ge=1)
    log_level: str = "INFO"
    confidence: float = Field(3.0, gt=0)

    refinement: RefinementConfig = Field(default_factory=RefinementConfig)

    model_config = {
        "env_prefix": "BETHE_TRANSPORT_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }

    @classmethod
    def load(cls):
        """Load configuration from environment variables and .env file"""
        logger.debug(f"BETHE_TRANSPORT_OUTPUT_ROOT: {os.environ.get('BETHE_TRANSPORT_OUTPUT_ROOT', '[not set]')}")
        logger.debug(f"BETHE_TRANSPORT_THREADS: {os.environ.get('BETHE_TRANSPORT_THREADS', '[not set]')}")
        return cls()

    def validate_paths(self) -> None:
        if self.output_root.exists() and not self.output_root.is_dir():
            raise ConfigError(f"output root {self.output_root} is not a directory", {"output_root": "not a directory"})


# -- experiment file sections ------------------------------------------------------


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometrySection(_Section):
    branching: int = Field(2, ge=2)
    depth: int = Field(5, ge=0, le=40)


class SpectralSection(_Section):
    energies: List[float] = Field(default_factory=lambda: [0.0])
    etas: List[float] = Field(default_factory=lambda: [1e-2])
    window: Tuple[float, float] = (-1.0, 1.0)
    quad_nodes: int = Field(32, ge=32)
    s_values: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    s_grid: List[float] = Field(default_factory=lambda: [0.7, 0.8, 0.9, 0.95])
    x_grid: List[float] = Field(default_factory=lambda: [0.02, 0.05, 0.1, 0.2, 0.5])
    b_grid: List[float] = Field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    inverse_powers: List[float] = Field(default_factory=lambda: [3.0])
    rage_radius: float = Field(1.0, gt=0)

    @field_validator("etas")
    @classmethod
    def _positive_etas(cls, v):
        if not v or any(eta <= 0 for eta in v):
            raise ValueError("every eta must be > 0")
        return v

    @field_validator("window")
    @classmethod
    def _ordered_window(cls, v):
        if not v[0] < v[1]:
            raise ValueError("window lower edge must be below the upper edge")
        return v

    @field_validator("s_values")
    @classmethod
    def _s_range(cls, v):
        if any(not 0 <= s <= 2 for s in v):
            raise ValueError("s values must lie in [0, 2]")
        return v

    @field_validator("s_grid")
    @classmethod
    def _s_grid_range(cls, v):
        if len(v) < 2 or any(not 0 < s < 1 for s in v):
            raise ValueError("s-grid needs at least two values in (0, 1)")
        return v

    @field_validator("x_grid", "b_grid")
    @classmethod
    def _positive_grid(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("grid values must be > 0")
        return v


class PoolSection(_Section):
    size: int = Field(100_000, ge=2)
    burn_in: int = Field(100, ge=0)
    window: int = Field(10, ge=1)
    root_samples: int = Field(100_000, ge=2)


class DynamicsSection(_Section):
    t_grid: List[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0, 3.0, 4.0])
    betas: List[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0])
    v_grid: Optional[List[float]] = None
    tol: float = Field(1e-12, gt=1e-14, lt=1e-6)
    expected_regime: Optional[Literal["ballistic", "bounded"]] = None

    @field_validator("t_grid")
    @classmethod
    def _sorted_times(cls, v):
        if not v or any(t < 0 for t in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("t_grid must be non-empty, non-negative and strictly increasing")
        return v


class SamplingSection(_Section):
    field_count: int = Field(20, ge=1)
    path_samples: int = Field(100_000, ge=2)
    n_range: List[int] = Field(default_factory=lambda: [5, 10, 15, 20])

    @field_validator("n_range")
    @classmethod
    def _lengths(cls, v):
        if len(set(v)) < 4 or max(v) < 20 or min(v) < 1:
            raise ValueError("n_range needs >= 4 distinct lengths >= 1 with max >= 20")
        return sorted(set(v))


class ToleranceSection(_Section):
    confidence: Optional[float] = Field(None, gt=0)
    oracle_rtol: float = Field(1e-10, gt=0)
    l2_rtol: float = Field(1e-8, gt=0)
    boundary_mass: float = Field(1e-6, gt=0)
    quadrature_rtol: Optional[float] = Field(None, gt=0)


class ChecksSection(_Section):
    enabled: List[str] = Field(default_factory=lambda: list(CHECK_IDS))
    negative_control: bool = False

    @field_validator("enabled")
    @classmethod
    def _known_checks(cls, v):
        unknown = sorted(set(v) - set(CHECK_IDS))
        if unknown:
            raise ValueError(f"unknown checks {unknown}; choose from {list(CHECK_IDS)}")
        return v


class ExperimentConfig(BaseModel):
    """One experiment: a mode plus every parameter its pipeline reads."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: Mode = "green-validate"
    seed: int = Field(0, ge=0)
    output_dir: Optional[Path] = None
    geometry: GeometrySection = Field(default_factory=GeometrySection)
    distribution: PotentialDistribution = Field(default_factory=lambda: UniformDistribution(width=1.0))
    spectral: SpectralSection = Field(default_factory=SpectralSection)
    pool: PoolSection = Field(default_factory=PoolSection)
    dynamics: DynamicsSection = Field(default_factory=DynamicsSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    tolerances: ToleranceSection = Field(default_factory=ToleranceSection)
    checks: ChecksSection = Field(default_factory=ChecksSection)

    @model_validator(mode="before")
    @classmethod
    def _zero_width_is_free(cls, data: Any):
        # A width-0 uniform potential in a file means V = 0.
        if isinstance(data, dict):
            dist = data.get("distribution")
            if isinstance(dist, dict) and dist.get("kind") == "uniform" and dist.get("width") == 0:
                data = {**data, "distribution": {"kind": "free"}}
        return data

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON dump, output location excluded."""
        return stable_hash(self.model_dump(mode="json", exclude={"output_dir"}))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def _field_errors(error: ValidationError) -> Dict[str, str]:
    return {".".join(str(p) for p in e["loc"]) or "<root>": e["msg"] for e in error.errors()}


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_experiment_config(data: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Validate a mapping (plus overrides) into an ExperimentConfig, raising ConfigError."""
    data = _merge(data or {}, overrides or {})
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        fields = _field_errors(e)
        summary = "; ".join(f"{k}: {v}" for k, v in fields.items())
        raise ConfigError(f"invalid experiment config: {summary}", fields) from e


def load_experiment_config(
    path: Optional[Path],
    overrides: Optional[Dict[str, Any]] = None,
    base: Optional[Dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Read a YAML experiment file and apply flag overrides.

    Args:
        path: YAML file, or None to start from built-in defaults
        overrides: Values from command-line flags; nested dicts merge into sections
        base: Values the file is merged onto (a preset)

    Returns:
        The validated ExperimentConfig

    Raises:
        ConfigError: unreadable file, malformed YAML or invalid fields
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}", {"config": str(e)}) from e
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}", {"config": "malformed YAML"}) from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a mapping", {"config": "not a mapping"})
        logger.info(f"Loaded experiment config from {path}")
    return build_experiment_config(_merge(base or {}, data), overrides)

