import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional

import yaml

from ..config import ExperimentConfig
from ..utils import version_string

logger = logging.getLogger(__name__)


class ManifestWriter:
    """Run manifest: config echo, version, seed, wall time, flags and the files written."""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)

    def write_manifest(
        self,
        config: ExperimentConfig,
        wall_time: float,
        flags: List[str],
        files: List[Path],
        exit_status: int,
        threads: int,
        started: Optional[datetime] = None,
    ) -> Path:
        """
        Write ``manifest.yaml`` and return its path.

        Only the timestamp and wall time differ between reruns of one config.
        """
        started = started or datetime.now(timezone.utc)
        manifest = {
            "version": version_string(),
            "mode": config.mode,
            "seed": config.seed,
            "config_hash": config.config_hash(),
            "started": started.isoformat(),
            "wall_time_s": round(wall_time, 3),
            "threads": threads,
            "exit_status": exit_status,
            "flags": sorted(set(flags)),
            "files": [str(Path(f).name) for f in files],
            "config": config.model_dump(mode="json"),
        }
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / "manifest.yaml"
        path.write_text(
            yaml.dump(manifest, sort_keys=False, default_flow_style=False, width=1000, Dumper=yaml.SafeDumper),
            encoding="utf-8",
        )
        logger.info(f"Wrote manifest {path}")
        return path
