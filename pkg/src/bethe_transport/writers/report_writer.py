import json
import logging
import math
from pathlib import Path
from typing import List, Sequence, Tuple

from ..bounds import BoundReport

logger = logging.getLogger(__name__)


def _fmt(value: float) -> str:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    return f"{value:.3g}"


class ReportWriter:
    """BoundReport batches as JSON for machines and an aligned table for people."""

    def __init__(self, output_dir: Path, config_hash: str, seed: int):
        self.output_dir = Path(output_dir)
        self.config_hash = config_hash
        self.seed = seed

    def _rows(self, reports: Sequence[BoundReport], indent: int = 0) -> List[Tuple[str, str, str, str]]:
        rows = []
        for report in reports:
            rows.append(("  " * indent + report.bound_id, report.verdict, _fmt(report.margin), report.reference))
            rows.extend(self._rows(report.children, indent + 1))
        return rows

    def render_table(self, reports: Sequence[BoundReport]) -> str:
        rows = [("check", "verdict", "margin", "reference")] + self._rows(reports)
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = [f"# config_hash={self.config_hash} seed={self.seed}"]
        for row in rows:
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row[:3])) + "  " + row[3])
        return "\n".join(lines) + "\n"

    def write_reports(self, reports: Sequence[BoundReport], stem: str = "bounds") -> Tuple[Path, Path]:
        """
        Write ``<stem>.json`` and ``<stem>.txt``.

        Returns:
            Paths of the JSON and text files
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "reports": [json.loads(r.model_dump_json()) for r in reports],
        }
        json_path = self.output_dir / f"{stem}.json"
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        text_path = self.output_dir / f"{stem}.txt"
        text_path.write_text(self.render_table(reports), encoding="utf-8")
        logger.info(f"Wrote {len(reports)} bound reports to {json_path}")
        return json_path, text_path
