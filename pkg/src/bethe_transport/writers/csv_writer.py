import csv
import logging
from pathlib import Path
from typing import Any, Iterable, List, NamedTuple, Sequence

logger = logging.getLogger(__name__)


class Column(NamedTuple):
    name: str
    unit: str = "1"
    complex: bool = False


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return _format(value.item())
    return str(value)


class CsvWriter:
    """
    Plot-ready tables: unit-annotated header, complex values split into re/im
    columns, every row stamped with the config hash and seed.
    """

    def __init__(self, output_dir: Path, config_hash: str, seed: int):
        """
        Initialize the writer for one run.

        Args:
            output_dir: Directory the tables go to (created if missing)
            config_hash: Hash of the producing ExperimentConfig
            seed: Master seed of the run
        """
        self.output_dir = Path(output_dir)
        self.config_hash = config_hash
        self.seed = seed

    def header(self, columns: Sequence[Column]) -> List[str]:
        names = []
        for col in columns:
            if col.complex:
                names.append(f"{col.name}_re [{col.unit}]")
                names.append(f"{col.name}_im [{col.unit}]")
            else:
                names.append(f"{col.name} [{col.unit}]")
        return names + ["config_hash", "seed"]

    def _cells(self, columns: Sequence[Column], row: Sequence[Any]) -> List[str]:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} values for {len(columns)} columns")
        cells = []
        for col, value in zip(columns, row):
            if col.complex:
                z = complex(value)
                cells.extend([_format(z.real), _format(z.imag)])
            else:
                cells.append(_format(value))
        return cells + [self.config_hash, str(self.seed)]

    def write_table(self, name: str, columns: Sequence[Column], rows: Iterable[Sequence[Any]]) -> Path:
        """
        Write ``<name>.csv`` and return its path.

        Args:
            name: File stem
            columns: Column layout
            rows: One sequence of values per row, in column order

        Returns:
            Path to the written table
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / f"{name}.csv"
        count = 0
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.header(columns))
            for row in rows:
                writer.writerow(self._cells(columns, row))
                count += 1
        logger.info(f"Wrote {count} rows to {path}")
        return path


ESTIMATOR_COLUMNS = [
    Column("quantity", "-"),
    Column("value", "1"),
    Column("std_error", "1"),
    Column("n", "count"),
    Column("zeta", "energy", complex=True),
    Column("parameter", "-"),
]
