from .csv_writer import ESTIMATOR_COLUMNS, Column, CsvWriter
from .manifest import ManifestWriter
from .report_writer import ReportWriter
from .snapshot import read_pool_snapshot, write_pool_snapshot

__all__ = [
    "Column",
    "CsvWriter",
    "ESTIMATOR_COLUMNS",
    "ManifestWriter",
    "ReportWriter",
    "read_pool_snapshot",
    "write_pool_snapshot",
]
