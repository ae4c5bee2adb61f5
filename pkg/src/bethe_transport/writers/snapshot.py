# src/bethe_transport/writers/snapshot.py

"""
Pool snapshots.

Binary layout: the 8-byte magic ``BTPOOL01``, a little-endian uint32 header
length, the UTF-8 JSON header, then the entries as little-endian complex128.
A copy of the header is written next to the file as ``<name>.json``.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np

from ..disorder import make_distribution
from ..errors import SnapshotFormatError
from ..green import ComplexEnergy
from ..population import GreenPool

logger = logging.getLogger(__name__)

MAGIC = b"BTPOOL01"
FORMAT_VERSION = 1


def snapshot_header(pool: GreenPool) -> Dict[str, Any]:
    return {
        "format_version": FORMAT_VERSION,
        "branching": pool.branching,
        "zeta": [pool.energy.real_part, pool.energy.imag_part],
        "distribution": pool.distribution.model_dump(mode="json"),
        "seed": pool.seed,
        "sweeps_done": pool.sweeps_done,
        "min_burn_in": pool.min_burn_in,
        "pool_size": pool.size,
        "flags": list(pool.flags),
    }


def write_pool_snapshot(pool: GreenPool, path: Path) -> Tuple[Path, Path]:
    """Write the binary snapshot and its JSON sidecar; returns both paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = snapshot_header(pool)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        f.write(pool.entries.astype("<c16").tobytes())
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"Wrote pool snapshot {path} ({pool.size} entries)")
    return path, sidecar


def read_pool_snapshot(path: Path) -> GreenPool:
    """Load a snapshot written by :func:`write_pool_snapshot`."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise SnapshotFormatError(f"{path} is not a pool snapshot")
    (length,) = struct.unpack("<I", data[len(MAGIC) : len(MAGIC) + 4])
    start = len(MAGIC) + 4
    try:
        header = json.loads(data[start : start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SnapshotFormatError(f"{path} has a corrupt header: {e}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise SnapshotFormatError(f"{path} has unsupported format version {header.get('format_version')}")
    payload = data[start + length :]
    expected = 16 * int(header["pool_size"])
    if len(payload) != expected:
        raise SnapshotFormatError(f"{path} holds {len(payload)} payload bytes, expected {expected}")
    entries = np.frombuffer(payload, dtype="<c16").astype(complex)
    return GreenPool(
        entries=entries,
        energy=ComplexEnergy(real_part=header["zeta"][0], imag_part=header["zeta"][1]),
        distribution=make_distribution(header["distribution"]),
        branching=header["branching"],
        sweeps_done=header["sweeps_done"],
        seed=header["seed"],
        min_burn_in=header["min_burn_in"],
        flags=header.get("flags", []),
    )
