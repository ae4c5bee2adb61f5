import hashlib
import json
import subprocess
from concurrent.futures import Executor
from pathlib import Path
from typing import Any, Callable, Iterable, List, Optional, TypeVar

import numpy as np

from . import __version__

T = TypeVar("T")

# Stream ids keep the random streams of different consumers apart.
STREAM_FIELD = 1
STREAM_POOL_SWEEP = 2
STREAM_ROOT = 3
STREAM_PATH = 4
STREAM_BOUNDARY = 5
STREAM_INIT = 6

# Work is cut into blocks of this many draws, whatever the thread count.
BLOCK_SIZE = 1 << 16


def block_generator(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for one ``(seed, stream, ...)`` key."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *key: int) -> int:
    """Independent 63-bit seed for one ``(seed, stream, index)`` key."""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def block_ranges(total: int, block_size: int = BLOCK_SIZE) -> List[tuple]:
    """Fixed ``(block_id, start, stop)`` cuts of ``range(total)``."""
    return [(b, start, min(start + block_size, total)) for b, start in enumerate(range(0, total, block_size))]


def run_blocks(func: Callable[..., T], blocks: Iterable[Any], executor: Optional[Executor] = None) -> List[T]:
    """Apply ``func`` to every block, keeping block order in the result."""
    blocks = list(blocks)
    if executor is None or len(blocks) < 2:
        return [func(block) for block in blocks]
    return list(executor.map(func, blocks))


def stable_hash(payload: Any) -> str:
    """SHA-256 of the canonical JSON rendering of ``payload``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def version_string() -> str:
    """``git describe``-style version, falling back to the package version."""
    try:
        result = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if result.returncode == 0 and result.stdout.strip():
            return f"{__version__}+{result.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__
