# src/bethe_transport/tree.py

"""
Implicit rooted regular tree with shell-major (breadth-first) vertex ids.

The root has K children and every other non-leaf vertex has one parent and K
children. Vertex ``i`` has children ``K*i + 1 .. K*i + K`` and parent
``(i - 1) // K``, so shell ``n`` is the contiguous block
``[(K**n - 1)/(K - 1), (K**(n+1) - 1)/(K - 1))``. Nothing about the topology
is stored.
"""

import logging
from functools import cached_property
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import VertexCountOverflow, VertexIndexError

logger = logging.getLogger(__name__)

INDEX_LIMIT = int(np.iinfo(np.int64).max)


class TreeGeometry(BaseModel):
    """Rooted regular tree of branching ``K`` truncated at depth ``D``."""

    model_config = ConfigDict(frozen=True)

    branching: int = Field(..., ge=2)
    depth: int = Field(..., ge=0)

    @property
    def K(self) -> int:
        return self.branching

    @property
    def D(self) -> int:
        return self.depth

    def shell_start(self, n: int) -> int:
        """First vertex id of shell ``n`` (``n = depth + 1`` gives the vertex count)."""
        return (self.branching ** n - 1) // (self.branching - 1)

    @cached_property
    def vertex_count(self) -> int:
        return vertex_count(self)

    @cached_property
    def shell_starts(self) -> np.ndarray:
        """Offsets of all shells plus the end sentinel, length ``depth + 2``."""
        return np.array([self.shell_start(n) for n in range(self.depth + 2)], dtype=np.int64)

    @property
    def interior_count(self) -> int:
        """Number of vertices that have children (all shells but the last)."""
        return self.shell_start(self.depth)

    def shell_slice(self, n: int) -> slice:
        if not 0 <= n <= self.depth:
            raise VertexIndexError(f"shell {n} outside 0..{self.depth}")
        return slice(self.shell_start(n), self.shell_start(n + 1))

    def shell_sizes(self) -> np.ndarray:
        return np.diff(self.shell_starts)

    # -- array helpers used by the sweeps ------------------------------------

    def child_sums(self, values: np.ndarray) -> np.ndarray:
        """For every interior vertex, the sum of ``values`` over its K children."""
        return values[1:].reshape(-1, self.branching).sum(axis=1)

    def shell_masses(self, weights: np.ndarray) -> np.ndarray:
        """Per-shell sums of a vertex array, in fixed shell order."""
        return np.add.reduceat(weights, self.shell_starts[:-1])

    def apply_adjacency(self, psi: np.ndarray) -> np.ndarray:
        """Return ``(A psi)(x) = psi(parent x) + sum_children psi(c)``."""
        out = np.zeros_like(psi)
        n_int = self.interior_count
        if n_int == 0:
            return out
        out[:n_int] += self.child_sums(psi)
        out[1:] += np.repeat(psi[:n_int], self.branching)
        return out

    def dense_adjacency(self) -> np.ndarray:
        """Explicit adjacency matrix; only for oracle-sized trees."""
        n = self.vertex_count
        adjacency = np.zeros((n, n))
        children = np.arange(1, n)
        parents = (children - 1) // self.branching
        adjacency[children, parents] = 1.0
        adjacency[parents, children] = 1.0
        return adjacency


def vertex_count(geometry: TreeGeometry) -> int:
    """Total number of vertices ``(K**(D+1) - 1)/(K - 1)``."""
    count = geometry.shell_start(geometry.depth + 1)
    if count > INDEX_LIMIT:
        raise VertexCountOverflow(
            f"tree with K={geometry.branching}, D={geometry.depth} has {count} vertices, "
            f"beyond the index range {INDEX_LIMIT}"
        )
    return count


def _check_index(geometry: TreeGeometry, index: int) -> int:
    index = int(index)
    if not 0 <= index < geometry.vertex_count:
        raise VertexIndexError(f"vertex {index} outside 0..{geometry.vertex_count - 1}")
    return index


def shell_of(geometry: TreeGeometry, index: int) -> int:
    """Graph distance of vertex ``index`` from the root."""
    index = _check_index(geometry, index)
    return int(np.searchsorted(geometry.shell_starts, index, side="right") - 1)


def shells_of(geometry: TreeGeometry, indices: np.ndarray) -> np.ndarray:
    """Vectorised :func:`shell_of` without range checks."""
    return np.searchsorted(geometry.shell_starts, indices, side="right") - 1


def parent_of(geometry: TreeGeometry, index: int) -> int:
    index = _check_index(geometry, index)
    if index == 0:
        raise VertexIndexError("the root has no parent")
    return (index - 1) // geometry.branching


def children_of(geometry: TreeGeometry, index: int) -> List[int]:
    """Children ids of ``index``; empty for a leaf."""
    index = _check_index(geometry, index)
    if index >= geometry.interior_count:
        return []
    first = geometry.branching * index + 1
    return list(range(first, first + geometry.branching))
