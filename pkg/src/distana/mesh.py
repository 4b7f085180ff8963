"""Sensor-lattice topology: directional 8-neighborhoods with border handling.

A topology is a flat list of cells plus, per cell, one optional neighbor
id per compass direction. Regular grids are built with :func:`grid`;
irregular graphs can be assembled directly from edge lists via
:meth:`MeshTopology.from_json` as long as reciprocity holds (every edge
a -> b under direction d is mirrored by b -> a under the opposite
direction).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .errors import ConfigError

ABSENT = -1


class Direction(IntEnum):
    N = 0
    NE = 1
    E = 2
    SE = 3
    S = 4
    SW = 5
    W = 6
    NW = 7

    def opposite(self) -> "Direction":
        return Direction((self + 4) % 8)


# (row offset, col offset): N decreases the row index, E increases the column
OFFSETS = {
    Direction.N: (-1, 0),
    Direction.NE: (-1, 1),
    Direction.E: (0, 1),
    Direction.SE: (1, 1),
    Direction.S: (1, 0),
    Direction.SW: (1, -1),
    Direction.W: (0, -1),
    Direction.NW: (-1, -1),
}


class BorderMode(str, Enum):
    ZERO_PAD = "zero_pad"
    PERIODIC = "periodic"


@dataclass(eq=False)
class MeshTopology:
    """Immutable cell graph; `neighbors[cell, direction]` is an id or ABSENT."""

    cells: int
    border: BorderMode
    neighbors: np.ndarray  # (cells, 8) int64
    _index: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.neighbors = np.ascontiguousarray(self.neighbors, dtype=np.int64)
        self.neighbors.flags.writeable = False

    def neighbor(self, cell: int, direction: Direction) -> int:
        return int(self.neighbors[cell, direction])

    def degree(self, cell: int) -> int:
        return int(np.count_nonzero(self.neighbors[cell] >= 0))

    @property
    def neighbor_index(self) -> np.ndarray:
        """(8, cells) transposed neighbor table, as the kernels consume it."""
        if self._index is None:
            self._index = np.ascontiguousarray(self.neighbors.T)
        return self._index

    def to_json(self) -> str:
        edges = []
        for cell in range(self.cells):
            for d in Direction:
                nb = int(self.neighbors[cell, d])
                if nb != ABSENT:
                    edges.append([cell, d.name, nb])
        doc = {"cells": self.cells, "border": self.border.value, "edges": edges}
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "MeshTopology":
        doc = json.loads(text)
        cells = int(doc["cells"])
        if cells < 1:
            raise ConfigError("topology must have at least one cell")
        neighbors = np.full((cells, 8), ABSENT, dtype=np.int64)
        for src, dname, dst in doc["edges"]:
            d = Direction[dname]
            neighbors[int(src), d] = int(dst)
        return cls(cells=cells, border=BorderMode(doc["border"]), neighbors=neighbors)


def grid(height: int, width: int, border: BorderMode = BorderMode.ZERO_PAD) -> MeshTopology:
    """Row-major H x W lattice with full 8-neighborhoods.

    ZERO_PAD leaves border entries ABSENT; PERIODIC wraps both axes.
    """
    if height < 1 or width < 1:
        raise ConfigError(f"grid dimensions must be >= 1, got {height}x{width}")
    neighbors = np.full((height * width, 8), ABSENT, dtype=np.int64)
    for row in range(height):
        for col in range(width):
            cell = row * width + col
            for d, (dr, dc) in OFFSETS.items():
                r, c = row + dr, col + dc
                if border is BorderMode.PERIODIC:
                    neighbors[cell, d] = (r % height) * width + (c % width)
                elif 0 <= r < height and 0 <= c < width:
                    neighbors[cell, d] = r * width + c
    return MeshTopology(cells=height * width, border=border, neighbors=neighbors)


def validate(topology: MeshTopology) -> list[str]:
    """Check id ranges and edge reciprocity; returns violations ([] means ok)."""
    issues = []
    nb = topology.neighbors
    if nb.shape != (topology.cells, 8):
        return [f"neighbor table shape {nb.shape} != ({topology.cells}, 8)"]
    for cell in range(topology.cells):
        for d in Direction:
            other = int(nb[cell, d])
            if other == ABSENT:
                continue
            if not 0 <= other < topology.cells:
                issues.append(f"cell {cell} lists out-of-range neighbor {other} under {d.name}")
                continue
            back = int(nb[other, d.opposite()])
            if back != cell:
                issues.append(
                    f"edge {cell} -> {other} under {d.name} is not reciprocated "
                    f"(cell {other} lists {back} under {d.opposite().name})")
    return issues
