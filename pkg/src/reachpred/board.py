"""Touch-board geometry.

A vertical board of 7 x 6 squares (columns x rows), each 0.10 m on a side,
faces the subject.  The board plane is x-z at a fixed forward distance; the
shoulder sits at the origin.  Rows count upward from the bottom edge, columns
from the subject's left (negative x).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BoardLayout:
    cols: int = 7
    rows: int = 6
    square: float = 0.10
    center: tuple = (0.0, 0.30, 0.0)

    def __post_init__(self):
        if self.cols < 1 or self.rows < 1 or self.square <= 0.0:
            raise ValueError("board must have positive dimensions")

    @property
    def n_squares(self) -> int:
        return self.cols * self.rows

    @property
    def width(self) -> float:
        return self.cols * self.square

    @property
    def height(self) -> float:
        return self.rows * self.square

    def square_center(self, row: int, col: int) -> np.ndarray:
        """World position of the center of square (row, col)."""
        self._check(row, col)
        cx, cy, cz = self.center
        x = cx - self.width / 2.0 + (col + 0.5) * self.square
        z = cz - self.height / 2.0 + (row + 0.5) * self.square
        return np.array([x, cy, z])

    def sample_point(self, row: int, col: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform random touch point strictly inside square (row, col)."""
        c = self.square_center(row, col)
        half = self.square / 2.0
        return c + np.array([rng.uniform(-half, half), 0.0, rng.uniform(-half, half)])

    def square_of(self, p) -> tuple:
        """Map a point to the (row, col) of the square containing it.

        Points outside the board clamp to the nearest edge square.
        """
        p = np.asarray(p, dtype=float)
        cx, cy, cz = self.center
        col = int(np.floor((p[0] - cx + self.width / 2.0) / self.square))
        row = int(np.floor((p[2] - cz + self.height / 2.0) / self.square))
        return (min(max(row, 0), self.rows - 1), min(max(col, 0), self.cols - 1))

    def squares(self):
        """All (row, col) pairs in row-major order."""
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def _check(self, row: int, col: int):
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise ValueError(f"square ({row}, {col}) outside {self.rows}x{self.cols} board")


def max_touch_distance(board: BoardLayout) -> float:
    """Largest distance from the shoulder to any point on the board."""
    corners = []
    cx, cy, cz = board.center
    for sx in (-1.0, 1.0):
        for sz in (-1.0, 1.0):
            corners.append([cx + sx * board.width / 2.0, cy, cz + sz * board.height / 2.0])
    return float(np.max(np.linalg.norm(np.asarray(corners), axis=1)))
