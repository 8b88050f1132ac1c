"""Task space discretization and robot kinematic state.

The task space is a rectangle with the origin at the lower-left corner,
discretized into square cells indexed row-major from the bottom row up.
All geometry in the package works in world coordinates (meters); cell
indices are the discrete currency shared by the density filter and the
partitioning code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - theta) % TWO_PI


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), TWO_PI)


@dataclass(frozen=True)
class GridWorld:
    """Rectangular task space cut into square cells.

    ``width``/``height`` are in meters, ``cells_x``/``cells_y`` give the
    grid resolution. Cells must come out square: width/cells_x must equal
    height/cells_y.
    """

    width: float
    height: float
    cells_x: int
    cells_y: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("world dimensions must be positive")
        if self.cells_x <= 0 or self.cells_y <= 0:
            raise ValueError("grid resolution must be positive")
        sx = self.width / self.cells_x
        sy = self.height / self.cells_y
        if not math.isclose(sx, sy, rel_tol=1e-9):
            raise ValueError(
                f"cells must be square: width/cells_x={sx:g} != height/cells_y={sy:g}"
            )

    @property
    def cell_size(self) -> float:
        return self.width / self.cells_x

    @property
    def cell_area(self) -> float:
        return self.cell_size ** 2

    @property
    def n_cells(self) -> int:
        return self.cells_x * self.cells_y

    def cell_center(self, index: int) -> tuple[float, float]:
        """World coordinates of the center of cell ``index``.

        Index 0 is the lower-left cell; indices advance along +x first
        (row-major with rows stacked in +y).
        """
        if not 0 <= index < self.n_cells:
            raise IndexError(f"cell index {index} out of range [0, {self.n_cells})")
        row, col = divmod(index, self.cells_x)
        s = self.cell_size
        return ((col + 0.5) * s, (row + 0.5) * s)

    def cell_index(self, point) -> int:
        """Index of the cell containing ``point`` (boundaries clamp inward)."""
        x, y = float(point[0]), float(point[1])
        if not (0.0 <= x <= self.width and 0.0 <= y <= self.height):
            raise ValueError(f"point ({x:g}, {y:g}) outside the world")
        s = self.cell_size
        col = min(int(x / s), self.cells_x - 1)
        row = min(int(y / s), self.cells_y - 1)
        return row * self.cells_x + col

    def cell_centers(self) -> np.ndarray:
        """(n_cells, 2) array of cell centers, cached after first call."""
        cached = _CENTER_CACHE.get(self)
        if cached is None:
            s = self.cell_size
            xs = (np.arange(self.cells_x) + 0.5) * s
            ys = (np.arange(self.cells_y) + 0.5) * s
            gx, gy = np.meshgrid(xs, ys)
            cached = np.column_stack([gx.ravel(), gy.ravel()])
            cached.setflags(write=False)
            _CENTER_CACHE[self] = cached
        return cached

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height


# GridWorld is frozen/hashable, so a plain dict keyed by the world works.
_CENTER_CACHE: dict[GridWorld, np.ndarray] = {}


@dataclass
class RobotState:
    """Pose and kinematic limits of one robot.

    ``theta`` is the heading in radians, kept in (-pi, pi]. ``max_speed``
    is the linear limit (m/s), ``max_turn`` the angular limit (rad/s).
    """

    id: int
    position: np.ndarray
    theta: float
    max_speed: float
    max_turn: float
    sensor_type: str = ""

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).copy()
        self.theta = wrap_angle(float(self.theta))

    def copy(self) -> "RobotState":
        return RobotState(
            self.id, self.position.copy(), self.theta,
            self.max_speed, self.max_turn, self.sensor_type,
        )


def clamp_pose(position, theta: float, world: GridWorld) -> tuple[np.ndarray, float]:
    """Clamp a position into the world rectangle and wrap the heading.

    Returns the clamped position (new array) and the heading wrapped to
    (-pi, pi]. Used after every integration step so robots never leave
    the task space.
    """
    p = np.asarray(position, dtype=float)
    clamped = np.array([
        min(max(p[0], 0.0), world.width),
        min(max(p[1], 0.0), world.height),
    ])
    return clamped, wrap_angle(float(theta))
