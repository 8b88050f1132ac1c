"""Tracking and team metrics.

OSPA is the per-target miss distance between an estimated and a true
target set: cutoff-limited optimal assignment cost plus a cardinality
penalty, normalized by the larger set size. Target estimates are pulled
out of the density grid by greedy peak extraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .world import GridWorld


@dataclass(frozen=True)
class OspaParams:
    """Order ``p`` and cutoff ``c`` of the OSPA metric."""

    p: float = 1.0
    c: float = 3.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("OSPA order must be >= 1")
        if self.c <= 0:
            raise ValueError("OSPA cutoff must be positive")


def ospa(x, y, params: OspaParams) -> float:
    """OSPA distance between two point sets (k, 2).

    Symmetric; empty vs empty is 0, empty vs anything is the cutoff.
    The optimal sub-assignment is found with the Hungarian method.
    """
    xa = np.asarray(x, dtype=float).reshape(-1, 2)
    ya = np.asarray(y, dtype=float).reshape(-1, 2)
    if len(xa) > len(ya):
        xa, ya = ya, xa
    m, n = len(xa), len(ya)
    if n == 0:
        return 0.0
    total = params.c ** params.p * (n - m)
    if m > 0:
        diff = xa[:, None, :] - ya[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        cost = np.minimum(dist, params.c) ** params.p
        rows, cols = linear_sum_assignment(cost)
        total += float(cost[rows, cols].sum())
    return (total / n) ** (1.0 / params.p)


def estimate_targets(values: np.ndarray, world: GridWorld,
                     count: int | None = None) -> np.ndarray:
    """Extract point estimates from a per-cell density.

    The number of estimates is the rounded total mass unless ``count``
    is given. Peaks are taken greedily, suppressing the 3x3 neighborhood
    of each chosen peak; each estimate is the mass-weighted centroid of
    that neighborhood, which refines the peak to sub-cell accuracy.
    """
    flat = np.asarray(values, dtype=float).ravel()
    if count is None:
        count = int(math.floor(flat.sum() + 0.5))
    if count <= 0:
        return np.empty((0, 2))
    grid = flat.reshape(world.cells_y, world.cells_x).copy()
    original = flat.reshape(world.cells_y, world.cells_x)
    s = world.cell_size
    points = []
    for _ in range(count):
        peak = int(np.argmax(grid))
        row, col = divmod(peak, world.cells_x)
        if grid[row, col] <= 0.0:
            break
        r0, r1 = max(row - 1, 0), min(row + 2, world.cells_y)
        c0, c1 = max(col - 1, 0), min(col + 2, world.cells_x)
        patch = original[r0:r1, c0:c1]
        mass = patch.sum()
        if mass <= 0.0:
            break
        ys = (np.arange(r0, r1) + 0.5) * s
        xs = (np.arange(c0, c1) + 0.5) * s
        cx = float((patch.sum(axis=0) * xs).sum() / mass)
        cy = float((patch.sum(axis=1) * ys).sum() / mass)
        points.append((cx, cy))
        grid[r0:r1, c0:c1] = 0.0
    return np.array(points) if points else np.empty((0, 2))


def heterogeneity_level(capacities, convention: str = "sqrt") -> float:
    """Population standard deviation of per-robot footprint scales.

    ``sqrt`` uses g = sqrt(C); ``disc`` uses the power-diagram radius
    g = sqrt(C / pi). A homogeneous team scores 0 either way.
    """
    caps = np.asarray(capacities, dtype=float)
    if caps.size == 0:
        raise ValueError("need at least one capacity value")
    if np.any(caps < 0):
        raise ValueError("capacities must be non-negative")
    if convention == "sqrt":
        g = np.sqrt(caps)
    elif convention == "disc":
        g = np.sqrt(caps / math.pi)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return float(g.std())


@dataclass(frozen=True)
class TeamStats:
    """Aggregate capacity statistics of a robot team."""

    size: int
    total_capacity: float
    heterogeneity_sqrt: float
    heterogeneity_disc: float


def team_stats(capacities) -> TeamStats:
    caps = np.asarray(capacities, dtype=float)
    return TeamStats(
        size=int(caps.size),
        total_capacity=float(caps.sum()),
        heterogeneity_sqrt=heterogeneity_level(caps, "sqrt"),
        heterogeneity_disc=heterogeneity_level(caps, "disc"),
    )


@dataclass(frozen=True)
class AreaCapacityStats:
    """Spread of assigned-area to unused-capacity ratios across a team."""

    ratios: tuple
    mean: float
    std: float


def area_capacity_stats(cell_counts, unused, cell_area: float) -> AreaCapacityStats:
    """Per-robot ratio of assigned area to unused capacity.

    Unused capacities are floored at one cell equivalent, mirroring what
    the capacity allocation does, so robots with saturated sensors do not
    produce infinities.
    """
    counts = np.asarray(cell_counts, dtype=float)
    u = np.maximum(np.asarray(unused, dtype=float), cell_area)
    ratios = counts * cell_area / u
    return AreaCapacityStats(
        ratios=tuple(float(r) for r in ratios),
        mean=float(ratios.mean()),
        std=float(ratios.std()),
    )


def moving_average(series, window: int = 5) -> np.ndarray:
    """Trailing moving average with a truncated warm-up.

    out[t] averages the last ``window`` samples up to and including t;
    before the window fills, it averages what exists so far.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x.copy()
    cs = np.concatenate([[0.0], np.cumsum(x)])
    t = np.arange(1, x.size + 1)
    lo = np.maximum(t - window, 0)
    return (cs[t] - cs[lo]) / (t - lo)
