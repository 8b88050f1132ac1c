"""Ground-truth target motion.

Two motion modes drive the experiments: a flocking model (separation,
alignment, cohesion) that keeps a fixed population by respawning on the
boundary, and independent random-heading walkers with Poisson arrivals
balancing boundary departures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import GridWorld, wrap_angles


@dataclass
class TargetSet:
    """Positions, headings, and speeds of the live targets.

    ``ids`` are stable across steps so trajectories can be followed
    through births and deaths; ``next_id`` is the id the next spawned
    target will get.
    """

    ids: np.ndarray
    positions: np.ndarray
    headings: np.ndarray
    speeds: np.ndarray
    next_id: int

    @classmethod
    def spawn_uniform(cls, n: int, world: GridWorld, speed: float,
                      rng: np.random.Generator) -> "TargetSet":
        pos = rng.uniform([0.0, 0.0], [world.width, world.height], size=(n, 2))
        headings = rng.uniform(-math.pi, math.pi, size=n)
        return cls(
            ids=np.arange(n, dtype=int),
            positions=pos,
            headings=headings,
            speeds=np.full(n, float(speed)),
            next_id=n,
        )

    @property
    def count(self) -> int:
        return len(self.ids)

    def velocities(self) -> np.ndarray:
        return self.speeds[:, None] * np.column_stack(
            [np.cos(self.headings), np.sin(self.headings)]
        )


@dataclass(frozen=True)
class BoidsParams:
    max_speed: float = 0.2
    separation_radius: float = 1.0
    alignment_radius: float = 3.0
    cohesion_radius: float = 3.0
    separation_gain: float = 1.5
    alignment_gain: float = 1.0
    cohesion_gain: float = 1.0


@dataclass(frozen=True)
class RandomWalkParams:
    speed: float = 1.0
    heading_jitter: float = math.pi / 6.0
    spawn_rate: float | None = None  # None: balance expected departures


def _boundary_spawn(k: int, world: GridWorld, speed: float,
                    rng: np.random.Generator):
    """Spawn ``k`` targets uniformly on the boundary, headed inward."""
    w, h = world.width, world.height
    perimeter = 2.0 * (w + h)
    s = rng.uniform(0.0, perimeter, size=k)
    pos = np.empty((k, 2))
    inward = np.empty(k)
    for i, si in enumerate(s):
        if si < w:                       # bottom edge
            pos[i] = (si, 0.0)
            inward[i] = math.pi / 2.0
        elif si < w + h:                 # right edge
            pos[i] = (w, si - w)
            inward[i] = math.pi
        elif si < 2.0 * w + h:           # top edge
            pos[i] = (si - w - h, h)
            inward[i] = -math.pi / 2.0
        else:                            # left edge
            pos[i] = (0.0, si - 2.0 * w - h)
            inward[i] = 0.0
    headings = wrap_angles(inward + rng.uniform(-math.pi / 2.0, math.pi / 2.0, size=k))
    return pos, headings, np.full(k, float(speed))


def step_boids(targets: TargetSet, world: GridWorld, rng: np.random.Generator,
               params: BoidsParams, dt: float) -> TargetSet:
    """Advance a flock one step; population size stays constant.

    Targets that cross the boundary are replaced by fresh ones entering
    uniformly along the boundary.
    """
    n = targets.count
    if n == 0:
        return targets
    pos = targets.positions
    vel = targets.velocities()

    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)

    accel = np.zeros_like(vel)

    sep_mask = dist < params.separation_radius
    if sep_mask.any():
        # push away from each too-close neighbor, harder when closer
        w = np.where(sep_mask, 1.0 / np.maximum(dist, 1e-6) ** 2, 0.0)
        accel += params.separation_gain * np.einsum("ij,ijk->ik", w, diff)

    ali_mask = dist < params.alignment_radius
    counts = ali_mask.sum(axis=1)
    has = counts > 0
    if has.any():
        mean_v = ali_mask @ vel / np.maximum(counts, 1)[:, None]
        accel[has] += params.alignment_gain * (mean_v[has] - vel[has])

    coh_mask = dist < params.cohesion_radius
    counts = coh_mask.sum(axis=1)
    has = counts > 0
    if has.any():
        centroid = coh_mask @ pos / np.maximum(counts, 1)[:, None]
        accel[has] += params.cohesion_gain * (centroid[has] - pos[has])

    new_vel = vel + accel * dt
    speed = np.hypot(new_vel[:, 0], new_vel[:, 1])
    over = speed > params.max_speed
    new_vel[over] *= (params.max_speed / speed[over])[:, None]
    new_pos = pos + new_vel * dt

    ids = targets.ids.copy()
    headings = np.arctan2(new_vel[:, 1], new_vel[:, 0])
    speeds = np.minimum(np.hypot(new_vel[:, 0], new_vel[:, 1]), params.max_speed)
    next_id = targets.next_id

    gone = ~((new_pos[:, 0] >= 0) & (new_pos[:, 0] <= world.width)
             & (new_pos[:, 1] >= 0) & (new_pos[:, 1] <= world.height))
    k = int(gone.sum())
    if k:
        spawn_pos, spawn_head, spawn_speed = _boundary_spawn(
            k, world, params.max_speed, rng)
        new_pos[gone] = spawn_pos
        headings[gone] = spawn_head
        speeds[gone] = spawn_speed
        ids[gone] = np.arange(next_id, next_id + k)
        next_id += k

    return TargetSet(ids, new_pos, headings, speeds, next_id)


def balanced_spawn_rate(n0: int, world: GridWorld, speed: float, dt: float) -> float:
    """Expected births per step matching boundary departures at population n0.

    Uses the isotropic-flux estimate: a uniformly placed walker crosses
    the boundary with probability speed*dt*perimeter / (pi*area) per step.
    """
    perimeter = 2.0 * (world.width + world.height)
    area = world.width * world.height
    return n0 * speed * dt * perimeter / (math.pi * area)


def step_random(targets: TargetSet, world: GridWorld, rng: np.random.Generator,
                params: RandomWalkParams, dt: float,
                reference_count: int | None = None) -> TargetSet:
    """Advance independent random-heading walkers one step.

    Walkers leave through the boundary; new ones enter as a Poisson
    process. With ``spawn_rate`` unset, the rate balances expected
    departures at ``reference_count`` (defaults to the current count),
    keeping the long-run population stationary.
    """
    pos = targets.positions
    headings = wrap_angles(
        targets.headings
        + rng.uniform(-params.heading_jitter, params.heading_jitter,
                      size=targets.count)
    )
    step_vec = targets.speeds[:, None] * np.column_stack(
        [np.cos(headings), np.sin(headings)]) * dt
    new_pos = pos + step_vec

    keep = ((new_pos[:, 0] >= 0) & (new_pos[:, 0] <= world.width)
            & (new_pos[:, 1] >= 0) & (new_pos[:, 1] <= world.height))
    ids = targets.ids[keep]
    new_pos = new_pos[keep]
    headings = headings[keep]
    speeds = targets.speeds[keep]
    next_id = targets.next_id

    rate = params.spawn_rate
    if rate is None:
        n_ref = targets.count if reference_count is None else reference_count
        rate = balanced_spawn_rate(n_ref, world, params.speed, dt)
    births = int(rng.poisson(rate))
    if births:
        spawn_pos, spawn_head, spawn_speed = _boundary_spawn(
            births, world, params.speed, rng)
        ids = np.concatenate([ids, np.arange(next_id, next_id + births)])
        new_pos = np.vstack([new_pos, spawn_pos])
        headings = np.concatenate([headings, spawn_head])
        speeds = np.concatenate([speeds, spawn_speed])
        next_id += births

    return TargetSet(ids, new_pos, headings, speeds, next_id)
