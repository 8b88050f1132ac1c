"""Drive laws and coverage paths.

All controllers produce a saturated (speed, turn rate) pair for a
unicycle that translates along its current heading: speed is capped so
the goal is reached rather than overshot, heading error is burned off at
the angular limit (bang-bang with a proportional final approach).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import GridWorld, wrap_angle


@dataclass(frozen=True)
class ControlCommand:
    speed: float
    turn_rate: float

STOP = ControlCommand(0.0, 0.0)


def _drive(anchor, goal, theta: float, dt: float, max_speed: float,
           max_turn: float, deadband: float) -> ControlCommand:
    """Saturated drive moving ``anchor`` toward ``goal``.

    The anchor is whatever point the controller regulates (the robot
    itself, or its detection centroid); translation still happens along
    the robot heading, so the heading is steered at the goal bearing.
    """
    delta = np.asarray(goal, dtype=float) - np.asarray(anchor, dtype=float)
    dist = float(np.hypot(delta[0], delta[1]))
    if dist < deadband:
        speed = 0.0
        turn = 0.0
    else:
        speed = min(dist / dt, max_speed)
        err = wrap_angle(math.atan2(delta[1], delta[0]) - theta)
        turn = math.copysign(min(abs(err) / dt, max_turn), err)
    return ControlCommand(speed, turn)


def cod_drive(cod, region_centroid, position, theta: float, dt: float,
              max_speed: float, max_turn: float,
              deadband: float) -> ControlCommand:
    """Steer so the sensor's detection centroid chases the region centroid.

    Far from the goal this is the plain bearing law of :func:`_drive`.
    Near it, the commands are additionally capped by the centroid's lever
    arm: a turn of ``w`` sweeps the detection centroid ``w * offset``
    sideways per second, so an uncapped bang-bang turn overshoots every
    step and the robot orbits its goal instead of parking on it. Capping
    the turn at lateral_error / offset (and the speed at the along-track
    error) makes the final approach deadbeat while leaving the approach
    phase at the saturated limits.

    Inside the deadband (one cell by convention) the command is zero,
    which keeps converged robots from jittering around the centroid.
    """
    goal = np.asarray(region_centroid, dtype=float)
    cod = np.asarray(cod, dtype=float)
    position = np.asarray(position, dtype=float)
    e = goal - cod
    dist = float(np.hypot(e[0], e[1]))
    if dist < deadband:
        return STOP
    offset = float(np.hypot(*(cod - position)))
    reach = goal - position
    if float(np.hypot(reach[0], reach[1])) < offset:
        # goal inside the centroid's standoff circle: no forward motion
        # can land the centroid on it, so pivot until the footprint
        # faces the goal instead of flip-flopping around it
        err = wrap_angle(math.atan2(reach[1], reach[0]) - theta)
        turn = math.copysign(min(abs(err) / dt, max_turn), err)
        return ControlCommand(0.0, turn)
    hx, hy = math.cos(theta), math.sin(theta)
    along = hx * e[0] + hy * e[1]
    lateral = -hy * e[0] + hx * e[1]
    speed = min(max(along, 0.0) / dt, max_speed)
    err = wrap_angle(math.atan2(e[1], e[0]) - theta)
    turn_mag = abs(err) / dt
    if offset > 1e-9 and along > 0.0:
        # cap homing turns by the lever arm so the centroid cannot
        # overshoot sideways; a goal behind still turns at full rate
        turn_mag = min(turn_mag, abs(lateral) / (offset * dt))
    turn = math.copysign(min(turn_mag, max_turn), err)
    return ControlCommand(speed, turn)


def lloyd_drive(position, region_centroid, theta: float, dt: float,
                max_speed: float, max_turn: float,
                deadband: float) -> ControlCommand:
    """Classic move-to-centroid drive for the plain Voronoi baseline."""
    return _drive(position, region_centroid, theta, dt, max_speed, max_turn,
                  deadband)


def integrate_pose(position, theta: float, cmd: ControlCommand, dt: float,
                   world: GridWorld):
    """Advance the unicycle one step and clamp it into the world.

    Translation uses the heading at the start of the step; the turn is
    applied in parallel rather than stop-and-turn.
    """
    from .world import clamp_pose

    p = np.asarray(position, dtype=float)
    new_p = p + cmd.speed * dt * np.array([math.cos(theta), math.sin(theta)])
    return clamp_pose(new_p, theta + cmd.turn_rate * dt, world)


@dataclass
class CoveragePath:
    """Back-and-forth lane path over a region, followed in ping-pong order."""

    waypoints: np.ndarray
    index: int = 0
    direction: int = 1

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        if len(self.waypoints) == 0:
            raise ValueError("a coverage path needs at least one waypoint")

    def target(self) -> np.ndarray:
        return self.waypoints[self.index]

    def advance_if_reached(self, position, tol: float):
        """Move to the next waypoint once the current one is within ``tol``."""
        p = np.asarray(position, dtype=float)
        goal = self.waypoints[self.index]
        if float(np.hypot(*(goal - p))) <= tol:
            nxt = self.index + self.direction
            if not 0 <= nxt < len(self.waypoints):
                self.direction = -self.direction
                nxt = self.index + self.direction
                if not 0 <= nxt < len(self.waypoints):
                    nxt = self.index  # single-waypoint path
            self.index = nxt


def plan_zigzag(cell_indices, world: GridWorld, spacing: float) -> CoveragePath:
    """Boustrophedon lanes over a set of cells.

    Lanes run parallel to the longer side of the region's bounding box,
    one every ``spacing`` meters, each clipped to the rows of cells it
    serves; every cell center ends up within spacing/2 of some lane.
    """
    if spacing <= 0:
        raise ValueError("lane spacing must be positive")
    idx = np.asarray(cell_indices, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("cannot plan a path over an empty region")
    centers = world.cell_centers()[idx]
    span_x = centers[:, 0].max() - centers[:, 0].min()
    span_y = centers[:, 1].max() - centers[:, 1].min()
    along, across = (0, 1) if span_x >= span_y else (1, 0)

    lo = centers[:, across].min()
    hi = centers[:, across].max()
    n_lanes = max(int(math.ceil((hi - lo) / spacing)) + 1, 1)
    waypoints = []
    forward = True
    for k in range(n_lanes):
        lane = lo + k * spacing
        near = np.abs(centers[:, across] - lane) <= spacing / 2.0 + 1e-9
        if not near.any():
            continue
        a0 = centers[near, along].min()
        a1 = centers[near, along].max()
        first, second = (a0, a1) if forward else (a1, a0)
        for a in ((first, second) if a0 < a1 else (a0,)):
            wp = [0.0, 0.0]
            wp[along] = a
            wp[across] = lane
            waypoints.append(wp)
        forward = not forward
    return CoveragePath(np.asarray(waypoints))


def zigzag_drive(path: CoveragePath, position, theta: float, dt: float,
                 max_speed: float, max_turn: float,
                 tol: float) -> ControlCommand:
    """Follow the coverage path at full speed, waypoint by waypoint."""
    path.advance_if_reached(position, tol)
    return _drive(position, path.target(), theta, dt, max_speed, max_turn,
                  deadband=0.0)
