"""Simulation engine tying sensing, filtering, partitioning and control together.

One step of the pipeline:

1. rebuild the communication graph from current positions,
2. account for the per-step neighbour broadcast of partition inputs,
3. gather density values over each footprint and compute spare capacity,
4. partition the grid for the active method,
5. hand cell slices to their new owners and run the distributed filter
   (predict, simulate detections, multi-sensor update),
6. steer every robot toward its region's density centroid (or along its
   sweep path) and integrate the unicycle pose,
7. record metrics against the targets that generated this step's detections,
8. move the targets.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigError, ScenarioConfig, resolve_catalog
from .control import (CoveragePath, cod_drive, integrate_pose, lloyd_drive,
                      plan_zigzag, zigzag_drive)
from .metrics import area_capacity_stats, estimate_targets, ospa
from .netsim import NeighborGraph, TrafficLedger, build_graph, payload_bytes
from .partition import (PartitionAssignment, ccvd_capacities, ccvd_swap,
                        initial_block_assignment, power_partition,
                        region_mass_centroid, voronoi_partition)
from .phd import DistributedPhd, PhdGrid, simulate_measurements
from .sensors import (SensorSpec, centroid_of_detection, fov_cells,
                      max_capacity, power_radius)
from .targets import (RandomWalkParams, TargetSet, balanced_spawn_rate,
                      step_boids, step_random)
from .world import GridWorld, RobotState

log = logging.getLogger(__name__)


@dataclass
class StepRecord:
    """Per-step scalar outputs kept in memory during a run."""

    step: int
    time: float
    ospa: float
    n_targets: int
    n_estimates: int
    phd_mass: float
    unused: np.ndarray          # per robot
    cell_counts: np.ndarray     # per robot
    detections: np.ndarray      # per robot, clutter included
    area_ratio_std: float
    swap_sweeps: int            # 0 for non-swap methods


@dataclass
class RunResult:
    config: ScenarioConfig
    world: GridWorld
    sensor_types: list[str]
    records: list[StepRecord]
    robot_log: list[tuple]      # (step, robot, x, y, theta)
    target_log: list[tuple]     # (step, id, x, y)
    ledger: TrafficLedger
    events: list[tuple]
    final_phd: np.ndarray
    partition_log: list[tuple]  # (step, owner array) at sampled steps

    def ospa_series(self) -> np.ndarray:
        return np.array([r.ospa for r in self.records])

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])


class Simulation:
    """Owns all mutable state for one scenario run."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        try:
            self.world = GridWorld(config.world.width, config.world.height,
                                   config.world.cells_x, config.world.cells_y)
        except ValueError as exc:
            raise ConfigError(f"bad world: {exc}") from exc
        self.catalog = resolve_catalog(config)
        self.sensor_types = config.robots.expand(self.catalog)
        self.n_robots = len(self.sensor_types)
        self.specs: list[SensorSpec] = [self.catalog.spec(t)
                                        for t in self.sensor_types]
        if config.robots.max_speed <= 0 or config.robots.max_turn <= 0:
            raise ConfigError("robot speed and turn limits must be positive")
        self.c_max = np.array([max_capacity(s, config.mu, self.world.cell_area)
                               for s in self.specs])

        seq = np.random.SeedSequence(config.seed)
        children = seq.spawn(2 + self.n_robots)
        init_rng = np.random.default_rng(children[0])
        self.target_rng = np.random.default_rng(children[1])
        self.meas_rngs = [np.random.default_rng(c) for c in children[2:]]

        self.robots = self._place_robots(init_rng)
        self.targets = TargetSet.spawn_uniform(
            config.targets.count, self.world, config.targets.max_speed,
            init_rng)
        self._init_target_params()

        self.models = config.phd_models()
        owner0, self.fixed_paths = self._initial_partition()
        self.phd = DistributedPhd(
            self.world, self.models, self.n_robots, owner0,
            PhdGrid.uniform(self.world, self.models.initial_mass))
        self.ledger = TrafficLedger()
        self.records: list[StepRecord] = []
        self.robot_log: list[tuple] = []
        self.target_log: list[tuple] = []
        self.partition_log: list[tuple] = []
        self.last_detections = np.zeros(self.n_robots, dtype=int)
        self.assignment: PartitionAssignment | None = None
        self.ccvd_owner: np.ndarray | None = None
        self.t = 0

    # -- setup ---------------------------------------------------------

    def _place_robots(self, rng) -> list[RobotState]:
        cfg = self.config.robots
        n = self.n_robots
        robots = []
        if cfg.start == "lower-edge":
            xs = (np.arange(n) + 0.5) * self.world.width / n
            y = 0.5 * self.world.cell_size
            for i in range(n):
                robots.append(RobotState(i, np.array([xs[i], y]), math.pi / 2,
                                         cfg.max_speed, cfg.max_turn,
                                         self.sensor_types[i]))
        elif cfg.start == "random":
            pos = rng.uniform([0, 0], [self.world.width, self.world.height],
                              size=(n, 2))
            theta = rng.uniform(-math.pi, math.pi, size=n)
            for i in range(n):
                robots.append(RobotState(i, pos[i], float(theta[i]),
                                         cfg.max_speed, cfg.max_turn,
                                         self.sensor_types[i]))
        else:
            raise ConfigError(f"unknown start placement {cfg.start!r}")
        return robots

    def _init_target_params(self):
        tcfg = self.config.targets
        rate = tcfg.spawn_rate
        if rate is None:
            rate = balanced_spawn_rate(tcfg.count, self.world,
                                       tcfg.max_speed, self.config.dt)
        self.walk_params = RandomWalkParams(
            speed=tcfg.max_speed,
            heading_jitter=math.radians(tcfg.heading_jitter_deg),
            spawn_rate=rate)
        # the top-level target speed limit wins over the boids default
        self.boids_params = replace(tcfg.boids, max_speed=tcfg.max_speed)

    def positions(self) -> np.ndarray:
        return np.array([r.position for r in self.robots])

    def _initial_partition(self):
        """Ownership before the first step; sweep paths for the static method."""
        pos = self.positions()
        if self.config.method != "zigzag":
            return voronoi_partition(pos, self.world).owner, None
        # uniform-density Lloyd iterations freeze an even partition
        sites = pos.copy()
        uniform = np.ones(self.world.n_cells)
        for _ in range(100):
            assign = voronoi_partition(sites, self.world)
            moved = 0.0
            for i in range(self.n_robots):
                cells = assign.region(i)
                if len(cells) == 0:
                    continue
                _, c = region_mass_centroid(uniform, cells, self.world)
                moved = max(moved, float(np.hypot(*(c - sites[i]))))
                sites[i] = c
            if moved < self.world.cell_size / 10:
                break
        assign = voronoi_partition(sites, self.world)
        spacing = self.config.zigzag_spacing or self.world.cell_size
        paths = []
        for i in range(self.n_robots):
            cells = assign.region(i)
            if len(cells) == 0:
                paths.append(CoveragePath([self.robots[i].position.copy()]))
            else:
                paths.append(plan_zigzag(cells, self.world, spacing))
        return assign.owner, paths

    # -- per step phases -------------------------------------------------

    def _broadcast_partition_inputs(self, graph: NeighborGraph):
        """Ledger entry for the per-step state broadcast to neighbours.

        Generator methods share one coordinate pair; the swap method also
        ships its latest detection set.
        """
        if self.config.method == "zigzag":
            return
        with_records = self.config.method == "ccvd-cod"
        for i in range(self.n_robots):
            d = graph.degree(i)
            if d == 0:
                continue
            size = payload_bytes(
                coord_pairs=1,
                target_records=int(self.last_detections[i]) if with_records
                else 0)
            self.ledger.record(i, "partition-info", size * d, messages=d)

    def _capacity_pass(self, graph: NeighborGraph):
        """Footprint density gather and per-robot spare capacity."""
        fov = {}
        for i, (spec, robot) in enumerate(zip(self.specs, self.robots)):
            fov[i] = fov_cells(spec, robot.position, robot.theta, self.world)
        gathered = self.phd.gather_fov({i: fov[i][0] for i in fov}, graph,
                                       self.ledger)
        unused = np.zeros(self.n_robots)
        cods = np.zeros((self.n_robots, 2))
        for i, (spec, robot) in enumerate(zip(self.specs, self.robots)):
            _, pd = fov[i]
            v = gathered[i]
            total = float(v.sum())
            c_exp = float(np.dot(pd, v) / total) if total >= 1e-12 else 0.0
            unused[i] = max(0.0, self.c_max[i] - c_exp)
            cods[i] = centroid_of_detection(spec, robot.position, robot.theta)
        return unused, cods

    def _partition(self, graph: NeighborGraph, unused: np.ndarray,
                   cods: np.ndarray) -> tuple[PartitionAssignment, int]:
        method = self.config.method
        pos = self.positions()
        if method == "voronoi":
            return voronoi_partition(pos, self.world), 0
        if method == "voronoi-cod":
            return voronoi_partition(cods, self.world), 0
        if method == "power-cod":
            weights = np.array([power_radius(u) for u in unused])
            return power_partition(cods, weights, self.world), 0
        if method == "ccvd-cod":
            shares = np.maximum(unused, self.world.cell_area)
            ccfg = self.config.consensus
            caps = ccvd_capacities(
                shares, self.world.n_cells, graph,
                epsilon=ccfg.epsilon,
                budget=ccfg.budget_factor * self.n_robots,
                tol=ccfg.tol, ledger=self.ledger)
            # warm start: keep yesterday's cells, let swaps migrate the
            # difference toward the new quotas
            owner0 = self.ccvd_owner
            if owner0 is None:
                owner0 = initial_block_assignment(caps)
            result = ccvd_swap(owner0, cods, caps, graph, self.world,
                               ledger=self.ledger)
            self.ccvd_owner = result.assignment.owner
            return result.assignment, result.sweeps
        # zigzag keeps its frozen assignment
        return PartitionAssignment(self.phd.owner.copy(), pos,
                                   np.zeros(self.n_robots)), 0

    def _sense_and_filter(self, graph: NeighborGraph,
                          assignment: PartitionAssignment):
        self.phd.exchange_slices(assignment.owner, graph, self.ledger)
        self.phd.predict(graph, self.ledger)
        measurements = []
        for i, (spec, robot) in enumerate(zip(self.specs, self.robots)):
            m = simulate_measurements(spec, robot.position, robot.theta,
                                      self.targets.positions,
                                      self.meas_rngs[i], robot=i)
            measurements.append(m)
            self.last_detections[i] = len(m)
        poses = [(r.position, r.theta) for r in self.robots]
        self.phd.update_all(self.specs, poses, measurements, graph,
                            self.ledger)
        return measurements

    def _steer(self, assignment: PartitionAssignment, cods: np.ndarray):
        cfg = self.config
        deadband = 0.1 * self.world.cell_size
        for i, robot in enumerate(self.robots):
            if cfg.method == "zigzag":
                cmd = zigzag_drive(self.fixed_paths[i], robot.position,
                                   robot.theta, cfg.dt, robot.max_speed,
                                   robot.max_turn,
                                   tol=self.world.cell_size / 2)
            else:
                cells = assignment.region(i)
                if len(cells) == 0:
                    goal = robot.position
                else:
                    _, goal = region_mass_centroid(self.phd.slices[i], cells,
                                                   self.world)
                if cfg.method == "voronoi":
                    cmd = lloyd_drive(robot.position, goal, robot.theta,
                                      cfg.dt, robot.max_speed,
                                      robot.max_turn, deadband)
                else:
                    cmd = cod_drive(cods[i], goal, robot.position,
                                    robot.theta, cfg.dt, robot.max_speed,
                                    robot.max_turn, deadband)
            pos, theta = integrate_pose(robot.position, robot.theta, cmd,
                                        cfg.dt, self.world)
            robot.position = pos
            robot.theta = theta

    def _record(self, assignment: PartitionAssignment, unused: np.ndarray,
                swap_sweeps: int):
        cfg = self.config
        values = self.phd.global_values()
        estimates = estimate_targets(values, self.world)
        dist = ospa(estimates, self.targets.positions, cfg.ospa)
        counts = np.bincount(assignment.owner, minlength=self.n_robots)
        stats = area_capacity_stats(counts, unused, self.world.cell_area)
        self.records.append(StepRecord(
            step=self.t, time=self.t * cfg.dt, ospa=dist,
            n_targets=self.targets.count, n_estimates=len(estimates),
            phd_mass=float(values.sum()), unused=unused.copy(),
            cell_counts=counts, detections=self.last_detections.copy(),
            area_ratio_std=stats.std, swap_sweeps=swap_sweeps))
        for i, robot in enumerate(self.robots):
            self.robot_log.append((self.t, i, float(robot.position[0]),
                                   float(robot.position[1]),
                                   float(robot.theta)))
        for k, tid in enumerate(self.targets.ids):
            self.target_log.append((self.t, int(tid),
                                    float(self.targets.positions[k, 0]),
                                    float(self.targets.positions[k, 1])))
        interval = max(1, cfg.outputs.partition_interval)
        if cfg.outputs.dump_partitions and self.t % interval == 0:
            self.partition_log.append((self.t, assignment.owner.copy()))

    def _move_targets(self):
        tcfg = self.config.targets
        if tcfg.mode == "boids":
            self.targets = step_boids(self.targets, self.world,
                                      self.target_rng, self.boids_params,
                                      self.config.dt)
        else:
            self.targets = step_random(self.targets, self.world,
                                       self.target_rng, self.walk_params,
                                       self.config.dt,
                                       reference_count=tcfg.count)

    def step(self):
        self.ledger.set_step(self.t)
        self.phd.step = self.t
        if self.config.comm_radius is None:
            graph = NeighborGraph.complete(self.n_robots)
        else:
            graph = build_graph(self.positions(), self.config.comm_radius)
        self._broadcast_partition_inputs(graph)
        unused, cods = self._capacity_pass(graph)
        assignment, sweeps = self._partition(graph, unused, cods)
        self.assignment = assignment
        self._sense_and_filter(graph, assignment)
        self._record(assignment, unused, sweeps)
        self._steer(assignment, cods)
        self._move_targets()
        self.t += 1

    def run(self) -> RunResult:
        for _ in range(self.config.n_steps):
            self.step()
        return RunResult(
            config=self.config, world=self.world,
            sensor_types=list(self.sensor_types), records=self.records,
            robot_log=self.robot_log, target_log=self.target_log,
            ledger=self.ledger, events=list(self.phd.events),
            final_phd=self.phd.global_values(),
            partition_log=self.partition_log)


def run_scenario(config: ScenarioConfig) -> RunResult:
    return Simulation(config).run()
