"""Grid-based target-density filtering.

The filter tracks the expected number of targets per cell. Prediction
applies survival and a discretized Gaussian motion kernel plus a uniform
birth term; the update folds in one sensor's measurement set with the
standard miss/detection split. Measurements are range/bearing pairs in
the sensor frame.

The distributed variant splits the grid between robots along the current
partition. Owners hold the authoritative values for their cells; message
rounds move slices on repartition, lend halo values for prediction, and
route per-measurement normalizers so every sensor's update lands on the
owners of the cells it saw. All traffic flows through the synchronous
message layer, so lost neighbors degrade the result instead of silently
reading global state.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .netsim import (Message, NeighborGraph, TrafficLedger, exchange_round,
                     payload_bytes)
from .sensors import SensorSpec, detection_prob, fov_cells
from .world import GridWorld, wrap_angles

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhdModels:
    """Filter constants: survival, births, motion spread, prior mass."""

    survival: float = 0.99
    birth_rate: float = 0.1       # expected new targets per scan, uniform
    motion_sd: float = 0.5        # meters per step
    initial_mass: float = 1.0     # expected targets in the uniform prior

    def __post_init__(self):
        if not 0.0 <= self.survival <= 1.0:
            raise ValueError("survival probability must be in [0, 1]")
        if self.birth_rate < 0 or self.motion_sd < 0 or self.initial_mass < 0:
            raise ValueError("rates and spreads must be non-negative")


@dataclass
class PhdGrid:
    """Per-cell expected target counts, stored flat in cell-index order."""

    world: GridWorld
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.world.n_cells,):
            raise ValueError("values must be flat with one entry per cell")

    @classmethod
    def uniform(cls, world: GridWorld, mass: float) -> "PhdGrid":
        return cls(world, np.full(world.n_cells, mass / world.n_cells))

    def mass(self) -> float:
        return float(self.values.sum())

    def copy(self) -> "PhdGrid":
        return PhdGrid(self.world, self.values.copy())


def build_motion_kernel(sd: float, cell_size: float):
    """Discretized isotropic Gaussian step kernel.

    Returns ``(offsets, weights)``: integer (dy, dx) offsets and weights
    summing to one, truncated at three standard deviations. Mass pushed
    past the grid edge during prediction is lost, matching an absorbing
    boundary.
    """
    if sd <= 0:
        return np.zeros((1, 2), dtype=int), np.ones(1)
    k = int(math.ceil(3.0 * sd / cell_size))
    d = np.arange(-k, k + 1)
    w1 = np.exp(-0.5 * (d * cell_size / sd) ** 2)
    w2 = np.outer(w1, w1)
    w2 /= w2.sum()
    oy, ox = np.meshgrid(d, d, indexing="ij")
    offsets = np.column_stack([oy.ravel(), ox.ravel()])
    return offsets, w2.ravel()


def _shift_add(acc: np.ndarray, src: np.ndarray, dy: int, dx: int, w: float):
    """acc[x] += w * src[x - (dy, dx)] with zero padding, in place."""
    h, wdt = acc.shape
    if abs(dy) >= h or abs(dx) >= wdt:
        return
    dst_y = slice(max(dy, 0), h + min(dy, 0))
    dst_x = slice(max(dx, 0), wdt + min(dx, 0))
    src_y = slice(max(-dy, 0), h + min(-dy, 0))
    src_x = slice(max(-dx, 0), wdt + min(-dx, 0))
    acc[dst_y, dst_x] += w * src[src_y, src_x]


def predict(grid: PhdGrid, models: PhdModels, kernel=None) -> PhdGrid:
    """Survival + motion + uniform birth.

    With the identity kernel the mass simply scales by survival before
    births; the full kernel also leaks whatever diffuses off the grid.
    """
    world = grid.world
    if kernel is None:
        kernel = build_motion_kernel(models.motion_sd, world.cell_size)
    offsets, weights = kernel
    sv = (models.survival * grid.values).reshape(world.cells_y, world.cells_x)
    acc = np.zeros_like(sv)
    for (dy, dx), w in zip(offsets, weights):
        _shift_add(acc, sv, int(dy), int(dx), float(w))
    out = acc.ravel() + models.birth_rate / world.n_cells
    return PhdGrid(world, out)


@dataclass
class MeasurementSet:
    """Ranges and sensor-frame bearings reported by one robot's sensor."""

    robot: int
    ranges: np.ndarray
    bearings: np.ndarray

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        self.bearings = np.asarray(self.bearings, dtype=float)
        if self.ranges.shape != self.bearings.shape:
            raise ValueError("ranges and bearings must align")

    def __len__(self) -> int:
        return len(self.ranges)


def simulate_measurements(spec: SensorSpec, position, theta: float,
                          target_positions, rng: np.random.Generator,
                          robot: int = 0) -> MeasurementSet:
    """Draw one scan: detections thinned by the detection law, plus clutter.

    Detection noise is Gaussian in range and bearing; noisy returns are
    clamped back into the footprint. Clutter is Poisson with the spec's
    rate, uniform over the footprint in measurement space.
    """
    q = np.asarray(position, dtype=float)
    pts = np.asarray(target_positions, dtype=float).reshape(-1, 2)
    half = spec.viewing_angle / 2.0
    ranges = []
    bearings = []
    if len(pts):
        pd = detection_prob(spec, q, theta, pts)
        detected = rng.random(len(pts)) < pd
        if detected.any():
            d = pts[detected] - q
            r = np.hypot(d[:, 0], d[:, 1])
            b = wrap_angles(np.arctan2(d[:, 1], d[:, 0]) - theta)
            if spec.range_noise_sd > 0:
                r = r + rng.normal(0.0, spec.range_noise_sd, size=len(r))
            if spec.bearing_noise_sd > 0:
                b = b + rng.normal(0.0, spec.bearing_noise_sd, size=len(b))
            ranges.append(np.clip(r, 1e-9, spec.radius))
            bearings.append(np.clip(b, -half, half))
    n_clutter = int(rng.poisson(spec.clutter_rate))
    if n_clutter:
        ranges.append(rng.uniform(0.0, spec.radius, size=n_clutter))
        bearings.append(rng.uniform(-half, half, size=n_clutter))
    if ranges:
        return MeasurementSet(robot, np.concatenate(ranges),
                              np.concatenate(bearings))
    return MeasurementSet(robot, np.empty(0), np.empty(0))


def _cell_observation(position, theta: float, centers: np.ndarray):
    """Ranges and sensor-frame bearings of cell centers."""
    d = centers - np.asarray(position, dtype=float)
    r = np.hypot(d[:, 0], d[:, 1])
    b = wrap_angles(np.arctan2(d[:, 1], d[:, 0]) - theta)
    return r, b


def _psi(spec: SensorSpec, ranges: np.ndarray, bearings: np.ndarray,
         pd: np.ndarray, meas: MeasurementSet,
         cell_size: float) -> np.ndarray:
    """Detection-likelihood matrix (n_measurements, n_cells).

    The range/bearing Gaussian is averaged over each cell (CDF difference
    across the cell's extent in range and in angle) instead of sampled at
    the center. That is the exact discretization of the update integral
    for a piecewise-constant density, and it keeps the update usable when
    the noise sds are much smaller than a cell: a point sample would miss
    every cell center and silently zero out the detection term.
    """
    if spec.range_noise_sd <= 0 or spec.bearing_noise_sd <= 0:
        raise ValueError("the update needs positive range and bearing noise")
    sr, sb = spec.range_noise_sd, spec.bearing_noise_sd
    hr = 0.5 * cell_size
    # angular half-extent of a cell seen from the sensor
    hb = np.arctan2(hr, ranges)[None, :]
    dr = meas.ranges[:, None] - ranges[None, :]
    db = wrap_angles(meas.bearings[:, None] - bearings[None, :])
    g_r = (ndtr((dr + hr) / sr) - ndtr((dr - hr) / sr)) / (2.0 * hr)
    g_b = (ndtr((db + hb) / sb) - ndtr((db - hb) / sb)) / (2.0 * hb)
    return g_r * g_b * pd[None, :]


def clutter_density(spec: SensorSpec) -> float:
    """Clutter intensity per unit of measurement space (range x bearing)."""
    return spec.clutter_rate / (spec.radius * spec.viewing_angle)


def update(grid: PhdGrid, spec: SensorSpec, position, theta: float,
           meas: MeasurementSet) -> PhdGrid:
    """Single-sensor measurement update.

    Cells outside the footprint are untouched. Inside, mass splits into
    a missed-detection part and one normalized detection term per
    measurement. A measurement with a vanishing normalizer (no clutter
    and no overlapping predicted mass) is dropped with a warning.
    """
    world = grid.world
    values = grid.values.copy()
    idx, pd = fov_cells(spec, position, theta, world)
    if idx.size == 0:
        return PhdGrid(world, values)
    vbar = values[idx]
    new = (1.0 - pd) * vbar
    if len(meas):
        centers = world.cell_centers()[idx]
        r, b = _cell_observation(position, theta, centers)
        psi = _psi(spec, r, b, pd, meas, world.cell_size)
        c = clutter_density(spec)
        for zi in range(len(meas)):
            eta = c + float(np.dot(psi[zi], vbar))
            if eta <= 1e-300:
                log.warning("dropping measurement with zero normalizer")
                continue
            new += psi[zi] * vbar / eta
    values[idx] = new
    return PhdGrid(world, values)


class DistributedPhd:
    """One density grid split across robots along the current partition.

    Each robot holds a full-size array that is authoritative only on the
    cells it owns (zero elsewhere). ``step`` stamps logged events and is
    set by the caller each simulation step.
    """

    def __init__(self, world: GridWorld, models: PhdModels, n_robots: int,
                 owner: np.ndarray, initial: PhdGrid):
        self.world = world
        self.models = models
        self.n_robots = n_robots
        self.owner = np.asarray(owner, dtype=np.intp).copy()
        if self.owner.shape != (world.n_cells,):
            raise ValueError("owner map must cover the grid")
        self.kernel = build_motion_kernel(models.motion_sd, world.cell_size)
        self.slices = [
            np.where(self.owner == i, initial.values, 0.0)
            for i in range(n_robots)
        ]
        self.events: list[tuple] = []
        self.step = 0

    # -- views ---------------------------------------------------------

    def global_values(self) -> np.ndarray:
        """Union of the owned slices (they are disjoint by construction)."""
        out = np.zeros(self.world.n_cells)
        for s in self.slices:
            out += s
        return out

    def grid(self, robot: int) -> PhdGrid:
        return PhdGrid(self.world, self.slices[robot].copy())

    def _log(self, kind: str, detail: str):
        self.events.append((self.step, kind, detail))
        log.warning("step %d %s: %s", self.step, kind, detail)

    # -- ownership transfer ---------------------------------------------

    def exchange_slices(self, new_owner: np.ndarray, graph: NeighborGraph,
                        ledger: TrafficLedger | None = None):
        """Move cell values to their new owners after a repartition.

        Transfers between robots that are not graph neighbors are lost:
        the new owner starts those cells at zero and the loss is logged.
        """
        new_owner = np.asarray(new_owner, dtype=np.intp)
        moved = new_owner != self.owner
        outboxes: dict[int, list[Message]] = {}
        if moved.any():
            src = self.owner[moved]
            dst = new_owner[moved]
            cells = np.flatnonzero(moved)
            key = src * self.n_robots + dst
            order = np.argsort(key, kind="stable")
            key, src, dst, cells = key[order], src[order], dst[order], cells[order]
            bounds = np.flatnonzero(np.diff(key)) + 1
            for chunk in np.split(np.arange(len(key)), bounds):
                s, r = int(src[chunk[0]]), int(dst[chunk[0]])
                idx = cells[chunk]
                if s == r:
                    continue
                outboxes.setdefault(s, []).append(Message(
                    s, r, "slice", (idx, self.slices[s][idx].copy()),
                    payload_bytes(coord_pairs=len(idx)),
                ))
        inboxes = exchange_round(graph, outboxes, ledger)

        for i in range(self.n_robots):
            mine = new_owner == i
            fresh = np.zeros(self.world.n_cells)
            keep = mine & (self.owner == i)
            fresh[keep] = self.slices[i][keep]
            filled = keep.copy()
            for msg in inboxes[i]:
                idx, vals = msg.payload
                fresh[idx] = vals
                filled[idx] = True
            missing = int(mine.sum() - filled[mine].sum())
            if missing:
                self._log("slice-lost",
                          f"robot {i} received no values for {missing} cells")
            self.slices[i] = fresh
        self.owner = new_owner.copy()

    # -- remote reads ----------------------------------------------------

    def gather_fov(self, requests: dict, graph: NeighborGraph,
                   ledger: TrafficLedger | None = None) -> dict:
        """Fetch current values at requested cells from their owners.

        ``requests`` maps robot id -> flat cell indices. Cells owned by
        unreachable robots come back as zeros and are logged. Two message
        rounds: requests out, slices back.
        """
        ask: dict[int, list[Message]] = {}
        for i, idx in sorted(requests.items()):
            idx = np.asarray(idx, dtype=np.intp)
            for r in np.unique(self.owner[idx]):
                r = int(r)
                if r == i:
                    continue
                sub = idx[self.owner[idx] == r]
                ask.setdefault(i, []).append(Message(
                    i, r, "fov-request", sub, payload_bytes(coord_pairs=2)))
        req_inbox = exchange_round(graph, ask, ledger)

        reply: dict[int, list[Message]] = {}
        for r in range(self.n_robots):
            for msg in req_inbox[r]:
                idx = msg.payload
                reply.setdefault(r, []).append(Message(
                    r, msg.sender, "fov-slice",
                    (idx, self.slices[r][idx].copy()),
                    payload_bytes(coord_pairs=len(idx)),
                ))
        slice_inbox = exchange_round(graph, reply, ledger)

        out = {}
        for i, idx in sorted(requests.items()):
            idx = np.asarray(idx, dtype=np.intp)
            vals = np.zeros(len(idx))
            own = self.owner[idx] == i
            vals[own] = self.slices[i][idx[own]]
            got = own.copy()
            # footprint indices are sorted (they come from flatnonzero),
            # so replies can be placed by binary search
            for msg in slice_inbox[i]:
                cells, v = msg.payload
                pos = np.searchsorted(idx, cells)
                vals[pos] = v
                got[pos] = True
            if not got.all():
                self._log("fov-missing",
                          f"robot {i} missing {int((~got).sum())} footprint cells")
            out[i] = vals
        return out

    # -- prediction -------------------------------------------------------

    def _halo_transfers(self):
        """Cells each robot must lend for its neighbors' motion update.

        Returns {(src_robot, dst_robot): src cell indices} for every pair
        coupled by a kernel offset across an ownership boundary.
        """
        offsets, _ = self.kernel
        h, w = self.world.cells_y, self.world.cells_x
        owner2 = self.owner.reshape(h, w)
        flat = np.arange(self.world.n_cells).reshape(h, w)
        src_list, dst_list, cell_list = [], [], []
        for dy, dx in offsets:
            dy, dx = int(dy), int(dx)
            if dy == 0 and dx == 0:
                continue
            dst_y = slice(max(dy, 0), h + min(dy, 0))
            dst_x = slice(max(dx, 0), w + min(dx, 0))
            src_y = slice(max(-dy, 0), h + min(-dy, 0))
            src_x = slice(max(-dx, 0), w + min(-dx, 0))
            o_dst = owner2[dst_y, dst_x]
            o_src = owner2[src_y, src_x]
            m = o_dst != o_src
            if m.any():
                src_list.append(o_src[m])
                dst_list.append(o_dst[m])
                cell_list.append(flat[src_y, src_x][m])
        transfers: dict[tuple, np.ndarray] = {}
        if not src_list:
            return transfers
        src = np.concatenate(src_list)
        dst = np.concatenate(dst_list)
        cells = np.concatenate(cell_list)
        key = src * self.n_robots + dst
        order = np.argsort(key, kind="stable")
        key, cells = key[order], cells[order]
        bounds = np.flatnonzero(np.diff(key)) + 1
        for chunk in np.split(np.arange(len(key)), bounds):
            k = int(key[chunk[0]])
            transfers[divmod(k, self.n_robots)] = np.unique(cells[chunk])
        return transfers

    def predict(self, graph: NeighborGraph,
                ledger: TrafficLedger | None = None):
        """Motion/survival/birth update of every owned slice.

        Robots lend boundary values to whoever owns cells within kernel
        reach; a robot that cannot reach a lender predicts with zero
        inflow from that side (logged).
        """
        transfers = self._halo_transfers()
        outboxes: dict[int, list[Message]] = {}
        for (s, r), idx in sorted(transfers.items()):
            outboxes.setdefault(int(s), []).append(Message(
                int(s), int(r), "halo", (idx, self.slices[int(s)][idx].copy()),
                payload_bytes(coord_pairs=len(idx)),
            ))
        inboxes = exchange_round(graph, outboxes, ledger)

        h, w = self.world.cells_y, self.world.cells_x
        offsets, weights = self.kernel
        k = int(np.abs(offsets).max()) if len(offsets) else 0
        expected = {r: sum(len(idx) for (s, rr), idx in transfers.items()
                           if rr == r)
                    for r in range(self.n_robots)}
        birth = self.models.birth_rate / self.world.n_cells
        for i in range(self.n_robots):
            full = self.slices[i].copy()
            received = 0
            for msg in inboxes[i]:
                idx, vals = msg.payload
                full[idx] = vals
                received += len(idx)
            if received < expected[i]:
                self._log("halo-missing",
                          f"robot {i} short {expected[i] - received} halo cells")
            mine = np.flatnonzero(self.owner == i)
            if mine.size == 0:
                self.slices[i] = np.zeros(self.world.n_cells)
                continue
            rows, cols = np.divmod(mine, w)
            r0 = max(int(rows.min()) - k, 0)
            r1 = min(int(rows.max()) + k + 1, h)
            c0 = max(int(cols.min()) - k, 0)
            c1 = min(int(cols.max()) + k + 1, w)
            window = (self.models.survival
                      * full.reshape(h, w)[r0:r1, c0:c1])
            acc = np.zeros_like(window)
            for (dy, dx), wt in zip(offsets, weights):
                _shift_add(acc, window, int(dy), int(dx), float(wt))
            out = np.zeros(self.world.n_cells)
            local = (rows - r0) * (c1 - c0) + (cols - c0)
            out[mine] = acc.ravel()[local] + birth
            self.slices[i] = out

    # -- measurement update ------------------------------------------------

    def update_all(self, specs, poses, measurements, graph: NeighborGraph,
                   ledger: TrafficLedger | None = None):
        """Apply every robot's measurement set, lowest robot id first.

        For each sensing robot, the owners of its footprint cells compute
        partial normalizers on their own slices; the sensor sums them,
        sends the totals back, and the owners apply the update. Owners
        the sensor cannot reach keep their cells as they were (logged).
        """
        for i in range(self.n_robots):
            meas = measurements[i]
            spec: SensorSpec = specs[i]
            position, theta = poses[i]
            idx, pd = fov_cells(spec, position, theta, self.world)
            if idx.size == 0:
                continue
            owners = [int(r) for r in np.unique(self.owner[idx])]

            outboxes: dict[int, list[Message]] = {}
            for r in owners:
                if r == i:
                    continue
                outboxes.setdefault(i, []).append(Message(
                    i, r, "meas", (position, theta, spec, meas),
                    payload_bytes(coord_pairs=1, scalars=1,
                                  target_records=len(meas)),
                ))
            inbox = exchange_round(graph, outboxes, ledger)

            reached = [i] if i in owners else []
            for r in owners:
                if r != i and any(m.sender == i for m in inbox[r]):
                    reached.append(r)
            lost = sorted(set(owners) - set(reached))
            if lost:
                self._log("update-unreachable",
                          f"sensor {i} cannot reach owners {lost}")
            reached = sorted(reached)

            parts = {}
            cells_by_owner = {}
            for r in reached:
                sub = idx[self.owner[idx] == r]
                sub_pd = pd[self.owner[idx] == r]
                cells_by_owner[r] = (sub, sub_pd)
                centers = self.world.cell_centers()[sub]
                rng_, brg = _cell_observation(position, theta, centers)
                if len(meas):
                    psi = _psi(spec, rng_, brg, sub_pd, meas,
                               self.world.cell_size)
                    parts[r] = (psi, psi @ self.slices[r][sub])
                else:
                    parts[r] = (None, np.empty(0))

            back: dict[int, list[Message]] = {}
            for r in reached:
                if r == i:
                    continue
                back.setdefault(r, []).append(Message(
                    r, i, "eta-partial", parts[r][1],
                    payload_bytes(scalars=max(len(meas), 1)),
                ))
            exchange_round(graph, back, ledger)

            c = clutter_density(spec)
            etas = c + sum(parts[r][1] for r in reached) if len(meas) else np.empty(0)

            fwd: dict[int, list[Message]] = {}
            for r in reached:
                if r == i:
                    continue
                fwd.setdefault(i, []).append(Message(
                    i, r, "eta-final", etas,
                    payload_bytes(scalars=max(len(meas), 1)),
                ))
            exchange_round(graph, fwd, ledger)

            for r in reached:
                sub, sub_pd = cells_by_owner[r]
                vbar = self.slices[r][sub]
                new = (1.0 - sub_pd) * vbar
                psi = parts[r][0]
                for zi in range(len(meas)):
                    eta = float(etas[zi])
                    if eta <= 1e-300:
                        # no clutter and no field support: the measurement
                        # carries no usable likelihood, skip it quietly
                        if r == i:
                            self.events.append((self.step, "zero-normalizer",
                                                f"sensor {i} dropped "
                                                f"measurement {zi}"))
                        continue
                    new += psi[zi] * vbar / eta
                self.slices[r][sub] = new
