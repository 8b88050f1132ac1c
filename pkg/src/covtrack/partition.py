"""Grid partitioning: Voronoi, power diagrams, and capacity-constrained
Voronoi built by distributed consensus plus pairwise cell swapping.

Assignments map every grid cell to exactly one robot. The power diagram
generalizes Voronoi with additive weights on squared distance; the
capacity-constrained variant fixes how many cells each robot owns
(proportional to its unused sensing capacity) and then locally swaps
cells between neighboring robots until no pairwise improvement is left.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .netsim import (NeighborGraph, TrafficLedger, SCALAR_BYTES,
                     connectivity_check, payload_bytes)
from .world import GridWorld

log = logging.getLogger(__name__)


class ConsensusError(RuntimeError):
    """Consensus failed to reach agreement within its iteration budget."""


@dataclass(frozen=True)
class PartitionAssignment:
    """A disjoint cover of the grid: cell index -> owning robot id."""

    owner: np.ndarray
    generators: np.ndarray
    weights: np.ndarray
    capacities: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "owner", np.asarray(self.owner, dtype=np.intp))
        object.__setattr__(self, "generators",
                           np.asarray(self.generators, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @property
    def n(self) -> int:
        return len(self.generators)

    def region(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.owner == i)

    def counts(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.n)


def _power_owner(centers: np.ndarray, generators: np.ndarray,
                 weights: np.ndarray) -> np.ndarray:
    """Argmin of ||x - p_i||^2 - g_i^2 per cell, ties to the lowest id.

    The weight term is shifted by its minimum so that equal weights
    cancel exactly and the result coincides with plain Voronoi cell for
    cell, not just up to floating-point noise.
    """
    w2 = weights ** 2
    shift = w2 - w2.min()
    d2 = ((centers[None, :, :] - generators[:, None, :]) ** 2).sum(axis=2)
    keys = d2 - shift[:, None]
    return np.argmin(keys, axis=0).astype(np.intp)


def voronoi_partition(generators, world: GridWorld) -> PartitionAssignment:
    """Nearest-generator assignment of every cell center."""
    gen = np.asarray(generators, dtype=float).reshape(-1, 2)
    if len(gen) == 0:
        raise ValueError("need at least one generator")
    weights = np.zeros(len(gen))
    owner = _power_owner(world.cell_centers(), gen, weights)
    return PartitionAssignment(owner, gen, weights)


def power_partition(generators, weights, world: GridWorld) -> PartitionAssignment:
    """Power-diagram assignment with additive weights on squared distance."""
    gen = np.asarray(generators, dtype=float).reshape(-1, 2)
    w = np.asarray(weights, dtype=float)
    if len(gen) == 0:
        raise ValueError("need at least one generator")
    if len(w) != len(gen):
        raise ValueError("one weight per generator required")
    if np.any(w < 0):
        raise ValueError("power weights must be non-negative")
    owner = _power_owner(world.cell_centers(), gen, w)
    return PartitionAssignment(owner, gen, w)


def quickselect(values, k: int) -> float:
    """Value of the k-th smallest element (0-indexed), without a full sort.

    Thin wrapper over ``np.partition`` (introselect), kept as a named
    operation because the swap threshold below is defined through it.
    """
    a = np.asarray(values, dtype=float)
    if not 0 <= k < a.size:
        raise IndexError(f"k={k} out of range for {a.size} values")
    return float(np.partition(a, k)[k])


def consensus_step(values: np.ndarray, adjacency: np.ndarray,
                   epsilon: float) -> np.ndarray:
    """One damped agreement update: each robot moves toward its neighbors.

    ``epsilon`` = 1 recovers the raw undamped update, which oscillates as
    soon as any robot has a neighbor disagreeing by much (the two-robot
    case just swaps values forever); stability needs
    epsilon < 1 / max degree.
    """
    v = np.asarray(values, dtype=float)
    deg = adjacency.sum(axis=1)
    return v + epsilon * (adjacency @ v - deg * v)


@dataclass
class ConsensusState:
    """Outcome of a consensus run: final values and agreement status."""

    values: np.ndarray
    iterations: int
    epsilon: float
    converged: bool
    history: np.ndarray


def run_consensus(initial, graph: NeighborGraph, epsilon: float | None = None,
                  budget: int | None = None, tol: float = 1e-6,
                  ledger: TrafficLedger | None = None) -> ConsensusState:
    """Iterate damped agreement until the relative spread drops below ``tol``.

    The damping defaults to 1/(max degree + 1) and the iteration budget
    to 10n. Each iteration every robot sends one scalar to each neighbor.
    """
    v = np.asarray(initial, dtype=float).copy()
    n = graph.n
    if len(v) != n:
        raise ValueError("one initial value per robot required")
    if epsilon is None:
        epsilon = 1.0 / (graph.max_degree() + 1)
    if budget is None:
        budget = 10 * n
    adj = graph.adjacency().astype(float)
    deg = adj.sum(axis=1)
    history = [v.copy()]
    converged = _agreed(v, tol)
    it = 0
    while not converged and it < budget:
        v = v + epsilon * (adj @ v - deg * v)
        it += 1
        history.append(v.copy())
        if ledger is not None:
            for i in range(n):
                if deg[i]:
                    ledger.record(i, "consensus", SCALAR_BYTES * int(deg[i]),
                                  messages=int(deg[i]))
        converged = _agreed(v, tol)
    return ConsensusState(v, it, epsilon, converged, np.array(history))


def _agreed(v: np.ndarray, tol: float) -> bool:
    spread = float(v.max() - v.min())
    scale = max(abs(float(v.mean())), 1e-300)
    return spread / scale <= tol


def proportional_capacities(total: int, shares) -> np.ndarray:
    """Integer capacities proportional to ``shares`` summing to ``total``.

    Largest-remainder rounding with ties to the lower id, then a fixup
    that guarantees every robot keeps at least one cell.
    """
    s = np.asarray(shares, dtype=float)
    n = s.size
    if n == 0:
        raise ValueError("need at least one share")
    if np.any(s <= 0):
        raise ValueError("shares must be positive")
    if total < n:
        raise ValueError(f"cannot give {n} robots at least one cell out of {total}")
    quotas = total * s / s.sum()
    caps = np.floor(quotas).astype(int)
    remainder = total - int(caps.sum())
    if remainder:
        frac = quotas - caps
        order = np.lexsort((np.arange(n), -frac))
        caps[order[:remainder]] += 1
    while (caps == 0).any():
        caps[int(np.argmax(caps == 0))] += 1
        caps[int(np.argmax(caps))] -= 1
    return caps


def ccvd_capacities(unused, total_cells: int, graph: NeighborGraph,
                    epsilon: float | None = None, budget: int | None = None,
                    tol: float = 1e-6,
                    ledger: TrafficLedger | None = None) -> np.ndarray:
    """Per-robot cell quotas proportional to unused capacity.

    Robots agree on a common scale by damped consensus (seeded with
    equal quotas divided by own capacity) while flooding their capacity
    values; the final integer quotas come from largest-remainder rounding
    of the capacity shares, so they are exact, sum to the cell count, and
    depend only on capacity ratios. Raises :class:`ConsensusError` when
    agreement is not reached within the budget, which is what happens on
    a disconnected graph.
    """
    u = np.asarray(unused, dtype=float)
    if np.any(u <= 0):
        raise ValueError("unused capacities must be positive (floor them first)")
    if len(u) != graph.n:
        raise ValueError("one capacity per robot required")
    initial = (total_cells / graph.n) / u
    state = run_consensus(initial, graph, epsilon=epsilon, budget=budget,
                          tol=tol, ledger=ledger)
    if not state.converged:
        raise ConsensusError(
            f"no agreement after {state.iterations} iterations; "
            "is the communication graph connected?"
        )
    if ledger is not None:
        # one flooding round: every robot shares (id, capacity) with neighbors
        for i in range(graph.n):
            d = graph.degree(i)
            if d:
                ledger.record(i, "capacity-share", SCALAR_BYTES * d, messages=d)
    return proportional_capacities(total_cells, u)


def initial_block_assignment(capacities) -> np.ndarray:
    """Contiguous cell-index blocks, one block per robot, sized by capacity."""
    caps = np.asarray(capacities, dtype=int)
    return np.repeat(np.arange(len(caps), dtype=np.intp), caps)


@dataclass(frozen=True)
class CcvdResult:
    assignment: PartitionAssignment
    sweeps: int
    converged: bool
    cost_history: tuple


def ccvd_swap(owner, generators, capacities, graph: NeighborGraph,
              world: GridWorld, max_sweeps: int = 100,
              ledger: TrafficLedger | None = None) -> CcvdResult:
    """Refine an assignment by pairwise cell swaps until quotas are met.

    For every communication edge (i, j), the lower-id robot pools both
    cell sets, ranks the pool by the squared-distance margin
    ||x - p_i||^2 - ||x - p_j||^2, and keeps its quota of lowest-margin
    cells (ties broken by ascending cell index); the rest of the pool
    goes to j. From a quota-consistent start every pairwise pass can
    only lower the total squared-distance cost. The start may also be
    unbalanced (a previous step's assignment under new quotas), in which
    case surplus cells migrate across edges until counts match; on a
    connected graph a sweep that changes nothing certifies that every
    robot holds exactly its quota.

    Pairs where neither side changed since their last evaluation are
    provably stable and are skipped without an exchange.
    """
    gen = np.asarray(generators, dtype=float).reshape(-1, 2)
    caps = np.asarray(capacities, dtype=int)
    owner = np.asarray(owner, dtype=np.intp).copy()
    n = len(gen)
    if len(owner) != world.n_cells:
        raise ValueError("assignment must cover the whole grid")
    if owner.size and not (0 <= owner.min() and owner.max() < n):
        raise ValueError("assignment names a robot outside the team")
    if caps.sum() != world.n_cells or np.any(caps < 0):
        raise ValueError("capacities must be non-negative and sum "
                         "to the cell count")

    centers = world.cell_centers()
    d2 = ((centers[None, :, :] - gen[:, None, :]) ** 2).sum(axis=2)
    cells = [np.flatnonzero(owner == i) for i in range(n)]
    pairs = graph.edge_list()
    cost_history = [sum(float(d2[i, cells[i]].sum()) for i in range(n))]
    converged = False
    sweeps = 0
    dirty = np.ones(n, dtype=bool)
    for sweeps in range(1, max_sweeps + 1):
        fresh = np.zeros(n, dtype=bool)
        changed = 0
        for i, j in pairs:
            if not (dirty[i] or dirty[j] or fresh[i] or fresh[j]):
                continue
            ci, cj = cells[i], cells[j]
            pool = np.concatenate([ci, cj])
            if pool.size == 0:
                continue
            k = min(int(caps[i]), pool.size)
            delta = d2[i, pool] - d2[j, pool]
            take_i = _smallest_mask(delta, k, pool)
            if ledger is not None:
                # j ships its cells and generator to i; i returns j's new set
                ledger.record(j, "swap-state",
                              payload_bytes(coord_pairs=len(cj) + 1))
                ledger.record(i, "swap-assign",
                              payload_bytes(coord_pairs=int(pool.size - k)))
            # unchanged exactly when i keeps its own cells and none of j's
            if k == ci.size and bool(take_i[:ci.size].all()):
                continue
            cells[i] = pool[take_i]
            cells[j] = pool[~take_i]
            changed += int((~take_i[:ci.size]).sum() + take_i[ci.size:].sum())
            fresh[i] = fresh[j] = True
        dirty = fresh
        cost_history.append(sum(float(d2[i, cells[i]].sum())
                                for i in range(n)))
        if changed == 0:
            converged = True
            break
    if not converged:
        log.warning("cell swapping hit the %d-sweep cap before settling",
                    max_sweeps)
    for i in range(n):
        owner[cells[i]] = i
    return CcvdResult(
        PartitionAssignment(owner, gen, np.zeros(n), capacities=caps),
        sweeps, converged, tuple(cost_history),
    )


def _smallest_mask(delta: np.ndarray, k: int,
                   tie_order: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of the k smallest values.

    Ties at the threshold go to the entries with the smallest
    ``tie_order`` values (positions when not given), which keeps the
    split deterministic whatever order the pool was assembled in.
    """
    if k <= 0:
        return np.zeros(delta.size, dtype=bool)
    if k >= delta.size:
        return np.ones(delta.size, dtype=bool)
    tau = quickselect(delta, k - 1)
    mask = delta < tau
    short = k - int(mask.sum())
    if short > 0:
        tie_positions = np.flatnonzero(delta == tau)
        if tie_order is not None:
            order = np.argsort(tie_order[tie_positions], kind="stable")
            tie_positions = tie_positions[order]
        mask[tie_positions[:short]] = True
    return mask


def ccvd_partition(unused, generators, world: GridWorld, graph: NeighborGraph,
                   epsilon: float | None = None, budget: int | None = None,
                   max_sweeps: int = 100,
                   ledger: TrafficLedger | None = None) -> CcvdResult:
    """Capacity allocation plus swap refinement in one call."""
    caps = ccvd_capacities(unused, world.n_cells, graph, epsilon=epsilon,
                           budget=budget, ledger=ledger)
    owner0 = initial_block_assignment(caps)
    return ccvd_swap(owner0, generators, caps, graph, world,
                     max_sweeps=max_sweeps, ledger=ledger)


def region_mass_centroid(values: np.ndarray, cell_indices, world: GridWorld):
    """Mass and density-weighted centroid of a set of cells.

    A region with (numerically) no mass falls back to the geometric
    centroid of its cells, which keeps the drive laws well defined while
    the robot's region is empty of targets.
    """
    idx = np.asarray(cell_indices, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("region has no cells")
    centers = world.cell_centers()[idx]
    v = np.asarray(values, dtype=float)[idx]
    mass = float(v.sum())
    if mass < 1e-12:
        return 0.0, centers.mean(axis=0)
    return mass, (centers * v[:, None]).sum(axis=0) / mass


def lloyd_functional(assignment: PartitionAssignment, values: np.ndarray,
                     world: GridWorld) -> float:
    """Density-weighted squared-distance cost of an assignment."""
    centers = world.cell_centers()
    gen = assignment.generators[assignment.owner]
    d2 = ((centers - gen) ** 2).sum(axis=1)
    w2 = (assignment.weights ** 2)[assignment.owner]
    return float(((d2 - w2) * np.asarray(values, dtype=float)).sum())
