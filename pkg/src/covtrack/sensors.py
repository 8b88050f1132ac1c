"""Sensor footprints, detection laws, and sensing-capacity quantities.

A sensor sees a wedge of viewing angle ``viewing_angle`` and radius
``radius`` centered on the robot heading. Detection probability inside
the wedge depends only on range, through either a constant or an affine
law, clamped to [0, 1].

The capacity quantities defined here drive the partitioning weights:

* detection capability: integral of detection probability over the footprint,
* max capacity: that integral scaled by mu / cell area,
* expected capacity: detection-probability-weighted fraction of the
  target density currently inside the footprint,
* unused capacity: max minus expected, floored at zero,
* power radius: sqrt(unused / pi), the weight used by the power diagram,
* centroid of detection: detection-probability-weighted center of the
  footprint, used as the generator point for the weighted partitions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml
from scipy.integrate import quad

from .world import GridWorld, wrap_angle, wrap_angles

LAW_KINDS = ("constant", "affine")


@dataclass(frozen=True)
class SensorSpec:
    """Static description of one sensor type.

    ``law_kind`` selects the range law: ``constant`` gives f(r) = a,
    ``affine`` gives f(r) = a - b*r, both clamped to [0, 1].
    ``rated_basis`` records how the catalog's rated capacity was computed:
    ``detection`` integrates the detection law, ``footprint`` integrates
    the bare footprint area (law treated as 1 inside the wedge).
    """

    name: str
    viewing_angle: float
    radius: float
    law_kind: str
    law_a: float
    law_b: float = 0.0
    range_noise_sd: float = 0.0
    bearing_noise_sd: float = 0.0
    clutter_rate: float = 1.0
    rated_basis: str = "detection"
    rated_capacity: float | None = None

    def __post_init__(self):
        if not 0.0 < self.viewing_angle <= 2.0 * math.pi + 1e-12:
            raise ValueError("viewing angle must be in (0, 2*pi]")
        if self.radius <= 0:
            raise ValueError("sensor radius must be positive")
        if self.law_kind not in LAW_KINDS:
            raise ValueError(f"unknown detection law {self.law_kind!r}")
        if self.rated_basis not in ("detection", "footprint"):
            raise ValueError(f"unknown rated basis {self.rated_basis!r}")

    def law(self, r):
        """Detection probability at range ``r`` (scalar or array), ignoring the wedge."""
        r = np.asarray(r, dtype=float)
        if self.law_kind == "constant":
            f = np.full_like(r, self.law_a)
        else:
            f = self.law_a - self.law_b * r
        return np.clip(f, 0.0, 1.0)


def detection_prob(spec: SensorSpec, position, theta: float, points) -> np.ndarray:
    """Detection probability of ``points`` (k, 2) for a sensor at a pose.

    Zero outside the wedge; inside, the range law applies. A point at the
    sensor position has bearing 0 and is treated as inside.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = pts - np.asarray(position, dtype=float)
    r = np.hypot(d[:, 0], d[:, 1])
    bearing = wrap_angles(np.arctan2(d[:, 1], d[:, 0]) - theta)
    inside = (r <= spec.radius) & (np.abs(bearing) <= spec.viewing_angle / 2.0)
    out = np.zeros(len(pts))
    out[inside] = spec.law(r[inside])
    return out


def fov_cells(spec: SensorSpec, position, theta: float, world: GridWorld):
    """Cells whose centers fall inside the footprint.

    Returns ``(indices, p_d)``: flat cell indices and the detection
    probability at each cell center. Restricted to the bounding box of
    the footprint first, so the cost scales with the footprint and not
    with the grid.
    """
    q = np.asarray(position, dtype=float)
    s = world.cell_size
    lo_col = max(int((q[0] - spec.radius) / s), 0)
    hi_col = min(int((q[0] + spec.radius) / s) + 1, world.cells_x)
    lo_row = max(int((q[1] - spec.radius) / s), 0)
    hi_row = min(int((q[1] + spec.radius) / s) + 1, world.cells_y)
    if lo_col >= hi_col or lo_row >= hi_row:
        return np.empty(0, dtype=np.intp), np.empty(0)

    cols = np.arange(lo_col, hi_col)
    rows = np.arange(lo_row, hi_row)
    cx = (cols + 0.5) * s - q[0]
    cy = (rows + 0.5) * s - q[1]
    gx, gy = np.meshgrid(cx, cy)
    r2 = gx * gx + gy * gy
    hit = r2 <= spec.radius ** 2
    if spec.viewing_angle < 2.0 * math.pi - 1e-12:
        bearing = wrap_angles(np.arctan2(gy, gx) - theta)
        hit &= np.abs(bearing) <= spec.viewing_angle / 2.0
    if not hit.any():
        return np.empty(0, dtype=np.intp), np.empty(0)

    rr, cc = np.nonzero(hit)
    idx = (rows[rr] * world.cells_x + cols[cc]).astype(np.intp)
    pd = spec.law(np.sqrt(r2[hit]))
    return idx, pd


def _radial_moment(spec: SensorSpec, power: int, basis: str = "detection") -> float:
    """Integral of f(r) * r**power over [0, radius] by adaptive quadrature."""
    if basis == "footprint":
        return spec.radius ** (power + 1) / (power + 1)
    breakpoints = []
    if spec.law_kind == "affine" and spec.law_b > 0:
        for knot in ((spec.law_a - 1.0) / spec.law_b, spec.law_a / spec.law_b):
            if 0.0 < knot < spec.radius:
                breakpoints.append(knot)
    val, _ = quad(
        lambda r: float(spec.law(r)) * r ** power,
        0.0, spec.radius,
        points=breakpoints or None,
        limit=200,
    )
    return val


def detection_capability(spec: SensorSpec) -> float:
    """Integral of the detection probability over the footprint (m^2)."""
    return spec.viewing_angle * _radial_moment(spec, 1)


def footprint_area(spec: SensorSpec) -> float:
    """Plain area of the wedge footprint (m^2)."""
    return spec.viewing_angle * spec.radius ** 2 / 2.0


def max_capacity(spec: SensorSpec, mu: float, cell_area: float) -> float:
    """Largest expected number of detectable targets, mu * D / |cell|."""
    if mu < 0:
        raise ValueError("mu must be non-negative")
    if cell_area <= 0:
        raise ValueError("cell area must be positive")
    return mu * detection_capability(spec) / cell_area


def rated_capacity(spec: SensorSpec, mu_over_cell_area: float) -> float:
    """Capacity as quoted on the catalog sheet for this sensor type.

    Uses the type's rated basis (detection-weighted or bare footprint),
    which is how the quoted per-type numbers were produced.
    """
    integral = spec.viewing_angle * _radial_moment(spec, 1, basis=spec.rated_basis)
    return mu_over_cell_area * integral


def expected_capacity(spec: SensorSpec, position, theta: float,
                      values: np.ndarray, world: GridWorld) -> float:
    """Detection-weighted fraction of the density mass inside the footprint.

    ``values`` is the flat per-cell target density (expected targets per
    cell). Returns sum(p_d * v) / sum(v) over footprint cells; zero when
    the footprint holds no mass.
    """
    idx, pd = fov_cells(spec, position, theta, world)
    if len(idx) == 0:
        return 0.0
    v = values[idx]
    total = float(v.sum())
    if total < 1e-12:
        return 0.0
    return float(np.dot(pd, v) / total)


def unused_capacity(spec: SensorSpec, position, theta: float,
                    values: np.ndarray, world: GridWorld, mu: float) -> float:
    """Unused sensing capacity, floored at zero."""
    c_max = max_capacity(spec, mu, world.cell_area)
    c_exp = expected_capacity(spec, position, theta, values, world)
    return max(0.0, c_max - c_exp)


def centroid_of_detection(spec: SensorSpec, position, theta: float) -> np.ndarray:
    """Detection-probability-weighted centroid of the footprint.

    Lies on the wedge bisector at distance (I2/I1) * 2*sin(angle/2)/angle
    from the sensor, where Ik is the k-th radial moment of the law. For a
    full-circle footprint this collapses onto the sensor position.
    """
    i1 = _radial_moment(spec, 1)
    if i1 <= 1e-15:
        raise ValueError(f"sensor {spec.name!r} has zero detection capability")
    i2 = _radial_moment(spec, 2)
    offset = (i2 / i1) * 2.0 * math.sin(spec.viewing_angle / 2.0) / spec.viewing_angle
    q = np.asarray(position, dtype=float)
    return q + offset * np.array([math.cos(theta), math.sin(theta)])


def power_radius(unused: float) -> float:
    """Radius of the disk whose area equals the unused capacity."""
    if unused < 0:
        raise ValueError("unused capacity must be non-negative")
    return math.sqrt(unused / math.pi)


@dataclass(frozen=True)
class CapacityProfile:
    """Per-robot capacity summary for one simulation step."""

    detection_capability: float
    max_capacity: float
    expected_capacity: float
    unused: float
    power_radius: float
    cod: tuple[float, float]


def capacity_profile(spec: SensorSpec, position, theta: float,
                     values: np.ndarray, world: GridWorld, mu: float) -> CapacityProfile:
    d = detection_capability(spec)
    c_max = mu * d / world.cell_area
    c_exp = expected_capacity(spec, position, theta, values, world)
    unused = max(0.0, c_max - c_exp)
    cod = centroid_of_detection(spec, position, theta)
    return CapacityProfile(
        detection_capability=d,
        max_capacity=c_max,
        expected_capacity=c_exp,
        unused=unused,
        power_radius=power_radius(unused),
        cod=(float(cod[0]), float(cod[1])),
    )


@dataclass(frozen=True)
class SensorCatalog:
    """A named set of sensor types plus team presets built from them."""

    name: str
    mu_over_cell_area: float
    sensors: dict
    teams: dict

    def spec(self, type_name: str) -> SensorSpec:
        try:
            return self.sensors[type_name]
        except KeyError:
            raise KeyError(
                f"sensor type {type_name!r} not in catalog {self.name!r} "
                f"(available: {sorted(self.sensors)})"
            ) from None


def load_catalog(name: str) -> SensorCatalog:
    """Load a sensor catalog shipped with the package by name."""
    res = resources.files("covtrack").joinpath("catalogs", f"{name}.yaml")
    try:
        raw = yaml.safe_load(res.read_text())
    except FileNotFoundError:
        raise KeyError(f"no sensor catalog named {name!r}") from None
    sensors = {}
    for type_name, entry in raw["types"].items():
        law = entry["law"]
        noise = entry.get("noise", {})
        sensors[str(type_name)] = SensorSpec(
            name=f"{raw['name']}:{type_name}",
            viewing_angle=math.radians(entry["viewing_angle_deg"]),
            radius=float(entry["radius_m"]),
            law_kind=law["kind"],
            law_a=float(law["a"]),
            law_b=float(law.get("b", 0.0)),
            range_noise_sd=float(noise.get("range_sd", 0.0)),
            bearing_noise_sd=math.radians(float(noise.get("bearing_sd_deg", 0.0))),
            clutter_rate=float(entry.get("clutter_rate", 1.0)),
            rated_basis=entry.get("rated_basis", "detection"),
            rated_capacity=entry.get("rated_capacity"),
        )
    return SensorCatalog(
        name=raw["name"],
        mu_over_cell_area=float(raw.get("mu_over_cell_area", 1.0)),
        sensors=sensors,
        teams={k: dict(v) for k, v in raw.get("teams", {}).items()},
    )


def available_catalogs() -> list[str]:
    root = resources.files("covtrack").joinpath("catalogs")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))
