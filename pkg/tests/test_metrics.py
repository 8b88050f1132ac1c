import math

import numpy as np
import pytest

import oracles
from covtrack.metrics import (AreaCapacityStats, OspaParams,
                              area_capacity_stats, estimate_targets,
                              heterogeneity_level, moving_average, ospa,
                              team_stats)
from covtrack.world import GridWorld


def test_ospa_unit_cases():
    p = OspaParams(p=1.0, c=3.0)
    pts = np.array([[1.0, 2.0], [4.0, 5.0]])
    assert ospa(pts, pts, p) == 0.0
    assert ospa(np.empty((0, 2)), np.empty((0, 2)), p) == 0.0
    # empty against one target costs exactly the cutoff
    assert ospa(np.empty((0, 2)), np.array([[0.0, 0.0]]), p) == pytest.approx(3.0)
    assert ospa(np.array([[0.0, 0.0]]), np.empty((0, 2)), p) == pytest.approx(3.0)


def test_ospa_hand_example():
    # one estimate 1 m off, one target missed: (1 + 3) / 2 = 2 at p=1
    params = OspaParams(p=1.0, c=3.0)
    x = np.array([[0.0, 0.0]])
    y = np.array([[1.0, 0.0], [10.0, 10.0]])
    assert ospa(x, y, params) == pytest.approx(2.0)
    # p=2 squares before averaging
    params2 = OspaParams(p=2.0, c=3.0)
    assert ospa(x, y, params2) == pytest.approx(math.sqrt((1 + 9) / 2))


def test_ospa_matches_bruteforce():
    rng = np.random.default_rng(42)
    for _ in range(120):
        m = int(rng.integers(0, 7))
        n = int(rng.integers(0, 7))
        x = rng.uniform(0, 10, size=(m, 2))
        y = rng.uniform(0, 10, size=(n, 2))
        p = float(rng.choice([1.0, 2.0]))
        c = float(rng.choice([1.0, 3.0]))
        got = ospa(x, y, OspaParams(p=p, c=c))
        want = oracles.ospa_bruteforce(x, y, p, c)
        assert got == pytest.approx(want, abs=1e-12)


def test_ospa_params_validation():
    with pytest.raises(ValueError):
        OspaParams(p=0.5, c=1.0)
    with pytest.raises(ValueError):
        OspaParams(p=1.0, c=0.0)


def test_estimate_targets_two_blobs():
    world = GridWorld(20.0, 20.0, 20, 20)
    values = np.zeros(world.n_cells)
    a = world.cell_index((4.5, 4.5))
    b = world.cell_index((15.5, 12.5))
    values[a] = 1.0
    values[b] = 0.9
    # neighbours share a little mass, the centroid should stay put
    values[a + 1] = 0.05
    values[b - 1] = 0.05
    est = estimate_targets(values, world)
    assert est.shape == (2, 2)
    d_a = np.hypot(est[:, 0] - 4.5, est[:, 1] - 4.5).min()
    d_b = np.hypot(est[:, 0] - 15.5, est[:, 1] - 12.5).min()
    assert d_a < 0.5 and d_b < 0.5


def test_estimate_targets_count_override_and_empty():
    world = GridWorld(10.0, 10.0, 10, 10)
    values = np.zeros(world.n_cells)
    assert estimate_targets(values, world).shape == (0, 2)
    values[world.cell_index((2.5, 2.5))] = 1.2
    values[world.cell_index((7.5, 7.5))] = 1.2
    est = estimate_targets(values, world, count=1)
    assert est.shape == (1, 2)
    # total mass 2.4 rounds to two estimates without the override
    assert estimate_targets(values, world).shape == (2, 2)
    # a lone spike cannot yield more peaks than exist, whatever the mass
    lone = np.zeros(world.n_cells)
    lone[world.cell_index((2.5, 2.5))] = 2.4
    assert estimate_targets(lone, world).shape == (1, 2)


def test_moving_average_examples():
    np.testing.assert_allclose(moving_average([0.0, 10.0, 20.0], 5),
                               [0.0, 5.0, 10.0])
    np.testing.assert_allclose(moving_average([1.0, 2.0, 3.0, 4.0], 2),
                               [1.0, 1.5, 2.5, 3.5])
    series = np.arange(10.0)
    np.testing.assert_allclose(moving_average(series, 1), series)


def test_moving_average_against_convolve():
    rng = np.random.default_rng(5)
    x = rng.normal(size=50)
    w = 5
    got = moving_average(x, w)
    kern = np.ones(w) / w
    want = np.convolve(x, kern)[: len(x)]
    # warm-up divides by the actual window length instead
    for k in range(w - 1):
        want[k] = x[: k + 1].mean()
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_heterogeneity_conventions():
    caps = [4.0, 9.0]
    assert heterogeneity_level(caps, "sqrt") == pytest.approx(0.5)  # std of {2,3}
    assert heterogeneity_level(caps, "disc") == pytest.approx(
        0.5 / math.sqrt(math.pi))
    assert heterogeneity_level([7.0, 7.0, 7.0]) == 0.0
    with pytest.raises(ValueError):
        heterogeneity_level([], "sqrt")
    with pytest.raises(ValueError):
        heterogeneity_level([1.0], "cube")


def test_team_stats():
    stats = team_stats([1.0, 4.0])
    assert stats.size == 2
    assert stats.total_capacity == pytest.approx(5.0)
    assert stats.heterogeneity_sqrt == pytest.approx(0.5)


def test_area_capacity_stats():
    stats = area_capacity_stats([10, 20], [1.0, 2.0], 1.0)
    assert isinstance(stats, AreaCapacityStats)
    np.testing.assert_allclose(stats.ratios, [10.0, 10.0])
    assert stats.std == 0.0
    # unused below one cell equivalent is floored, not divided by
    floored = area_capacity_stats([10], [1e-9], 1.0)
    assert floored.ratios[0] == pytest.approx(10.0)
