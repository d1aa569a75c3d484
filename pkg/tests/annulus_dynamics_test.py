import cmath
import math

import numpy as np
import pytest

from wildtorus.annulus_dynamics import (
    CLOSURE_TOLERANCE,
    ESCAPE_CAP,
    R_PARAM_LIMIT,
    BasinDisk,
    PeriodicOrbit,
    annulus_cells,
    annulus_report,
    basin_disk_check,
    build_fundamental_annulus,
    check_self_covering,
    closure_error,
    covering_exponent,
    empirical_escape_bound,
    escape_chain,
    eventually_onto_check,
    find_periodic_points,
    inner_curve,
    periodic_multipliers,
    refine_periodic_orbit,
    shooting_residual,
)
from wildtorus.cells import CellSet
from wildtorus.exceptions import ParameterError
from wildtorus.geometry import is_jordan
from wildtorus.invariant_set import compute_omega
from wildtorus.types import FixedPointKind

from tests.providers.annulus import data_provider_for_periodic_windows


@pytest.fixture(scope="module")
def annulus(planar, outer_loop):
    return build_fundamental_annulus(planar, 0.25, loop=outer_loop)


@pytest.fixture(scope="module")
def coarse_omega(planar, outer_loop):
    return compute_omega(planar, resolution=64, depth=8, loop=outer_loop)


def test_r_param_limit():
    assert R_PARAM_LIMIT == pytest.approx(0.350918, rel=1e-5)


def test_inner_curve(planar):
    curve = inner_curve(planar, 0.25, samples=256)
    assert curve.closed
    assert curve.label == 'gamma0'
    assert is_jordan(curve.points)
    assert curve.points[0] == pytest.approx(-5j)
    with pytest.raises(ParameterError):
        inner_curve(planar, 0.04)


def test_build_fundamental_annulus(planar, annulus):
    assert annulus.inner_radius == pytest.approx(5.0)
    assert annulus.contains(10j)
    assert annulus.contains(-5.0 + 0j)
    assert not annulus.contains(2.0 + 0j)
    assert not annulus.contains(-3.0 + 0j)
    assert not annulus.contains(30.0 + 0j)
    report = annulus_report(planar, annulus)
    assert report.passed
    assert report.jordan
    assert report.image_min_modulus > 5.0


@pytest.mark.parametrize("r_param", [0.0, -0.1, 0.36, 1.0])
def test_annulus_parameter_range(planar, outer_loop, r_param: float):
    with pytest.raises(ParameterError):
        build_fundamental_annulus(planar, r_param, loop=outer_loop)


def test_annulus_samples(annulus):
    points = annulus.sample(200, np.random.default_rng(0))
    assert points.size == 200
    assert np.all(annulus.contains(points))


def test_self_covering(planar, annulus):
    report = check_self_covering(planar, annulus, n_samples=500, seed=0)
    assert report.passed
    assert report.preimage_failures == 0
    assert report.left_arc_clearance > 0
    assert report.minus_margin == pytest.approx(5.0 - (0.05 + 0.95 * 5.0))


def test_covering_exponent(planar, annulus, coarse_omega):
    cells = annulus_cells(annulus, coarse_omega)
    assert cells.count > 0
    report = covering_exponent(planar, annulus, coarse_omega, cap=60)
    assert report.passed
    assert report.exponent >= 1
    assert report.fractions[-1] == 1.0
    assert report.fractions == sorted(report.fractions)


def test_eventually_onto(planar, coarse_omega):
    grid = coarse_omega.grid
    near_source = CellSet.ball(grid, cmath.exp(1j * math.pi / 3), 1.0)
    report = eventually_onto_check(planar, near_source, coarse_omega, cap=200)
    assert report.passed
    assert report.covered
    with pytest.raises(ParameterError):
        eventually_onto_check(planar, CellSet.ball(grid, 35j, 1.0), coarse_omega)


def test_escape_chain(planar):
    chain = escape_chain(planar, 1.0 + 2.0j)
    assert chain.report.length >= 1
    assert chain.report.length == chain.orbit.depth
    assert abs(chain.orbit.end - 1.0) > 0.05 + 0.95 * 40.0
    assert chain.orbit.residual(planar) < 1e-9
    with pytest.raises(ParameterError):
        escape_chain(planar, 1.0 + 0j)
    with pytest.raises(ParameterError):
        escape_chain(planar, 45.0 + 0j)


def test_empirical_escape_bound(planar):
    report = empirical_escape_bound(planar, n_starts=50, seed=0)
    assert report.starts == 50
    assert 1 <= report.max_length < ESCAPE_CAP
    assert report.notes


def test_basin_disk():
    disk = BasinDisk()
    assert disk.center == pytest.approx(cmath.exp(1j * math.pi / 3))
    assert disk.radius == pytest.approx(math.sqrt(0.25 + (2.0 - math.sqrt(3.0) / 2.0) ** 2))
    assert disk.contains(disk.center)
    assert not disk.contains(2j)
    assert disk.contains(2j, closed=True)
    assert not disk.contains(-1.0 + 0j)
    assert not disk.contains(0.005j)
    assert set(disk.boundary(10)) == {'imaginary_axis', 'ray', 'circle', 'small_arc'}
    assert np.all(disk.contains(disk.grid(20), closed=True))


def test_basin_disk_check(planar):
    report = basin_disk_check(planar, n_boundary=200, n_grid=40, n_orbits=10, seed=0)
    assert report.boundary_hits == 0
    assert report.closure_failures == 0
    assert report.segment_failures == 0
    assert report.passed
    assert report.max_error < 1e-8


def test_refine_saddle(planar):
    orbit = refine_periodic_orbit(planar, [21.3 + 0.1j])
    assert orbit[0] == pytest.approx(21.0)
    assert shooting_residual(planar, orbit) < 1e-10
    kind, multipliers = periodic_multipliers(planar, [21.0 + 0j])
    assert kind == FixedPointKind.SADDLE
    assert sorted(abs(m) for m in multipliers) == pytest.approx([0.95, 40.0 / 21.0])


def test_long_orbit_multipliers(planar):
    kind, multipliers = periodic_multipliers(planar, [21.0 + 0j] * 41)
    assert kind == FixedPointKind.SADDLE
    assert abs(multipliers[0]) < 1.0 < abs(multipliers[1])


def test_periodic_orbit_row():
    orbit = PeriodicOrbit((21.0 + 0j,), FixedPointKind.SADDLE, (0.95 + 0j, 1.9 + 0j), 0.0, 'fixed point')
    assert orbit.period == 1
    assert orbit.point == 21.0
    assert orbit.row() == [21.0, 0.0, 1, 'saddle', 0.95, 0.0, 1.9, 0.0]


def test_periodic_window(planar):
    with pytest.raises(ParameterError):
        find_periodic_points(planar, (0j, 0.0))


@pytest.fixture(scope="module")
def saddle_window_search(planar):
    return find_periodic_points(planar, (15 + 5j, 10.0))


def test_closure_error(planar):
    assert closure_error(planar, 21.0 + 0j, 1) < CLOSURE_TOLERANCE
    assert closure_error(planar, 21.5 + 0j, 1) > 1e-3
    assert closure_error(planar, 0j, 3) == math.inf


def test_find_periodic_points_recovers_saddle(saddle_window_search):
    fixed = [o for o in saddle_window_search.orbits if o.period == 1 and o.kind == FixedPointKind.SADDLE]
    assert len(fixed) == 1
    assert fixed[0].point == pytest.approx(21.0)
    assert fixed[0].origin == 'fixed point'


def test_find_periodic_points_closure(planar, saddle_window_search):
    for orbit in saddle_window_search.orbits:
        assert abs(orbit.point - (15 + 5j)) <= 10.0
        assert orbit.residual < CLOSURE_TOLERANCE
        assert closure_error(planar, orbit.point, orbit.period) == pytest.approx(orbit.residual, abs=1e-14)
        assert periodic_multipliers(planar, orbit.orbit)[0] == orbit.kind


def test_find_periodic_points_report(saddle_window_search):
    report = saddle_window_search.report
    kinds = [o.kind for o in saddle_window_search.orbits]
    assert report.sources == kinds.count(FixedPointKind.SOURCE)
    assert report.saddles == kinds.count(FixedPointKind.SADDLE)
    assert report.saddles >= 1
    assert report.failures <= report.attempts
    assert report.window_radius == 10.0


@pytest.mark.parametrize('center, radius', data_provider_for_periodic_windows())
def test_periodic_density_windows(planar, center, radius):
    search = find_periodic_points(planar, (center, radius), max_depth=12, beam=512, stable_depth=4, turns=1.0)
    for orbit in search.orbits:
        assert abs(orbit.point - center) <= radius
        assert closure_error(planar, orbit.point, orbit.period) < CLOSURE_TOLERANCE
        assert orbit.kind in (FixedPointKind.SOURCE, FixedPointKind.SADDLE)
    assert search.report.sources + search.report.saddles == len(search.orbits)
