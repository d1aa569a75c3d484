import cmath
import math

import numpy as np
import pytest

from wildtorus.annulus_dynamics import build_fundamental_annulus
from wildtorus.cells import CellSet, Grid
from wildtorus.exceptions import ContinuationError, InconsistencyError, ParameterError
from wildtorus.geometry import Arc
from wildtorus.manifolds import (
    MIN_UNSTABLE_DEPTH,
    BackwardOrbit,
    arcs_at_level,
    backward_orbit,
    classify_matrix,
    derivative_along,
    find_fixed_points,
    grow_unstable_branch,
    grow_unstable_manifold,
    iterate,
    limit_source,
    local_unstable_manifold,
    mixing_witness,
    radial_arc_hits_unstable,
    skew_fixed_point,
    stable_manifold_arcs,
)
from wildtorus.types import FixedPointKind, RegionTag


def test_fixed_points(planar):
    points = find_fixed_points(planar)
    saddle, source = points['saddle'], points['source']
    assert saddle.kind == FixedPointKind.SADDLE
    assert saddle.location == pytest.approx(21.0)
    assert [value.real for value in saddle.eigenvalues] == pytest.approx([0.95, 40.0 / 21.0])
    assert abs(saddle.unstable_direction.real) < 1e-12
    assert abs(saddle.stable_direction.imag) < 1e-12
    assert source.kind == FixedPointKind.SOURCE
    assert source.location == pytest.approx(cmath.exp(1j * math.pi / 3))
    assert source.multiplier_product == pytest.approx(1.9)
    with pytest.raises(InconsistencyError):
        source.unstable_direction


def test_limit_source():
    source = limit_source()
    assert source.kind == FixedPointKind.SOURCE
    assert source.location == pytest.approx(cmath.exp(1j * math.pi / 3))
    assert source.multiplier_product == pytest.approx(2.0)


def test_classify_matrix():
    kind, values, _ = classify_matrix(np.diag([0.5, 0.25]))
    assert kind == FixedPointKind.SINK
    assert values == (0.25, 0.5)
    assert classify_matrix(np.diag([3.0, 2.0]))[0] == FixedPointKind.SOURCE
    with pytest.raises(InconsistencyError):
        classify_matrix(np.diag([1.0, 2.0]))


def test_iterate_and_products(planar):
    assert iterate(planar, np.array([21.0 + 0j]), 5)[0] == pytest.approx(21.0)
    product = derivative_along(planar, [21.0, 21.0])
    assert sorted(np.linalg.eigvals(product).real) == pytest.approx([0.95 ** 2, (40.0 / 21.0) ** 2])


def test_backward_orbit_at_saddle(planar):
    orbit = backward_orbit(planar, 21.0, 5)
    assert orbit.depth == 5
    assert orbit.branches == (0, 0, 0, 0, 0)
    assert orbit.end == pytest.approx(21.0)
    assert orbit.residual(planar) < 1e-12


def test_backward_orbit_leaves_hyperbolic_region(planar):
    with pytest.raises(ContinuationError) as e:
        backward_orbit(planar, 19.0, 10)
    assert e.value.last_valid == 2
    with pytest.raises(ParameterError):
        backward_orbit(planar, 5.0, 3)
    with pytest.raises(ParameterError):
        backward_orbit(planar, 2.0, 3, region=RegionTag.IN_A_F)


def test_backward_orbit_anywhere(planar):
    orbit = backward_orbit(planar, 5.0 + 2.0j, 4, region=RegionTag.ANY)
    assert orbit.depth == 4
    assert orbit.start == 5.0 + 2.0j
    assert orbit.residual(planar) < 1e-10
    inside_disk = backward_orbit(planar, 3.0, 4, contains=lambda z: abs(z) < 10.0)
    assert all(abs(z) < 10.0 for z in inside_disk.points)


def test_local_unstable_manifold_at_saddle(planar):
    arc = local_unstable_manifold(planar, backward_orbit(planar, 21.0, 40))
    nearest = int(np.argmin(np.abs(arc.points - 21.0)))
    assert abs(arc.points[nearest] - 21.0) < 1e-3
    assert abs(arc.unit_tangents()[nearest].real) < 1e-2
    segment = Arc(np.linspace(15.0, 25.0, 11) + 0j, np.ones(11, dtype=complex))
    crossings = radial_arc_hits_unstable(segment, arc)
    assert len(crossings) == 1
    assert crossings[0].point == pytest.approx(21.0, abs=1e-6)


def test_local_unstable_manifold_needs_hyperbolic_orbit(planar):
    orbit = BackwardOrbit((5.0 + 0j,) * (MIN_UNSTABLE_DEPTH + 1), (0,) * MIN_UNSTABLE_DEPTH, RegionTag.ANY)
    with pytest.raises(ParameterError):
        local_unstable_manifold(planar, orbit)


def test_unstable_branch(planar):
    branch = grow_unstable_branch(planar, arclength_budget=50.0, side=1)
    assert branch.points[0] == pytest.approx(21.0, abs=1e-5)
    assert branch.arc.length >= 50.0
    assert branch.polar_angles()[-1] > 0
    with pytest.raises(ParameterError):
        grow_unstable_branch(planar, side=0)


def test_stable_manifold_arcs(planar):
    arcs = stable_manifold_arcs(planar, depth=2, base_samples=64)
    assert len(arcs_at_level(arcs, 0)) == 1
    for level in (1, 2):
        found = arcs_at_level(arcs, level)
        assert found
        for arc in found:
            image = iterate(planar, arc.points, level)
            assert np.all(np.abs(image.imag) < 1e-8 * np.maximum(1.0, np.abs(image)))
            assert np.all(image.real > 0)
    with pytest.raises(ParameterError):
        stable_manifold_arcs(planar, depth=-1)


def test_mixing_witness(planar):
    grid = Grid.covering(planar, 84)
    near_saddle = CellSet.ball(grid, 21.0 + 0j, 1.5)
    report = mixing_witness(planar, near_saddle, near_saddle, span=3, cap=10)
    assert report.passed
    assert report.m0 == 1
    assert report.steps == 4
    missed = mixing_witness(planar, near_saddle, CellSet.empty(grid), span=3, cap=5)
    assert not missed.passed
    assert missed.m0 is None


def test_skew_fixed_point(planar):
    point = skew_fixed_point(planar)
    assert point.z == pytest.approx(21.0)
    assert abs(point.w) < 1.0
    with pytest.raises(ParameterError):
        skew_fixed_point(planar.with_changes(beta0=0.99, beta1=0.49))


def test_backward_orbit_in_fundamental_annulus(planar):
    orbit = backward_orbit(planar, 10j, 5, RegionTag.IN_A_F)
    assert orbit.depth == 5
    assert orbit.region == RegionTag.IN_A_F
    assert orbit.residual(planar) < 1e-10
    annulus = build_fundamental_annulus(planar)
    assert all(annulus.contains(z) for z in orbit.points)


def test_local_unstable_manifold_needs_long_orbit(planar):
    with pytest.raises(ParameterError):
        local_unstable_manifold(planar, backward_orbit(planar, 21.0, MIN_UNSTABLE_DEPTH - 1))


def test_unstable_manifold_follows_external_boundary(planar, outer_loop):
    curve = grow_unstable_manifold(planar, theta_stop=math.pi)
    nearest = int(np.argmin(np.abs(curve.points - 21.0)))
    assert abs(curve.points[nearest] - 21.0) < 1e-5
    theta = np.angle(curve.points)
    keep = np.abs(theta) < math.pi - 0.05
    gap = np.abs(np.abs(curve.points[keep]) - outer_loop.rho(theta[keep]))
    assert float(np.max(gap)) < 1e-6
    assert float(np.max(np.diff(np.sort(theta[keep])))) < 0.05
