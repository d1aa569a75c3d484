import json
import math
from dataclasses import replace

import numpy as np
import pytest

from wildtorus.exceptions import ParameterError
from wildtorus.geometry import is_jordan
from wildtorus.invariant_set import (
    compute_internal_boundary,
    compute_omega,
    forward_invariance_check,
    image_of_boundary_check,
    omega_membership,
    region_topology,
)
from wildtorus.types import CellStatus


@pytest.fixture(scope="module")
def region(planar, outer_loop):
    return compute_omega(planar, resolution=128, depth=12, loop=outer_loop)


def test_external_boundary(outer_loop):
    assert outer_loop.rho(0.0) == pytest.approx(21.0, abs=1e-6)
    assert outer_loop.crossing_theta == pytest.approx(math.pi, abs=1e-6)
    assert outer_loop.rho(math.pi) >= 21.0 * math.exp(-math.pi / 3)
    assert outer_loop.rho(0.3) == pytest.approx(outer_loop.rho(-0.3), rel=1e-8)
    assert outer_loop.exit_theta is not None
    assert 0.0 < outer_loop.crossing_angle <= math.pi / 2
    assert outer_loop.label == 'gamma+'


def test_external_boundary_is_a_jordan_curve(outer_loop):
    arc = outer_loop.arc
    assert arc.closed
    assert arc.label == 'gamma+'
    assert is_jordan(arc.points)


def test_loop_contains(outer_loop):
    assert outer_loop.contains(5j)
    assert outer_loop.contains(-5.0)
    assert not outer_loop.contains(30.0)
    assert outer_loop.contains(np.array([1j, 39j])).tolist() == [True, False]
    inset = outer_loop.shrunk(1.0)
    assert inset.rho(0.0) == pytest.approx(20.0, abs=1e-6)
    assert inset.crossing_theta == outer_loop.crossing_theta
    assert inset.label == 'gamma+ inset 1'


def test_internal_boundary(planar):
    inner = compute_internal_boundary(planar, samples=64)
    assert len(inner) == 64
    assert inner.label == 'gamma-'
    assert np.allclose(np.abs(inner.points - 1.0), 0.05)


def test_resolution_floor(planar, outer_loop):
    with pytest.raises(ParameterError):
        compute_omega(planar, resolution=4, depth=2, loop=outer_loop)


def test_region_labels(region):
    assert region.status.shape == (128, 128)
    assert region.status_at(1.0 + 0j) == CellStatus.BOUNDARY
    assert region.status_at(10j) == CellStatus.CERTIFIED_IN
    assert region.status_at(-5.0 + 0j) == CellStatus.CERTIFIED_IN
    assert region.status_at(39j) == CellStatus.CERTIFIED_OUT
    assert region.status_at(100.0 + 0j) == CellStatus.CERTIFIED_OUT
    assert 500.0 < region.area() < math.pi * 40.0 ** 2


def test_region_header(planar, region):
    header = region.header(planar)
    assert set(header) == {'bounds', 'cell_size', 'resolution', 'depth', 'parameters', 'counts', 'halo_cells',
                           'diagnostics'}
    assert header['resolution'] == 128
    assert header['depth'] == 12
    assert sum(header['counts'].values()) == 128 * 128
    assert json.loads(region.header_json(planar))['parameters']['lambda'] == 0.95


def test_image_rows(region):
    rows = region.image_rows()
    assert rows.dtype == np.uint8
    assert np.array_equal(rows[0] == int(CellStatus.CERTIFIED_IN), region.status[-1] == int(CellStatus.CERTIFIED_IN))
    assert int(CellStatus.UNKNOWN) not in np.unique(rows)


def test_region_topology(region):
    report = region_topology(region)
    assert report.passed
    assert report.components == 1
    assert report.holes == 1
    assert report.hole_contains_one
    assert report.in_cells == region.count(CellStatus.CERTIFIED_IN)
    assert report.unknown_cells == region.count(CellStatus.UNKNOWN)


def test_region_topology_reports_unknown_cells(region):
    status = region.status.copy()
    iy, ix = np.nonzero(status == int(CellStatus.CERTIFIED_IN))
    status[iy[0], ix[0]] = int(CellStatus.UNKNOWN)
    marked = replace(region, status=status)
    report = region_topology(marked)
    assert report.unknown_cells == region.count(CellStatus.UNKNOWN) + 1
    assert report.in_cells == region.count(CellStatus.CERTIFIED_IN) - 1
    assert report.components == 1
    assert any('UNKNOWN' in note for note in report.notes)


def test_forward_invariance(planar, region):
    report = forward_invariance_check(planar, region, n_samples=2000, seed=0)
    assert report.passed
    assert report.samples == 2000


def test_image_of_boundary(planar, outer_loop, region):
    assert image_of_boundary_check(planar, outer_loop, region).passed


def test_membership(planar, outer_loop):
    assert omega_membership(planar, 10j, depth=12, loop=outer_loop) == CellStatus.CERTIFIED_IN
    assert omega_membership(planar, 35.0, depth=12, loop=outer_loop) == CellStatus.CERTIFIED_OUT
    assert omega_membership(planar, 1.0 + 0.01j, depth=12, loop=outer_loop) == CellStatus.CERTIFIED_OUT
    with pytest.raises(ParameterError):
        omega_membership(planar, 45.0, loop=outer_loop)
