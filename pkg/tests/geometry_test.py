import math
from typing import List

import numpy as np
import pytest

from wildtorus.geometry import (
    Arc,
    circle_arc,
    concatenate,
    cumulative_length,
    distance_to_polyline,
    full_turns,
    hausdorff,
    is_jordan,
    point_in_polygon,
    polygon_winding,
    polyline_length,
    resample_by_arclength,
    segment_crossings,
    self_crossings,
    turns_around,
)
from wildtorus.types import ArcKind

from tests.providers.geometry import data_provider_for_polygons


@pytest.mark.parametrize("test_case", data_provider_for_polygons())
def test_winding(test_case):
    polygon, query, expected = test_case
    assert polygon_winding(polygon, [query]).tolist() == [expected]
    assert point_in_polygon(polygon, query)[0] == (expected != 0)


def test_lengths():
    square = [0j, 1 + 0j, 1 + 1j, 1j]
    assert polyline_length(square) == pytest.approx(3.0)
    assert polyline_length(square, closed=True) == pytest.approx(4.0)
    assert cumulative_length(np.array(square)).tolist() == pytest.approx([0.0, 1.0, 2.0, 3.0])
    circle = circle_arc(0j, 2.0, 0.0, 2 * math.pi, 1001)
    assert circle.length == pytest.approx(4 * math.pi, rel=1e-5)


def test_resample():
    samples = resample_by_arclength(np.array([0j, 10 + 0j]), 1.0)
    assert samples.size == 11
    assert np.allclose(np.diff(samples), 1.0)


def test_turns():
    circle = circle_arc(0j, 2.0, 0.0, 2 * math.pi, 101).points
    assert turns_around(circle, 0j) == pytest.approx(1.0)
    assert turns_around(circle[::-1], 0j) == pytest.approx(-1.0)
    assert turns_around(circle, 5.0) == pytest.approx(0.0, abs=1e-12)
    assert full_turns(circle, 0j) == 1
    assert full_turns(circle[:-10], 0j) == 0
    assert math.isnan(turns_around(np.array([1 + 0j, 0j, 1j]), 0j))
    assert full_turns(np.array([1 + 0j, 0j, 1j]), 0j) == 0


def test_segment_crossings():
    crossings = segment_crossings(np.array([0j, 2 + 0j]), np.array([1 - 1j, 1 + 1j]))
    assert len(crossings) == 1
    assert crossings[0].point == pytest.approx(1 + 0j)
    assert crossings[0].angle == pytest.approx(math.pi / 2)
    assert crossings[0].first_param == pytest.approx(0.5)
    assert segment_crossings(np.array([0j, 2 + 0j]), np.array([1j, 2 + 1j])) == []


def test_self_crossings():
    bowtie = np.array([0j, 1 + 1j, 1 + 0j, 1j])
    square = np.array([0j, 1 + 0j, 1 + 1j, 1j])
    assert len(self_crossings(bowtie, closed=True)) == 1
    assert not is_jordan(bowtie)
    assert is_jordan(square)
    assert is_jordan(circle_arc(3j, 1.0, 0.0, 2 * math.pi, 200).points[:-1])


def test_distances():
    assert distance_to_polyline([0.5 + 1j], np.array([0j, 1 + 0j]))[0] == pytest.approx(1.0)
    assert distance_to_polyline([3 + 0j], np.array([0j, 1 + 0j]))[0] == pytest.approx(2.0)
    assert distance_to_polyline([0.5 + 0.5j], np.array([0j, 1 + 0j, 1 + 1j, 1j]), closed=True)[0] == pytest.approx(0.5)
    assert hausdorff(np.array([0j, 1 + 0j]), np.array([0j, 1 + 0.5j])) == pytest.approx(0.5)


def test_arc_validation():
    with pytest.raises(ValueError):
        Arc(np.array([0j, 1 + 0j]), np.array([1 + 0j]))
    with pytest.raises(ValueError):
        Arc.from_points([1 + 0j])


def test_arc_operations():
    arc = Arc.from_points([0j, 1 + 0j, 2 + 0j], label='segment')
    assert len(arc) == 3
    assert arc.tangents.tolist() == [1 + 0j, 1 + 0j, 1 + 0j]
    assert arc.length == pytest.approx(2.0)
    reverse = arc.reversed()
    assert reverse.points.tolist() == [2 + 0j, 1 + 0j, 0j]
    assert reverse.tangents.tolist() == [-1 + 0j, -1 + 0j, -1 + 0j]
    assert len(arc.sub_arc(1, 3)) == 2
    assert arc.with_kind(ArcKind.QUASI_RADIAL).kind == ArcKind.QUASI_RADIAL
    assert arc.rows()[1] == [1.0, 0.0, 1.0, 0.0]
    assert np.allclose(np.abs(circle_arc(0j, 5.0, 0.0, 1.0, 10).unit_tangents()), 1.0)
    joined = concatenate([arc, arc.reversed()], label='both')
    assert len(joined) == 6
    assert joined.label == 'both'


def _polygon(points: List[complex]) -> np.ndarray:
    return np.asarray(points, dtype=np.complex128)


def test_closed_arc_tangents():
    square = Arc.from_points(_polygon([0j, 1 + 0j, 1 + 1j, 1j]), closed=True)
    assert square.closed
    assert square.tangents[0] == pytest.approx((1 - 1j) / 2)
