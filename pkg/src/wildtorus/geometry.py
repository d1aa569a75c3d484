"""Planar polyline geometry: arcs, arclength, winding numbers and intersections."""
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from wildtorus.types import ArcKind, ComplexArray

# chunk size for pairwise segment tests
_CHUNK = 256


@dataclass(frozen=True)
class Arc:
    """Sampled planar curve with a tangent vector per sample.

    Attributes:
        points: Ordered complex samples.
        tangents: Nonzero complex tangent per sample (not necessarily unit length).
        kind: Cone classification, filled in by ``hyperbolicity.classify_arc``.
        closed: Whether the last sample connects back to the first.
    """
    points: ComplexArray
    tangents: ComplexArray
    kind: Optional[ArcKind] = None
    closed: bool = False
    label: str = field(default='', compare=False)

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.complex128)
        tangents = np.asarray(self.tangents, dtype=np.complex128)
        if points.shape != tangents.shape or points.ndim != 1:
            raise ValueError('points and tangents must be 1-d arrays of equal length')
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'tangents', tangents)

    @classmethod
    def from_points(cls, points: Sequence[complex], closed: bool = False, label: str = '') -> 'Arc':
        """Builds an arc whose tangents are finite differences of the samples."""
        points = np.asarray(points, dtype=np.complex128)
        if points.size < 2:
            raise ValueError('an arc needs at least two samples')
        if closed:
            tangents = (np.roll(points, -1) - np.roll(points, 1)) / 2.0
        else:
            tangents = np.gradient(points)
        return cls(points, tangents, closed=closed, label=label)

    def __len__(self) -> int:
        return int(self.points.size)

    @property
    def length(self) -> float:
        return polyline_length(self.points, self.closed)

    def with_kind(self, kind: ArcKind) -> 'Arc':
        return replace(self, kind=kind)

    def reversed(self) -> 'Arc':
        return Arc(self.points[::-1].copy(), -self.tangents[::-1], self.kind, self.closed, self.label)

    def sub_arc(self, start: int, stop: int) -> 'Arc':
        return Arc(self.points[start:stop].copy(), self.tangents[start:stop].copy(), None, False, self.label)

    def unit_tangents(self) -> ComplexArray:
        return self.tangents / np.abs(self.tangents)

    def rows(self) -> List[List[float]]:
        return [[p.real, p.imag, t.real, t.imag] for p, t in zip(self.points, self.tangents)]


def polyline_length(points: ComplexArray, closed: bool = False) -> float:
    points = np.asarray(points, dtype=np.complex128)
    total = float(np.sum(np.abs(np.diff(points))))
    if closed and points.size > 1:
        total += abs(points[0] - points[-1])
    return total


def cumulative_length(points: ComplexArray) -> np.ndarray:
    return np.concatenate([[0.0], np.cumsum(np.abs(np.diff(points)))])


def resample_by_arclength(points: ComplexArray, step: float) -> ComplexArray:
    """Re-samples a polyline at (approximately) uniform arclength ``step``."""
    points = np.asarray(points, dtype=np.complex128)
    s = cumulative_length(points)
    count = max(int(math.ceil(s[-1] / step)), 1) + 1
    targets = np.linspace(0.0, s[-1], count)
    return np.interp(targets, s, points.real) + 1j * np.interp(targets, s, points.imag)


def polygon_winding(polygon: ComplexArray, queries: ComplexArray) -> np.ndarray:
    """Winding number of a closed polygon about each query point.

    Crossing-with-orientation algorithm: an upward crossing with the query on the left
    counts +1, a downward crossing with the query on the right counts −1.
    """
    polygon = np.asarray(polygon, dtype=np.complex128)
    queries = np.atleast_1d(np.asarray(queries, dtype=np.complex128))
    qx, qy = queries.real, queries.imag
    wind = np.zeros(queries.shape, dtype=np.int64)
    starts = polygon
    ends = np.roll(polygon, -1)
    for a, b in zip(starts, ends):
        cross = (b.real - a.real) * (qy - a.imag) - (qx - a.real) * (b.imag - a.imag)
        upward = (a.imag <= qy) & (b.imag > qy) & (cross > 0)
        downward = (a.imag > qy) & (b.imag <= qy) & (cross < 0)
        wind += upward.astype(np.int64) - downward.astype(np.int64)
    return wind


def point_in_polygon(polygon: ComplexArray, queries: ComplexArray) -> np.ndarray:
    return polygon_winding(polygon, queries) != 0


def turns_around(points: ComplexArray, center: complex, closed: bool = False) -> float:
    """Signed number of turns of ``points − center`` (sum of angle increments / 2π)."""
    rel = np.asarray(points, dtype=np.complex128) - center
    if closed:
        rel = np.append(rel, rel[0])
    if np.any(rel == 0):
        return math.nan
    increments = np.angle(rel[1:] / rel[:-1])
    return float(np.sum(increments) / (2 * math.pi))


def full_turns(points: ComplexArray, center: complex, closed: bool = False) -> int:
    """Number of complete turns; closed curves round, open arcs truncate."""
    total = abs(turns_around(points, center, closed))
    if math.isnan(total):
        return 0
    return int(round(total)) if closed else int(math.floor(total + 1e-9))


class Crossing(NamedTuple):
    first_index: int
    second_index: int
    first_param: float
    second_param: float
    point: complex
    angle: float


def _segment_crossings(a0: np.ndarray, a1: np.ndarray, b0: np.ndarray, b1: np.ndarray):
    da = (a1 - a0)[:, None]
    db = (b1 - b0)[None, :]
    diff = b0[None, :] - a0[:, None]
    denom = da.real * db.imag - da.imag * db.real
    with np.errstate(divide='ignore', invalid='ignore'):
        s = (diff.real * db.imag - diff.imag * db.real) / denom
        t = (diff.real * da.imag - diff.imag * da.real) / denom
    hit = (denom != 0) & (s >= 0) & (s < 1) & (t >= 0) & (t < 1)
    return hit, s, t


def segment_crossings(first: ComplexArray, second: ComplexArray, skip_adjacent: bool = False) -> List[Crossing]:
    """All crossings between the segments of two polylines.

    With ``skip_adjacent`` the polylines are the same and neighbouring segments are
    ignored (self-intersection search).
    """
    first = np.asarray(first, dtype=np.complex128)
    second = np.asarray(second, dtype=np.complex128)
    b0, b1 = second[:-1], second[1:]
    result: List[Crossing] = []
    for lo in range(0, first.size - 1, _CHUNK):
        a0 = first[lo:lo + _CHUNK + 1][:-1]
        a1 = first[lo + 1:lo + _CHUNK + 1]
        hit, s, t = _segment_crossings(a0, a1, b0, b1)
        if skip_adjacent:
            rows = np.arange(a0.size)[:, None] + lo
            cols = np.arange(b0.size)[None, :]
            hit &= np.abs(rows - cols) > 1
            hit &= rows < cols
        for i, j in zip(*np.nonzero(hit)):
            seg_a = a1[i] - a0[i]
            seg_b = b1[j] - b0[j]
            angle = abs(math.remainder(float(np.angle(seg_b / seg_a)), math.pi))
            result.append(Crossing(
                int(i + lo), int(j), float(s[i, j]), float(t[i, j]),
                complex(a0[i] + s[i, j] * seg_a), angle,
            ))
    return result


def self_crossings(points: ComplexArray, closed: bool = False) -> List[Crossing]:
    points = np.asarray(points, dtype=np.complex128)
    if closed:
        points = np.append(points, points[0])
    crossings = segment_crossings(points, points, skip_adjacent=True)
    if closed:
        last = points.size - 2
        crossings = [c for c in crossings if not (c.first_index == 0 and c.second_index == last)]
    return crossings


def is_jordan(points: ComplexArray) -> bool:
    """Whether a closed polyline has no self-crossings."""
    return not self_crossings(points, closed=True)


def distance_to_polyline(queries: ComplexArray, polyline: ComplexArray, closed: bool = False) -> np.ndarray:
    """Exact Euclidean distance from each query to a polyline."""
    queries = np.atleast_1d(np.asarray(queries, dtype=np.complex128))
    polyline = np.asarray(polyline, dtype=np.complex128)
    if closed:
        polyline = np.append(polyline, polyline[0])
    a, b = polyline[:-1], polyline[1:]
    seg = b - a
    seg_len2 = np.maximum(np.abs(seg) ** 2, 1e-300)
    best = np.full(queries.shape, np.inf)
    for lo in range(0, queries.size, _CHUNK):
        q = queries[lo:lo + _CHUNK, None]
        t = np.clip(np.real((q - a[None, :]) * np.conj(seg[None, :])) / seg_len2[None, :], 0.0, 1.0)
        dist = np.abs(q - (a[None, :] + t * seg[None, :]))
        best[lo:lo + _CHUNK] = dist.min(axis=1)
    return best


def hausdorff(first: ComplexArray, second: ComplexArray) -> float:
    """Symmetric Hausdorff distance between two sample clouds."""
    a = np.column_stack([np.real(first), np.imag(first)])
    b = np.column_stack([np.real(second), np.imag(second)])
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def circle_arc(center: complex, radius: float, start: float, stop: float, count: int) -> Arc:
    """Counter-clockwise circular arc between angles ``start`` and ``stop`` (radians)."""
    angles = np.linspace(start, stop, count)
    points = center + radius * np.exp(1j * angles)
    tangents = 1j * radius * np.exp(1j * angles)
    return Arc(points, tangents)


def concatenate(arcs: Iterable[Arc], closed: bool = False, label: str = '') -> Arc:
    arcs = list(arcs)
    return Arc(
        np.concatenate([arc.points for arc in arcs]),
        np.concatenate([arc.tangents for arc in arcs]),
        closed=closed,
        label=label,
    )
