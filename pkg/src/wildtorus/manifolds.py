"""Fixed points, invariant manifolds and backward orbits of the planar map."""
import cmath
import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field

from wildtorus.cells import CellSet
from wildtorus.core_maps import (
    derivative_matrix,
    eval_limit,
    eval_map,
    eval_skew,
    fiber_factor,
    limit_derivative,
    preimage_candidates,
    preimages,
)
from wildtorus.exceptions import ContinuationError, ConvergenceError, InconsistencyError, ParameterError
from wildtorus.geometry import Arc, Crossing, cumulative_length, segment_crossings
from wildtorus.hyperbolicity import HyperbolicityDomain
from wildtorus.params import MapParams
from wildtorus.reports import Report
from wildtorus.types import ComplexArray, FixedPointKind, RegionTag, SkewPoint

logger = logging.getLogger(__name__)

NEWTON_ITERATIONS = 100
DEFAULT_ALPHA = 0.5
LOOP_OVERSHOOT = 0.35
MIN_UNSTABLE_DEPTH = 30


@dataclass(frozen=True)
class FixedPoint:
    """Hyperbolic fixed point with its linearisation.

    Eigenvalues are ordered by modulus. For real eigenvalues the eigenvectors are the
    two eigendirections written as complex numbers; for a complex pair they are the
    real and imaginary parts of the eigenvector of the first eigenvalue.
    """
    location: complex
    kind: FixedPointKind
    eigenvalues: Tuple[complex, complex]
    eigenvectors: Tuple[complex, complex]

    @property
    def unstable_direction(self) -> complex:
        if self.kind != FixedPointKind.SADDLE:
            raise InconsistencyError(f'a {self.kind.value} has no single unstable direction')
        return self.eigenvectors[1]

    @property
    def stable_direction(self) -> complex:
        if self.kind != FixedPointKind.SADDLE:
            raise InconsistencyError(f'a {self.kind.value} has no single stable direction')
        return self.eigenvectors[0]

    @property
    def multiplier_product(self) -> float:
        return float(abs(self.eigenvalues[0] * self.eigenvalues[1]))


def classify_matrix(matrix: np.ndarray) -> Tuple[FixedPointKind, Tuple[complex, complex], Tuple[complex, complex]]:
    """Kind, eigenvalues (by modulus) and eigen-directions of a 2×2 real matrix."""
    values, vectors = np.linalg.eig(np.asarray(matrix, dtype=float))
    order = np.argsort(np.abs(values))
    values, vectors = values[order], vectors[:, order]
    small, large = np.abs(values)
    if small < 1.0 < large:
        kind = FixedPointKind.SADDLE
    elif small > 1.0:
        kind = FixedPointKind.SOURCE
    elif large < 1.0:
        kind = FixedPointKind.SINK
    else:
        raise InconsistencyError(f'non-hyperbolic linearisation with multipliers {values!r}')
    if np.all(np.isreal(values)):
        directions = tuple(
            complex(vectors[0, k].real, vectors[1, k].real) / np.hypot(vectors[0, k].real, vectors[1, k].real)
            for k in range(2)
        )
    else:
        v = vectors[:, 0]
        directions = (complex(v[0].real, v[1].real), complex(v[0].imag, v[1].imag))
    return kind, (complex(values[0]), complex(values[1])), directions


def _newton(residual: Callable[[complex], complex], matrix: Callable[[complex], np.ndarray], seed: complex,
            tolerance: float = 1e-13, max_iterations: int = NEWTON_ITERATIONS) -> complex:
    z = complex(seed)
    value = residual(z)
    for _ in range(max_iterations):
        if abs(value) <= tolerance * (1.0 + abs(z)):
            return z
        jac = matrix(z) - np.eye(2)
        step = np.linalg.solve(jac, [-value.real, -value.imag])
        z += complex(step[0], step[1])
        value = residual(z)
    raise ConvergenceError(f'Newton from {seed!r} did not converge', residual=abs(value), iterations=max_iterations)


def fixed_point_at(p: MapParams, seed: complex) -> FixedPoint:
    """Newton refinement of a fixed point of ``F`` near ``seed``."""
    z = _newton(lambda x: complex(eval_map(p, x)) - x, lambda x: derivative_matrix(p, x), seed)
    kind, values, vectors = classify_matrix(derivative_matrix(p, z))
    return FixedPoint(z, kind, values, vectors)


def find_fixed_points(p: MapParams) -> Dict[str, FixedPoint]:
    """The saddle ``p_F`` (seeded at ``1 + (1−λ)⁻¹``) and the source ``p⁺_F`` (seeded at ``e^{iπ/3}``).

    Raises:
        ConvergenceError: If Newton does not converge within 100 iterations.
        InconsistencyError: If a point does not classify as expected.
    """
    saddle = fixed_point_at(p, p.saddle_guess)
    source = fixed_point_at(p, cmath.exp(1j * math.pi / 3))
    if saddle.kind != FixedPointKind.SADDLE:
        raise InconsistencyError(f'expected a saddle at {saddle.location!r}, found {saddle.kind.value}')
    if source.kind != FixedPointKind.SOURCE:
        raise InconsistencyError(f'expected a source at {source.location!r}, found {source.kind.value}')
    logger.debug('saddle %r multipliers %r; source %r', saddle.location, saddle.eigenvalues, source.location)
    return {'saddle': saddle, 'source': source}


def _limit_matrix(z: complex) -> np.ndarray:
    col_x = complex(limit_derivative(z, 1.0))
    col_y = complex(limit_derivative(z, 1j))
    return np.array([[col_x.real, col_y.real], [col_x.imag, col_y.imag]])


def limit_source() -> FixedPoint:
    """The source ``e^{iπ/3}`` of the limit map ``G†``."""
    seed = cmath.exp(1j * math.pi / 3)
    z = _newton(lambda x: complex(eval_limit(x)) - x, _limit_matrix, seed)
    kind, values, vectors = classify_matrix(_limit_matrix(z))
    return FixedPoint(z, kind, values, vectors)


def iterate(p: MapParams, z: ComplexArray, steps: int) -> ComplexArray:
    z = np.asarray(z, dtype=np.complex128)
    for _ in range(steps):
        z = np.asarray(eval_map(p, z))
    return z


@dataclass(frozen=True)
class UnstableBranch:
    """One branch of ``W^u(p_F)`` as the image ``F^level`` of a seed segment.

    ``points[k] = F^level(saddle + params[k]·direction)``.
    """
    saddle: complex
    direction: complex
    params: np.ndarray
    points: ComplexArray
    level: int
    side: int
    exit_theta: Optional[float] = None

    @property
    def arc(self) -> Arc:
        return Arc.from_points(self.points, label=f'W^u side {self.side:+d}')

    def polar_angles(self) -> np.ndarray:
        """Unwrapped arguments along the branch, starting at ``arg(saddle)``."""
        angles = np.unwrap(np.angle(self.points))
        return angles - angles[0] + cmath.phase(self.saddle)

    def seed_points(self, params: np.ndarray) -> ComplexArray:
        return self.saddle + np.asarray(params) * self.direction


def _refine_branch(p: MapParams, seed: Callable[[np.ndarray], ComplexArray], params: np.ndarray,
                   points: ComplexArray, level: int, max_turn: float, rel_step: float,
                   max_points: int) -> Tuple[np.ndarray, ComplexArray]:
    for _ in range(64):
        d = np.diff(points)
        split = np.abs(d) > rel_step * np.maximum(np.abs(points[:-1]), np.abs(points[1:]))
        if d.size >= 2:
            with np.errstate(divide='ignore', invalid='ignore'):
                turn = np.abs(np.angle(d[1:] / d[:-1]))
            bent = np.nan_to_num(turn) > max_turn
            split[:-1] |= bent
            split[1:] |= bent
        # parameters already adjacent in floating point cannot be split further
        split &= np.diff(params) > 8 * np.finfo(float).eps * np.abs(params[1:])
        where = np.nonzero(split)[0]
        if where.size == 0:
            break
        if points.size + where.size > max_points:
            raise ContinuationError('unstable manifold needs more samples than allowed', last_valid=level)
        mids = 0.5 * (params[where] + params[where + 1])
        params = np.insert(params, where + 1, mids)
        points = np.insert(points, where + 1, iterate(p, seed(mids), level))
    return params, points


def grow_unstable_branch(p: MapParams, saddle: Optional[FixedPoint] = None, arclength_budget: Optional[float] = None,
                         side: int = 1, theta_stop: float = math.pi + LOOP_OVERSHOOT, seed_length: float = 1e-6,
                         max_turn_deg: float = 2.0, rel_step: float = 0.01, max_levels: int = 200,
                         max_points: int = 400_000, stop_outside: bool = False) -> UnstableBranch:
    """Grows one branch of the unstable manifold of the saddle by fundamental domains.

    A segment of length ``seed_length`` along the unstable eigenvector is pushed forward
    one level at a time; after each level the samples are refined by bisecting the seed
    parameter and recomputing ``F^level`` exactly, until consecutive samples are closer
    than ``rel_step·|z|`` and the polyline turns by at most ``max_turn_deg`` per sample.
    Growth stops once the polar angle has advanced by ``theta_stop`` (on the ``side``
    half-plane) or the arclength reaches the budget.

    Raises:
        ContinuationError: If ``stop_outside`` and the branch leaves ``H_λ``.
    """
    if side not in (1, -1):
        raise ParameterError(f'side must be +1 or -1, got {side}')
    saddle = saddle or find_fixed_points(p)['saddle']
    direction = saddle.unstable_direction
    # the +1 side turns counter-clockwise from the saddle
    if (direction / saddle.location).imag * side < 0:
        direction = -direction
    direction = direction / abs(direction)

    def seed(params: np.ndarray) -> ComplexArray:
        return saddle.location + np.asarray(params) * direction

    params = np.linspace(0.0, seed_length, 33)
    points = seed(params)
    domain = HyperbolicityDomain.of(p)
    max_turn = math.radians(max_turn_deg)
    exit_theta = None
    for level in range(1, max_levels + 1):
        points = np.asarray(eval_map(p, points))
        params, points = _refine_branch(p, seed, params, points, level, max_turn, rel_step, max_points)
        angles = side * (np.unwrap(np.angle(points)) - np.angle(points[0]))
        lengths = cumulative_length(points)
        done = np.nonzero(angles >= theta_stop)[0]
        if arclength_budget is not None:
            over = np.nonzero(lengths >= arclength_budget)[0]
            if over.size and (done.size == 0 or over[0] < done[0]):
                done = over
        if done.size:
            params, points, angles = params[:done[0] + 1], points[:done[0] + 1], angles[:done[0] + 1]
        outside = np.nonzero(~domain.contains(points))[0]
        if outside.size and exit_theta is None:
            exit_theta = float(side * angles[outside[0]])
            logger.info('unstable branch leaves H at theta=%.6f (level %d)', exit_theta, level)
            if stop_outside:
                raise ContinuationError('unstable manifold left the domain of hyperbolicity', last_valid=exit_theta)
        if done.size:
            logger.debug('unstable branch complete after %d levels with %d samples', level, points.size)
            return UnstableBranch(saddle.location, direction, params, points, level, side, exit_theta)
    raise ContinuationError(f'unstable manifold did not reach theta={theta_stop} in {max_levels} levels',
                            last_valid=float(np.max(angles)))


def grow_unstable_manifold(p: MapParams, saddle: Optional[FixedPoint] = None,
                           arclength_budget: Optional[float] = None, **options) -> Arc:
    """Both branches of ``W^u(p_F)`` as one arc, lower branch reversed in front of the upper."""
    upper = grow_unstable_branch(p, saddle, arclength_budget, side=1, **options)
    lower = grow_unstable_branch(p, saddle, arclength_budget, side=-1, **options)
    points = np.concatenate([lower.points[:0:-1], upper.points])
    return Arc.from_points(points, label='W^u')


@dataclass
class _Chain:
    """Level-0 parameters with the exact preimage chain of every sample."""
    rows: List[np.ndarray]
    path: str

    @property
    def top(self) -> np.ndarray:
        return self.rows[-1]


def _pick_nearest(candidates: Tuple[np.ndarray, np.ndarray], left: np.ndarray, right: np.ndarray) -> np.ndarray:
    first, second = candidates
    cost_first = np.abs(first - left) + np.abs(first - right)
    cost_second = np.abs(second - left) + np.abs(second - right)
    return np.where(cost_second < cost_first, second, first)


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.diff(padded)
    return list(zip(np.nonzero(edges == 1)[0], np.nonzero(edges == -1)[0]))


def _lift_chain(p: MapParams, chain: _Chain, branch: int, rel_step: float,
                max_points: int) -> List[_Chain]:
    first, second, valid = preimage_candidates(p, chain.top)
    lifted: List[_Chain] = []
    for lo, hi in _runs(valid):
        if hi - lo < 2:
            continue
        a, b = first[lo:hi], second[lo:hi]
        flips = np.abs(b[1:] - a[:-1]) < np.abs(a[1:] - a[:-1])
        parity = np.concatenate([[branch], branch + np.cumsum(flips)]) % 2
        row = np.where(parity == 0, a, b)
        rows = [r[lo:hi].copy() for r in chain.rows] + [row]
        lifted.extend(_refine_chain(p, rows, rel_step, max_points, f'{chain.path}{branch}'))
    return lifted


def _refine_chain(p: MapParams, rows: List[np.ndarray], rel_step: float, max_points: int,
                  path: str) -> List[_Chain]:
    broken = np.zeros(rows[0].size - 1, dtype=bool)
    for _ in range(40):
        top = rows[-1]
        gap = np.abs(np.diff(top))
        split = (gap > rel_step * (1.0 + np.maximum(np.abs(top[:-1]), np.abs(top[1:])))) & ~broken
        split &= np.diff(rows[0].real) > 8 * np.finfo(float).eps * np.abs(rows[0][1:].real)
        where = np.nonzero(split)[0]
        if where.size == 0 or rows[0].size + where.size > max_points:
            break
        column = [0.5 * (rows[0][where] + rows[0][where + 1])]
        ok = np.ones(where.size, dtype=bool)
        for level in range(1, len(rows)):
            first, second, valid = preimage_candidates(p, column[-1])
            ok &= valid
            column.append(_pick_nearest((first, second), rows[level][where], rows[level][where + 1]))
        broken[where[~ok]] = True
        keep = where[ok]
        rows = [np.insert(row, keep + 1, col[ok]) for row, col in zip(rows, column)]
        broken = np.insert(broken, keep + 1, False)
    # a parameter between two lifted samples that falls into the unattained disk cuts the arc
    pieces = []
    cuts = np.nonzero(broken)[0] + 1
    bounds = np.concatenate([[0], cuts, [rows[0].size]])
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - lo >= 2:
            pieces.append(_Chain([row[lo:hi] for row in rows], path))
    return pieces


def _prune(chain: _Chain, center: complex, radius: float) -> List[_Chain]:
    inside = np.abs(chain.top - center) <= radius
    # keep one sample on each side so pieces reach the window boundary
    grown = inside.copy()
    grown[1:] |= inside[:-1]
    grown[:-1] |= inside[1:]
    return [_Chain([row[lo:hi] for row in chain.rows], chain.path) for lo, hi in _runs(grown) if hi - lo >= 2]


def stable_manifold_arcs(p: MapParams, depth: int, window: Optional[Tuple[complex, float]] = None,
                         base_samples: int = 1024, rel_step: float = 0.02,
                         max_points: int = 200_000) -> List[Arc]:
    """Preimage tree of the real segment ``(0, R]`` up to ``depth`` levels.

    Each sample carries its exact preimage chain back to level 0, so inserted samples
    are lifted from the real segment directly. Arcs are labelled ``level k path`` where
    ``path`` lists the starting branch of every lift. Pieces outside ``window`` (a
    ``(center, radius)`` disk, by default ``B_λ``) are pruned after each level.
    """
    if depth < 0:
        raise ParameterError(f'depth must be non-negative, got {depth}')
    center, radius = window if window is not None else (0j, p.radius)
    base = np.linspace(p.radius / base_samples, p.radius, base_samples).astype(np.complex128)
    level = [_Chain([base], '')]
    arcs = [Arc.from_points(base, label='level 0')]
    for k in range(1, depth + 1):
        nxt: List[_Chain] = []
        for chain in level:
            for branch in (0, 1):
                for piece in _lift_chain(p, chain, branch, rel_step, max_points):
                    nxt.extend(_prune(piece, center, radius))
        level = nxt
        logger.debug('stable tree level %d: %d arcs', k, len(level))
        arcs.extend(Arc.from_points(chain.top, label=f'level {k} {chain.path}') for chain in level)
    return arcs


def arcs_at_level(arcs: Sequence[Arc], level: int) -> List[Arc]:
    prefix = f'level {level}'
    return [arc for arc in arcs if arc.label == prefix or arc.label.startswith(prefix + ' ')]


@dataclass(frozen=True)
class BackwardOrbit:
    """``points[j + 1]`` is a preimage of ``points[j]``; ``branches[j]`` names its branch."""
    points: Tuple[complex, ...]
    branches: Tuple[int, ...]
    region: RegionTag

    @property
    def depth(self) -> int:
        return len(self.points) - 1

    @property
    def start(self) -> complex:
        return self.points[0]

    @property
    def end(self) -> complex:
        return self.points[-1]

    def residual(self, p: MapParams) -> float:
        if self.depth == 0:
            return 0.0
        later = np.asarray(self.points[1:])
        return float(np.max(np.abs(np.asarray(eval_map(p, later)) - np.asarray(self.points[:-1]))))


@functools.lru_cache(maxsize=8)
def _default_annulus(p: MapParams):
    # deferred: annulus_dynamics builds on this module
    from wildtorus.annulus_dynamics import DEFAULT_R_PARAM, build_fundamental_annulus
    return build_fundamental_annulus(p, DEFAULT_R_PARAM)


def _region_predicate(p: MapParams, region: RegionTag,
                      contains: Optional[Callable[[complex], bool]]) -> Callable[[complex], bool]:
    if contains is not None:
        return contains
    if region == RegionTag.IN_H:
        return HyperbolicityDomain.of(p).contains
    if region == RegionTag.IN_A_F:
        annulus = _default_annulus(p)
        return lambda z: bool(annulus.contains(z))
    return lambda z: True


def backward_orbit(p: MapParams, z0: complex, steps: int, region: RegionTag = RegionTag.IN_H,
                   contains: Optional[Callable[[complex], bool]] = None) -> BackwardOrbit:
    """Backward orbit of ``z0`` that stays in ``region``; branch 0 wins ties.

    Without ``contains``, ``IN_A_F`` uses the fundamental annulus with the default ``r``.

    Raises:
        ParameterError: If ``z0`` is not in the region.
        ContinuationError: If both preimages leave the region; ``last_valid`` is the step.
    """
    inside = _region_predicate(p, region, contains)
    z = complex(z0)
    if not inside(z):
        raise ParameterError(f'{z!r} is not in region {region.value}')
    points, branches = [z], []
    for step in range(1, steps + 1):
        candidates = preimages(p, z)
        chosen = next((k for k, c in enumerate(candidates) if c != 0 and inside(c)), None)
        if chosen is None:
            raise ContinuationError(f'backward orbit has no preimage in {region.value} at step {step}',
                                    last_valid=step - 1)
        z = candidates[chosen]
        points.append(z)
        branches.append(chosen)
    return BackwardOrbit(tuple(points), tuple(branches), region)


def _trim_to_ball(points: ComplexArray, center: complex, radius: float) -> ComplexArray:
    dist = np.abs(points - center)
    k = int(np.argmin(dist))
    inside = dist <= radius
    lo = k
    while lo > 0 and inside[lo - 1]:
        lo -= 1
    hi = k
    while hi < points.size - 1 and inside[hi + 1]:
        hi += 1
    piece = list(points[lo:hi + 1])
    # close the piece on the sphere by interpolating the crossing segments
    if lo > 0:
        piece.insert(0, _sphere_crossing(points[lo], points[lo - 1], center, radius))
    if hi < points.size - 1:
        piece.append(_sphere_crossing(points[hi], points[hi + 1], center, radius))
    return np.asarray(piece)


def _sphere_crossing(inside: complex, outside: complex, center: complex, radius: float) -> complex:
    d = outside - inside
    f = inside - center
    a = abs(d) ** 2
    b = 2.0 * (f.real * d.real + f.imag * d.imag)
    c = abs(f) ** 2 - radius ** 2
    t = (-b + math.sqrt(max(b * b - 4.0 * a * c, 0.0))) / (2.0 * a)
    return inside + min(max(t, 0.0), 1.0) * d


def _resample(points: ComplexArray, count: int) -> ComplexArray:
    s = cumulative_length(points)
    targets = np.linspace(0.0, s[-1], count)
    return np.interp(targets, s, points.real) + 1j * np.interp(targets, s, points.imag)


def _push_local(p: MapParams, orbit: BackwardOrbit, slope: float, alpha: float, count: int) -> ComplexArray:
    anchor = orbit.end
    direction = anchor * complex(slope, 1.0)
    direction /= abs(direction)
    points = anchor + np.linspace(-alpha, alpha, count) * direction
    for target in reversed(orbit.points[:-1]):
        points = np.asarray(eval_map(p, points))
        points = _resample(_trim_to_ball(points, target, alpha), count)
    return points


def local_unstable_manifold(p: MapParams, orbit: BackwardOrbit, alpha: float = DEFAULT_ALPHA, count: int = 2001,
                            slopes: Tuple[float, float] = (0.25, -0.25), tolerance: float = 1e-6) -> Arc:
    """``W^u_α`` of a backward orbit, through ``orbit.start``.

    Two quasi-angular seed segments through the far end of the orbit are pushed forward
    along it, trimmed to the ``α``-ball around each orbit point; both results must agree
    in position and tangent direction to ``tolerance``.

    Raises:
        ParameterError: If the orbit has fewer than 30 steps or leaves ``H_λ``.
        ConvergenceError: If the two seeds disagree (the orbit is too short).
    """
    if orbit.depth < MIN_UNSTABLE_DEPTH:
        raise ParameterError(f'local unstable manifold needs a backward orbit of at least {MIN_UNSTABLE_DEPTH} steps, '
                             f'got {orbit.depth}')
    domain = HyperbolicityDomain.of(p)
    if not np.all(domain.contains(np.asarray(orbit.points))):
        raise ParameterError(f'backward orbit leaves H (|z| <= {domain.threshold:.4g}); use a larger lambda')
    first = _push_local(p, orbit, slopes[0], alpha, count)
    second = _push_local(p, orbit, slopes[1], alpha, count)
    c0 = float(np.max(np.abs(first - second)))
    ta, tb = np.gradient(first), np.gradient(second)
    c1 = float(np.max(np.abs(np.remainder(np.angle(ta / tb) + math.pi / 2, math.pi) - math.pi / 2)))
    logger.debug('local unstable manifold: depth %d, C0 %.3e, C1 %.3e', orbit.depth, c0, c1)
    if max(c0, c1) > tolerance:
        raise ConvergenceError(f'local unstable manifold not converged after {orbit.depth} steps; use a longer orbit',
                               residual=max(c0, c1), iterations=orbit.depth)
    return Arc(first, ta, label='W^u_alpha')


def radial_arc_hits_unstable(segment: Arc, unstable: Arc) -> List[Crossing]:
    """Crossings of a (quasi-radial) segment with a grown unstable manifold, along the segment."""
    crossings = segment_crossings(segment.points, unstable.points)
    return sorted(crossings, key=lambda c: (c.first_index, c.first_param))


class MixingReport(Report):
    m0: Optional[int] = None
    span: int
    steps: int
    hits: List[bool] = Field(default_factory=list)


def mixing_witness(p: MapParams, source: CellSet, target: CellSet, span: int = 20, cap: int = 200) -> MixingReport:
    """Smallest ``m₀`` with ``F^m(U) ∩ V ≠ ∅`` for every ``m₀ ≤ m ≤ m₀ + span`` (cell images)."""
    hits: List[bool] = []
    for m, image in source.iterate(p, cap):
        hits.append(image.intersects(target))
        start = m - span
        if start >= 1 and all(hits[start - 1:m]):
            return MixingReport(check='mixing_witness', m0=start, span=span, steps=m, hits=hits)
    return MixingReport(check='mixing_witness', span=span, steps=cap, hits=hits, violations=1,
                        notes=[f'no run of {span + 1} consecutive hits within {cap} steps'])


def skew_fixed_point(p: MapParams, saddle: Optional[FixedPoint] = None) -> SkewPoint:
    """Fixed point of ``F̂`` over the saddle: ``w = (u/2)/(1 − f/u)`` with ``u = p_F/|p_F|``.

    Raises:
        ParameterError: If the fiber map over ``p_F`` does not contract.
    """
    saddle = saddle or find_fixed_points(p)['saddle']
    z = saddle.location
    f = float(fiber_factor(p, z))
    if f >= 1.0:
        raise ParameterError(f'fiber factor {f:.4g} at the saddle does not contract')
    u = z / abs(z)
    w = (u / 2.0) / (1.0 - f / u)
    point = SkewPoint(z, w)
    image = eval_skew(p, point)
    if image.distance(point) > 1e-10 * (1.0 + abs(z)):
        raise InconsistencyError(f'skew fixed point residual {image.distance(point):.3e}')
    return point


def derivative_along(p: MapParams, orbit: Sequence[complex]) -> np.ndarray:
    """Product ``DF(z_{n−1})···DF(z_0)`` along a forward orbit segment."""
    product = np.eye(2)
    for z in orbit:
        product = derivative_matrix(p, z) @ product
    return product

