"""Curved arcs in the repelling annulus, tangencies with local unstable manifolds and the wild set.

A curved arc is a quasi-angular arc meeting ``A⁰`` whose length is at most
``d_λ = dist(A⁰, ∂F(A⁰))/2`` and whose end tangents lie on the two boundary rays of
the cone ``K``. Lifting it by ``F`` and cutting the lift where the pulled-back tangents
leave ``K`` gives another curved arc. The nested parameter windows close down on a point
where the arc is tangent to the local unstable manifold of a backward orbit.

Lifts are tracked in the parameter of the original arc: after a few dozen lifts the
arc is shorter than the spacing of doubles at its modulus, while pulled-back tangent
vectors keep full relative precision.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field
from scipy.integrate import solve_ivp, trapezoid
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq, minimize_scalar

from wildtorus.annulus_dynamics import DEFAULT_R_PARAM, AnnulusRegion, build_fundamental_annulus
from wildtorus.core_maps import (
    check_perturbation,
    derivative,
    inverse_derivative,
    preimage_candidates,
    preimages,
)
from wildtorus.exceptions import ContinuationError, ConvergenceError, InconsistencyError, ParameterError
from wildtorus.geometry import Arc, distance_to_polyline, turns_around
from wildtorus.hyperbolicity import HyperbolicityDomain, cone_slope
from wildtorus.invariant_set import PolarLoop
from wildtorus.manifolds import DEFAULT_ALPHA, BackwardOrbit, backward_orbit, find_fixed_points, iterate, \
    local_unstable_manifold
from wildtorus.params import MapParams
from wildtorus.reports import Report, complex_pair
from wildtorus.types import ComplexArray, RegionTag

logger = logging.getLogger(__name__)

BOUNDARY_SLOPE = 1.0 / 3.0
INSET_LADDER = (0.01, 0.02, 0.05, 0.1)
END_TOLERANCE = 1e-8
TANGENCY_TOLERANCE = 1e-4
MIN_TANGENCY_DEPTH = 30
RESIDUAL_FLOOR = 1e-12
CHAIN_CAP = 20000
CHAIN_DEPTH = 0.5
LIFT_SAMPLES = 129

SPIRAL_RADIUS = 0.45
SPIRAL_TURNS = 5.0
TRANSPORTED_TURNS = 4.0
SPIRAL_LEVELS = range(30, 61, 6)
MAX_ANGLE_GAP = 0.1
PROBE_CENTER = complex(-1.5, 2.5)
ETA_CEILING = 2.5 ** (1.0 / 6.0)


def _complex(values) -> ComplexArray:
    values = np.asarray(values)
    return values[..., 0] + 1j * values[..., 1]


def _hermite(t: np.ndarray, points: ComplexArray, tangents: ComplexArray) -> CubicHermiteSpline:
    return CubicHermiteSpline(t, np.column_stack([points.real, points.imag]),
                              np.column_stack([tangents.real, tangents.imag]), axis=0)


def _true_runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Half-open index ranges where ``mask`` holds."""
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def _conorm(p: MapParams, z: ComplexArray) -> np.ndarray:
    """Smallest singular value of ``D_zF``."""
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    col_x = np.asarray(derivative(p, z, np.ones_like(z)))
    col_y = np.asarray(derivative(p, z, 1j * np.ones_like(z)))
    total = np.abs(col_x) ** 2 + np.abs(col_y) ** 2
    det = np.abs(col_x.real * col_y.imag - col_x.imag * col_y.real)
    largest = np.sqrt(0.5 * (total + np.sqrt(np.maximum(total ** 2 - 4.0 * det ** 2, 0.0))))
    return det / largest


def _nearest(first: ComplexArray, second: ComplexArray, reference) -> Tuple[ComplexArray, np.ndarray]:
    pick = np.abs(second - reference) < np.abs(first - reference)
    return np.where(pick, second, first), pick.astype(int)


def _push_forward(p: MapParams, orbit: Sequence[ComplexArray], vector) -> ComplexArray:
    """Carries ``vector`` at ``orbit[-1]`` to ``orbit[0]``, normalising every step."""
    v = vector
    for z in reversed(orbit[1:]):
        v = np.asarray(derivative(p, z, v))
        v = v / np.abs(v)
    return v


def _misalignment(first: ComplexArray, second: ComplexArray) -> np.ndarray:
    """``|sin|`` of the angle between two tangent lines."""
    return np.abs(np.imag(first * np.conj(second))) / (np.abs(first) * np.abs(second))


@dataclass(frozen=True, eq=False)
class RepellingAnnulus:
    """``A⁰``: ``A_F`` with γ⁺ moved inward by ``δ₀``, compactly inside its own image.

    Attributes:
        region: The annulus between γ̂⁺ and γ₀.
        inset: The radial offset ``δ₀`` of γ̂⁺.
        margin: Sampled lower estimate of ``dist(A⁰, ∂F(A⁰))``.
        source_chain: Backward orbit of ``p⁺_F`` through ``Re z ≤ 0`` ending inside ``A⁰``.
    """
    region: AnnulusRegion
    inset: float
    margin: float
    source_chain: BackwardOrbit
    outer_points: ComplexArray
    inner_points: ComplexArray

    @property
    def d_lambda(self) -> float:
        return 0.5 * self.margin

    @property
    def base_point(self) -> complex:
        """``z0``, the iterated preimage of ``p⁺_F`` inside ``A⁰``."""
        return self.source_chain.end

    def contains(self, z, tolerance: float = 0.0) -> np.ndarray:
        return self.region.contains(z, tolerance)

    def depth(self, z) -> np.ndarray:
        """Distance to ``∂A⁰``, negative outside."""
        return _signed_depth(self.region, self.outer_points, self.inner_points, z)

    def for_map(self, p: MapParams) -> 'RepellingAnnulus':
        """The same annulus with the source chain recomputed for a (perturbed) map."""
        source = find_fixed_points(p)['source'].location
        return replace(self, source_chain=_source_chain(p, source, self.region, self.outer_points, self.inner_points))

    def summary(self) -> dict:
        return {
            'inset': self.inset,
            'margin': self.margin,
            'd_lambda': self.d_lambda,
            'inner_radius': self.region.inner_radius,
            'chain_length': self.source_chain.depth,
            'base_point': complex_pair(self.base_point),
        }


def _signed_depth(region: AnnulusRegion, outer: ComplexArray, inner: ComplexArray, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    gap = np.minimum(distance_to_polyline(z, outer, closed=True), distance_to_polyline(z, inner, closed=True))
    return np.where(region.contains(z), gap, -gap)


def _covering_margin(p: MapParams, region: AnnulusRegion, outer: ComplexArray, inner: ComplexArray,
                     samples: ComplexArray) -> Tuple[float, complex]:
    """``min`` over boundary samples of the best ``depth(preimage)·conorm(DF)``."""
    first, second, valid = preimage_candidates(p, samples)
    best = np.full(samples.shape, -np.inf)
    for candidate in (first, second):
        usable = valid & np.isfinite(candidate)
        depth = np.full(samples.shape, -np.inf)
        depth[usable] = _signed_depth(region, outer, inner, candidate[usable])
        inside = depth > 0
        score = np.full(samples.shape, -np.inf)
        if np.any(inside):
            score[inside] = depth[inside] * _conorm(p, candidate[inside])
        best = np.maximum(best, score)
    worst = int(np.argmin(best))
    return float(best[worst]), complex(samples[worst])


def _source_chain(p: MapParams, source: complex, region: AnnulusRegion, outer: ComplexArray,
                  inner: ComplexArray, cap: int = CHAIN_CAP) -> BackwardOrbit:
    # branch 1 has Re z <= 0; from p⁺ it starts at the other preimage −p⁺
    points, branches = [complex(source)], []
    z = complex(source)
    for _ in range(cap):
        candidates = preimages(p, z)
        if not candidates:
            raise InconsistencyError(f'chain from p+ reached the unattained disk at {z!r}')
        z = candidates[1]
        points.append(z)
        branches.append(1)
        if region.contains(z) and _signed_depth(region, outer, inner, z)[0] >= CHAIN_DEPTH:
            logger.debug('source chain enters A0 after %d steps at %r', len(branches), z)
            return BackwardOrbit(tuple(points), tuple(branches), RegionTag.ANY)
    raise ParameterError(f'no iterated preimage of p+ enters A0 within {cap} steps')


def _thin(points: ComplexArray, count: int) -> ComplexArray:
    index = np.unique(np.linspace(0, points.size - 1, min(count, points.size)).astype(int))
    return points[index]


def build_repelling_annulus(p: MapParams, r_param: float = DEFAULT_R_PARAM, loop: Optional[PolarLoop] = None,
                            ladder: Sequence[float] = INSET_LADDER, n_boundary: int = 1000) -> RepellingAnnulus:
    """Builds ``A⁰`` by moving γ⁺ inward by ``δ₀ ∈ ladder·(1 − λ)⁻¹``.

    Every rung is checked by sampling both boundary curves: each sample needs a preimage
    strictly inside ``A⁰``. The rung with the largest margin wins.

    Raises:
        ParameterError: If ``A⁰`` is not inside ``H_λ``, no rung passes, or no iterated
            preimage of ``p⁺_F`` enters ``A⁰``.
    """
    base = build_fundamental_annulus(p, r_param, loop)
    domain = HyperbolicityDomain.of(p)
    if base.inner_radius <= domain.threshold:
        raise ParameterError(f'A0 starts at |z| = {base.inner_radius:.4g}, inside the non-hyperbolic disk '
                             f'|z| <= {domain.threshold:.4g}; use a larger lambda')
    inner = base.inner.points
    boundary_inner = _thin(inner, n_boundary)
    best = None
    for factor in ladder:
        inset = factor / (1.0 - p.lam)
        outer_loop = base.outer.shrunk(inset)
        if not np.all(outer_loop.contains(inner)):
            logger.info('inset %.4g puts gamma0 outside the shrunk loop; skipping', inset)
            continue
        region = AnnulusRegion(outer_loop, base.inner, r_param, p.lam)
        outer = outer_loop.arc.points
        samples = np.concatenate([_thin(outer, n_boundary), boundary_inner])
        margin, witness = _covering_margin(p, region, outer, inner, samples)
        logger.info('inset %.4g: covering margin %.4g (worst sample %r)', inset, margin, witness)
        if margin > 0 and (best is None or margin > best[2]):
            best = (inset, region, margin, outer)
    if best is None:
        raise ParameterError(f'no inset in {[round(f / (1.0 - p.lam), 6) for f in ladder]} puts A0 inside F(A0)')
    inset, region, margin, outer = best
    source = find_fixed_points(p)['source'].location
    chain = _source_chain(p, source, region, outer, inner)
    annulus = RepellingAnnulus(region, inset, margin, chain, outer, inner)
    logger.info('repelling annulus: inset %.4g, d_lambda %.4g, chain of %d steps', inset, annulus.d_lambda,
                chain.depth)
    return annulus


@dataclass(frozen=True)
class CurvedArc:
    """Arc sampled at uniform ``t ∈ [0, 1]`` with tangents ``dγ/dt``.

    ``window`` is the parameter interval of the parent arc this one was lifted from, with
    the ``+1/3`` end first.
    """
    arc: Arc
    d_lambda: float
    window: Optional[Tuple[float, float]] = None
    branch: Optional[int] = None

    @property
    def params(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, len(self.arc))

    @property
    def length(self) -> float:
        return self.arc.length

    def spline(self) -> CubicHermiteSpline:
        return _hermite(self.params, self.arc.points, self.arc.tangents)


class CurvedArcCheck(Report):
    meets_annulus: bool
    length: float
    d_lambda: float
    cone_failures: int
    start_slope: float
    end_slope: float
    failed: List[str] = Field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.passed


def _on_ray(base: complex, tangent: complex, slope: float) -> bool:
    # tangent = base·ρ·(i + slope) for a real ρ ≠ 0
    ratio = tangent / (base * complex(slope, 1.0))
    return abs(ratio) > 0 and abs(ratio.imag) <= END_TOLERANCE * abs(ratio)


def is_curved_arc(p: MapParams, curve: CurvedArc, annulus: RepellingAnnulus) -> CurvedArcCheck:
    """Checks the three defining properties of a curved arc; ``failed`` names the ones that fail."""
    if annulus.region.lam != p.lam:
        raise ParameterError(f'annulus was built for lambda={annulus.region.lam}, not {p.lam}')
    arc = curve.arc
    points, tangents = arc.points, arc.tangents
    meets = bool(np.any(annulus.contains(points)))
    length = arc.length
    with np.errstate(divide='ignore', invalid='ignore'):
        slopes = np.asarray(cone_slope(points, tangents))
    cone_ok = (tangents != 0) & np.isfinite(slopes) & (np.abs(slopes) <= BOUNDARY_SLOPE * (1.0 + END_TOLERANCE))
    failed = []
    if not meets or length > curve.d_lambda:
        failed.append('size')
    if not np.all(cone_ok):
        failed.append('cone')
    if not (_on_ray(points[0], tangents[0], BOUNDARY_SLOPE) and _on_ray(points[-1], tangents[-1], -BOUNDARY_SLOPE)):
        failed.append('ends')
    report = CurvedArcCheck(check='curved_arc', meets_annulus=meets, length=length, d_lambda=curve.d_lambda,
                            cone_failures=int(np.count_nonzero(~cone_ok)), start_slope=float(slopes[0]),
                            end_slope=float(slopes[-1]), failed=failed, violations=len(failed))
    if failed:
        report.witness = {'failed': failed}
    return report


def curved_witness_arc(p: MapParams, annulus: RepellingAnnulus, start: Optional[complex] = None,
                       length: Optional[float] = None, samples: int = 257) -> CurvedArc:
    """Integrates ``γ' = ℓ·γ(s + i)/|γ(s + i)|`` with ``s`` falling linearly from ``+1/3`` to ``−1/3``.

    The default start is halfway across ``A⁰`` on the negative real axis and the default
    length is ``0.9·d_λ``.
    """
    if start is None:
        rho0 = annulus.region.inner_radius
        outer = float(annulus.region.outer.rho(math.pi))
        start = -0.5 * ((rho0 - 1.0) + outer)
    if length is None:
        length = 0.9 * annulus.d_lambda
    if start == 0 or length <= 0:
        raise ParameterError(f'witness arc needs a nonzero start and positive length, got {start!r}, {length}')

    def slope(t):
        return BOUNDARY_SLOPE * (1.0 - 2.0 * t)

    def velocity(t, z):
        w = z * (slope(t) + 1j)
        return length * w / np.abs(w)

    t = np.linspace(0.0, 1.0, samples)
    solution = solve_ivp(velocity, (0.0, 1.0), np.array([complex(start)]), method='DOP853', t_eval=t,
                         rtol=1e-12, atol=1e-12 * max(abs(start), 1.0))
    if not solution.success:
        raise ConvergenceError(f'witness arc integration failed: {solution.message}')
    points = solution.y[0]
    logger.debug('witness arc from %r, length %.4g, lambda %s', start, length, p.lam)
    return CurvedArc(Arc(points, velocity(t, points), label='witness'), annulus.d_lambda)


class _LiftTower:
    """Successive lifts of a base arc, evaluated in the base parameter.

    Level ``m`` is the branch of ``F^{-m}`` picked by nearest preimage to ``references[m-1]``;
    ``windows[m]`` is the base-parameter interval of the level-``m`` curved arc.
    """

    def __init__(self, p: MapParams, base: CurvedArc, annulus: RepellingAnnulus):
        self.p = p
        self.annulus = annulus
        self.spline = base.spline()
        self.references: List[complex] = []
        self.branches: List[int] = []
        self.windows: List[Tuple[float, float]] = [(0.0, 1.0)]

    @property
    def level(self) -> int:
        return len(self.references)

    def pullback(self, t, levels: Optional[int] = None) -> Tuple[ComplexArray, ComplexArray]:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        z = _complex(self.spline(t))
        v = _complex(self.spline(t, 1))
        for reference in self.references[:levels]:
            first, second, valid = preimage_candidates(self.p, z)
            if not np.all(valid):
                raise InconsistencyError('lifted arc reached the unattained disk')
            z, _ = _nearest(first, second, reference)
            v = np.asarray(inverse_derivative(self.p, z, v))
        return z, v

    def orbit(self, t: float) -> Tuple[List[complex], List[int]]:
        z = complex(_complex(self.spline(t)))
        points, branches = [z], []
        for reference in self.references:
            first, second, _ = preimage_candidates(self.p, z)
            chosen, pick = _nearest(first, second, reference)
            z = complex(chosen[0])
            points.append(z)
            branches.append(int(pick[0]))
        return points, branches

    def tangent(self, t: float) -> complex:
        return complex(_complex(self.spline(t, 1)))

    def slopes(self, t) -> np.ndarray:
        z, v = self.pullback(t)
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.atleast_1d(cone_slope(z, v))

    def lift(self, samples: int = LIFT_SAMPLES) -> Tuple[float, float]:
        """Adds one level and returns its window."""
        a, b = self.windows[-1]
        t = a + (b - a) * np.linspace(0.0, 1.0, samples)
        z, _ = self.pullback(t)
        first, second, valid = preimage_candidates(self.p, z)
        counts = [int(np.count_nonzero(valid & self.annulus.contains(c))) for c in (first, second)]
        if max(counts) == 0:
            raise InconsistencyError(f'no lift of the level-{self.level} arc meets A0')
        branch = int(counts[1] > counts[0])
        chosen = (first, second)[branch]
        self.references.append(complex(chosen[samples // 2]))
        self.branches.append(branch)
        if abs(b - a) <= 32 * np.finfo(float).eps * max(abs(a), abs(b)):
            # window below the spacing of doubles: t0 is fixed from here on
            self.windows.append((a, b))
            return a, b
        window = self._cut(t, self.slopes(t), self.annulus.contains(chosen))
        self.windows.append(window)
        return window

    def _cut(self, t: np.ndarray, slopes: np.ndarray, preferred: np.ndarray) -> Tuple[float, float]:
        inside = np.abs(slopes) < BOUNDARY_SLOPE
        options = []
        for lo, hi in _true_runs(inside):
            if lo == 0 or hi == t.size:
                continue
            left, right = slopes[lo - 1], slopes[hi]
            if left >= BOUNDARY_SLOPE and right <= -BOUNDARY_SLOPE:
                forward = True
            elif left <= -BOUNDARY_SLOPE and right >= BOUNDARY_SLOPE:
                forward = False
            else:
                continue
            options.append((not bool(np.any(preferred[lo:hi])), lo, hi, forward))
        if not options:
            raise InconsistencyError(f'level-{self.level} lift does not cross both boundary rays of K')
        _, lo, hi, forward = min(options)
        sign = 1.0 if forward else -1.0

        def crossing(level: float, u0: float, u1: float) -> float:
            return brentq(lambda u: self.slopes(u)[0] - level, u0, u1, xtol=1e-300, rtol=4 * np.finfo(float).eps)

        left = crossing(sign * BOUNDARY_SLOPE, t[lo - 1], t[lo])
        right = crossing(-sign * BOUNDARY_SLOPE, t[hi - 1], t[hi])
        return (left, right) if forward else (right, left)


def lift_curved_arc(p: MapParams, curve: CurvedArc, annulus: RepellingAnnulus,
                    samples: Optional[int] = None) -> CurvedArc:
    """One lift: the branch meeting ``A⁰``, cut where the tangents reach the boundary rays of ``K``.

    Raises:
        InconsistencyError: If neither branch of the lift meets ``A⁰``.
    """
    tower = _LiftTower(p, curve, annulus)
    start, stop = tower.lift()
    u = start + (stop - start) * np.linspace(0.0, 1.0, samples or len(curve.arc))
    z, v = tower.pullback(u)
    label = f'{curve.arc.label} lift' if curve.arc.label else 'lift'
    return CurvedArc(Arc(z, (stop - start) * v, label=label), curve.d_lambda, window=(start, stop),
                     branch=tower.branches[0])


class TangencyReport(Report):
    t0: float
    depth: int
    angle_residual: float
    residuals: List[float]
    point: List[float]
    tangent: List[float]
    unstable_direction: List[float]
    orbit_residual: float
    in_domain: bool


@dataclass(frozen=True)
class TangencyCertificate:
    """A point of an arc where the arc is tangent to ``W^u`` of the recorded backward orbit.

    Attributes:
        t0: Parameter of the tangency point on the arc.
        orbit: Backward orbit starting at the tangency point.
        unstable_direction: Unit vector at ``orbit.start`` pushed forward along the orbit.
        angle_residual: ``|sin|`` of the angle between the arc tangent and that direction.
        residuals: The same quantity for depths ``1..depth``.
        in_domain: Whether the hyperbolic part of the orbit stays in ``H_λ``.
    """
    t0: float
    orbit: BackwardOrbit
    unstable_direction: complex
    angle_residual: float
    depth: int
    residuals: Tuple[float, ...]
    tangent: complex
    in_domain: bool

    @property
    def point(self) -> complex:
        return self.orbit.start

    def report(self, p: MapParams) -> TangencyReport:
        report = TangencyReport(
            check='tangency',
            t0=self.t0,
            depth=self.depth,
            angle_residual=self.angle_residual,
            residuals=list(self.residuals),
            point=complex_pair(self.point),
            tangent=complex_pair(self.tangent),
            unstable_direction=complex_pair(self.unstable_direction),
            orbit_residual=self.orbit.residual(p),
            in_domain=self.in_domain,
        )
        report.violations = int(self.angle_residual >= TANGENCY_TOLERANCE) + int(not self.in_domain)
        return report


def _check_residuals(residuals: Sequence[float], depth: int) -> None:
    last = residuals[-1]
    if last >= TANGENCY_TOLERANCE:
        raise ConvergenceError(f'tangency residual {last:.3e} at depth {depth} is not below {TANGENCY_TOLERANCE}',
                               residual=last, iterations=depth)
    half = residuals[max(depth // 2 - 1, 0)]
    if last > half and last > RESIDUAL_FLOOR:
        raise ConvergenceError(f'tangency residual grew from {half:.3e} to {last:.3e}; the arc is likely not curved',
                               residual=last, iterations=depth)


def find_tangency(p: MapParams, curve: CurvedArc, annulus: RepellingAnnulus,
                  depth: int = 60) -> TangencyCertificate:
    """Lifts ``curve`` ``depth`` times and certifies the tangency at ``t0 = ∩ windows``.

    At level ``m`` the marked point is the midpoint of the window, the orbit is its exact
    backward orbit, and the unstable direction is ``i·z_m`` pushed forward to the arc.

    Raises:
        ParameterError: If ``depth`` is below 30.
        ConvergenceError: If the residual at full depth is not below 1e−4 or is larger
            than at half depth (while above round-off).
    """
    if depth < MIN_TANGENCY_DEPTH:
        raise ParameterError(f'tangency depth must be at least {MIN_TANGENCY_DEPTH}, got {depth}')
    tower = _LiftTower(p, curve, annulus)
    residuals = []
    direction = 0j
    for _ in range(depth):
        start, stop = tower.lift()
        t = 0.5 * (start + stop)
        points, _ = tower.orbit(t)
        direction = complex(_push_forward(p, points, 1j * points[-1]))
        residuals.append(float(_misalignment(direction, tower.tangent(t))))
    _check_residuals(residuals, depth)
    start, stop = tower.windows[-1]
    t0 = 0.5 * (start + stop)
    points, branches = tower.orbit(t0)
    domain = HyperbolicityDomain.of(p)
    certificate = TangencyCertificate(
        t0=t0,
        orbit=BackwardOrbit(tuple(points), tuple(branches), RegionTag.IN_A_F),
        unstable_direction=direction,
        angle_residual=residuals[-1],
        depth=depth,
        residuals=tuple(residuals),
        tangent=tower.tangent(t0),
        in_domain=bool(np.all(domain.contains(np.asarray(points)))),
    )
    logger.info('tangency at t0=%.17g: residual %.3e after %d lifts', t0, certificate.angle_residual, depth)
    return certificate


@dataclass(frozen=True, eq=False)
class CurvedStableArc:
    """A piece of ``W^s(p_F)`` winding around ``p⁺_F``, carried to ``z0 ∈ A⁰`` by the source chain.

    The piece is the ``N``-fold upper-half-plane preimage of ``[x_min, 0]`` on the negative real
    axis; ``F^N`` maps it onto that segment and ``F^{N+1}`` onto the positive real axis, which
    lies in the basin of ``p_F``.

    Attributes:
        levels: ``N``.
        spiral: The piece near ``p⁺_F``, tangents ``d/dx``; ``params`` holds ``x``.
        pulled: The piece after pulling back along the source chain to ``z0``.
        limit_turns: Winding of the ``G†`` piece about ``e^{iπ/3}``.
        turns: Winding of the ``F`` piece about ``p⁺_F``.
        univalent: The pulled-back disks around the piece never met the critical value ``1``.
        pulled_length: Length of the pulled-back piece.
        membership_residual: Largest ``|Im F^N(y)|`` over the piece.
    """
    levels: int
    params: np.ndarray
    spiral: Arc
    pulled: Arc
    chain: BackwardOrbit
    source: complex
    limit_turns: float
    turns: float
    univalent: bool
    pulled_length: float
    d_lambda: float
    membership_residual: float

    @property
    def base_point(self) -> complex:
        return self.chain.end

    @property
    def turns_around_base(self) -> float:
        """Winding of the pulled-back piece about ``z0``; equal to ``turns`` for a univalent pull-back."""
        return self.turns if self.univalent else 0.0

    def summary(self) -> dict:
        return {
            'levels': self.levels,
            'limit_turns': self.limit_turns,
            'turns': self.turns,
            'turns_around_base': self.turns_around_base,
            'pulled_length': self.pulled_length,
            'd_lambda': self.d_lambda,
            'membership_residual': self.membership_residual,
            'base_point': complex_pair(self.base_point),
        }


def _limit_spiral(x: np.ndarray, levels: int) -> ComplexArray:
    z = np.asarray(x, dtype=np.complex128)
    for _ in range(levels):
        d = z - 1.0
        w = np.abs(d) * np.exp(0.5j * np.angle(d))
        z = np.where(w.imag < 0, -w, w)
    return z


def _map_spiral(p: MapParams, x: np.ndarray, levels: int) -> Tuple[ComplexArray, ComplexArray, np.ndarray]:
    """Upper branch pull-back of the ray points ``x``, level by level.

    Points whose chain meets ``|ζ − 1| ≤ 1 − λ`` have no preimage there; they become NaN and
    are flagged in the returned mask.
    """
    z = np.asarray(x, dtype=np.complex128)
    v = np.ones_like(z)
    alive = np.ones(z.shape, dtype=bool)
    for _ in range(levels):
        first, second, valid = preimage_candidates(p, np.where(alive, z, 0j))
        alive &= valid
        z = np.where(alive, np.where(first.imag < 0, second, first), np.nan + 0j)
        v = np.where(alive, np.asarray(inverse_derivative(p, np.where(alive, z, 1.0), v)), np.nan + 0j)
    return z, v, alive


def _attained_run(x: np.ndarray, alive: np.ndarray) -> np.ndarray:
    """The run of ``x`` with a full pull-back that reaches furthest towards the end of the ray piece."""
    runs = _true_runs(alive)
    if not runs:
        return x[:0]
    lo, hi = runs[-1]
    return x[lo:hi]


def _refine(evaluate: Callable[[np.ndarray], ComplexArray], x: np.ndarray, center: complex,
            max_points: int = 400_000) -> Tuple[np.ndarray, ComplexArray]:
    """Bisects parameter gaps until neighbouring samples near ``center`` differ by at most 0.1 rad about it."""
    for _ in range(60):
        z = evaluate(x)
        rel = z - center
        near = (np.abs(rel[:-1]) < 2 * SPIRAL_RADIUS) | (np.abs(rel[1:]) < 2 * SPIRAL_RADIUS)
        gaps = np.abs(np.angle(rel[1:] / rel[:-1]))
        bad = np.flatnonzero(near & (gaps > MAX_ANGLE_GAP))
        if bad.size == 0:
            return x, z
        if x.size + bad.size > max_points:
            break
        x = np.sort(np.concatenate([x, 0.5 * (x[bad] + x[bad + 1])]))
    raise ConvergenceError(f'spiral sampling did not resolve within {max_points} points', iterations=x.size)


def _innermost_turns(z: ComplexArray, center: complex, radius: float,
                     target: float) -> Tuple[Optional[int], float, bool]:
    """Index where the innermost stretch inside the disk reaches ``target`` turns (counted from the end)."""
    dist = np.abs(z - center)
    if dist[-1] >= radius:
        return None, 0.0, False
    outside = np.flatnonzero(dist >= radius)
    first = int(outside[-1]) + 1 if outside.size else 0
    rel = z[first:] - center
    turns = np.abs(np.cumsum(np.angle(rel[1:] / rel[:-1])[::-1])) / (2 * math.pi)
    total = float(turns[-1]) if turns.size else 0.0
    hit = np.flatnonzero(turns >= target)
    if hit.size == 0:
        return None, total, outside.size == 0
    return z.size - 2 - int(hit[0]), float(turns[hit[0]]), False


def _pull_back(p: MapParams, chain: BackwardOrbit, z: ComplexArray, v: ComplexArray,
               disk: ComplexArray) -> Tuple[ComplexArray, ComplexArray, bool]:
    """Carries points, tangents and a surrounding circle along the chain branches."""
    univalent = True
    for target in chain.points[1:]:
        if np.min(np.abs(disk - 1.0)) <= 1.0 - p.lam or abs(turns_around(disk, 1.0, closed=True)) >= 0.5:
            univalent = False
        candidates = []
        for values in (z, disk):
            first, second, valid = preimage_candidates(p, values)
            if not np.all(valid):
                raise InconsistencyError('pull-back along the source chain reached the unattained disk')
            candidates.append(_nearest(first, second, target)[0])
        z, disk = candidates
        v = np.asarray(inverse_derivative(p, z, v))
    return z, v, univalent


def curved_stable_arc(p: MapParams, annulus: RepellingAnnulus, levels: Sequence[int] = SPIRAL_LEVELS,
                      samples: int = 2001) -> CurvedStableArc:
    """A stable-manifold piece winding at least five times around ``p⁺`` and pulled back into ``A⁰``.

    For each ``N`` the ``G†`` spiral (closed-form half-angle branch) is cut to its innermost
    five turns inside ``|z − p⁺| < 0.45``; the same parameter interval under ``F`` must wind at
    least four times around ``p⁺_F``, and its pull-back along the source chain must be univalent
    and no longer than ``d_λ/2``. ``N`` grows by six (one turn) until the checks pass.

    Raises:
        ParameterError: If no ``N`` up to the last level passes.
    """
    source = find_fixed_points(p)['source'].location
    limit_center = complex(math.cos(math.pi / 3), math.sin(math.pi / 3))
    chain = annulus.source_chain
    if abs(chain.start - source) > 1e-9 or chain.residual(p) > 1e-9:
        annulus = annulus.for_map(p)
        chain = annulus.source_chain
    last_reason = 'no levels tried'
    for n in levels:
        start = None
        for reach in (4.0, 16.0, 64.0, 256.0):
            x0 = -reach * (1.0 - np.linspace(0.0, 1.0, samples)) ** 2
            x, z = _refine(lambda s: _limit_spiral(s, n), x0, limit_center)
            start, limit_turns, enclosed = _innermost_turns(z, limit_center, SPIRAL_RADIUS, SPIRAL_TURNS)
            if start is not None or not enclosed:
                break
        if start is None:
            last_reason = f'N={n}: G-dagger spiral winds only {limit_turns:.2f} times inside the disk'
            logger.info(last_reason)
            continue
        piece = _attained_run(x[start:], _map_spiral(p, x[start:], n)[2])
        if piece.size < 2:
            last_reason = f'N={n}: the whole ray piece meets the unattained disk'
            logger.info(last_reason)
            continue
        params, _ = _refine(lambda s: _map_spiral(p, s, n)[0], piece, source)
        points, tangents, alive = _map_spiral(p, params, n)
        if not np.all(alive):
            params = _attained_run(params, alive)
            points, tangents, _ = _map_spiral(p, params, n)
            logger.info('N=%d: ray piece clipped to [%.6g, %.6g] off the unattained disk', n, params[0], params[-1])
        if params.size < 2:
            last_reason = f'N={n}: the refined ray piece meets the unattained disk'
            continue
        turns = abs(turns_around(points, source))
        if turns < TRANSPORTED_TURNS:
            last_reason = f'N={n}: F spiral winds only {turns:.2f} times around p+'
            logger.info(last_reason)
            continue
        radius = 1.05 * float(np.max(np.abs(points - source)))
        disk = source + radius * np.exp(2j * math.pi * np.linspace(0.0, 1.0, 512, endpoint=False))
        pulled, pulled_tangents, univalent = _pull_back(p, chain, points, tangents, disk)
        length = float(trapezoid(np.abs(pulled_tangents), params))
        logger.info('N=%d: limit turns %.2f, F turns %.2f, pulled length %.3g (d_lambda/2 = %.3g)',
                    n, limit_turns, turns, length, 0.5 * annulus.d_lambda)
        if not univalent:
            last_reason = f'N={n}: pull-back met the critical value'
            continue
        if length > 0.5 * annulus.d_lambda:
            last_reason = f'N={n}: pulled-back length {length:.3g} exceeds d_lambda/2'
            continue
        images = iterate(p, points[params < 0], n)
        off_ray = np.where(images.real <= 0, np.abs(images.imag), np.abs(images))
        residual = float(np.max(off_ray / np.maximum(np.abs(images), 1.0)))
        return CurvedStableArc(
            levels=n,
            params=params,
            spiral=Arc(points, tangents, label=f'R_{n}'),
            pulled=Arc(pulled, pulled_tangents, label=f'R_{n} at z0'),
            chain=chain,
            source=source,
            limit_turns=limit_turns,
            turns=turns,
            univalent=univalent,
            pulled_length=length,
            d_lambda=annulus.d_lambda,
            membership_residual=residual,
        )
    raise ParameterError(f'no stable spiral meets the winding and length requirements: {last_reason}')


class _SpiralOrbits:
    """Backward orbits of spiral points: source-chain branches, then ``depth`` steps inside ``A⁰``."""

    def __init__(self, p: MapParams, stable: CurvedStableArc, annulus: RepellingAnnulus, depth: int):
        self.p = p
        self.stable = stable
        self.depth = depth
        self.targets = list(stable.chain.points[1:])
        middle = float(stable.params[stable.params.size // 2])
        tail = self.orbit(np.array([middle]), extend=False)[-1]
        z = complex(tail[0])
        for step in range(depth):
            candidates = [c for c in preimages(p, z) if annulus.contains(c)]
            if not candidates:
                raise InconsistencyError(f'no preimage stays in A0 at step {step + 1} past z0')
            z = max(candidates, key=lambda c: float(annulus.depth(c)[0]))
            self.targets.append(z)

    def orbit(self, x: np.ndarray, extend: bool = True) -> List[ComplexArray]:
        z = _map_spiral(self.p, x, self.stable.levels)[0]
        points = [z]
        targets = self.targets if extend else self.targets[:self.stable.chain.depth]
        for target in targets:
            first, second, valid = preimage_candidates(self.p, points[-1])
            if not np.all(valid):
                raise InconsistencyError('spiral backward orbit reached the unattained disk')
            points.append(_nearest(first, second, target)[0])
        return points

    def alignment(self, x: np.ndarray) -> np.ndarray:
        """Signed ``sin`` of the angle from the spiral tangent to the unstable direction."""
        orbit = self.orbit(x)
        tangents = _map_spiral(self.p, x, self.stable.levels)[1]
        direction = _push_forward(self.p, orbit, 1j * orbit[-1])
        return np.imag(tangents * np.conj(direction)) / (np.abs(tangents) * np.abs(direction))


def stable_arc_tangency(p: MapParams, stable: CurvedStableArc, annulus: RepellingAnnulus,
                        depth: int = 60) -> TangencyCertificate:
    """Tangency of the stable spiral with ``W^u`` of a backward orbit through ``A⁰``.

    The orbit follows the source chain and then stays ``depth`` steps inside ``A⁰``. The
    tangent of the spiral turns through every direction on each turn, so the alignment
    changes sign; the first root is refined with ``brentq`` and its residual recorded
    for every depth.

    Raises:
        ParameterError: If ``depth`` is below 30.
        InconsistencyError: If the alignment has no sign change on the piece.
        ConvergenceError: As in :func:`find_tangency`.
    """
    if depth < MIN_TANGENCY_DEPTH:
        raise ParameterError(f'tangency depth must be at least {MIN_TANGENCY_DEPTH}, got {depth}')
    orbits = _SpiralOrbits(p, stable, annulus, depth)
    x = stable.params[stable.params < 0]
    x = x[np.unique(np.linspace(0, x.size - 1, min(x.size, 4001)).astype(int))]
    values = orbits.alignment(x)
    changes = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)
    if changes.size == 0:
        raise InconsistencyError('spiral tangent never crosses the unstable direction')
    k = int(changes[0])
    root = brentq(lambda s: float(orbits.alignment(np.array([s]))[0]), x[k], x[k + 1], xtol=1e-300,
                  rtol=4 * np.finfo(float).eps)
    logger.info('stable spiral: %d tangency roots on the piece, first at x=%.17g', changes.size, root)

    orbit = [complex(z[0]) for z in orbits.orbit(np.array([root]))]
    tangent = _map_spiral(p, np.array([root]), stable.levels)[1]
    tangent = complex(tangent[0])
    chain_steps = stable.chain.depth
    residuals = []
    direction = 0j
    for d in range(1, depth + 1):
        direction = complex(_push_forward(p, orbit[:chain_steps + d + 1], 1j * orbit[chain_steps + d]))
        residuals.append(float(_misalignment(direction, tangent)))
    _check_residuals(residuals, depth)
    branches = []
    for previous, z in zip(orbit[:-1], orbit[1:]):
        candidates = preimages(p, previous)
        branches.append(int(abs(candidates[1] - z) < abs(candidates[0] - z)))
    domain = HyperbolicityDomain.of(p)
    return TangencyCertificate(
        t0=float(root),
        orbit=BackwardOrbit(tuple(orbit), tuple(branches), RegionTag.ANY),
        unstable_direction=direction,
        angle_residual=residuals[-1],
        depth=depth,
        residuals=tuple(residuals),
        tangent=tangent,
        in_domain=bool(np.all(domain.contains(np.asarray(orbit[chain_steps:])))),
    )


class RobustnessReport(Report):
    eps_values: List[float]
    residuals: List[Optional[float]]
    errors: List[str] = Field(default_factory=list)


def robustness_probe(p: MapParams, annulus: RepellingAnnulus, curve: Optional[CurvedArc] = None,
                     eps_values: Sequence[float] = (0.001, 0.005, 0.01), depth: int = 60,
                     center: complex = PROBE_CENTER, radius: float = 1.0) -> RobustnessReport:
    """Repeats the tangency search for bump-perturbed maps.

    With ``curve`` the explicit arc is lifted again; without it the stable spiral is rebuilt
    for every perturbed map. The default bump sits on the source chain.
    """
    residuals: List[Optional[float]] = []
    errors: List[str] = []
    for eps in eps_values:
        q = p.with_changes(eps_perturb=eps, perturb_center_re=center.real, perturb_center_im=center.imag,
                           perturb_radius=radius)
        check_perturbation(q)
        try:
            moved = annulus.for_map(q)
            if curve is not None:
                certificate = find_tangency(q, curve, moved, depth)
            else:
                certificate = stable_arc_tangency(q, curved_stable_arc(q, moved), moved, depth)
        except (ConvergenceError, InconsistencyError, ParameterError) as e:
            logger.warning('tangency lost at eps=%s: %s', eps, e)
            residuals.append(None)
            errors.append(f'eps={eps}: {e}')
            continue
        residuals.append(certificate.angle_residual)
        logger.info('eps=%s: tangency residual %.3e', eps, certificate.angle_residual)
    failures = sum(1 for r in residuals if r is None or r >= TANGENCY_TOLERANCE)
    report = RobustnessReport(check='tangency_robustness', eps_values=list(eps_values), residuals=residuals,
                              errors=errors, violations=failures)
    if failures:
        report.witness = {'eps': [e for e, r in zip(eps_values, residuals) if r is None or r >= TANGENCY_TOLERANCE]}
    return report


class WildWindow(Report):
    """Admissible range for the escape time ``M``; ``escape_steps`` is ``None`` when it is empty."""
    lam: float
    alpha: float
    r_param: float
    eta: float
    length_per_turn: float
    constant_c: float
    lower: float
    upper: float
    escape_steps: Optional[int] = None

    @property
    def nonempty(self) -> bool:
        return self.escape_steps is not None


def select_eta(lam: float) -> float:
    """Largest η on the 0.01 grid below ``(5/2)^{1/6}`` with ``η³ < λ√(5/2)``."""
    bound = lam * math.sqrt(2.5)
    eta = math.floor(ETA_CEILING * 100) / 100
    while eta > 1.0:
        if eta ** 3 < bound:
            return round(eta, 2)
        eta = round(eta - 0.01, 2)
    raise ParameterError(f'no eta in (1, (5/2)^(1/6)) satisfies eta^3 < lambda*sqrt(5/2) at lambda={lam}')


def length_per_turn() -> float:
    """``L``: a quasi-angular arc in ``B_λ`` of length ``L(1 − λ)⁻¹`` turns once around 0."""
    def stretch(s: float) -> float:
        return math.sqrt(1.0 + s * s)

    result = minimize_scalar(lambda s: -stretch(s), bounds=(-BOUNDARY_SLOPE, BOUNDARY_SLOPE), method='bounded')
    best = max(stretch(result.x), stretch(BOUNDARY_SLOPE), stretch(-BOUNDARY_SLOPE))
    return 4.0 * math.pi * best


def wild_window(lam: float, alpha: float = DEFAULT_ALPHA, r_param: float = DEFAULT_R_PARAM) -> WildWindow:
    """η, ``L``, the constant ``C`` and the window ``lower < M < upper``.

    ``C = max_m (m − 1 + 5q)/(η^m q)`` with ``q = (1 − λ)^{-1/2}`` bounds the growth of the
    preimage distance sums.
    """
    eta = select_eta(lam)
    big_l = length_per_turn()
    q = (1.0 - lam) ** -0.5
    m = np.arange(0, 4000, dtype=float)
    constant_c = float(np.max((m - 1.0 + 5.0 * q) * np.exp(-m * math.log(eta)) / q))
    lower = (math.log(big_l / (2.0 * alpha)) - math.log(1.0 - lam)) / (3.0 * math.log(eta))
    upper = (math.log(r_param / (2.0 * constant_c * lam)) - 0.5 * math.log(1.0 - lam)) / math.log(eta / lam)
    steps = math.floor(lower) + 1
    window = WildWindow(check='wild_window', lam=lam, alpha=alpha, r_param=r_param, eta=eta,
                        length_per_turn=big_l, constant_c=constant_c, lower=lower, upper=upper,
                        escape_steps=steps if steps < upper else None)
    logger.info('wild window: eta %.2f, L %.6g, C %.6g, (%.4g, %.4g)', eta, big_l, constant_c, lower, upper)
    if not window.nonempty:
        window.notes.append(f'window ({lower:.4g}, {upper:.4g}) holds no integer; M is certified dynamically')
    return window


class WildBoundReport(Report):
    window: WildWindow
    escape_steps: int
    dynamic_steps: int
    trials: int
    exit_steps: List[Optional[int]]
    windings: List[float]
    domain_exits: int


def _escape_step(p: MapParams, unstable: Arc, domain: HyperbolicityDomain, cap: int,
                 max_gap: float = 0.05) -> Tuple[Optional[int], float, bool]:
    """First ``j`` with ``F^j(W^u_α)`` turning once around 0, its winding, and whether it stayed in ``H_λ``."""
    index = np.arange(len(unstable), dtype=float)
    spline = _hermite(index, unstable.points, unstable.tangents)
    u = index.copy()
    winding = 0.0
    for j in range(1, cap + 1):
        for _ in range(40):
            images = iterate(p, _complex(spline(u)), j)
            gaps = np.abs(np.angle(images[1:] / images[:-1]))
            bad = np.flatnonzero(gaps > max_gap)
            if bad.size == 0:
                break
            u = np.sort(np.concatenate([u, 0.5 * (u[bad] + u[bad + 1])]))
        if not np.all(domain.contains(images)):
            return j, winding, False
        winding = abs(turns_around(images, 0j))
        if winding >= 1.0:
            return j, winding, True
    return None, winding, True


def wild_escape_bound(p: MapParams, alpha: float = DEFAULT_ALPHA, r_param: float = DEFAULT_R_PARAM,
                      trials: int = 10, seed: int = 0, strict: bool = False,
                      region: Optional[AnnulusRegion] = None, orbit_depth: int = 40,
                      cap: int = 200) -> WildBoundReport:
    """The escape time ``M`` after which ``F^M(W^u_α)`` turns around the origin.

    The window from :func:`wild_window` gives ``M`` when it holds an integer; otherwise
    ``M`` is the largest first-winding time over ``trials`` random backward orbits in
    ``A_F``. Every trial must stay in ``H_λ`` and wind by step ``M``.

    Raises:
        ParameterError: In strict mode when the window is empty.
    """
    window = wild_window(p.lam, alpha, r_param)
    if strict and not window.nonempty:
        raise ParameterError(f'escape window ({window.lower:.4g}, {window.upper:.4g}) is empty at lambda={p.lam}; '
                             'use a lambda closer to 1')
    region = region or build_fundamental_annulus(p, r_param)
    domain = HyperbolicityDomain.of(p)
    rng = np.random.default_rng(seed)
    exits: List[Optional[int]] = []
    windings: List[float] = []
    domain_exits = 0
    for _ in range(trials):
        z0 = complex(region.sample(1, rng)[0])
        try:
            orbit = backward_orbit(p, z0, orbit_depth, RegionTag.IN_H)
        except ContinuationError as e:
            raise ParameterError(f'backward orbit of {z0!r} leaves H: {e}') from e
        unstable = local_unstable_manifold(p, orbit, alpha)
        step, winding, stayed = _escape_step(p, unstable, domain, cap)
        exits.append(step if stayed else None)
        windings.append(winding)
        domain_exits += int(not stayed)
    reached = [s for s in exits if s is not None]
    dynamic = max(reached) if reached else cap
    steps = window.escape_steps if window.nonempty else dynamic
    late = sum(1 for s in exits if s is None or s > steps)
    report = WildBoundReport(check='wild_escape_bound', window=window, escape_steps=steps, dynamic_steps=dynamic,
                             trials=trials, exit_steps=exits, windings=windings, domain_exits=domain_exits,
                             violations=late + domain_exits, notes=list(window.notes))
    if report.violations:
        report.witness = {'exit_steps': exits}
    logger.info('wild escape bound: M=%d (dynamic %d, window %s)', steps, dynamic, window.escape_steps)
    return report


class WildMembership(NamedTuple):
    member: bool
    exit_step: Optional[int]


def wild_set_membership(p: MapParams, z: complex, steps: int) -> WildMembership:
    """Whether the first ``steps`` forward iterates of ``z`` stay in ``H_λ``.

    Raises:
        ParameterError: If ``z`` itself is not in ``H_λ``.
    """
    domain = HyperbolicityDomain.of(p)
    z = complex(z)
    if not domain.contains(z):
        raise ParameterError(f'{z!r} is not in H (|z| <= {domain.threshold:.4g})')
    for step in range(1, steps + 1):
        z = complex(iterate(p, np.array([z]), 1)[0])
        if not domain.contains(z):
            return WildMembership(False, step)
    return WildMembership(True, None)
