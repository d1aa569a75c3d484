"""The fundamental annulus, covering and escape properties, the basin of ``p⁺`` and periodic points."""
import cmath
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import Field
from scipy import sparse
from scipy.sparse.linalg import spsolve

from wildtorus.cells import CellSet
from wildtorus.core_maps import derivative_matrix, eval_limit, eval_map, limit_preimages, preimages
from wildtorus.exceptions import ConvergenceError, ParameterError
from wildtorus.geometry import Arc, circle_arc, concatenate, is_jordan, segment_crossings
from wildtorus.invariant_set import PolarLoop, Region, compute_external_boundary
from wildtorus.manifolds import (
    BackwardOrbit,
    FixedPoint,
    classify_matrix,
    find_fixed_points,
    grow_unstable_branch,
    stable_manifold_arcs,
)
from wildtorus.params import MapParams
from wildtorus.reports import Report, complex_pair
from wildtorus.types import CellStatus, ComplexArray, FixedPointKind, RegionTag

logger = logging.getLogger(__name__)

R_PARAM_LIMIT = math.exp(-math.pi / 3)
DEFAULT_R_PARAM = 0.25
ESCAPE_CAP = 500
CLOSURE_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class AnnulusRegion:
    """``A_F``: the region between γ⁺ and the piecewise circular curve γ₀.

    γ₀ is the right half of ``|z| = ρ₀``, the part of ``|z − 1| = ρ₀`` with ``Re z ≤ 0`` and
    the two segments of the imaginary axis joining them, where ``ρ₀ = r(1 − λ)⁻¹``.
    """
    outer: PolarLoop
    inner: Arc
    r_param: float
    lam: float

    @property
    def inner_radius(self) -> float:
        return self.r_param / (1.0 - self.lam)

    def inside_inner(self, z) -> np.ndarray:
        """Open region bounded by γ₀ (the complement of ``U₊ ∪ U₋``)."""
        z = np.asarray(z, dtype=np.complex128)
        rho0 = self.inner_radius
        plus = (z.real >= 0) & (np.abs(z) >= rho0)
        minus = (z.real <= 0) & (np.abs(z - 1.0) >= rho0)
        return ~(plus | minus)

    def contains(self, z, tolerance: float = 0.0) -> np.ndarray:
        return self.outer.contains(z, tolerance) & ~self.inside_inner(z)

    def sample(self, n: int, rng: np.random.Generator) -> ComplexArray:
        """Uniform samples of ``A_F`` by rejection from the disk of radius ``max ρ``."""
        top = float(np.max(np.abs(self.outer.arc.points)))
        out: List[ComplexArray] = []
        count = 0
        while count < n:
            z = top * np.sqrt(rng.random(2 * n)) * np.exp(2j * math.pi * rng.random(2 * n))
            z = z[self.contains(z)]
            out.append(z)
            count += z.size
        return np.concatenate(out)[:n]


def inner_curve(p: MapParams, r_param: float, samples: int = 512) -> Arc:
    """γ₀, counter-clockwise, starting at ``−iρ₀``."""
    rho0 = r_param / (1.0 - p.lam)
    if rho0 <= 1.0:
        raise ParameterError(f'inner radius r/(1-lambda) = {rho0:.4g} must exceed 1')
    height = math.sqrt(rho0 ** 2 - 1.0)
    half = math.acos(1.0 / rho0)
    right = circle_arc(0j, rho0, -math.pi / 2, math.pi / 2, samples)
    top = np.linspace(1j * rho0, 1j * height, samples // 8 + 2)[1:-1]
    left = circle_arc(1 + 0j, rho0, math.pi - half, math.pi + half, samples)
    bottom = np.linspace(-1j * height, -1j * rho0, samples // 8 + 2)[1:-1]
    segment_top = Arc(top, np.full(top.shape, -1j))
    segment_bottom = Arc(bottom, np.full(bottom.shape, -1j))
    return concatenate([right, segment_top, left, segment_bottom], closed=True,
                       label='gamma0')


class AnnulusReport(Report):
    inner_radius: float
    image_min_modulus: float
    jordan: bool


def build_fundamental_annulus(p: MapParams, r_param: float = DEFAULT_R_PARAM, loop: Optional[PolarLoop] = None,
                              samples: int = 512) -> AnnulusRegion:
    """Builds ``A_F`` for ``r ∈ (0, e^{−π/3})``.

    Raises:
        ParameterError: If ``r`` is out of range, γ₀ is not inside γ⁺ or ``F(γ⁺)`` meets
            the disk ``|z| ≤ r(1 − λ)⁻¹``.
    """
    if not 0.0 < r_param < R_PARAM_LIMIT:
        raise ParameterError(f'r must lie in (0, exp(-pi/3)) = (0, {R_PARAM_LIMIT:.5f}), got {r_param}')
    loop = loop or compute_external_boundary(p)
    inner = inner_curve(p, r_param, samples)
    if not np.all(loop.contains(inner.points)):
        raise ParameterError('gamma0 is not inside gamma+')
    region = AnnulusRegion(loop, inner, r_param, p.lam)
    report = annulus_report(p, region)
    if report.image_min_modulus <= region.inner_radius:
        raise ParameterError(f'F(gamma+) reaches |z| = {report.image_min_modulus:.4g} <= {region.inner_radius:.4g}')
    return region


def annulus_report(p: MapParams, region: AnnulusRegion) -> AnnulusReport:
    images = np.asarray(eval_map(p, region.outer.arc.points))
    lowest = float(np.min(np.abs(images)))
    jordan = is_jordan(region.inner.points)
    report = AnnulusReport(check='fundamental_annulus', inner_radius=region.inner_radius,
                           image_min_modulus=lowest, jordan=jordan)
    if lowest <= region.inner_radius or not jordan:
        report.violations = 1
    return report


class SelfCoveringReport(Report):
    samples: int
    preimage_failures: int
    left_arc_clearance: float
    plus_clearance: float
    minus_margin: float
    margin: float


def check_self_covering(p: MapParams, region: AnnulusRegion, n_samples: int = 10 ** 4,
                        seed: int = 0) -> SelfCoveringReport:
    """``A_F ⊂ F(A_F)`` on random samples, plus the clearances behind ``U₀ ⊂ int F(U₀)``.

    * every sample of ``A_F`` has a preimage in ``A_F``;
    * ``|F(z)| < ρ₀`` on the left arc ``|z − 1| = ρ₀, Re z ≤ 0`` (``left_arc_clearance > 0``);
    * ``|F(z) − 1| ≥ 1 − λ + λρ₀`` on ``U₊`` (``plus_clearance ≥ 0``, zero on ``|z| = ρ₀``);
    * ``U₋`` lies inside ``F(U₊)`` with margin ``ρ₀ − (1 − λ + λρ₀)``.
    """
    rng = np.random.default_rng(seed)
    rho0 = region.inner_radius
    points = region.sample(n_samples, rng)
    failures = []
    for z in points:
        lifts = preimages(p, z)
        if not any(region.contains(c, tolerance=1e-9) for c in lifts if c != 0):
            failures.append(z)
    half = math.acos(1.0 / rho0)
    left = 1.0 + rho0 * np.exp(1j * np.linspace(math.pi - half, math.pi + half, n_samples))
    left_clearance = rho0 - float(np.max(np.abs(np.asarray(eval_map(p, left)))))
    radii = rho0 * (1.0 + 3.0 * rng.random(n_samples))
    radii[: n_samples // 4] = rho0
    plus = radii * np.exp(1j * math.pi * (rng.random(n_samples) - 0.5))
    level = 1.0 - p.lam + p.lam * rho0
    plus_clearance = float(np.min(np.abs(np.asarray(eval_map(p, plus)) - 1.0)) - level)
    minus_margin = rho0 - level
    report = SelfCoveringReport(
        check='self_covering',
        samples=int(points.size),
        preimage_failures=len(failures),
        left_arc_clearance=left_clearance,
        plus_clearance=plus_clearance,
        minus_margin=minus_margin,
        margin=min(left_clearance, minus_margin),
    )
    report.violations = len(failures) + int(left_clearance <= 0) + int(plus_clearance < -1e-9 * rho0)
    if failures:
        report.witness = {'z': failures[0]}
    return report


class CoveringReport(Report):
    exponent: Optional[int] = None
    fractions: List[float] = Field(default_factory=list)
    source_covered_at: Optional[int] = None


def annulus_cells(region: AnnulusRegion, omega: Region) -> CellSet:
    centers = omega.grid.centers()
    return CellSet(omega.grid, region.contains(centers) & omega.mask(CellStatus.CERTIFIED_IN))


def covering_exponent(p: MapParams, region: AnnulusRegion, omega: Region, cap: int = 200) -> CoveringReport:
    """Smallest ``N`` whose cell image of ``A_F`` covers every IN cell of Ω.

    Images are accumulated (``S_{m+1} = S_m ∪ F(S_m)``), which equals ``F^{m+1}(A_F)``
    since ``A_F ⊂ F(A_F)``.
    """
    target = CellSet(omega.grid, omega.mask(CellStatus.CERTIFIED_IN))
    current = annulus_cells(region, omega)
    source = find_fixed_points(p)['source'].location
    fractions = [current.fraction_of(target)]
    source_at = 0 if current.contains_point(source) else None
    for m in range(1, cap + 1):
        current = current.union(current.forward_image(p))
        fractions.append(current.fraction_of(target))
        if source_at is None and current.contains_point(source):
            source_at = m
        if current.covers(target):
            logger.info('A_F covers omega after %d steps', m)
            return CoveringReport(check='covering_exponent', exponent=m, fractions=fractions,
                                  source_covered_at=source_at)
    return CoveringReport(check='covering_exponent', fractions=fractions, source_covered_at=source_at,
                          violations=1, notes=[f'no covering within {cap} steps'])


class EscapeReport(Report):
    length: int
    qualifying_steps: int
    min_lift_distance: Optional[float] = None
    min_growth_ratio: Optional[float] = None


@dataclass(frozen=True)
class EscapeChain:
    orbit: BackwardOrbit
    report: EscapeReport


def _quadrant(z: complex) -> int:
    if z.real > 0:
        return 0
    return 1 if z.imag >= 0 else -1


def escape_chain(p: MapParams, z0: complex, cap: int = ESCAPE_CAP) -> EscapeChain:
    """Backward chain through the left quadrants until it leaves ``F(B*_λ)``.

    The preimage with ``Re ≤ 0`` is taken at each step, so consecutive points alternate
    between ``Q⁺`` and ``Q⁻``. On steps ``z' → z`` between opposite quadrants the chain
    must satisfy ``|z' − 1| ≥ √2`` and ``|z' − 1| − 1 > λ⁻¹(|z − 1| − 1)``.
    """
    reach = 1.0 - p.lam + p.lam * p.radius
    z = complex(z0)
    distance = abs(z - 1.0)
    if not (1.0 - p.lam < distance <= reach):
        raise ParameterError(f'{z!r} is not in F(B*_lambda)')
    points, branches = [z], []
    lift_distances, ratios = [], []
    failures = 0
    while abs(z - 1.0) <= reach:
        if len(points) > cap:
            report = EscapeReport(check='escape_chain', length=len(points) - 1, qualifying_steps=len(ratios),
                                  violations=1, notes=[f'chain did not escape within {cap} steps'])
            return EscapeChain(BackwardOrbit(tuple(points), tuple(branches), RegionTag.ANY), report)
        candidates = preimages(p, z)
        branch = 0 if candidates[0].real <= 0 else 1
        lift = candidates[branch]
        if _quadrant(lift) != 0 and _quadrant(z) == -_quadrant(lift):
            lifted, grown = abs(lift - 1.0), abs(z - 1.0) - 1.0
            lift_distances.append(lifted)
            if lifted < math.sqrt(2.0):
                failures += 1
            if grown > 0:
                ratio = (lifted - 1.0) / grown
                ratios.append(ratio)
                if ratio <= 1.0 / p.lam:
                    failures += 1
        points.append(lift)
        branches.append(branch)
        z = lift
    report = EscapeReport(
        check='escape_chain',
        length=len(points) - 1,
        qualifying_steps=len(lift_distances),
        min_lift_distance=min(lift_distances) if lift_distances else None,
        min_growth_ratio=min(ratios) if ratios else None,
        violations=failures,
    )
    return EscapeChain(BackwardOrbit(tuple(points), tuple(branches), RegionTag.ANY), report)


class EscapeBoundReport(Report):
    starts: int
    max_length: int
    notes: List[str] = Field(default_factory=lambda: ['empirical maximum; the uniform bound is not certified'])


def empirical_escape_bound(p: MapParams, n_starts: int = 1000, seed: int = 0, cap: int = ESCAPE_CAP) -> EscapeBoundReport:
    """Largest escape-chain length over random starts in ``F(B*_λ)``."""
    rng = np.random.default_rng(seed)
    reach = 1.0 - p.lam + p.lam * p.radius
    inner = 1.0 - p.lam
    radii = np.sqrt(inner ** 2 + (reach ** 2 - inner ** 2) * rng.random(n_starts))
    starts = 1.0 + np.maximum(radii, inner * (1 + 1e-9)) * np.exp(2j * math.pi * rng.random(n_starts))
    longest, violations = 0, 0
    for z0 in starts:
        chain = escape_chain(p, complex(z0), cap)
        longest = max(longest, chain.report.length)
        violations += chain.report.violations
    return EscapeBoundReport(check='escape_bound', starts=n_starts, max_length=longest, violations=violations)


class OntoReport(Report):
    covered: bool
    steps: Optional[int] = None
    fractions: List[float] = Field(default_factory=list)


def eventually_onto_check(p: MapParams, seed_set: CellSet, omega: Region, cap: int = 200) -> OntoReport:
    """First ``m`` with ``∪_{k≤m} F^k(U)`` covering every IN cell of Ω."""
    target = CellSet(omega.grid, omega.mask(CellStatus.CERTIFIED_IN))
    if not seed_set.intersects(target):
        raise ParameterError('seed set does not meet omega')
    union = seed_set
    image = seed_set
    fractions = [union.fraction_of(target)]
    for m in range(1, cap + 1):
        image = image.forward_image(p)
        union = union.union(image)
        fractions.append(union.fraction_of(target))
        if union.covers(target):
            return OntoReport(check='eventually_onto', covered=True, steps=m, fractions=fractions)
    return OntoReport(check='eventually_onto', covered=False, fractions=fractions, violations=1,
                      notes=[f'coverage {fractions[-1]:.4f} after {cap} steps'])


@dataclass(frozen=True)
class BasinDisk:
    """``D″ = {arg z ∈ (ε, π/2), |z − p⁺| < |2i − p⁺|, |z| > δ}`` around ``p⁺ = e^{iπ/3}``."""
    eps: float = 0.05
    delta: float = 0.01

    @property
    def center(self) -> complex:
        return cmath.exp(1j * math.pi / 3)

    @property
    def radius(self) -> float:
        return abs(2j - self.center)

    def contains(self, z, closed: bool = False, tolerance: float = 0.0) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128)
        angle = np.angle(z)
        if closed:
            return ((angle >= self.eps - tolerance) & (angle <= math.pi / 2 + tolerance)
                    & (np.abs(z - self.center) <= self.radius + tolerance) & (np.abs(z) >= self.delta - tolerance))
        return (angle > self.eps) & (angle < math.pi / 2) & (np.abs(z - self.center) < self.radius) & \
               (np.abs(z) > self.delta)

    def ray_length(self) -> float:
        """Length of the ray ``arg z = ε`` inside the disk."""
        c = math.cos(math.pi / 3 - self.eps)
        return c + math.sqrt(c * c - 1.0 + self.radius ** 2)

    def boundary(self, n: int) -> Dict[str, ComplexArray]:
        top = math.pi / 2
        ray_end = self.ray_length() * cmath.exp(1j * self.eps)
        start = cmath.phase(ray_end - self.center)
        stop = cmath.phase(2j - self.center)
        if stop < start:
            stop += 2 * math.pi
        return {
            'imaginary_axis': 1j * np.linspace(self.delta, 2.0, n),
            'ray': np.linspace(self.delta, self.ray_length(), n) * cmath.exp(1j * self.eps),
            'circle': self.center + self.radius * np.exp(1j * np.linspace(start, stop, n)),
            'small_arc': self.delta * np.exp(1j * np.linspace(self.eps, top, n)),
        }

    def grid(self, n: int) -> ComplexArray:
        """Closed-disk samples on an ``n × n`` grid over the bounding box."""
        xs = np.linspace(0.0, self.radius + 1.0, n)
        ys = np.linspace(0.0, 2.0, n)
        z = (xs[None, :] + 1j * ys[:, None]).ravel()
        return z[self.contains(z, closed=True)]


class BasinReport(Report):
    boundary_samples: int
    boundary_hits: int
    closure_samples: int
    closure_failures: int
    segment_failures: int
    orbits: int
    max_steps: int
    max_error: float


def basin_disk_check(p: MapParams, eps: float = 0.05, delta: float = 0.01, n_boundary: int = 2000,
                     n_grid: int = 120, n_orbits: int = 1000, seed: int = 0, max_steps: int = 200,
                     tolerance: float = 1e-8) -> BasinReport:
    """The preliminary disk of the limit map and backward convergence to ``p⁺_F``.

    * ``G†(∂D″)`` misses the closure of ``D″``;
    * every point of the closure of ``D″`` has a ``G†``-preimage in ``D″``;
    * every point of ``[0, 1 − δ] ⊂ I`` has a ``G†``-preimage in the closure of ``D″``; points of
      ``I`` above ``1 − δ`` only have preimages with ``|z| < δ``;
    * backward orbits of ``F`` under the branch through ``p⁺_F`` started in ``D″``
      reach ``p⁺_F`` within ``tolerance`` in at most ``max_steps`` steps.
    """
    disk = BasinDisk(eps, delta)
    boundary = np.concatenate(list(disk.boundary(n_boundary).values()))
    images = np.asarray(eval_limit(boundary))
    hits = np.nonzero(disk.contains(images, closed=True, tolerance=-1e-12))[0]

    closure = disk.grid(n_grid)
    closure = np.concatenate([closure, boundary])
    closure_failures = [y for y in closure if not any(disk.contains(c) for c in limit_preimages(y))]
    segment = np.linspace(0.0, 1.0 - delta, n_boundary)
    segment_failures = [y for y in segment
                        if not any(disk.contains(c, closed=True, tolerance=1e-12) for c in limit_preimages(y))]

    source = find_fixed_points(p)['source'].location
    rng = np.random.default_rng(seed)
    starts = closure[rng.integers(0, closure.size, n_orbits)]
    worst_steps, worst_error, stuck = 0, 0.0, []
    for z in starts:
        steps = 0
        while abs(z - source) >= tolerance and steps < max_steps:
            candidates = preimages(p, z)
            if not candidates:
                break
            z = min(candidates, key=lambda c: abs(c - source))
            steps += 1
        error = abs(z - source)
        worst_steps, worst_error = max(worst_steps, steps), max(worst_error, error)
        if error >= tolerance:
            stuck.append(z)
    report = BasinReport(
        check='basin_disk',
        boundary_samples=int(boundary.size),
        boundary_hits=int(hits.size),
        closure_samples=int(closure.size),
        closure_failures=len(closure_failures),
        segment_failures=len(segment_failures),
        orbits=n_orbits,
        max_steps=worst_steps,
        max_error=worst_error,
    )
    report.violations = int(hits.size) + len(closure_failures) + len(segment_failures) + len(stuck)
    if hits.size:
        report.witness = {'boundary_point': boundary[hits[0]], 'image': images[hits[0]]}
    elif closure_failures:
        report.witness = {'uncovered': closure_failures[0]}
    elif stuck:
        report.witness = {'orbit_end': stuck[0]}
    return report


@dataclass(frozen=True)
class PeriodicOrbit:
    """Periodic orbit ``orbit[0] → … → orbit[period − 1] → orbit[0]``."""
    orbit: Tuple[complex, ...]
    kind: FixedPointKind
    multipliers: Tuple[complex, complex]
    residual: float
    origin: str

    @property
    def point(self) -> complex:
        return self.orbit[0]

    @property
    def period(self) -> int:
        return len(self.orbit)

    def row(self) -> List[float]:
        first, second = self.multipliers
        return [self.point.real, self.point.imag, self.period, self.kind.value,
                first.real, first.imag, second.real, second.imag]


def shooting_residual(p: MapParams, orbit: Sequence[complex]) -> float:
    q = np.asarray(orbit, dtype=np.complex128)
    return float(np.max(np.abs(np.asarray(eval_map(p, q)) - np.roll(q, -1))))


def closure_error(p: MapParams, q: complex, period: int) -> float:
    """``|F^period(q) − q|`` by plain forward iteration."""
    z = complex(q)
    for _ in range(period):
        if z == 0:
            return math.inf
        z = complex(eval_map(p, z))
    return abs(z - q)


def refine_periodic_orbit(p: MapParams, seeds: Sequence[complex], max_iterations: int = 50,
                          tolerance: float = 1e-12) -> ComplexArray:
    """Multiple-shooting Newton for ``F(q_j) = q_{j+1 mod N}``.

    Raises:
        ConvergenceError: If the residual does not drop below ``tolerance·(1 + max|q|)``.
    """
    q = np.asarray(seeds, dtype=np.complex128).copy()
    n = q.size
    residual = math.inf
    for _ in range(max_iterations):
        r = np.asarray(eval_map(p, q)) - np.roll(q, -1)
        residual = float(np.max(np.abs(r)))
        if residual < tolerance * (1.0 + float(np.max(np.abs(q)))):
            return q
        rows, cols, vals = [], [], []
        for j in range(n):
            block = derivative_matrix(p, q[j])
            nxt = (j + 1) % n
            for a in range(2):
                for b in range(2):
                    rows.append(2 * j + a)
                    cols.append(2 * j + b)
                    vals.append(block[a, b])
                rows.append(2 * j + a)
                cols.append(2 * nxt + a)
                vals.append(-1.0)
        jac = sparse.coo_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n)).tocsc()
        rhs = -np.column_stack([r.real, r.imag]).ravel()
        step = spsolve(jac, rhs)
        q = q + step[0::2] + 1j * step[1::2]
        if np.any(q == 0) or not np.all(np.isfinite(q)):
            break
    raise ConvergenceError('periodic orbit refinement did not converge', residual=residual, iterations=max_iterations)


def periodic_multipliers(p: MapParams, orbit: Sequence[complex], cycles: int = 4) -> Tuple[FixedPointKind, Tuple[complex, complex]]:
    """Kind and multipliers of ``DF^N`` along the orbit.

    Short orbits use the eigenvalues of the product; long orbits use moduli estimated from
    QR re-orthonormalisation over several turns of the cycle.
    """
    if len(orbit) <= 40:
        product = np.eye(2)
        for z in orbit:
            product = derivative_matrix(p, z) @ product
        kind, values, _ = classify_matrix(product)
        return kind, values
    basis = np.eye(2)
    logs = np.zeros(2)
    for _ in range(cycles):
        for z in orbit:
            basis, upper = np.linalg.qr(derivative_matrix(p, z) @ basis)
            signs = np.sign(np.diag(upper))
            basis = basis * signs
            logs += np.log(np.abs(np.diag(upper)))
    exponents = np.sort(logs / cycles)
    moduli = np.exp(np.clip(exponents, -700.0, 700.0))
    if exponents[0] > 0:
        kind = FixedPointKind.SOURCE
    elif exponents[1] < 0:
        kind = FixedPointKind.SINK
    else:
        kind = FixedPointKind.SADDLE
    return kind, (complex(moduli[0]), complex(moduli[1]))


def _backward_search(p: MapParams, start: complex, target: Callable[[complex], bool], max_depth: int,
                     beam: int) -> Optional[List[complex]]:
    """Breadth-first search of the preimage tree of ``start`` for a point satisfying ``target``.

    Returns the chain ``[start, z_1, …, z_k]`` or ``None``.
    """
    layer: List[Tuple[complex, Tuple[complex, ...]]] = [(complex(start), (complex(start),))]
    for _ in range(max_depth):
        nxt = []
        for point, chain in layer:
            for c in preimages(p, point):
                if c == 0 or abs(c) > p.radius:
                    continue
                path = chain + (c,)
                if target(c):
                    return list(path)
                nxt.append((c, path))
        layer = nxt[:beam]
        if not layer:
            return None
    return None


class PeriodicSearchReport(Report):
    window_center: List[float]
    window_radius: float
    sources: int = 0
    saddles: int = 0
    attempts: int = 0
    failures: int = 0


@dataclass(frozen=True)
class PeriodicSearch:
    orbits: List[PeriodicOrbit]
    report: PeriodicSearchReport


def _closing_start(p: MapParams, orbit: ComplexArray, window: Tuple[complex, float]) -> Tuple[Optional[int], float]:
    """Index of the in-window orbit point with the smallest closure error, and that error."""
    center, radius = window
    best, error = None, math.inf
    for j in np.nonzero(np.abs(orbit - center) <= radius)[0]:
        e = closure_error(p, orbit[j], orbit.size)
        if e < error:
            best, error = int(j), e
    return best, error


def _record(p: MapParams, found: List[PeriodicOrbit], orbit: ComplexArray, origin: str,
            window: Tuple[complex, float], kind: Optional[FixedPointKind] = None) -> Optional[PeriodicOrbit]:
    start, error = _closing_start(p, orbit, window)
    if start is None or error >= CLOSURE_TOLERANCE:
        return None
    orbit = np.roll(orbit, -start)
    for known in found:
        if known.period == orbit.size and np.min(np.abs(np.asarray(known.orbit) - orbit[0])) < 1e-8:
            return known
    found_kind, multipliers = periodic_multipliers(p, orbit)
    if kind is not None and found_kind != kind:
        return None
    result = PeriodicOrbit(tuple(complex(z) for z in orbit), found_kind, multipliers, error, origin)
    found.append(result)
    return result


SOURCE_APPROACHES = (0.3, 0.1, 3e-2, 1e-2)


def _source_seeds(p: MapParams, source: FixedPoint, disk: BasinDisk, window: Tuple[complex, float],
                  max_depth: int, beam: int, approaches: Sequence[float] = SOURCE_APPROACHES) -> List[List[complex]]:
    """Basin-recipe chains through the window, one per spiral depth in ``approaches``.

    Shorter spirals give orbits with smaller multipliers, whose closure survives forward
    iteration in double precision.
    """
    center, radius = window
    away = -source.location
    tail = _backward_search(p, away, lambda z: abs(z - center) <= radius, max_depth, beam)
    if tail is None:
        return []
    chain = [source.location] + tail
    anchor = chain[-1]
    to_disk = _backward_search(p, anchor, lambda z: bool(disk.contains(z)), max_depth, beam)
    if to_disk is None:
        return []
    spiral = [to_disk[-1]]
    seeds = []
    for approach in approaches:
        while abs(spiral[-1] - source.location) >= approach and len(spiral) < 400:
            spiral.append(min(preimages(p, spiral[-1]), key=lambda c: abs(c - source.location)))
        # forward order: window → … → near p⁺ → out through D → back to the window
        seeds.append(chain[:0:-1] + spiral[:0:-1] + to_disk[:0:-1])
    return seeds


def _saddle_seeds(p: MapParams, saddle: FixedPoint, window: Tuple[complex, float], stable_depth: int,
                  turns: float, min_angle: float, approach: float, cap: int) -> List[List[complex]]:
    center, radius = window
    branch = grow_unstable_branch(p, saddle, side=1, theta_stop=2 * math.pi * turns, max_points=200_000)
    near = np.abs(branch.points - center) <= radius + 1.0
    seeds: List[List[complex]] = []
    arcs = stable_manifold_arcs(p, stable_depth, window=(center, radius + 1.0))
    runs = np.flatnonzero(np.diff(np.concatenate([[0], near.astype(np.int8), [0]])))
    for lo, hi in zip(runs[0::2], runs[1::2]):
        if hi - lo < 2:
            continue
        piece = branch.points[lo:hi]
        for arc in arcs:
            level = int(arc.label.split()[1])
            for crossing in segment_crossings(piece, arc.points):
                if crossing.angle < min_angle or abs(crossing.point - center) > radius:
                    continue
                k = lo + crossing.first_index
                s = branch.params[k] + crossing.first_param * (branch.params[k + 1] - branch.params[k])
                backward = [complex(branch.seed_points(np.array([s]))[0])]
                for _ in range(branch.level):
                    backward.append(complex(eval_map(p, backward[-1])))
                start = next((j for j, z in enumerate(backward) if abs(z - saddle.location) >= approach), None)
                if start is None:
                    continue
                forward = [backward[-1]]
                for _ in range(cap):
                    nxt = complex(eval_map(p, forward[-1]))
                    if len(forward) > level and abs(nxt - saddle.location) < approach:
                        break
                    forward.append(nxt)
                else:
                    continue
                seeds.append(backward[start:-1] + forward)
                if len(seeds) >= 4:
                    return seeds
    return seeds


def find_periodic_points(p: MapParams, window: Tuple[complex, float], period_cap: int = 400,
                         max_depth: int = 16, beam: int = 2048, stable_depth: int = 6, turns: float = 2.0,
                         min_angle_deg: float = 5.0, tolerance: float = 1e-12) -> PeriodicSearch:
    """Periodic sources and saddles with a point in the disk ``window = (center, radius)``.

    Fixed points in the window are reported first. A source is built from a backward
    chain leading from ``p⁺_F`` into the window, a chain from the window into the basin
    disk and the inverse branch spiralling back towards ``p⁺_F``; a saddle is shadowed
    from a transversal homoclinic crossing of ``W^u(p_F)`` with a stable arc inside the
    window. Both orbit candidates are refined by multiple-shooting Newton at ``tolerance``
    and again at ``tolerance/2``. An orbit is kept only when its kind is the same after
    both refinements and some orbit point ``q`` in the window satisfies
    ``|F^k(q) − q| < 1e−10`` under forward iteration. That point is reported, with the
    closure error as ``residual``.
    """
    center, radius = complex(window[0]), float(window[1])
    if radius <= 0:
        raise ParameterError(f'window radius must be positive, got {radius}')
    fixed = find_fixed_points(p)
    found: List[PeriodicOrbit] = []
    report = PeriodicSearchReport(check='periodic_points', window_center=complex_pair(center), window_radius=radius)
    for point in fixed.values():
        if abs(point.location - center) <= radius:
            _record(p, found, np.array([point.location]), 'fixed point', (center, radius))

    candidates: List[Tuple[str, List[complex]]] = []
    for seed in _source_seeds(p, fixed['source'], BasinDisk(), (center, radius), max_depth, beam):
        candidates.append(('basin recipe', seed))
    for orbit in _saddle_seeds(p, fixed['saddle'], (center, radius), stable_depth, turns,
                               math.radians(min_angle_deg), approach=1e-3, cap=period_cap):
        candidates.append(('homoclinic crossing', orbit))

    for origin, orbit in candidates:
        if len(orbit) > period_cap:
            continue
        report.attempts += 1
        try:
            refined = refine_periodic_orbit(p, orbit, tolerance=tolerance)
            # the classification must survive a tighter Newton stop
            tighter = refine_periodic_orbit(p, refined, tolerance=tolerance / 2)
        except (ConvergenceError, ValueError) as e:
            logger.debug('periodic candidate (%s) rejected: %s', origin, e)
            report.failures += 1
            continue
        kind, _ = periodic_multipliers(p, refined)
        if _record(p, found, tighter, origin, (center, radius), kind=kind) is None:
            logger.debug('periodic candidate (%s) of period %d does not close', origin, tighter.size)
            report.failures += 1

    report.sources = sum(o.kind == FixedPointKind.SOURCE for o in found)
    report.saddles = sum(o.kind == FixedPointKind.SADDLE for o in found)
    if not found:
        report.notes.append('no periodic orbit found below the caps')
    logger.info('periodic search in window %r: %d sources, %d saddles', window, report.sources, report.saddles)
    return PeriodicSearch(found, report)
