"""The attractor ``Ω_F``, its boundary curves and membership certificates.

The external boundary γ⁺ is the loop formed by the two branches of ``W^u(p_F)`` up to
their first crossing; each branch is a polar graph ``θ ↦ ρ(θ)e^{iθ}`` obtained as the
fixed point of the graph transform. Ω is labelled on a grid by a geometric test
against γ⁺ and the internal boundary γ⁻, cross-checked with backward chains in ``B_λ``.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import Field
from scipy import ndimage
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from wildtorus.cells import Grid
from wildtorus.core_maps import bump, eval_map, preimage_pairs, preimages
from wildtorus.exceptions import ContinuationError, ConvergenceError, ParameterError
from wildtorus.geometry import Arc, resample_by_arclength
from wildtorus.hyperbolicity import HyperbolicityDomain
from wildtorus.manifolds import LOOP_OVERSHOOT, find_fixed_points
from wildtorus.parallel import map_chunks
from wildtorus.params import MapParams, params_summary
from wildtorus.reports import Report, dumps
from wildtorus.types import CellStatus, ComplexArray

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 1024
DEFAULT_DEPTH = 30


@dataclass(frozen=True, eq=False)
class PolarLoop:
    """Closed curve made of an upper graph on ``[0, ψ]`` and a lower graph on ``[ψ − 2π, 0]``.

    Attributes:
        upper: Spline of ρ on ``[0, θ_max]``.
        lower: Spline of ρ on ``[−θ_max, 0]``.
        crossing_theta: ψ, where the branches meet (``upper(ψ) = lower(ψ − 2π)``).
        crossing_angle: Angle between the branch tangents at the crossing (radians).
        exit_theta: First θ ≥ 0 on either branch where the curve leaves ``H_λ``.
        offset: Radial inset subtracted from both branches.
    """
    upper: CubicSpline
    lower: CubicSpline
    crossing_theta: float
    crossing_angle: float
    exit_theta: Optional[float]
    samples: int
    offset: float = 0.0

    def rho(self, theta) -> np.ndarray:
        """ρ at polar angles ``θ``, taken modulo 2π into ``[ψ − 2π, ψ)``."""
        theta = np.asarray(theta, dtype=float)
        psi = self.crossing_theta
        t = np.mod(theta - psi, 2 * math.pi) + psi - 2 * math.pi
        rho = np.where(t >= 0, self.upper(np.maximum(t, 0.0)), self.lower(np.minimum(t, 0.0)))
        return rho - self.offset

    def rho_derivative(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        psi = self.crossing_theta
        t = np.mod(theta - psi, 2 * math.pi) + psi - 2 * math.pi
        return np.where(t >= 0, self.upper(np.maximum(t, 0.0), 1), self.lower(np.minimum(t, 0.0), 1))

    def contains(self, z, tolerance: float = 0.0) -> np.ndarray:
        """Closed inclusion ``|z| ≤ ρ(arg z)(1 + tolerance)``."""
        z = np.asarray(z, dtype=np.complex128)
        return np.abs(z) <= self.rho(np.angle(z)) * (1.0 + tolerance)

    @property
    def arc(self) -> Arc:
        psi = self.crossing_theta
        theta = np.linspace(psi - 2 * math.pi, psi, self.samples, endpoint=False)
        rho = self.rho(theta)
        slope = self.rho_derivative(theta)
        unit = np.exp(1j * theta)
        return Arc(rho * unit, (slope + 1j * rho) * unit, closed=True, label=self.label)

    @property
    def label(self) -> str:
        return 'gamma+' if self.offset == 0 else f'gamma+ inset {self.offset:g}'

    def shrunk(self, delta: float) -> 'PolarLoop':
        """The loop moved radially inward by ``delta``; the crossing angle ψ is unchanged."""
        return replace(self, offset=self.offset + delta)


def _graph_transform(p: MapParams, start: float, side: int, theta_max: float, samples: int,
                     tolerance: float, max_iterations: int) -> CubicSpline:
    theta = np.linspace(0.0, theta_max, samples)
    phi = np.linspace(0.0, min(theta_max, 0.5 * theta_max + 0.5), samples)
    rho = np.full(samples, start)
    for iteration in range(1, max_iterations + 1):
        spline = CubicSpline(theta, rho)
        image = np.asarray(eval_map(p, spline(phi) * np.exp(1j * side * phi)))
        angle = side * np.unwrap(np.angle(image))
        if np.any(np.diff(angle) <= 0):
            raise ContinuationError('graph transform lost monotonicity in the polar angle', last_valid=iteration)
        if angle[-1] < theta_max:
            raise ContinuationError('graph transform image does not reach theta_max', last_valid=float(angle[-1]))
        updated = CubicSpline(angle, np.abs(image))(theta)
        change = float(np.max(np.abs(updated - rho)))
        rho = updated
        if change < tolerance * max(start, 1.0):
            logger.debug('graph transform (side %+d) converged in %d iterations', side, iteration)
            x = side * theta
            return CubicSpline(x, rho) if side > 0 else CubicSpline(x[::-1], rho[::-1])
    raise ConvergenceError('graph transform did not converge', residual=change, iterations=max_iterations)


def compute_external_boundary(p: MapParams, samples: int = 4097, theta_max: float = math.pi + LOOP_OVERSHOOT,
                              tolerance: float = 1e-12, max_iterations: int = 2000) -> PolarLoop:
    """The loop γ⁺ formed by the two branches of ``W^u(p_F)``.

    Each branch is the attracting fixed point of the graph transform started from the
    constant ρ ≡ |p_F|. The branches meet at ψ, where ``ρ₊(ψ) = ρ₋(ψ − 2π)``; the
    crossing angle and the first θ leaving ``H_λ`` are recorded.

    Raises:
        ContinuationError: If the branches do not cross within ``θ_max``.
    """
    saddle = find_fixed_points(p)['saddle'].location
    start = abs(saddle)
    upper = _graph_transform(p, start, 1, theta_max, samples, tolerance, max_iterations)
    lower = _graph_transform(p, start, -1, theta_max, samples, tolerance, max_iterations)

    def gap(psi: float) -> float:
        return float(upper(psi) - lower(psi - 2 * math.pi))

    lo, hi = 2 * math.pi - theta_max, theta_max
    if gap(math.pi) == 0.0:
        psi = math.pi
    elif gap(lo) * gap(hi) > 0:
        raise ContinuationError('unstable branches do not cross', last_valid=theta_max)
    else:
        psi = brentq(gap, lo, hi, xtol=1e-14)
    rho = float(upper(psi))
    t_upper = (float(upper(psi, 1)) + 1j * rho) * np.exp(1j * psi)
    t_lower = (float(lower(psi - 2 * math.pi, 1)) + 1j * rho) * np.exp(1j * psi)
    angle = abs(math.remainder(float(np.angle(t_upper / t_lower)), math.pi))

    threshold = HyperbolicityDomain.of(p).threshold
    grid = np.linspace(0.0, psi, samples)
    below = np.nonzero((upper(grid) <= threshold) | (lower(-np.minimum(grid, 2 * math.pi - psi)) <= threshold))[0]
    exit_theta = float(grid[below[0]]) if below.size else None
    if exit_theta is not None:
        logger.info('gamma+ leaves H at theta=%.6f', exit_theta)
    logger.info('gamma+ crossing at psi=%.12f with angle %.6f rad', psi, angle)
    return PolarLoop(upper, lower, psi, angle, exit_theta, samples)


def _inner_limit(p: MapParams, direction: np.ndarray) -> np.ndarray:
    # the radial profile tends to 1 − λ (plus the bump value at 0) as |z| → 0
    value = np.full(direction.shape, 1.0 - p.lam)
    if p.eps_perturb > 0:
        value = value + p.eps_perturb * bump(abs(p.perturb_center) / p.perturb_radius)
    return value


def inner_radius(p: MapParams, psi: np.ndarray, radial_samples: int = 400) -> np.ndarray:
    """``r(ψ)``: smallest value of the radial profile over the two preimage rays of direction ``e^{2πiψ}``."""
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    best = _inner_limit(p, psi)
    if p.eps_perturb == 0:
        return best
    t = np.geomspace(1e-9, p.radius, radial_samples)
    for shift in (0.0, 0.5):
        direction = np.exp(2j * math.pi * (psi / 2.0 + shift))
        z = t[None, :] * direction[:, None]
        profile = 1.0 - p.lam + p.lam * t[None, :] ** p.kappa
        profile = profile + p.eps_perturb * bump(np.abs(z - p.perturb_center) / p.perturb_radius)
        best = np.minimum(best, profile.min(axis=1))
    return best


def compute_internal_boundary(p: MapParams, samples: int = 1024) -> Arc:
    """γ⁻ = ``{1 + r(ψ)e^{2πiψ}}``; the circle ``|z − 1| = 1 − λ`` for the unperturbed map."""
    psi = np.arange(samples) / samples
    r = inner_radius(p, psi)
    unit = np.exp(2j * math.pi * psi)
    slope = np.gradient(r, psi) / (2 * math.pi) if p.eps_perturb > 0 else np.zeros_like(r)
    return Arc(1.0 + r * unit, (slope + 1j * r) * unit, closed=True, label='gamma-')


def _outside_inner(p: MapParams, z: np.ndarray) -> np.ndarray:
    offset = z - 1.0
    return np.abs(offset) > inner_radius(p, np.mod(np.angle(offset) / (2 * math.pi), 1.0).ravel()).reshape(z.shape)


def _in_annulus(p: MapParams, loop: PolarLoop, z: np.ndarray) -> np.ndarray:
    return loop.contains(z) & _outside_inner(p, z)


def _guided_chains(p: MapParams, loop: PolarLoop, z: np.ndarray, depth: int) -> np.ndarray:
    """Whether a greedy backward chain of ``depth`` steps stays in ``B_λ``.

    At each step the preimage between γ⁻ and γ⁺ is preferred, otherwise the smaller one.
    """
    alive = np.ones(z.shape, dtype=bool)
    current = z.copy()
    for _ in range(depth):
        first, valid = preimage_pairs(p, current)
        if p.eps_perturb == 0:
            second = -first
        else:
            second = np.array([preimages(p, c)[1] if ok else np.nan for c, ok in zip(current, valid)])
        first_in = valid & _in_annulus(p, loop, np.nan_to_num(first))
        second_in = valid & _in_annulus(p, loop, np.nan_to_num(second))
        pick_second = ~first_in & (second_in | (np.abs(second) < np.abs(first)))
        chosen = np.where(pick_second, second, first)
        alive &= valid & (np.abs(chosen) <= p.radius)
        current = np.where(alive, chosen, 1j * p.radius)
    return alive


@dataclass
class Region:
    """Labelled grid over ``B_λ`` with the boundary curves it was built from."""
    grid: Grid
    status: np.ndarray
    outer: PolarLoop
    inner: Arc
    depth: int
    halo_cells: int = 0
    diagnostics: List[str] = field(default_factory=list)

    def mask(self, status: CellStatus) -> np.ndarray:
        return self.status == int(status)

    def count(self, status: CellStatus) -> int:
        return int(np.count_nonzero(self.mask(status)))

    def area(self, status: CellStatus = CellStatus.CERTIFIED_IN) -> float:
        return self.count(status) * self.grid.cell_size ** 2

    def status_at(self, z: complex) -> CellStatus:
        iy, ix, inside = self.grid.index_of(np.array([z]))
        if not inside[0]:
            return CellStatus.CERTIFIED_OUT
        return CellStatus(int(self.status[iy[0], ix[0]]))

    def header(self, p: MapParams) -> Dict[str, object]:
        return {
            'bounds': list(self.grid.bounds),
            'cell_size': self.grid.cell_size,
            'resolution': self.grid.resolution,
            'depth': self.depth,
            'parameters': params_summary(p),
            'counts': {s.name.lower(): self.count(s) for s in CellStatus},
            'halo_cells': self.halo_cells,
            'diagnostics': list(self.diagnostics),
        }

    def header_json(self, p: MapParams) -> str:
        return dumps(self.header(p))

    def image_rows(self) -> np.ndarray:
        """Status bytes with the top row at the largest imaginary part; unknown shows as 128."""
        rows = self.status[::-1].copy()
        rows[rows == int(CellStatus.UNKNOWN)] = int(CellStatus.BOUNDARY)
        return rows.astype(np.uint8)


def _boundary_distance(curve: ComplexArray, queries: ComplexArray, spacing: float) -> np.ndarray:
    dense = resample_by_arclength(np.append(curve, curve[0]), spacing)
    tree = cKDTree(np.column_stack([dense.real, dense.imag]))
    dist, _ = tree.query(np.column_stack([queries.real.ravel(), queries.imag.ravel()]))
    return dist.reshape(queries.shape)


def compute_omega(p: MapParams, resolution: int = DEFAULT_RESOLUTION, depth: int = DEFAULT_DEPTH,
                  loop: Optional[PolarLoop] = None, inner: Optional[Arc] = None) -> Region:
    """Labels every grid cell over ``B_λ``.

    Cells within ``h/√2`` of γ⁺ or γ⁻ are BOUNDARY. Other cells are IN when their centre
    is inside γ⁺, outside γ⁻ and a backward chain of ``depth`` steps stays in ``B_λ``;
    a geometric IN cell without a chain is UNKNOWN. Geometric OUT cells carrying a
    chain form the halo of ``F^depth(B_λ)`` around Ω and are counted, not relabelled.
    """
    if resolution < 8:
        raise ParameterError(f'resolution must be at least 8, got {resolution}')
    loop = loop or compute_external_boundary(p)
    inner = inner or compute_internal_boundary(p)
    grid = Grid.covering(p, resolution)
    h = grid.cell_size
    outer_curve = loop.arc.points
    chunks = [range(lo, min(lo + 64, resolution)) for lo in range(0, resolution, 64)]

    def label_rows(rows: range) -> Tuple[np.ndarray, int]:
        centers = np.stack([grid.row_centers(r) for r in rows])
        near = (_boundary_distance(outer_curve, centers, h / 4) < h / math.sqrt(2) + h / 4) | \
               (_boundary_distance(inner.points, centers, h / 4) < h / math.sqrt(2) + h / 4)
        geometric = loop.contains(centers) & _outside_inner(p, centers)
        in_ball = np.abs(centers) <= p.radius
        chain = np.zeros(centers.shape, dtype=bool)
        probe = in_ball & ~near & (centers != 0)
        chain[probe] = _guided_chains(p, loop, centers[probe], depth)
        chain[(centers == 0) & ~near] = True
        status = np.full(centers.shape, int(CellStatus.CERTIFIED_OUT), dtype=np.uint8)
        status[geometric & chain] = int(CellStatus.CERTIFIED_IN)
        status[geometric & ~chain] = int(CellStatus.UNKNOWN)
        status[near] = int(CellStatus.BOUNDARY)
        halo = int(np.count_nonzero(~geometric & chain & ~near))
        return status, halo

    results = map_chunks(label_rows, chunks)
    status = np.concatenate([rows for rows, _ in results])
    region = Region(grid, status, loop, inner, depth, halo_cells=sum(halo for _, halo in results))
    boundary, annulus = region.count(CellStatus.BOUNDARY), region.count(CellStatus.CERTIFIED_IN)
    if boundary > 0.5 * (boundary + annulus):
        message = f'resolution {resolution} too coarse: {boundary} boundary cells against {annulus} interior cells'
        logger.warning(message)
        region.diagnostics.append(message)
    unknown = region.count(CellStatus.UNKNOWN)
    if unknown:
        region.diagnostics.append(f'{unknown} cells inside the curves without a backward chain')
    logger.info('omega: %d in, %d boundary, %d unknown, halo %d', annulus, boundary, unknown, region.halo_cells)
    return region


def _chain_search(p: MapParams, loop: PolarLoop, z: complex, depth: int, cap: int) -> Tuple[bool, bool]:
    """Depth-first search over backward chains in ``B_λ``; returns ``(found, exhausted)``.

    Preimages inside γ⁺ are tried first. ``exhausted`` means every chain left ``B_λ``
    before ``depth`` steps without hitting the node cap.
    """
    stack = [(complex(z), 0)]
    visited = 0
    while stack:
        point, level = stack.pop()
        if level == depth:
            return True, False
        visited += 1
        if visited > cap:
            return False, False
        candidates = [c for c in preimages(p, point) if c != 0 and abs(c) <= p.radius]
        candidates.sort(key=lambda c: (bool(loop.contains(c)), -abs(c)))
        stack.extend((c, level + 1) for c in candidates)
    return False, True


def omega_membership(p: MapParams, z: complex, depth: int = DEFAULT_DEPTH, loop: Optional[PolarLoop] = None,
                     node_cap: int = 10_000) -> CellStatus:
    """Pointwise status of ``z``.

    IN needs geometric inclusion (closed, relative tolerance 1e−9) and a backward chain
    of ``depth`` steps in ``B_λ``; OUT needs geometric exclusion or every chain leaving
    ``B_λ``; anything else is UNKNOWN.
    """
    z = complex(z)
    if abs(z) > p.radius:
        raise ParameterError(f'{z!r} lies outside B_lambda')
    loop = loop or compute_external_boundary(p)
    found, exhausted = _chain_search(p, loop, z, depth, node_cap)
    if exhausted:
        return CellStatus.CERTIFIED_OUT
    inside = bool(loop.contains(z, tolerance=1e-9)) and bool(_outside_inner(p, np.array([z]))[0])
    if not inside:
        return CellStatus.CERTIFIED_OUT
    return CellStatus.CERTIFIED_IN if found else CellStatus.UNKNOWN


class TopologyReport(Report):
    components: int
    holes: int
    hole_contains_one: bool
    in_cells: int = 0
    unknown_cells: int = 0


def region_topology(region: Region) -> TopologyReport:
    """Connected components (8-neighbour) of the cells inside the curves and holes (4-neighbour) of the rest.

    UNKNOWN cells lie inside both curves and count with the IN cells; ``unknown_cells``
    reports how many there are, apart from ``in_cells``.
    """
    certified = region.mask(CellStatus.CERTIFIED_IN)
    unknown = region.mask(CellStatus.UNKNOWN)
    inside = certified | unknown
    _, components = ndimage.label(inside, structure=np.ones((3, 3), dtype=int))
    labels, pieces = ndimage.label(~inside)
    border = set(np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]]))) - {0}
    holes = [k for k in range(1, pieces + 1) if k not in border]
    iy, ix, on_grid = region.grid.index_of(np.array([1.0 + 0j]))
    hole_at_one = bool(on_grid[0]) and int(labels[iy[0], ix[0]]) in holes
    report = TopologyReport(check='omega_topology', components=int(components), holes=len(holes),
                            hole_contains_one=hole_at_one, in_cells=int(np.count_nonzero(certified)),
                            unknown_cells=int(np.count_nonzero(unknown)))
    if report.unknown_cells:
        report.notes.append(f'{report.unknown_cells} UNKNOWN cells counted with the interior')
    if components != 1 or len(holes) != 1 or not hole_at_one:
        report.violations = 1
        report.witness = {'components': int(components), 'holes': len(holes)}
    return report


class InvarianceReport(Report):
    samples: int
    image_counts: Dict[str, int] = Field(default_factory=dict)


def forward_invariance_check(p: MapParams, region: Region, n_samples: int = 10 ** 4,
                             seed: int = 0) -> InvarianceReport:
    """Images of random points of IN cells must land in IN, BOUNDARY or UNKNOWN cells."""
    rng = np.random.default_rng(seed)
    iy, ix = np.nonzero(region.mask(CellStatus.CERTIFIED_IN))
    if iy.size == 0:
        raise ParameterError('region has no certified interior cells')
    pick = rng.integers(0, iy.size, n_samples)
    h, grid = region.grid.cell_size, region.grid
    z = grid.x_min + (ix[pick] + rng.random(n_samples)) * h + 1j * (grid.y_min + (iy[pick] + rng.random(n_samples)) * h)
    z = z[z != 0]
    images = np.asarray(eval_map(p, z))
    jy, jx, on_grid = grid.index_of(images)
    labels = np.where(on_grid, region.status[jy, jx], int(CellStatus.CERTIFIED_OUT))
    counts = {s.name.lower(): int(np.count_nonzero(labels == int(s))) for s in CellStatus}
    bad = np.nonzero(labels == int(CellStatus.CERTIFIED_OUT))[0]
    report = InvarianceReport(check='omega_forward_invariance', samples=int(z.size), image_counts=counts,
                              violations=int(bad.size))
    if bad.size:
        report.witness = {'z': z[bad[0]], 'image': images[bad[0]]}
    return report


def image_of_boundary_check(p: MapParams, loop: PolarLoop, region: Region) -> Report:
    """``F(γ⁺)`` stays within one cell of Ω (the loop lies in its own image's neighbourhood)."""
    points = loop.arc.points
    images = np.asarray(eval_map(p, points))
    dist = _boundary_distance(points, images, region.grid.cell_size / 4)
    inside = loop.contains(images, tolerance=1e-9)
    bad = np.nonzero(~inside & (dist > region.grid.cell_size))[0]
    report = Report(check='gamma_plus_image', violations=int(bad.size))
    if bad.size:
        report.witness = {'z': points[bad[0]], 'image': images[bad[0]]}
    return report
