"""Closed-form maps of the family.

``F_{λ,μ}(z) = (1 − λ + λ|z|^{μ/σ}) (z/|z|)² + 1`` folds the plane two-to-one
onto the complement of the unattained disk ``|ζ − 1| ≤ 1 − λ``. The module also
provides its factorisation through the cylinder, derivative, Jacobian and inverse
branches, the limit map ``G†``, the torus map ``T_{λ,μ}``, the skew products and the
radial bump perturbation.

Scalar inputs give Python scalars back; numpy arrays are evaluated elementwise.
"""
import functools
import logging
import math
from typing import Callable, List, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from wildtorus.exceptions import DomainError, ParameterError
from wildtorus.params import MapParams
from wildtorus.reports import Report
from wildtorus.types import ComplexLike, CylinderPoint, SkewPoint

logger = logging.getLogger(__name__)

BUMP_FREE_RADIUS = 15.0

Number = Union[complex, float]


def _as_complex(z: ComplexLike, operation: str) -> Tuple[np.ndarray, bool]:
    scalar = np.ndim(z) == 0
    arr = np.asarray(z, dtype=np.complex128)
    if np.any(arr == 0):
        raise DomainError(operation, 0j)
    return arr, scalar


def _out(arr: np.ndarray, scalar: bool):
    if scalar:
        value = arr.item()
        return complex(value) if np.iscomplexobj(arr) else float(value)
    return arr


def _radius_profile(r: np.ndarray, lam: float, kappa: float) -> np.ndarray:
    return 1.0 - lam + lam * r ** kappa


def bump(s: np.ndarray) -> np.ndarray:
    """``b(s) = (1 − s²)³`` on ``s < 1`` and 0 elsewhere."""
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, (1.0 - np.minimum(s, 1.0) ** 2) ** 3, 0.0)


def bump_derivative(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, -6.0 * s * (1.0 - np.minimum(s, 1.0) ** 2) ** 2, 0.0)


def _polar_parts(p: MapParams, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(r, u, R, R_r, R_φ)`` where ``F(z) = 1 + R·u²`` and ``u = z/|z|``."""
    r = np.abs(z)
    u = z / r
    big_r = _radius_profile(r, p.lam, p.kappa)
    r_deriv = p.lam * p.kappa * r ** (p.kappa - 1.0)
    phi_deriv = np.zeros_like(r)
    if p.eps_perturb > 0:
        offset = z - p.perturb_center
        dist = np.abs(offset)
        s = dist / p.perturb_radius
        big_r = big_r + p.eps_perturb * bump(s)
        with np.errstate(invalid='ignore', divide='ignore'):
            grad = np.where(dist > 0, offset / (dist * p.perturb_radius), 0j)
        slope = p.eps_perturb * bump_derivative(s)
        r_deriv = r_deriv + slope * np.real(np.conj(grad) * u)
        phi_deriv = slope * np.real(np.conj(grad) * 1j * z)
    return r, u, big_r, r_deriv, phi_deriv


def eval_map(p: MapParams, z: ComplexLike):
    """Evaluates ``F_{λ,μ}`` (including the bump term when ``eps_perturb > 0``).

    Args:
        p: Map parameters.
        z: Nonzero point or array of points.

    Returns:
        The image point(s).

    Raises:
        DomainError: If any input is zero.
    """
    arr, scalar = _as_complex(z, 'eval_map')
    _, u, big_r, _, _ = _polar_parts(p, arr)
    return _out(big_r * u * u + 1.0, scalar)


def perturbed_map(p: MapParams, z: ComplexLike):
    """Evaluates the bump-perturbed map after validating the perturbation.

    Raises:
        ParameterError: If the bump reaches ``|z| ≥ 15`` or destroys local injectivity.
    """
    check_perturbation(p)
    return eval_map(p, z)


class PerturbationReport(Report):
    eps_bound: float
    min_jacobian: float
    max_deviation: float


@functools.lru_cache(maxsize=64)
def check_perturbation(p: MapParams, grid: int = 201) -> PerturbationReport:
    """Validates the bump perturbation on a sample grid over its support.

    The bump only changes the radial profile along each ray, so the map stays a local
    diffeomorphism while ``∂R/∂r > 0``; ``eps_bound`` is the largest amplitude for which
    that holds on the grid.
    """
    centre, radius = p.perturb_center, p.perturb_radius
    if abs(centre) + radius > BUMP_FREE_RADIUS:
        raise ParameterError(
            f'bump support |z - {centre}| < {radius} reaches |z| >= {BUMP_FREE_RADIUS}'
        )
    report = PerturbationReport(check='perturbation', eps_bound=math.inf, min_jacobian=math.inf, max_deviation=0.0)
    if p.eps_perturb == 0:
        return report

    xs = np.linspace(-1.0, 1.0, grid)
    offsets = (xs[None, :] + 1j * xs[:, None]).ravel() * radius
    z = centre + offsets[(np.abs(offsets) < radius) & (centre + offsets != 0)]
    unperturbed = p.with_changes(eps_perturb=0.0)
    r = np.abs(z)
    base_slope = p.lam * p.kappa * r ** (p.kappa - 1.0)
    s = np.abs(z - centre) / radius
    grad_u = np.real(np.conj((z - centre) / np.where(s > 0, np.abs(z - centre) * radius, 1.0)) * z / r)
    bump_slope = np.abs(bump_derivative(s) * grad_u)
    with np.errstate(divide='ignore'):
        bounds = np.where(bump_slope > 0, base_slope / bump_slope, np.inf)

    jac = jacobian(p, z)
    deviation = np.abs(eval_map(p, z) - eval_map(unperturbed, z))
    report.eps_bound = float(np.min(bounds))
    report.min_jacobian = float(np.min(jac))
    report.max_deviation = float(np.max(deviation))
    if report.min_jacobian <= 0 or p.eps_perturb >= report.eps_bound:
        raise ParameterError(
            f'eps_perturb={p.eps_perturb} destroys local injectivity (bound {report.eps_bound:.4g})'
        )
    logger.debug('perturbation valid: eps=%s bound=%.4g', p.eps_perturb, report.eps_bound)
    return report


def decompose(p: MapParams) -> Tuple[Callable[[Number], CylinderPoint], Callable[[CylinderPoint], complex]]:
    """Factorisation ``F = g ∘ τ`` through the cylinder ``ℝ/ℤ × (0, ∞)``.

    ``τ(z) = (arg z / 2π, 1 − λ + λ|z|^{μ/σ})`` and ``g(θ, t) = t·e^{4πiθ} + 1``; the
    bump perturbation, when present, is carried by ``g``.
    """
    def tau(z: Number) -> CylinderPoint:
        z = complex(z)
        if z == 0:
            raise DomainError('tau', z)
        return CylinderPoint(math.atan2(z.imag, z.real) / (2 * math.pi), float(_radius_profile(abs(z), p.lam, p.kappa)))

    def g(c: CylinderPoint) -> complex:
        t = c.t
        if p.eps_perturb > 0:
            r = ((t - 1.0 + p.lam) / p.lam) ** (1.0 / p.kappa)
            z = r * complex(math.cos(2 * math.pi * c.theta), math.sin(2 * math.pi * c.theta))
            t = t + p.eps_perturb * float(bump(abs(z - p.perturb_center) / p.perturb_radius))
        angle = 4 * math.pi * c.theta
        return t * complex(math.cos(angle), math.sin(angle)) + 1.0

    return tau, g


def derivative(p: MapParams, z0: ComplexLike, v: ComplexLike):
    """Real-linear derivative ``D_{z0}F(v)``.

    With ``v = z0(a + ib)`` this is ``(z0/|z0|)²(a λκ|z0|^κ + 2ib(1 − λ + λ|z0|^κ))``;
    for ``κ = 1`` it reduces to ``(F(z0) − 1)(aλ|z0|/(1 − λ + λ|z0|) + 2bi)``.
    """
    arr, scalar = _as_complex(z0, 'derivative')
    v = np.asarray(v, dtype=np.complex128)
    r, u, big_r, r_deriv, phi_deriv = _polar_parts(p, arr)
    ratio = v / arr
    a, b = ratio.real, ratio.imag
    result = u * u * (a * r * r_deriv + b * (phi_deriv + 2j * big_r))
    return _out(result, scalar and np.ndim(v) == 0)


def derivative_matrix(p: MapParams, z0: Number) -> np.ndarray:
    """2×2 real matrix of ``D_{z0}F`` in the basis (1, i)."""
    col_x = complex(derivative(p, z0, 1.0))
    col_y = complex(derivative(p, z0, 1j))
    return np.array([[col_x.real, col_y.real], [col_x.imag, col_y.imag]])


def jacobian(p: MapParams, z: ComplexLike):
    """Jacobian determinant ``2 R ∂R/∂r / r``; for κ = 1, ``2λ(λ + (1 − λ)/|z|)``."""
    arr, scalar = _as_complex(z, 'jacobian')
    r, _, big_r, r_deriv, _ = _polar_parts(p, arr)
    return _out(2.0 * big_r * r_deriv / r, scalar)


def preimages(p: MapParams, zeta: Number) -> List[complex]:
    """Both preimages of ``zeta``, branch 0 first.

    Branch 0 has argument in (−π/2, π/2], branch 1 is its negative. The list is empty
    exactly when ``zeta`` lies in the unattained disk ``|ζ − 1| ≤ 1 − λ``.
    """
    zeta = complex(zeta)
    d = abs(zeta - 1.0)
    if d <= 1.0 - p.lam:
        return []
    phi = math.atan2((zeta - 1.0).imag, (zeta - 1.0).real) / 2.0
    direction = complex(math.cos(phi), math.sin(phi))
    if p.eps_perturb > 0:
        first = direction * _perturbed_radius(p, d, direction)
        second = -direction * _perturbed_radius(p, d, -direction)
        return [first, second]
    r = ((d - (1.0 - p.lam)) / p.lam) ** (1.0 / p.kappa)
    return [r * direction, -r * direction]


def preimage_pairs(p: MapParams, zeta: ComplexLike) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised branch-0 preimages; returns ``(z, valid)`` with NaN where none exists.

    The branch-1 preimage is ``−z`` for the unperturbed family only; with a bump use
    :func:`preimages` per point. Rays that miss the bump support keep the closed form.
    """
    zeta = np.atleast_1d(np.asarray(zeta, dtype=np.complex128))
    shifted = zeta - 1.0
    d = np.abs(shifted)
    valid = d > 1.0 - p.lam
    r = (np.maximum(d - (1.0 - p.lam), 0.0) / p.lam) ** (1.0 / p.kappa)
    direction = np.exp(0.5j * np.angle(shifted))
    z = np.where(valid, r * direction, np.nan + 0j)
    if p.eps_perturb > 0:
        lo = (np.maximum(d - p.eps_perturb - (1.0 - p.lam), 0.0) / p.lam) ** (1.0 / p.kappa)
        touched = valid & ~_ray_misses_bump(p, lo, r, direction)
        for k in np.flatnonzero(touched):
            z.flat[k] = preimages(p, zeta.flat[k])[0]
    return z, valid


def preimage_candidates(p: MapParams, zeta: ComplexLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Both branches elementwise: ``(branch 0, branch 1, valid)``."""
    zeta = np.atleast_1d(np.asarray(zeta, dtype=np.complex128))
    first, valid = preimage_pairs(p, zeta)
    if p.eps_perturb <= 0:
        return first, -first, valid
    d = np.abs(zeta - 1.0)
    direction = -np.exp(0.5j * np.angle(zeta - 1.0))
    hi = (np.maximum(d - (1.0 - p.lam), 0.0) / p.lam) ** (1.0 / p.kappa)
    second = np.where(valid, hi * direction, np.nan + 0j)
    lo = (np.maximum(d - p.eps_perturb - (1.0 - p.lam), 0.0) / p.lam) ** (1.0 / p.kappa)
    touched = valid & ~_ray_misses_bump(p, lo, hi, direction)
    for k in np.flatnonzero(touched):
        second.flat[k] = preimages(p, zeta.flat[k])[1]
    return first, second, valid


def preimage_branch(p: MapParams, zeta: Number, branch: int) -> complex:
    candidates = preimages(p, zeta)
    if not candidates:
        raise DomainError('preimage_branch', zeta)
    return candidates[branch]


def _unperturbed_radius(p: MapParams, d: float) -> float:
    return ((max(d, 1.0 - p.lam) - (1.0 - p.lam)) / p.lam) ** (1.0 / p.kappa)


def _ray_misses_bump(p: MapParams, lo, hi, direction):
    # the segment {r·direction : lo ≤ r ≤ hi} stays off the open support disk
    along = np.clip(np.real(p.perturb_center * np.conj(direction)), lo, hi)
    return np.abs(p.perturb_center - along * direction) >= p.perturb_radius


def _perturbed_radius(p: MapParams, d: float, direction: complex) -> float:
    # the bump only adds to the radial profile along the ray, so R(r) = d has one root
    hi = _unperturbed_radius(p, d)
    lo = _unperturbed_radius(p, d - p.eps_perturb)
    if _ray_misses_bump(p, lo, hi, direction):
        return hi

    def residual(r: float) -> float:
        z = r * direction
        value = float(_radius_profile(r, p.lam, p.kappa))
        value += p.eps_perturb * float(bump(abs(z - p.perturb_center) / p.perturb_radius))
        return value - d

    if residual(hi) == 0.0 or lo >= hi:
        return hi
    lo = max(lo, 1e-300)
    if residual(lo) > 0:
        return lo
    return brentq(residual, lo, hi, xtol=1e-15 * max(hi, 1.0), rtol=4 * np.finfo(float).eps)


def nearest_preimage(p: MapParams, zeta: Number, reference: complex) -> Tuple[complex, int]:
    """Preimage of ``zeta`` closest to ``reference`` with its branch label."""
    candidates = preimages(p, zeta)
    if not candidates:
        raise DomainError('nearest_preimage', zeta)
    branch = int(abs(candidates[1] - reference) < abs(candidates[0] - reference))
    return candidates[branch], branch


def derivative_coordinates(p: MapParams, z0: ComplexLike, y: ComplexLike):
    """Solves ``D_{z0}F(z0(a + ib)) = y`` and returns ``a + ib``."""
    arr, scalar = _as_complex(z0, 'derivative_coordinates')
    y = np.asarray(y, dtype=np.complex128)
    r, u, big_r, r_deriv, phi_deriv = _polar_parts(p, arr)
    rotated = y / (u * u)
    b = rotated.imag / (2.0 * big_r)
    a = (rotated.real - b * phi_deriv) / (r * r_deriv)
    return _out(a + 1j * b, scalar and np.ndim(y) == 0)


def inverse_derivative(p: MapParams, z: ComplexLike, v: ComplexLike):
    """Solves ``D_zF(x) = v`` for ``x``."""
    return z * derivative_coordinates(p, z, v)


def skew_tangent_map(p: MapParams, z: ComplexLike, w: ComplexLike, dz: ComplexLike, dw: ComplexLike):
    """Derivative of ``F̂`` at ``(z, w)`` applied to ``(dz, dw)``; returns ``(dz', dw')``.

    With ``dz = z(a + ib)``, ``u = z/|z|`` and ``f = β|z|^{η/σ}`` the fiber part is
    ``ibu/2 + f(w/u)(ηa/σ − ib) + f·dw/u``.
    """
    z = np.asarray(z, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    ratio = np.asarray(dz, dtype=np.complex128) / z
    a, b = ratio.real, ratio.imag
    u = z / np.abs(z)
    f = fiber_factor(p, z)
    fiber = 0.5j * b * u + f * (w / u) * (p.fiber_exponent * a - 1j * b) + f * np.asarray(dw) / u
    return derivative(p, z, dz), fiber


def skew_tangent_pullback(p: MapParams, z: ComplexLike, w: ComplexLike, dz_image: ComplexLike,
                          dw_image: ComplexLike):
    """Inverse of :func:`skew_tangent_map`; returns ``(dz, dw)``."""
    z = np.asarray(z, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    ratio = np.asarray(derivative_coordinates(p, z, dz_image))
    a, b = ratio.real, ratio.imag
    u = z / np.abs(z)
    f = fiber_factor(p, z)
    rest = np.asarray(dw_image) - 0.5j * b * u - f * (w / u) * (p.fiber_exponent * a - 1j * b)
    return z * ratio, rest * u / f


def eval_torus_map(p: MapParams, z: ComplexLike):
    """``T_{λ,μ}(z) = (1 − λ + λ|z|^{μ/σ}) z/|z|``."""
    arr, scalar = _as_complex(z, 'eval_torus_map')
    r = np.abs(arr)
    return _out(_radius_profile(r, p.lam, p.kappa) * arr / r, scalar)


def eval_limit(z: ComplexLike):
    """The limit map ``G†(z) = z²/|z| + 1``."""
    arr, scalar = _as_complex(z, 'eval_limit')
    return _out(arr * arr / np.abs(arr) + 1.0, scalar)


def limit_derivative(z0: ComplexLike, v: ComplexLike):
    arr, scalar = _as_complex(z0, 'limit_derivative')
    v = np.asarray(v, dtype=np.complex128)
    r = np.abs(arr)
    u = arr / r
    ratio = v / arr
    return _out(u * u * r * (ratio.real + 2j * ratio.imag), scalar and np.ndim(v) == 0)


def limit_jacobian(z: ComplexLike):
    """Jacobian of ``G†``; identically 2."""
    arr, scalar = _as_complex(z, 'limit_jacobian')
    return _out(np.full(arr.shape, 2.0), scalar)


def limit_preimages(zeta: Number) -> List[complex]:
    zeta = complex(zeta)
    d = abs(zeta - 1.0)
    if d == 0:
        return []
    phi = math.atan2((zeta - 1.0).imag, (zeta - 1.0).real) / 2.0
    z = d * complex(math.cos(phi), math.sin(phi))
    return [z, -z]


def fiber_factor(p: MapParams, z: ComplexLike):
    """Fiber contraction ``β|z|^{η/σ}`` of the skew product over ``z``."""
    return p.beta * np.abs(z) ** p.fiber_exponent


def fiber_factor_bound(p: MapParams) -> float:
    """``β·max_{B_λ}|z|^{η/σ}``."""
    return float(p.beta * p.radius ** p.fiber_exponent)


def eval_skew(p: MapParams, x: SkewPoint) -> SkewPoint:
    """Skew product ``F̂(z, w, v) = (F(z), z/(2|z|) + β|z|^{η/σ}(|z|/z)w, β|z|^{η/σ}v)``."""
    z = complex(x.z)
    if z == 0:
        raise DomainError('eval_skew', x)
    r = abs(z)
    factor = p.beta * r ** p.fiber_exponent
    w = z / (2 * r) + factor * (r / z) * x.w
    v = tuple(factor * item for item in x.v)
    return SkewPoint(complex(eval_map(p, z)), w, v)


def eval_torus_skew(p: MapParams, x: SkewPoint) -> SkewPoint:
    """``T̂(z, w, v) = (T(z), β₀|z|^{η/σ}w, β₀|z|^{η/σ}v)``."""
    z = complex(x.z)
    if z == 0:
        raise DomainError('eval_torus_skew', x)
    factor = p.beta0 * abs(z) ** p.fiber_exponent
    return SkewPoint(complex(eval_torus_map(p, z)), factor * x.w, tuple(factor * item for item in x.v))


def eval_limit_skew(p: MapParams, x: SkewPoint) -> SkewPoint:
    """``Ĝ†(z, w, v) = (G†(z), z/(2|z|) + β₁(|z|/z)w, β₁v)``."""
    z = complex(x.z)
    if z == 0:
        raise DomainError('eval_limit_skew', x)
    r = abs(z)
    w = z / (2 * r) + p.beta1 * (r / z) * x.w
    return SkewPoint(complex(eval_limit(z)), w, tuple(p.beta1 * item for item in x.v))


def skew_derivative_matrix(p: MapParams, x: SkewPoint) -> np.ndarray:
    """Real Jacobian of ``F̂`` in the coordinates of :meth:`SkewPoint.as_vector`."""
    base = x.as_vector()
    n = base.size
    matrix = np.empty((n, n))
    steps = 1e-7 * np.maximum(1.0, np.abs(base))
    for k in range(n):
        delta = np.zeros(n)
        delta[k] = steps[k]
        forward = eval_skew(p, SkewPoint.from_vector(base + delta)).as_vector()
        backward = eval_skew(p, SkewPoint.from_vector(base - delta)).as_vector()
        matrix[:, k] = (forward - backward) / (2 * steps[k])
    # the base block is known in closed form
    matrix[:2, :2] = derivative_matrix(p, x.z)
    return matrix


class MeasureReport(Report):
    samples: int
    window_area: float
    preimage_area: float
    relative_error: float


def limit_measure_check(n_samples: int = 10 ** 6, seed: int = 0, inner: float = 0.5, outer: float = 3.0,
                        tolerance: float = 0.02) -> MeasureReport:
    """Monte-Carlo check that ``G†`` preserves Lebesgue measure on an annulus window.

    Points are drawn uniformly in the disk ``|z| ≤ outer + 1``, which contains the full
    preimage of the window ``inner ≤ |ζ| ≤ outer``; the hit fraction times the disk area
    estimates the area of the preimage.
    """
    rng = np.random.default_rng(seed)
    big = outer + 1.0
    radii = big * np.sqrt(rng.random(n_samples))
    angles = 2 * np.pi * rng.random(n_samples)
    z = radii * np.exp(1j * angles)
    z = z[z != 0]
    images = np.abs(eval_limit(z))
    hits = np.count_nonzero((images >= inner) & (images <= outer))
    preimage_area = math.pi * big ** 2 * hits / z.size
    window_area = math.pi * (outer ** 2 - inner ** 2)
    error = abs(preimage_area - window_area) / window_area
    return MeasureReport(
        check='limit_measure_invariance',
        samples=int(z.size),
        window_area=window_area,
        preimage_area=preimage_area,
        relative_error=error,
        violations=int(error > tolerance),
    )
