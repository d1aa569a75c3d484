"""Cone fields, the domain of hyperbolicity and sampled verification of the cone lemmas.

Tangent vectors at ``z0`` are written ``z0(a + ib)``. The stable cone ``C`` holds the
vectors with ``a ≥ 0`` and ``|b| ≤ ε₀a`` where ``ε₀ = ½√(1−λ)``; the unstable cones
``K``, ``K⁻`` and ``K̃`` hold the vectors with ``b ≥ 0`` and ``a/b`` in ``[−1/3, 1/3]``,
``[−1/3, 0]`` and ``[−1, 1]`` respectively.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from wildtorus import core_maps
from wildtorus.exceptions import DomainError, ParameterError
from wildtorus.geometry import Arc
from wildtorus.params import MapParams
from wildtorus.reports import Report, complex_pair
from wildtorus.types import ArcKind, ConeKind, ComplexArray, SkewPoint

logger = logging.getLogger(__name__)

UNSTABLE_SLOPE = Fraction(1, 3)
TILDE_SLOPE = Fraction(1)
UNSTABLE_LEMMA_PROFILE = 20.0

K_TILDE_NOTE = 'K_tilde reconstructed with slope bound 1 (|eps| <= 1)'
C_HAT_NOTE = 'C_hat reconstructed as |b| <= eps0*max(|a|, (1-lambda)*max(|w|, |v|)) so that fiber directions are stable'

Vector = Union[complex, SkewPoint]


def stable_half_width(lam: float) -> float:
    """``ε₀ = ½√(1−λ)``."""
    return 0.5 * math.sqrt(1.0 - lam)


def lambda_tilde(lam: float) -> float:
    """Contraction bound ``(λ² + 4ε₀²)/(1 + ε₀²)`` of the stable cone lemma."""
    eps2 = 0.25 * (1.0 - lam)
    return (lam * lam + 4.0 * eps2) / (1.0 + eps2)


def unstable_expansion(lam: float) -> float:
    return lam * math.sqrt(2.5)


def hyperbolicity_threshold(lam: float) -> float:
    """``λ⁻¹(λ − 1 + 4/√(1−λ))``."""
    return (lam - 1.0 + 4.0 / math.sqrt(1.0 - lam)) / lam


def profile_radius(p: MapParams, profile: float) -> float:
    """Smallest ``|z|`` with ``1 − λ + λ|z|^κ ≥ profile``."""
    return max((profile - 1.0 + p.lam) / p.lam, 0.0) ** (1.0 / p.kappa)


@dataclass(frozen=True)
class HyperbolicityDomain:
    """``H_λ = {|z| > threshold}``."""
    lam: float

    @classmethod
    def of(cls, p: MapParams) -> 'HyperbolicityDomain':
        return cls(p.lam)

    @property
    def threshold(self) -> float:
        return hyperbolicity_threshold(self.lam)

    def contains(self, z):
        inside = np.abs(np.asarray(z)) > self.threshold
        return bool(inside) if np.ndim(inside) == 0 else inside


@dataclass(frozen=True)
class ConeSpec:
    kind: ConeKind
    base: Vector
    lam: float

    @property
    def eps0(self) -> float:
        return stable_half_width(self.lam)

    @property
    def is_hat(self) -> bool:
        return self.kind in (ConeKind.C_HAT, ConeKind.K_HAT)


def _exact_coordinates(base: complex, v: complex) -> Tuple[Fraction, Fraction]:
    # v·conj(base) = |base|²(a + ib), the positive factor does not change any comparison
    br, bi = Fraction(base.real), Fraction(base.imag)
    vr, vi = Fraction(v.real), Fraction(v.imag)
    return vr * br + vi * bi, vi * br - vr * bi


def _planar_member(kind: ConeKind, x: Fraction, y: Fraction, lam: float) -> bool:
    if kind in (ConeKind.C_STABLE, ConeKind.C_HAT):
        return x >= 0 and 4 * y * y <= (1 - Fraction(lam)) * x * x
    if y < 0:
        return False
    if kind in (ConeKind.K_UNSTABLE, ConeKind.K_HAT):
        return abs(x) <= UNSTABLE_SLOPE * y
    if kind == ConeKind.K_MINUS:
        return x <= 0 and -x <= UNSTABLE_SLOPE * y
    if kind == ConeKind.K_TILDE:
        return abs(x) <= TILDE_SLOPE * y
    raise ValueError(kind)


def in_cone(spec: ConeSpec, v: Vector) -> bool:
    """Exact membership of ``v`` in the cone described by ``spec``.

    Planar kinds take complex tangent vectors; hat kinds take a :class:`SkewPoint`
    for the base and for the tangent vector ``(dz, dw, dv)``.

    Raises:
        DomainError: If the base point has ``z = 0``.
    """
    if spec.is_hat:
        base = spec.base.z if isinstance(spec.base, SkewPoint) else complex(spec.base)
        vector = v if isinstance(v, SkewPoint) else SkewPoint(complex(v))
    else:
        base = complex(spec.base)
        vector = SkewPoint(complex(v))
    if base == 0:
        raise DomainError('in_cone', base)
    x, y = _exact_coordinates(base, vector.z)
    if not spec.is_hat:
        return _planar_member(spec.kind, x, y, spec.lam)

    norm2 = Fraction(base.real) ** 2 + Fraction(base.imag) ** 2
    fiber = max([abs(vector.w)] + [abs(item) for item in vector.v]) if vector.v else abs(vector.w)
    bound = (1 - Fraction(spec.lam)) * Fraction(fiber)
    if spec.kind == ConeKind.K_HAT:
        # ρ = b = y/|base|²
        return _planar_member(ConeKind.K_UNSTABLE, x, y, spec.lam) and y >= bound * norm2
    a, b = x / norm2, y / norm2
    return 4 * b * b <= (1 - Fraction(spec.lam)) * max(abs(a), bound) ** 2


def cone_coordinates(base, v) -> ComplexArray:
    """``a + ib = v/base`` elementwise."""
    return np.asarray(v, dtype=np.complex128) / np.asarray(base, dtype=np.complex128)


def cone_slope(base, v):
    """Slope ``ε = a/b`` of the unstable decomposition ``v = base·b(i + ε)``."""
    q = cone_coordinates(base, v)
    with np.errstate(divide='ignore', invalid='ignore'):
        slope = q.real / q.imag
    return float(slope) if np.ndim(slope) == 0 else slope


def cone_mask(kind: ConeKind, base, v, lam: float) -> np.ndarray:
    """Vectorised floating-point counterpart of :func:`in_cone` for planar kinds."""
    q = cone_coordinates(base, v)
    a, b = q.real, q.imag
    if kind == ConeKind.C_STABLE:
        return (a >= 0) & (np.abs(b) <= stable_half_width(lam) * a)
    if kind == ConeKind.K_UNSTABLE:
        return (b >= 0) & (np.abs(a) <= b / 3.0)
    if kind == ConeKind.K_MINUS:
        return (b >= 0) & (a <= 0) & (-a <= b / 3.0)
    if kind == ConeKind.K_TILDE:
        return (b >= 0) & (np.abs(a) <= b)
    raise ValueError(f'no vectorised mask for {kind}')


def _oriented(base: ComplexArray, tangents: ComplexArray, kind: ConeKind) -> ComplexArray:
    # arcs carry no orientation, so each tangent is compared up to sign
    q = cone_coordinates(base, tangents)
    flip = (q.real < 0) if kind == ConeKind.C_STABLE else (q.imag < 0)
    return np.where(flip, -tangents, tangents)


def classify_arc(arc: Arc, lam: float) -> ArcKind:
    """Quasi-radial if every tangent lies in ``C``, quasi-angular if every tangent lies in ``K``.

    Tangent lines are unoriented: ``−v`` counts as ``v``.
    """
    if len(arc) < 2:
        raise ValueError('degenerate arc: fewer than two samples')
    if np.any(arc.tangents == 0) or np.any(arc.points == 0):
        raise DomainError('classify_arc', arc.label or 'arc')
    for kind, label in ((ConeKind.C_STABLE, ArcKind.QUASI_RADIAL), (ConeKind.K_UNSTABLE, ArcKind.QUASI_ANGULAR)):
        tangents = _oriented(arc.points, arc.tangents, kind)
        if np.all(cone_mask(kind, arc.points, tangents, lam)):
            return label
    return ArcKind.NEITHER


def arc_length(arc: Arc) -> float:
    return arc.length


def _log_uniform_radii(rng: np.random.Generator, lo: float, hi: float, n: int) -> np.ndarray:
    return np.exp(rng.uniform(math.log(lo), math.log(hi), n))


def _sample_points(rng: np.random.Generator, lo: float, hi: float, n: int,
                   angle_lo: float = -math.pi, angle_hi: float = math.pi) -> ComplexArray:
    radii = _log_uniform_radii(rng, lo, hi, n)
    return radii * np.exp(1j * rng.uniform(angle_lo, angle_hi, n))


def _witness(z0: complex, v: complex, value: float) -> Dict[str, Any]:
    return {'z0': complex_pair(z0), 'v': complex_pair(v), 'value': float(value)}


class StableConeReport(Report):
    lambda_tilde: float
    eps0: float
    max_ratio: float
    min_margin: Optional[float] = None
    samples: int
    inclusion_samples: int


def verify_stable_cone_lemma(p: MapParams, n_samples: int = 10 ** 5, seed: int = 0) -> StableConeReport:
    """Samples the stable cone lemma.

    Part 1 checks ``|DF(v)|² ≤ λ̃|v|²`` for ``v ∈ C(z0)``, ``|z0| ≥ 1``; part 2 checks that
    pulling back the boundary rays of ``C(F(z0))`` lands strictly inside ``C(z0)``
    wherever ``1 − λ + λ|z0| ≥ 4/√(1−λ)``. The margin is ``ε₀ − |ε|`` of the pullback.
    """
    bound = lambda_tilde(p.lam)
    if bound >= 1.0:
        raise ParameterError(f'lambda={p.lam} gives lambda_tilde={bound:.6g} >= 1')
    eps0 = stable_half_width(p.lam)
    rng = np.random.default_rng(seed)

    z0 = _sample_points(rng, 1.0, p.radius, n_samples)
    eps = rng.uniform(-eps0, eps0, n_samples)
    # the supremum is approached at |z0| = 1 on the cone boundary
    edge = np.exp(1j * np.linspace(-math.pi, math.pi, 64, endpoint=False))
    z0 = np.concatenate([z0, edge, edge])
    eps = np.concatenate([eps, np.full(64, eps0), np.full(64, -eps0)])
    v = z0 * (1.0 + 1j * eps)
    ratio = np.abs(core_maps.derivative(p, z0, v)) ** 2 / np.abs(v) ** 2
    report = StableConeReport(
        check='stable_cone_lemma', lambda_tilde=bound, eps0=eps0, max_ratio=float(ratio.max()),
        samples=int(z0.size), inclusion_samples=0,
    )
    bad = np.nonzero(ratio > bound + 1e-12)[0]
    if bad.size:
        report.violations += int(bad.size)
        k = int(bad[0])
        report.witness = _witness(z0[k], v[k], ratio[k])

    inner = profile_radius(p, 4.0 / math.sqrt(1.0 - p.lam))
    if inner < p.radius:
        z1 = _sample_points(rng, max(inner, 1e-12), p.radius, n_samples)
        image = np.asarray(core_maps.eval_map(p, z1))
        margins = np.full(z1.size, np.inf)
        for sign in (1.0, -1.0):
            q = np.asarray(core_maps.derivative_coordinates(p, z1, image * (1.0 + 1j * sign * eps0)))
            slope = np.where(q.real > 0, np.abs(q.imag) / np.where(q.real > 0, q.real, 1.0), np.inf)
            margins = np.minimum(margins, eps0 - slope)
        report.min_margin = float(margins.min())
        report.inclusion_samples = int(z1.size)
        bad = np.nonzero(margins <= 0)[0]
        if bad.size:
            report.violations += int(bad.size)
            k = int(bad[0])
            report.witness = report.witness or _witness(z1[k], image[k], margins[k])
    else:
        report.notes.append('stable inclusion region is empty inside B_lambda')
    logger.info('stable cone lemma: lambda_tilde=%.6g max_ratio=%.6g min_margin=%s violations=%d',
                bound, report.max_ratio, report.min_margin, report.violations)
    return report


class UnstableConeReport(Report):
    expansion_bound: float
    min_expansion: float
    min_forward_margin: Optional[float] = None
    min_backward_margin: Optional[float] = None
    min_quadrant_margin: Optional[float] = None
    tilde_slope: float = float(TILDE_SLOPE)
    samples: int


def _unstable_image_slopes(p: MapParams, z0: ComplexArray, eps: float) -> np.ndarray:
    image = np.asarray(core_maps.eval_map(p, z0))
    y = np.asarray(core_maps.derivative(p, z0, z0 * (1j + eps)))
    q = y / image
    return np.where(q.imag > 0, q.real / np.where(q.imag > 0, q.imag, 1.0), np.inf)


def verify_unstable_cone_lemma(p: MapParams, n_samples: int = 10 ** 5, seed: int = 0) -> UnstableConeReport:
    """Samples the three parts of the unstable cone lemma.

    1. ``|DF(v)| ≥ λ√(5/2)|v|`` for ``v ∈ K̃(z0)`` anywhere in ``B*_λ``;
    2. where ``1 − λ + λ|z0| ≥ 20``: ``DF(K)`` strictly inside ``K∘F`` and the pullback of
       ``K∘F`` strictly inside ``K̃``;
    3. on the same region with ``Re z0 ≥ 0 < Im z0``: ``DF(K⁻) ⊂ K⁻∘F``.

    Part 3 reports its margin but only counts images outside the closed cone, since
    on the imaginary axis the image of the ray ``ε = 0`` is again ``ε = 0``.
    """
    bound = unstable_expansion(p.lam)
    rng = np.random.default_rng(seed)
    z0 = _sample_points(rng, 1e-3, p.radius, n_samples)
    eps = rng.uniform(-1.0, 1.0, n_samples)
    v = z0 * (1j + eps)
    expansion = np.abs(core_maps.derivative(p, z0, v)) / np.abs(v)
    report = UnstableConeReport(
        check='unstable_cone_lemma', expansion_bound=bound, min_expansion=float(expansion.min()),
        samples=int(z0.size), notes=[K_TILDE_NOTE],
    )
    bad = np.nonzero(expansion < bound * (1.0 - 1e-12))[0]
    if bad.size:
        report.violations += int(bad.size)
        report.witness = _witness(z0[bad[0]], v[bad[0]], expansion[bad[0]])

    inner = profile_radius(p, UNSTABLE_LEMMA_PROFILE)
    if inner >= p.radius:
        report.notes.append('unstable inclusion region is empty inside B_lambda')
        return report

    z1 = _sample_points(rng, inner, p.radius, n_samples)
    forward = np.minimum(*(1.0 / 3.0 - np.abs(_unstable_image_slopes(p, z1, e)) for e in (1 / 3, -1 / 3)))
    image = np.asarray(core_maps.eval_map(p, z1))
    backward = np.full(z1.size, np.inf)
    for e in (1 / 3, -1 / 3):
        q = np.asarray(core_maps.derivative_coordinates(p, z1, image * (1j + e)))
        slope = np.where(q.imag > 0, np.abs(q.real) / np.where(q.imag > 0, q.imag, 1.0), np.inf)
        backward = np.minimum(backward, 1.0 - slope)
    report.min_forward_margin = float(forward.min())
    report.min_backward_margin = float(backward.min())

    z2 = _sample_points(rng, inner, p.radius, n_samples, 0.0, math.pi / 2)
    z2 = z2[z2.imag > 0]
    quadrant = np.full(z2.size, np.inf)
    for e in (0.0, -1 / 3):
        slope = _unstable_image_slopes(p, z2, e)
        quadrant = np.minimum(quadrant, np.minimum(-slope, slope + 1.0 / 3.0))
    report.min_quadrant_margin = float(quadrant.min()) if quadrant.size else None

    for margins, points, strict in ((forward, z1, True), (backward, z1, True), (quadrant, z2, False)):
        failing = margins <= 0 if strict else margins < -1e-12
        bad = np.nonzero(failing)[0]
        if bad.size:
            report.violations += int(bad.size)
            k = int(bad[0])
            report.witness = report.witness or _witness(points[k], points[k] * 1j, margins[k])
    logger.info('unstable cone lemma: bound=%.6g min_expansion=%.6g violations=%d',
                bound, report.min_expansion, report.violations)
    return report


class SkewConeReport(Report):
    beta: float
    fiber_factor_bound: float
    min_unstable_margin: float
    min_stable_margin: float
    samples: int


def _fiber_disk(rng: np.random.Generator, n: int, radius: float = 1.0) -> ComplexArray:
    return radius * np.sqrt(rng.random(n)) * np.exp(2j * math.pi * rng.random(n))


def verify_skew_cones(p: MapParams, n_samples: int = 10 ** 5, seed: int = 0) -> SkewConeReport:
    """Samples invariance of ``K̂`` under ``DF̂`` and of ``Ĉ`` under ``DF̂⁻¹`` over ``Π⁻¹(H_λ)``.

    Margins are relative: for ``K̂`` the smaller of ``1/3 − |ε|`` and
    ``1 − (1−λ)|dw|/b``; for ``Ĉ`` the slack of ``|b| ≤ ε₀·max(|a|, (1−λ)|dw|)`` divided by
    the right-hand side.

    Raises:
        ParameterError: If ``β·max|z|^{η/σ} > 1/2``.
    """
    factor_bound = core_maps.fiber_factor_bound(p)
    if factor_bound > 0.5:
        raise ParameterError(f'fiber factor bound {factor_bound:.4g} > 1/2; decrease beta0')
    eps0 = stable_half_width(p.lam)
    shrink = 1.0 - p.lam
    rng = np.random.default_rng(seed)
    lo = max(hyperbolicity_threshold(p.lam), profile_radius(p, UNSTABLE_LEMMA_PROFILE))
    if lo >= p.radius:
        raise ParameterError(f'lambda={p.lam}: the hyperbolic region misses B_lambda')
    z = _sample_points(rng, lo, p.radius, n_samples)
    w = _fiber_disk(rng, n_samples)
    image_z = np.asarray(core_maps.eval_map(p, z))

    # unstable: dz = z(a + ib) with |a| ≤ b/3, |dw| ≤ b/(1−λ)
    b = np.ones(n_samples)
    a = rng.uniform(-1.0 / 3.0, 1.0 / 3.0, n_samples)
    dw = _fiber_disk(rng, n_samples, 1.0 / shrink)
    dz_image, dw_image = core_maps.skew_tangent_map(p, z, w, z * (a + 1j * b), dw)
    q = dz_image / image_z
    slope_margin = 1.0 / 3.0 - np.abs(q.real / q.imag)
    fiber_margin = 1.0 - shrink * np.abs(dw_image) / q.imag
    unstable = np.where(q.imag > 0, np.minimum(slope_margin, fiber_margin), -np.inf)

    # stable: pull back boundary-heavy vectors of Ĉ at the image
    a2 = rng.uniform(0.0, 1.0, n_samples)
    dw2 = _fiber_disk(rng, n_samples, 1.0 / shrink)
    scale = eps0 * np.maximum(a2, shrink * np.abs(dw2))
    b2 = scale * rng.choice([-1.0, 1.0], n_samples)
    dz_pre, dw_pre = core_maps.skew_tangent_pullback(p, z, w, image_z * (a2 + 1j * b2), dw2)
    q2 = dz_pre / z
    rhs = eps0 * np.maximum(np.abs(q2.real), shrink * np.abs(dw_pre))
    with np.errstate(divide='ignore', invalid='ignore'):
        stable = np.where(rhs > 0, 1.0 - np.abs(q2.imag) / rhs, -np.inf)

    report = SkewConeReport(
        check='skew_cones', beta=p.beta, fiber_factor_bound=factor_bound,
        min_unstable_margin=float(unstable.min()), min_stable_margin=float(stable.min()),
        samples=n_samples, notes=[C_HAT_NOTE],
    )
    for margins in (unstable, stable):
        bad = np.nonzero(margins <= 0)[0]
        if bad.size:
            report.violations += int(bad.size)
            k = int(bad[0])
            report.witness = report.witness or {'z': complex_pair(z[k]), 'w': complex_pair(w[k]),
                                                'margin': float(margins[k])}
    logger.info('skew cones: beta=%.3g unstable=%.4g stable=%.4g violations=%d', p.beta,
                report.min_unstable_margin, report.min_stable_margin, report.violations)
    return report


class OrbitRateReport(Report):
    expansion_bound: float
    contraction_bound: float
    orbits: int
    mean_length: float
    min_expansion_slack: float
    min_contraction_slack: float


def orbit_rate_check(p: MapParams, n_orbits: int = 200, steps: int = 20, seed: int = 0) -> OrbitRateReport:
    """Products of expansion/contraction factors along forward orbits inside the hyperbolic region.

    Each orbit starts at a random point with ``|z0|`` above both lemma radii and is cut
    at the first point leaving that region. A ``K`` vector pushed forward must grow by at
    least ``(λ√(5/2))^m``; a ``C`` vector at ``z_m`` pulled back to ``z0`` must have
    shrunk by at most ``λ̃^{m/2}`` when pushed forward again.
    """
    lo = max(hyperbolicity_threshold(p.lam), profile_radius(p, UNSTABLE_LEMMA_PROFILE))
    if lo >= p.radius:
        raise ParameterError(f'lambda={p.lam}: the hyperbolic region misses B_lambda')
    expansion, contraction = unstable_expansion(p.lam), lambda_tilde(p.lam)
    eps0 = stable_half_width(p.lam)
    rng = np.random.default_rng(seed)
    starts = _sample_points(rng, lo, p.radius, n_orbits, -math.pi / 8, math.pi / 8)
    lengths = []
    min_exp, min_con = math.inf, math.inf
    report = OrbitRateReport(check='orbit_rates', expansion_bound=expansion, contraction_bound=contraction,
                             orbits=n_orbits, mean_length=0.0, min_expansion_slack=math.inf,
                             min_contraction_slack=math.inf)
    for z0 in starts:
        orbit = [complex(z0)]
        while len(orbit) <= steps:
            nxt = complex(core_maps.eval_map(p, orbit[-1]))
            if abs(nxt) <= lo:
                break
            orbit.append(nxt)
        m = len(orbit) - 1
        lengths.append(m)
        if m == 0:
            continue
        v = orbit[0] * 1j
        growth = 1.0
        for z in orbit[:-1]:
            image = complex(core_maps.derivative(p, z, v))
            growth *= abs(image) / abs(v)
            v = image
        w = orbit[-1] * (1.0 + 1j * eps0 * rng.uniform(-1.0, 1.0))
        end = abs(w)
        for z in reversed(orbit[:-1]):
            w = complex(core_maps.inverse_derivative(p, z, w))
        shrink = end / abs(w)
        exp_slack = growth / expansion ** m - 1.0
        con_slack = 1.0 - shrink / contraction ** (m / 2)
        min_exp, min_con = min(min_exp, exp_slack), min(min_con, con_slack)
        if exp_slack < -1e-9 or con_slack < -1e-9:
            report.violations += 1
            report.witness = report.witness or {'z0': complex_pair(z0), 'length': m}
    report.mean_length = float(np.mean(lengths)) if lengths else 0.0
    report.min_expansion_slack = float(min_exp)
    report.min_contraction_slack = float(min_con)
    return report


class ArcPropagationReport(Report):
    kind_before: ArcKind
    kind_after: ArcKind
    length_ratio: float
    bound: float


def _image_arc(p: MapParams, arc: Arc) -> Arc:
    return Arc(np.asarray(core_maps.eval_map(p, arc.points)), np.asarray(core_maps.derivative(p, arc.points, arc.tangents)))


def image_arc_check(p: MapParams, arc: Arc) -> ArcPropagationReport:
    """Image of a quasi-angular arc in the hyperbolic region: quasi-angular and longer by ``λ√(5/2)``."""
    image = _image_arc(p, arc)
    before, after = classify_arc(arc, p.lam), classify_arc(image, p.lam)
    ratio = image.length / arc.length
    bound = unstable_expansion(p.lam)
    report = ArcPropagationReport(check='quasi_angular_image', kind_before=before, kind_after=after,
                                  length_ratio=ratio, bound=bound)
    if before != ArcKind.QUASI_ANGULAR or after != ArcKind.QUASI_ANGULAR or ratio < bound:
        report.violations = 1
        report.witness = {'ratio': ratio, 'kind_after': after.value}
    return report


def preimage_arc(p: MapParams, arc: Arc, branch: int = 0) -> Arc:
    """Lift of ``arc`` through a continuous choice of preimages starting on ``branch``."""
    start = core_maps.preimage_branch(p, arc.points[0], branch)
    points = [start]
    for zeta in arc.points[1:]:
        points.append(core_maps.nearest_preimage(p, zeta, points[-1])[0])
    points = np.asarray(points)
    tangents = np.asarray(core_maps.inverse_derivative(p, points, arc.tangents))
    return Arc(points, tangents, label=arc.label)


def preimage_arc_check(p: MapParams, arc: Arc, branch: int = 0) -> ArcPropagationReport:
    """Lift of a quasi-radial arc in the hyperbolic region.

    The lift must be quasi-radial and the arc itself at most ``λ̃^{1/2}`` times as long as
    its lift (stable vectors contract forward).
    """
    lift = preimage_arc(p, arc, branch)
    before, after = classify_arc(arc, p.lam), classify_arc(lift, p.lam)
    ratio = arc.length / lift.length
    bound = math.sqrt(lambda_tilde(p.lam))
    report = ArcPropagationReport(check='quasi_radial_preimage', kind_before=before, kind_after=after,
                                  length_ratio=ratio, bound=bound)
    if before != ArcKind.QUASI_RADIAL or after != ArcKind.QUASI_RADIAL or ratio > bound:
        report.violations = 1
        report.witness = {'ratio': ratio, 'kind_after': after.value}
    return report
