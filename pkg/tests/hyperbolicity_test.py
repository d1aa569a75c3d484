import math
from typing import Tuple

import numpy as np
import pytest

from wildtorus.exceptions import DomainError, ParameterError
from wildtorus.geometry import Arc, circle_arc
from wildtorus.hyperbolicity import (
    ConeSpec,
    HyperbolicityDomain,
    classify_arc,
    cone_mask,
    cone_slope,
    hyperbolicity_threshold,
    image_arc_check,
    in_cone,
    lambda_tilde,
    orbit_rate_check,
    preimage_arc,
    preimage_arc_check,
    profile_radius,
    stable_half_width,
    unstable_expansion,
    verify_skew_cones,
    verify_stable_cone_lemma,
    verify_unstable_cone_lemma,
)
from wildtorus.types import ArcKind, ConeKind, SkewPoint

from tests.providers.hyperbolicity import data_provider_for_cone_membership


def test_constants():
    assert stable_half_width(0.95) == pytest.approx(0.5 * math.sqrt(0.05))
    assert lambda_tilde(0.95) == pytest.approx(0.9407407, rel=1e-6)
    assert unstable_expansion(0.95) == pytest.approx(1.5020819, rel=1e-6)
    assert hyperbolicity_threshold(0.95) == pytest.approx(18.777415, rel=1e-6)
    assert lambda_tilde(0.95) < 1.0 < unstable_expansion(0.95)


def test_domain(planar):
    domain = HyperbolicityDomain.of(planar)
    assert domain.threshold == pytest.approx(hyperbolicity_threshold(0.95))
    assert domain.contains(20.0)
    assert not domain.contains(18.0j)
    assert domain.contains(np.array([5.0, 30.0])).tolist() == [False, True]
    assert profile_radius(planar, 20.0) == pytest.approx(21.0)


@pytest.mark.parametrize("test_case", data_provider_for_cone_membership())
def test_in_cone(test_case: Tuple[ConeKind, complex, complex, bool]):
    kind, base, v, expected = test_case
    assert in_cone(ConeSpec(kind, base, 0.95), v) == expected
    assert bool(cone_mask(kind, base, v, 0.95)) == expected


def test_in_cone_is_exact_on_the_boundary():
    # 1 − λ = 1/4 is a dyadic rational, so the boundary slope ±1/4 is representable
    assert in_cone(ConeSpec(ConeKind.C_STABLE, 1.0, 0.75), 1.0 + 0.25j)
    assert in_cone(ConeSpec(ConeKind.C_STABLE, 1.0, 0.75), 1.0 - 0.25j)
    assert not in_cone(ConeSpec(ConeKind.C_STABLE, 1.0, 0.75), 1.0 + 0.2500001j)
    assert in_cone(ConeSpec(ConeKind.K_TILDE, 1.0, 0.75), 1.0 + 1.0j)


def test_in_cone_rejects_zero_base():
    with pytest.raises(DomainError):
        in_cone(ConeSpec(ConeKind.C_STABLE, 0j, 0.95), 1.0)
    with pytest.raises(DomainError):
        in_cone(ConeSpec(ConeKind.K_HAT, SkewPoint(0j), 0.95), SkewPoint(1j))


def test_hat_cones():
    base = SkewPoint(21.0 + 0j, 0.2j)
    assert in_cone(ConeSpec(ConeKind.C_HAT, base, 0.95), SkewPoint(1.0 + 0j, 0j))
    assert in_cone(ConeSpec(ConeKind.C_HAT, base, 0.95), SkewPoint(0j, 1.0 + 0j))
    assert in_cone(ConeSpec(ConeKind.C_HAT, base, 0.95), SkewPoint(-1.0 + 0j, 0j))
    assert not in_cone(ConeSpec(ConeKind.C_HAT, base, 0.95), SkewPoint(1j, 0j))
    assert in_cone(ConeSpec(ConeKind.K_HAT, base, 0.95), SkewPoint(1j, 0j))
    assert in_cone(ConeSpec(ConeKind.K_HAT, base, 0.95), SkewPoint(1j, 0.1 + 0j))
    assert not in_cone(ConeSpec(ConeKind.K_HAT, base, 0.95), SkewPoint(1j, 100.0 + 0j))
    assert not in_cone(ConeSpec(ConeKind.K_HAT, base, 0.95), SkewPoint(1.0 + 0j, 0j))


def test_cone_slope():
    assert cone_slope(1.0, 0.5 + 1j) == pytest.approx(0.5)
    assert cone_slope(2j, -2.0 + 1j) == pytest.approx(-0.5)
    assert cone_slope(np.array([1.0, 1.0]), np.array([1j, 0.25 + 1j])).tolist() == pytest.approx([0.0, 0.25])


def test_classify_arc():
    assert classify_arc(circle_arc(0j, 30.0, 0.1, 0.6, 40), 0.95) == ArcKind.QUASI_ANGULAR
    assert classify_arc(circle_arc(0j, 30.0, 0.1, 0.6, 40).reversed(), 0.95) == ArcKind.QUASI_ANGULAR
    radial = Arc(np.linspace(25.0, 35.0, 30) + 0j, np.ones(30, dtype=complex))
    assert classify_arc(radial, 0.95) == ArcKind.QUASI_RADIAL
    assert classify_arc(radial.reversed(), 0.95) == ArcKind.QUASI_RADIAL
    diagonal = Arc(np.linspace(25.0, 35.0, 30) + 0j, np.full(30, 1 + 1j))
    assert classify_arc(diagonal, 0.95) == ArcKind.NEITHER


def test_classify_arc_errors():
    with pytest.raises(ValueError):
        classify_arc(Arc(np.array([30.0 + 0j]), np.array([1j])), 0.95)
    with pytest.raises(DomainError):
        classify_arc(Arc(np.array([30.0 + 0j, 31.0 + 0j]), np.array([1j, 0j])), 0.95)
    with pytest.raises(DomainError):
        classify_arc(Arc(np.array([0j, 1.0 + 0j]), np.array([1.0 + 0j, 1.0 + 0j])), 0.95)


def test_image_of_quasi_angular_arc(planar):
    report = image_arc_check(planar, circle_arc(0j, 30.0, 0.1, 0.3, 50))
    assert report.passed
    assert report.kind_after == ArcKind.QUASI_ANGULAR
    assert report.length_ratio >= unstable_expansion(0.95)


def test_preimage_of_quasi_radial_arc(planar):
    radial = Arc(np.linspace(25.0, 35.0, 30) + 0j, np.ones(30, dtype=complex), label='radial')
    lift = preimage_arc(planar, radial)
    assert lift.label == 'radial'
    assert lift.points[0] == pytest.approx((25.0 - 1.0 - 0.05) / 0.95)
    report = preimage_arc_check(planar, radial)
    assert report.passed
    assert report.length_ratio == pytest.approx(0.95)


def test_stable_cone_lemma(planar):
    report = verify_stable_cone_lemma(planar, n_samples=4000, seed=1)
    assert report.passed
    assert report.max_ratio <= report.lambda_tilde + 1e-12


def test_unstable_cone_lemma(planar):
    report = verify_unstable_cone_lemma(planar, n_samples=4000, seed=1)
    assert report.passed
    assert report.min_expansion >= report.expansion_bound * (1.0 - 1e-12)


def test_skew_cones(planar):
    report = verify_skew_cones(planar, n_samples=4000, seed=2)
    assert report.passed
    assert report.fiber_factor_bound == pytest.approx(0.016)


def test_skew_cones_need_small_fiber_factor(planar):
    with pytest.raises(ParameterError):
        verify_skew_cones(planar.with_changes(beta0=0.9), n_samples=100)


def test_orbit_rates(planar):
    report = orbit_rate_check(planar, n_orbits=50, steps=10, seed=3)
    assert report.passed
    assert report.orbits > 0
