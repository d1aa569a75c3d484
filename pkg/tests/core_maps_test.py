import cmath
import math

import mpmath
import numpy as np
import pytest

from wildtorus.core_maps import (
    check_perturbation,
    decompose,
    derivative,
    derivative_matrix,
    eval_limit,
    eval_limit_skew,
    eval_map,
    eval_skew,
    eval_torus_map,
    eval_torus_skew,
    fiber_factor_bound,
    inverse_derivative,
    jacobian,
    limit_derivative,
    limit_jacobian,
    limit_measure_check,
    limit_preimages,
    nearest_preimage,
    preimage_branch,
    preimage_candidates,
    preimage_pairs,
    preimages,
    skew_derivative_matrix,
    skew_tangent_map,
    skew_tangent_pullback,
)
from wildtorus.exceptions import DomainError, ParameterError
from wildtorus.params import MapParams
from wildtorus.types import SkewPoint

from tests.providers.core_maps import (
    data_provider_for_points,
    data_provider_for_tangent_pairs,
    data_provider_for_unattained_values,
)


def test_known_values(planar):
    assert eval_map(planar, 1j) == pytest.approx(0j, abs=1e-12)
    assert eval_map(planar, 21.0) == pytest.approx(21.0, abs=1e-12)
    assert eval_map(planar, -21.0) == pytest.approx(21.0, abs=1e-12)
    assert isinstance(eval_map(planar, 2.0), complex)


@pytest.mark.parametrize("lam", [0.5, 0.9, 0.95, 0.999])
def test_sixth_root_is_fixed(lam: float):
    root = cmath.exp(1j * math.pi / 3)
    assert eval_map(MapParams.planar(lam), root) == pytest.approx(root, abs=1e-12)


@pytest.mark.parametrize("z", [2.0 + 0j, 2.0 + 1j, -0.3 + 0.7j])
def test_against_high_precision(z: complex):
    p = MapParams(lam=0.9, mu=0.95, sigma=1.0)
    with mpmath.workdps(40):
        mz = mpmath.mpc(z.real, z.imag)
        r = abs(mz)
        lam = mpmath.mpf(p.lam)
        expected = complex((1 - lam + lam * r ** mpmath.mpf(p.kappa)) * (mz / r) ** 2 + 1)
    actual = eval_map(p, z)
    assert abs(expected - actual) <= 1e-14 * max(1.0, abs(actual))


def test_vectorised_matches_scalar(planar):
    z = np.array(list(data_provider_for_points()))
    images = eval_map(planar, z)
    assert isinstance(images, np.ndarray)
    for item, image in zip(z, images):
        assert image == pytest.approx(eval_map(planar, complex(item)))


def test_zero_is_outside_domain(planar):
    with pytest.raises(DomainError):
        eval_map(planar, 0j)
    with pytest.raises(DomainError):
        eval_map(planar, np.array([1.0, 0.0]))
    with pytest.raises(DomainError):
        jacobian(planar, 0.0)
    with pytest.raises(DomainError):
        eval_skew(planar, SkewPoint(0j))
    with pytest.raises(ValueError):
        eval_limit(0j)


@pytest.mark.parametrize("z", data_provider_for_points())
def test_decompose(planar, z: complex):
    tau, g = decompose(planar)
    point = tau(z)
    assert 0.0 <= point.theta < 1.0
    assert g(point) == pytest.approx(eval_map(planar, z), abs=1e-10)


@pytest.mark.parametrize("test_case", data_provider_for_tangent_pairs())
@pytest.mark.parametrize("p", [MapParams.planar(0.95), MapParams(lam=0.9, mu=0.8)])
def test_derivative_matches_differences(p: MapParams, test_case):
    z0, v = test_case
    h = 1e-6
    numeric = (eval_map(p, z0 + h * v) - eval_map(p, z0 - h * v)) / (2 * h)
    assert derivative(p, z0, v) == pytest.approx(numeric, rel=1e-6, abs=1e-8)
    assert inverse_derivative(p, z0, derivative(p, z0, v)) == pytest.approx(v, abs=1e-10)


@pytest.mark.parametrize("z", data_provider_for_points())
def test_jacobian(planar, z: complex):
    lam = planar.lam
    assert jacobian(planar, z) == pytest.approx(2 * lam * (lam + (1 - lam) / abs(z)))
    assert jacobian(planar, z) == pytest.approx(np.linalg.det(derivative_matrix(planar, z)))


def test_saddle_multipliers(planar):
    eigenvalues = sorted(np.linalg.eigvals(derivative_matrix(planar, 21.0)).real)
    assert eigenvalues == pytest.approx([0.95, 40.0 / 21.0])


@pytest.mark.parametrize("p", [MapParams.planar(0.95), MapParams(lam=0.9, mu=0.8)])
@pytest.mark.parametrize("zeta", [3.0 + 4.0j, -2.0 + 0j, 1.5 - 0.5j, 25.0 + 1j])
def test_preimages(p: MapParams, zeta: complex):
    found = preimages(p, zeta)
    assert len(found) == 2
    assert -math.pi / 2 < cmath.phase(found[0]) <= math.pi / 2
    assert found[1] == pytest.approx(-found[0])
    for z in found:
        assert eval_map(p, z) == pytest.approx(zeta, abs=1e-10)
    assert preimage_branch(p, zeta, 1) == found[1]
    near, branch = nearest_preimage(p, zeta, found[1] * 1.01)
    assert (near, branch) == (found[1], 1)


@pytest.mark.parametrize("zeta", data_provider_for_unattained_values())
def test_unattained_disk(planar, zeta: complex):
    assert preimages(planar, zeta) == []
    with pytest.raises(DomainError):
        preimage_branch(planar, zeta, 0)
    with pytest.raises(DomainError):
        nearest_preimage(planar, zeta, 1.0)


def test_preimage_pairs(planar):
    zeta = np.array([3.0 + 4.0j, 1.0 + 0j, -2.0 + 0.5j])
    z, valid = preimage_pairs(planar, zeta)
    assert valid.tolist() == [True, False, True]
    assert np.isnan(z[1])
    assert z[0] == pytest.approx(preimages(planar, zeta[0])[0])
    first, second, _ = preimage_candidates(planar, zeta)
    assert second[2] == pytest.approx(-first[2])


def test_perturbation_validation():
    p = MapParams.planar(0.95, eps_perturb=0.01)
    report = check_perturbation(p)
    assert report.eps_bound > 0.01
    assert report.min_jacobian > 0
    assert 0 < report.max_deviation <= 0.01 + 1e-12
    with pytest.raises(ParameterError):
        check_perturbation(MapParams.planar(0.95, eps_perturb=0.9))
    with pytest.raises(ParameterError):
        check_perturbation(MapParams.planar(0.95, perturb_center_re=14.5))


@pytest.mark.parametrize("z", [5.2 + 0.3j, 4.6 - 0.4j, -5.1 + 0.2j, 5.0 + 0j])
def test_perturbed_preimages(z: complex):
    p = MapParams.planar(0.95, eps_perturb=0.01)
    zeta = eval_map(p, z)
    assert min(abs(candidate - z) for candidate in preimages(p, zeta)) < 1e-9
    first, second, valid = preimage_candidates(p, np.array([zeta]))
    assert valid[0]
    assert min(abs(first[0] - z), abs(second[0] - z)) < 1e-9


def test_torus_and_limit_maps(planar):
    assert eval_torus_map(planar, 2j) == pytest.approx(1.95j)
    assert eval_limit(2.0) == pytest.approx(3.0)
    assert eval_limit(-2.0) == pytest.approx(3.0)
    assert limit_jacobian(0.5 + 2j) == 2.0
    assert limit_preimages(3.0) == [pytest.approx(2.0), pytest.approx(-2.0)]
    assert limit_preimages(1.0) == []
    h = 1e-6
    v = 0.3 + 0.4j
    numeric = (eval_limit(1 + 1j + h * v) - eval_limit(1 + 1j - h * v)) / (2 * h)
    assert limit_derivative(1 + 1j, v) == pytest.approx(numeric, rel=1e-6)


def test_skew_maps(planar):
    image = eval_skew(planar, SkewPoint(2.0, 0.5))
    assert image.z == pytest.approx(eval_map(planar, 2.0))
    assert image.w == pytest.approx(0.5 + planar.beta * 4.0 * 0.5)
    assert eval_skew(planar, SkewPoint(2.0, 0.5, (1.0,))).v == pytest.approx((planar.beta * 4.0,))
    torus = eval_torus_skew(planar, SkewPoint(2j, 1.0))
    assert torus.z == pytest.approx(1.95j)
    assert torus.w == pytest.approx(planar.beta0 * 4.0)
    limit = eval_limit_skew(planar, SkewPoint(-2.0, 1.0))
    assert limit.z == pytest.approx(3.0)
    assert limit.w == pytest.approx(-0.5 - planar.beta1)
    assert fiber_factor_bound(planar) == pytest.approx(0.016)


def test_skew_tangent_maps(planar):
    z, w = 3.0 - 1.0j, 0.2 + 0.1j
    dz, dw = 0.5 + 0.25j, -0.3 + 0.6j
    h = 1e-6
    forward = eval_skew(planar, SkewPoint(z + h * dz, w + h * dw))
    backward = eval_skew(planar, SkewPoint(z - h * dz, w - h * dw))
    image_dz, image_dw = skew_tangent_map(planar, z, w, dz, dw)
    assert image_dz == pytest.approx((forward.z - backward.z) / (2 * h), rel=1e-6)
    assert complex(image_dw) == pytest.approx((forward.w - backward.w) / (2 * h), rel=1e-5, abs=1e-9)
    back_dz, back_dw = skew_tangent_pullback(planar, z, w, image_dz, image_dw)
    assert complex(back_dz) == pytest.approx(dz, abs=1e-10)
    assert complex(back_dw) == pytest.approx(dw, abs=1e-8)


def test_skew_derivative_matrix(planar):
    x = SkewPoint(3.0 - 1.0j, 0.2 + 0.1j)
    matrix = skew_derivative_matrix(planar, x)
    assert matrix.shape == (4, 4)
    assert np.array_equal(matrix[:2, :2], derivative_matrix(planar, x.z))
    assert np.allclose(matrix[:2, 2:], 0.0, atol=1e-6)


def test_limit_preserves_measure():
    report = limit_measure_check(n_samples=200000, seed=0)
    assert report.passed
    assert report.relative_error < 0.02
