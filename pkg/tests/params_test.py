from typing import Any, Dict

import pytest
from pydantic import ValidationError

from wildtorus.exceptions import ParameterError
from wildtorus.params import FlowParams, MapParams, make_flow_params, make_map_params, params_summary

from tests.providers.params import data_provider_for_invalid_flow_params, data_provider_for_invalid_map_params


def test_defaults():
    p = MapParams()
    assert p.lam == 0.95
    assert p.sigma == 1.0
    assert p.mu == 0.95
    assert p.eta == 2.0
    assert p.beta0 == 1e-4
    assert p.beta1 == 0.1
    assert not p.is_planar
    assert p.kappa == pytest.approx(0.95)
    assert p.fiber_exponent == pytest.approx(2.0)
    assert p.beta == pytest.approx(1e-5)
    assert p.radius == pytest.approx(40.0)
    assert p.unattained_radius == pytest.approx(0.05)
    assert p.saddle_guess == pytest.approx(21.0)
    assert p.perturb_center == 5 + 0j


def test_lambda_alias():
    assert make_map_params(**{'lambda': 0.9}).lam == 0.9
    assert make_map_params(lam=0.9).lam == 0.9


def test_presets():
    p = MapParams.planar(0.9)
    assert p.is_planar
    assert p.lam == 0.9
    assert p.kappa == 1.0
    assert MapParams.hyperbolic().lam == 0.999
    assert MapParams.tangency().lam == 0.999
    assert MapParams.tangency(lam=0.99).lam == 0.99
    assert MapParams.planar(0.95, sigma=2.0, eta=3.0).mu == 2.0


def test_frozen():
    p = MapParams()
    with pytest.raises(ValidationError):
        p.lam = 0.5


def test_with_changes():
    p = MapParams.planar(0.95)
    q = p.with_changes(beta0=1e-3)
    assert q.beta0 == 1e-3
    assert q.lam == p.lam
    assert p.beta0 == 1e-4
    with pytest.raises(ParameterError):
        p.with_changes(mu=2.0)


@pytest.mark.parametrize("kwargs", data_provider_for_invalid_map_params())
def test_invalid_map_params(kwargs: Dict[str, Any]):
    with pytest.raises(ParameterError):
        make_map_params(**kwargs)
    with pytest.raises(ValidationError):
        MapParams(**kwargs)


@pytest.mark.parametrize("kwargs", data_provider_for_invalid_flow_params())
def test_invalid_flow_params(kwargs: Dict[str, Any]):
    with pytest.raises(ParameterError):
        make_flow_params(**kwargs)


def test_parameter_error_is_value_error():
    with pytest.raises(ValueError):
        make_map_params(lam=2.0)


def test_flow_params():
    fp = FlowParams()
    assert fp.b == pytest.approx(80.0)
    assert fp.a == pytest.approx(0.05 / 16.0)
    assert fp.a * fp.b == pytest.approx(0.25)
    assert fp.singular_eigenvalues == (-0.95, 1.0, 1.0, -2.0, -2.0)
    assert fp.method == 'DOP853'
    assert fp.with_changes(time_cap=50.0).time_cap == 50.0


def test_params_summary():
    summary = params_summary(MapParams.planar(0.95))
    assert summary['lambda'] == 0.95
    assert summary['mu'] == summary['sigma'] == 1.0
    assert summary['radius'] == pytest.approx(40.0)
    assert set(summary) >= {'eta', 'beta0', 'beta1', 'eps_perturb', 'perturb_radius'}
