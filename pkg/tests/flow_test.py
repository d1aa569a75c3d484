import math

import numpy as np
import pytest

from wildtorus.exceptions import NoCrossingError, ParameterError
from wildtorus.flow import (
    HYBRID_NOTE,
    SECTION_STABLE,
    SECTION_UNSTABLE,
    FlowState,
    PiecewiseField,
    SaddleZone,
    Trajectory,
    admissible_mu_scan,
    check_chart,
    chi,
    first_return_check,
    foliation_checks,
    from_torus,
    h0,
    h0_derivative,
    independence_margin,
    inward_pointing_check,
    integrate,
    passage_time_blowup,
    return_fixed_point,
    singularity_spectrum,
    smoothstep,
    stable_to_unstable_check,
    to_torus,
    unstable_to_stable_check,
)
from wildtorus.manifolds import skew_fixed_point
from wildtorus.params import FlowParams
from wildtorus.types import SkewPoint


def test_ramps():
    assert smoothstep(0.0) == 0.0
    assert smoothstep(0.5) == pytest.approx(0.5)
    assert smoothstep(2.0) == 1.0
    assert h0(0.25) == 0.0
    assert h0(0.5) == 0.0
    assert h0(1.0) == 1.0
    assert h0_derivative(1.0) == 6.0
    assert h0_derivative(1.5) == 0.0
    assert chi(0.2) == 0.0
    assert chi(0.8) == 1.0


def test_flow_state():
    state = FlowState(-2.0, 1 + 2j, 0.5j)
    assert FlowState.from_vector(state.as_vector()) == state
    assert state.skew() == SkewPoint(1 + 2j, 0.5j)
    with pytest.raises(ParameterError):
        FlowState.on_section(-2.0, SkewPoint(1 + 0j, 0j, (0.1,)))


def test_torus_chart():
    fp = FlowParams()
    theta, z, w = to_torus(fp, FlowState(-2.0, 4 + 0j, 0.5 + 0j))
    assert theta == 0.0
    assert z == pytest.approx(fp.a * 4)
    assert fp.a * fp.b == pytest.approx(0.25)
    back = from_torus(fp, theta, z, w)
    assert back.s == -2.0
    assert back.z == pytest.approx(4 + 0j)


def test_trajectory_join():
    first = Trajectory(np.array([0.0, 1.0]), np.array([-2.0, -1.0]), np.array([1 + 0j, 0.5 + 0j]), np.zeros(2, complex))
    second = Trajectory(np.array([0.0, 2.0]), np.array([-1.0, 0.0]), np.array([0.5 + 0j, 0.1 + 0j]), np.zeros(2, complex))
    joined = Trajectory.join([('pullback', first), ('saddle', second)])
    assert joined.t.tolist() == [0.0, 1.0, 3.0]
    assert joined.zone_times == {'pullback': 1.0, 'saddle': 2.0}
    assert joined.duration == 3.0
    assert joined.end == FlowState(0.0, 0.1 + 0j, 0j)
    assert len(list(joined.rows())) == 3


def test_isotopy_ends(flow_field):
    isotopy = flow_field.isotopy
    z, w = 3 + 4j, 0.2 - 0.1j
    assert isotopy.at(0.0, z, w) == (z, w)
    assert isotopy.at(1.0, z, w) == pytest.approx(isotopy.limit(z, w))
    assert isotopy.stage(0.1) == 'identity_to_G0'
    assert isotopy.stage(1.0) == 'G1_to_Gdag'
    assert independence_margin(isotopy) > 0


def test_zone_lookup(flow_field):
    assert flow_field.zone_for(-2.0).name == 'pullback'
    assert flow_field.zone_for(0.0).name == 'saddle'
    assert flow_field.zone_for(1.5).name == 'identity'
    assert flow_field.zone_for(3.0).name == 'isotopy'
    with pytest.raises(ParameterError):
        flow_field.zone_for(3.5)
    assert HYBRID_NOTE in flow_field.notes()


def test_chart_is_regular(flow_field):
    assert check_chart(SaddleZone(flow_field.params)) == 0


def test_sections_are_transversal(flow_field):
    assert SECTION_UNSTABLE.transversality(flow_field, n=8) > 0
    assert SECTION_STABLE.transversality(flow_field, n=8) > 0


def test_integrate_arguments(flow_field):
    start = FlowState(-2.0, 1 + 0j, 0j)
    with pytest.raises(ParameterError):
        integrate(flow_field, start)
    with pytest.raises(ParameterError):
        integrate(flow_field, FlowState(1.0, 1 + 0j, 0j), until=0.0)


def test_integrate_to_level(flow_field):
    trajectory = integrate(flow_field, FlowState(-2.0, 1 + 0j, 0j), until=-1.0)
    assert trajectory.end.s == pytest.approx(-1.0)
    assert abs(trajectory.end.z) == pytest.approx(1.0 / flow_field.params.b, rel=1e-5)
    assert set(trajectory.zone_times) == {'pullback'}


def test_no_crossing_on_stable_manifold(flow_field):
    capped = PiecewiseField(flow_field.params.with_changes(time_cap=50), flow_field.amplitude, flow_field.isotopy)
    with pytest.raises(NoCrossingError) as error:
        integrate(capped, FlowState(-2.0, 0j, 0j), until=3.0)
    assert error.value.time_cap == 50


def test_singularity_spectrum(flow_field):
    report = singularity_spectrum(flow_field)
    assert report.passed
    assert len(report.eigenvalues) == 5


def test_unstable_to_stable_leg(flow_field):
    report = unstable_to_stable_check(flow_field, n=4)
    assert report.passed
    assert report.fitted_constant == pytest.approx(flow_field.base.beta0, rel=1e-3)
    assert len(report.comparisons) == 4


def test_stable_to_unstable_leg(flow_field):
    report = stable_to_unstable_check(flow_field, n=4)
    assert report.passed
    assert report.max_abs_err < 1e-6


def test_inward_pointing(flow_field):
    report = inward_pointing_check(flow_field, n=4)
    assert report.passed
    assert report.min_radial_margin > 0
    assert report.min_fiber_margin > 0
    assert math.isfinite(report.min_radial_margin)


def test_first_return(flow_field):
    constant = unstable_to_stable_check(flow_field, n=4).fitted_constant
    report = first_return_check(flow_field, n=2, constant=constant)
    assert report.leg == 'sigma_u_to_sigma_u'
    assert report.fitted_constant == constant
    assert len(report.comparisons) == 2
    assert report.passed
    assert HYBRID_NOTE in report.notes


def test_return_fixed_point(flow_field):
    expected = skew_fixed_point(flow_field.base)
    found = return_fixed_point(flow_field)
    assert found.point.z == pytest.approx(expected.z, abs=1e-3)
    assert found.residual <= 1e-8 * (1.0 + abs(found.point.z))


def test_foliation(flow_field):
    report = foliation_checks(flow_field, n=1, returns=1)
    assert report.samples == 1
    assert report.max_leaf_error < 1e-4
    assert report.min_separation > 0
    assert report.min_base_contraction > 0
    assert report.violations in (0, 1)


def test_passage_time_blowup(flow_field):
    report = passage_time_blowup(flow_field, radii=(1e-4, 1e-6), n=4)
    assert report.radii == [1e-4, 1e-6]
    assert report.times[0] > report.reference_median
    assert report.times[1] > report.times[0]
    assert report.violations == sum(t <= report.factor * report.reference_median for t in report.times)


def test_admissible_mu_scan():
    report = admissible_mu_scan(FlowParams(), ratios=(1.0, 0.95), n=2)
    assert report.ratios == [0.95, 1.0]
    assert 0.95 in report.passed_ratios
    assert set(report.passed_ratios) <= set(report.ratios)
    if report.mu0 is not None:
        assert all(r in report.passed_ratios for r in report.ratios if r >= report.mu0)
    assert report.violations == int(report.mu0 is None)
