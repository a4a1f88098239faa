"""
Tests for the a-derivative of profiles: series start, finite-difference
agreement, monotonicity in a and the linearized operator.
"""
import logging

import numpy as np
import pytest

from vssprofile.params import InvalidParameter
from vssprofile.shooter import Termination, series_eval
from vssprofile.variational import (
    BaseProfileTerminated,
    finite_difference_check,
    gap_series,
    integrate_variational,
    linearized_residual,
    monotonicity_check,
    operator_samples,
    variational_series,
)

logger = logging.getLogger("vss-tests")


@pytest.fixture(scope="module")
def side_parameters(bracket):
    """One parameter below and one above the critical bracket."""
    return {"A": float(bracket.a_lo) / 2, "C": 2 * float(bracket.a_hi)}


@pytest.fixture(scope="module")
def variational_runs(side_parameters, settings, consts):
    """Variational integrations on both sides of the bracket, up to r = 1e3."""
    run = settings.with_horizon(min(settings.R_max, 1e3))
    runs = {name: integrate_variational(a, run, consts) for name, a in side_parameters.items()}
    for name, vp in runs.items():
        logger.info(f"{name}: a={vp.a} ended {vp.base.termination} at r={vp.base.r_end}")
    return runs


def test_series_start(consts):
    """Test fa(0) = 1 and fa'(0) = 0."""
    fa, fa_prime = variational_series(0.8, 0.0, consts)
    assert fa == 1.0, "fa should start at 1"
    assert fa_prime == 0.0, "fa' should vanish at the origin"


def test_series_matches_difference_quotient(consts):
    """Test the a-derivative of the series against a difference quotient of series_eval."""
    a, h, r = 1.0, 1e-6, 1e-2
    upper, _ = series_eval(a + h, r, consts)
    lower, _ = series_eval(a - h, r, consts)
    fa, _ = variational_series(a, r, consts)
    assert float(fa) == pytest.approx(float(upper - lower) / (2 * h), rel=1e-8), "series derivative should match"


def test_gap_series_positive(consts):
    """Test that the monotonicity gap starts positive."""
    gap = gap_series(1.0, np.array([1e-4, 1e-3, 1e-2]), consts)
    assert np.all(gap > 0), "gap should be positive near the origin"
    assert np.all(np.diff(gap) > 0), "gap should grow with r near the origin"


def test_rejects_non_positive(settings, consts):
    """Test that a must be positive."""
    with pytest.raises(InvalidParameter):
        integrate_variational(-1.0, settings, consts)


def test_base_profile_terminated(settings, consts):
    """Test that asking past the extinction radius raises BaseProfileTerminated."""
    with pytest.raises(BaseProfileTerminated) as excinfo:
        integrate_variational(1e-2, settings, consts, r_stop=1e3)
    logger.info(f"Terminated: {excinfo.value}")
    assert excinfo.value.R < 1e3, "error should carry the extinction radius"


def test_first_samples(variational_runs):
    """Test that the variational samples line up with the base orbit."""
    for name, vp in variational_runs.items():
        assert vp.fa[0] == 1.0, f"{name}: fa(0) should be 1"
        assert len(vp.fa) == len(vp.r), f"{name}: one fa per radius"
        assert vp.wa[0] == 0.0, f"{name}: wa(0) should be 0"


@pytest.mark.parametrize("side", ["A", "C"])
def test_finite_difference_agreement(side, side_parameters, settings, consts):
    """Test fa against central differences of the orbit."""
    tight = settings.model_copy(update={"rel_tol": 1e-12})
    report = finite_difference_check(side_parameters[side], tight, consts)
    logger.info(f"{side}: {report.model_dump()}")

    assert report.samples > 16, "comparison should use many radii"
    assert report.max_deviation <= 1e-3, f"{side}: fa should match the difference quotient"


@pytest.mark.parametrize("side", ["A", "C"])
def test_monotonicity(side, variational_runs, consts):
    """Test mu a wa > r w' and wa > 0 while w' > 0."""
    report = monotonicity_check(variational_runs[side], consts)
    logger.info(f"{side}: {report.model_dump()}")

    assert report.samples > 0, "some samples should be checked"
    assert report.gap_ok, f"{side}: gap should stay positive, first violation {report.first_violation}"
    assert report.positivity_ok, f"{side}: wa should stay positive"
    assert report.near_origin_coefficient == pytest.approx(0.6), "(2q-p)/(2-p) should be 0.6"
    assert report.ok, f"{side}: monotonicity should hold"


@pytest.mark.parametrize("side", ["A", "C"])
def test_linearized_operator(side, variational_runs, consts):
    """Test L_a(wa) = 0 and L_a(r w') against its closed form."""
    vp = variational_runs[side]
    report = linearized_residual(vp, consts)
    logger.info(f"{side}: {report.model_dump()}")

    assert report.max_wa_residual <= 1e-6, f"{side}: L_a(wa) should vanish"
    assert report.rwprime_negative, f"{side}: L_a(r w') should be negative"
    assert report.closed_form_samples > 0, f"{side}: the closed form should be compared on some samples"
    assert report.max_closed_form_deviation <= 1e-8, f"{side}: L_a(r w') should match its closed form"
    assert report.passed(), f"{side}: linearized checks should pass"


def test_operator_samples_shape(variational_runs, consts):
    """Test that operator samples cover the interior radii."""
    vp = variational_runs["A"]
    ops = operator_samples(vp, consts)
    inner = vp.base.interior()

    assert np.array_equal(ops.r, vp.r[inner]), "operator samples should use interior radii"
    assert ops.la_wa_normalized.shape == ops.r.shape, "one normalized residual per radius"
    assert vp.base.termination in (Termination.F_HIT_ZERO, Termination.HORIZON_REACHED), "run should end cleanly"
