"""
Tests for shooting from the origin: series start, integration, terminations
and the properties every orbit must have.
"""
import logging

import numpy as np
import pytest

from vssprofile.params import InvalidParameter, extinction_lower_bound
from vssprofile.shooter import (
    DomainError,
    IntegratorSettings,
    State,
    StepLimit,
    Termination,
    expansion_residual,
    fixed_step_reference,
    flux_to_slope,
    integrate,
    limit_deviation,
    limit_profile,
    profile_properties,
    rhs,
    series_eval,
    slope_to_flux,
)

logger = logging.getLogger("vss-tests")


def test_series_at_origin(consts):
    """Test f(0) = a and f'(0) = 0 from the series."""
    f, fprime = series_eval(2.5, 0.0, consts)
    assert f == 2.5, "series should start at a"
    assert fprime == 0.0, "series slope should vanish at the origin"


def test_series_leading_term(consts):
    """Test that close to the origin the series is dominated by its first correction."""
    a, r = 1.0, 1e-3
    f, _ = series_eval(a, r, consts)
    p = float(consts.p)
    leading = float(consts.C1) * (a * float(consts.alpha) / consts.N) ** (1 / (p - 1)) * r ** (p / (p - 1))
    assert float(a - f) == pytest.approx(leading, rel=1e-3), "a - f should follow C1 k^{1/(p-1)} r^{p/(p-1)}"


def test_flux_slope_inverse():
    """Test that the flux and slope transforms undo each other."""
    for slope in (-3.0, -1e-8, 0.0, 2.0):
        assert flux_to_slope(slope_to_flux(slope, 1.5), 1.5) == pytest.approx(slope, rel=1e-14, abs=1e-300)


def test_rhs_rejects_origin(consts):
    """Test that the right side is undefined at r = 0."""
    with pytest.raises(DomainError):
        rhs(0.0, State(r=0.0, f=1.0, F=0.0), consts)


def test_rhs_at_rest(consts):
    """Test (F=0, f=1, r=1) -> (0, alpha) at the reference configuration."""
    df, dF = rhs(1.0, State(r=1.0, f=1.0, F=0.0), consts)
    assert df == 0.0, "f' should vanish with the flux"
    assert dF == pytest.approx(2.0, rel=1e-15), "F' should reduce to alpha f"


def test_rhs_flux_slope_near_origin(second_consts):
    """Test F'(r) -> alpha a / N as r -> 0 along the series start."""
    a, r = 1.3, 1e-6
    f, fprime = series_eval(a, r, second_consts)
    state = State(r=r, f=float(f), F=slope_to_flux(float(fprime), float(second_consts.p)))
    _, dF = rhs(r, state, second_consts)
    expected = float(second_consts.alpha) * a / second_consts.N
    logger.info(f"F'({r}) = {dF}, alpha a / N = {expected}")
    assert dF == pytest.approx(expected, rel=1e-6), "F' at the origin should be alpha a / N"
    assert state.fprime(second_consts) == pytest.approx(float(fprime), rel=1e-12), "state slope should match"


@pytest.mark.parametrize(
    "r, f, F",
    [(0.5, 1.2, 0.3), (2.0, 0.4, 1.7), (10.0, 1e-3, 2e-4), (0.1, 0.9, -0.25), (3.0, 2.0, -1.1)],
)
def test_rhs_matches_slope_form(r, f, F, second_consts):
    """Test rhs against the equation written directly in terms of f'."""
    c = second_consts
    p, q = float(c.p), float(c.q)
    slope = -np.sign(F) * np.abs(F) ** (1 / (p - 1))
    expected_dF = (
        -(c.N - 1) / r * F
        + float(c.alpha) * f
        + float(c.beta) * r * slope
        - np.abs(slope) ** q
    )
    df, dF = rhs(r, State(r=r, f=f, F=F), c)
    assert df == pytest.approx(slope, rel=1e-13), f"df/dr should be f' at F={F}"
    assert dF == pytest.approx(expected_dF, rel=1e-12, abs=1e-15), f"dF/dr should match the slope form at F={F}"


def test_integrate_rejects_non_positive(settings, consts):
    """Test that a must be positive."""
    for a in (0.0, -1.0):
        with pytest.raises(InvalidParameter):
            integrate(a, settings, consts)


def test_first_sample_row(settings, consts):
    """Test the exact first row (r, f, f', w, w', E) for a = 1."""
    profile = integrate(1.0, settings, consts)
    row = profile.samples[0]
    logger.info(f"Row 0: {row}, termination {profile.termination}")

    assert row.tolist() == [0.0, 1.0, 0.0, 0.0, 0.0, 1.0], "row 0 should be 0,1,0,0,0,1"
    assert np.all(np.diff(profile.r) > 0), "sample radii should increase strictly"
    assert not profile.f.flags.writeable, "sample arrays should be read-only"


def test_integration_is_deterministic(settings, consts):
    """Test that repeated runs give identical samples."""
    first = integrate(0.7, settings, consts)
    second = integrate(0.7, settings, consts)
    assert np.array_equal(first.samples, second.samples), "runs should be bit-identical"


def test_small_a_goes_extinct(settings, consts):
    """Test that a small shooting parameter gives a finite extinction radius."""
    a = 1e-2
    profile = integrate(a, settings, consts)
    logger.info(f"a={a}: {profile.termination} at R={profile.R}")

    assert profile.termination == Termination.F_HIT_ZERO, "small a should reach f = 0"
    assert profile.R == profile.r_end, "R should be the terminal radius"
    assert profile.R >= extinction_lower_bound(a, consts), "R should respect the gradient bound"
    assert profile.R1 is not None and profile.R1 < profile.R, "w' should change sign before extinction"


def test_large_a_crosses_plateau(settings, consts):
    """Test that a large shooting parameter crosses (1 + margin) w*."""
    profile = integrate(1e3, settings, consts)
    logger.info(f"a=1e3: {profile.termination} at r={profile.r_cross}")

    assert profile.termination == Termination.W_CROSSED_PLATEAU, "large a should cross the plateau"
    threshold = (1 + settings.plateau_margin) * float(consts.w_star)
    assert profile.w[-1] == pytest.approx(threshold, rel=1e-8), "crossing should be located on the threshold"


@pytest.mark.parametrize("a", [1e-2, 0.3, 1.0, 10.0, 1e3])
def test_profile_properties(a, settings, consts):
    """Test sign structure, gradient bound and energy decrease."""
    profile = integrate(a, settings, consts)
    props = profile_properties(profile, consts, settings.abs_tol)
    logger.info(f"a={a}: {props.model_dump()}")

    assert props.sign_ok, f"f > 0 > f' should hold for a={a}"
    assert props.gradient_ok, f"|f'| should stay below (alpha a)^(1/q) for a={a}"
    assert props.energy_ok, f"E should not increase for a={a}"
    assert props.energy_rate_max < 0, f"dE/dr should be negative at every interior sample for a={a}"


def test_step_limit_carries_partial_profile(consts):
    """Test that a tiny step budget raises StepLimit with the partial orbit."""
    tight = IntegratorSettings(max_steps=5)
    with pytest.raises(StepLimit) as excinfo:
        integrate(1.0, tight, consts)

    partial = excinfo.value.profile
    assert partial.termination == Termination.STEP_LIMIT, "partial profile should be marked StepLimit"
    assert partial.r[0] == 0.0, "partial profile should include the series head"


def test_expansion_order(settings, consts):
    """Test that the series remainder vanishes at the predicted rate."""
    radii = [3e-2, 1e-2, 3e-3]
    tight = settings.model_copy(update={"r_switch": 1e-6, "rel_tol": 1e-13, "abs_tol": 1e-20})
    res = expansion_residual(1.0, radii, tight, consts)
    logger.info(f"f' residuals {res.fprime_residual}")

    by_radius = dict(zip(res.radii, res.fprime_residual))
    assert by_radius[3e-2] > by_radius[1e-2] > by_radius[3e-3], "residual should shrink towards the origin"
    ratio = by_radius[3e-2] / by_radius[3e-3]
    assert ratio >= 0.8 * res.predicted_decade_ratio, f"decade ratio {ratio} below the predicted order"


def test_oracle_equivalence(settings, consts):
    """Test the adaptive integrator against fixed-step RK4."""
    checkpoints = [1e-2, 0.1, 0.3]
    profile = integrate(1.0, settings, consts, stop_on_plateau=False, sample_at=checkpoints)
    reference = fixed_step_reference(1.0, profile.r_switch, checkpoints[-1], 1e-6, consts, checkpoints)

    for r in checkpoints:
        i = profile.index_of(r)
        f_ref, fp_ref = reference[r]
        logger.info(f"r={r}: f={profile.f[i]} vs {f_ref}")
        assert profile.f[i] == pytest.approx(f_ref, rel=1e-6), f"f should match the oracle at r={r}"
        assert profile.fprime[i] == pytest.approx(fp_ref, rel=1e-6), f"f' should match the oracle at r={r}"


def test_limit_problem(settings, consts):
    """Test that small-a orbits follow the rescaled limit profile."""
    limit = limit_profile(settings, consts)
    small = integrate(1e-3, settings, consts)
    deviation = limit_deviation(small, limit, consts)
    logger.info(f"S0={limit.R}, deviation {deviation}")

    assert limit.termination == Termination.F_HIT_ZERO, "limit profile should vanish at S0"
    assert limit.fprime[-1] < 0, "h'(S0) should be negative"
    assert deviation < 0.05, "rescaled small-a orbit should stay within 5% of h"


@pytest.mark.parametrize("a", [10.0, 100.0])
def test_gradient_ratio_through_plateau(a, settings, consts):
    """Test sup |f'|/f^{2/p} on orbits run past the plateau to the horizon."""
    profile = integrate(a, settings, consts, stop_on_plateau=False)
    props = profile_properties(profile, consts, settings.abs_tol)
    logger.info(f"a={a}: ratio sup {props.gradient_ratio_sup}, at r=1 {props.gradient_ratio_at_one}")

    assert profile.termination == Termination.HORIZON_REACHED, "orbit should reach the horizon"
    assert props.gradient_ratio_sup is not None, "the ratio should be evaluated"
    assert props.gradient_ratio_ok, "sup over r should stay within ten times the value at r=1"
    assert props.ok, f"all orbit properties should hold for a={a}"


def test_gradient_ratio_on_slow_orbit(slow_orbit, consts, settings):
    """Test the gradient ratio bound on the long slow orbit."""
    props = profile_properties(slow_orbit, consts, settings.abs_tol)
    assert props.gradient_ratio_ok, "slow orbit should satisfy the gradient ratio bound"
    assert props.energy_rate_max < 0, "energy should dissipate along the slow orbit"
