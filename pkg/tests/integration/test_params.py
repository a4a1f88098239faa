"""
Tests for exponent window validation and the derived constants.
"""
import logging

import numpy as np
import pytest
from hypothesis import assume, given, settings as hypothesis_settings
from hypothesis import strategies as st
from pydantic import ValidationError

from vssprofile.params import (
    ConstantOutOfRange,
    ExponentConfig,
    WindowViolation,
    constant_invariants,
    expansion_coefficients,
    extinction_lower_bound,
    gradient_bound,
    plateau_cap,
    plateau_identity_gap,
    plateau_seed_bound,
    validate,
    window_violations,
)

logger = logging.getLogger("vss-tests")


@st.composite
def valid_configs(draw):
    """Exponent triples strictly inside the window, up to a relative margin of 1e-6 from its edges."""
    N = draw(st.integers(min_value=1, max_value=4))
    p_c = 2 * N / (N + 1)
    u = draw(st.floats(min_value=1e-6, max_value=1 - 1e-6))
    p = p_c + u * (2 - p_c)
    q_lo, q_hi = p / 2, p - N / (N + 1)
    v = draw(st.floats(min_value=1e-6, max_value=1 - 1e-6))
    config = ExponentConfig(N=N, p=p, q=q_lo + v * (q_hi - q_lo))
    assume(not window_violations(config))
    return config


def test_reference_constants(consts):
    """Test the closed-form values of the reference configuration."""
    logger.info("Checking reference constants")

    assert consts.alpha == 2.0, "alpha should be exactly 2"
    assert consts.beta == pytest.approx(4 / 3, rel=1e-15), "beta should be 4/3"
    assert consts.mu == 3.0, "mu should be exactly 3"
    assert consts.eta == pytest.approx(-0.6, rel=1e-15), "eta should be -0.6"
    assert consts.w_star == pytest.approx(3.0, rel=1e-14), "w* should be 3"
    assert consts.slow_exponent == pytest.approx(1.5, rel=1e-15), "slow exponent should be 1.5"
    assert consts.fast_exponent == 3.0, "fast exponent should be 3"
    assert consts.q_star == pytest.approx(1.0, rel=1e-15), "q* should be 1"
    assert consts.p_c == 1.0, "p_c should be 1"
    assert consts.uniq_denominator == pytest.approx(1.0, rel=1e-15), "p(N+1)-2N should be 1"
    assert consts.alpha_minus_beta_mu == pytest.approx(-2.0, rel=1e-15), "alpha - beta mu should be -1/(2-p)"


def test_expansion_coefficients(reference_config):
    """Test the series coefficients C1, C2, C3 at the reference configuration."""
    C1, C2, C3 = expansion_coefficients(reference_config)
    logger.info(f"C1={C1}, C2={C2}, C3={C3}")

    assert C1 == pytest.approx(1 / 3, rel=1e-15), "C1 should be (p-1)/p"
    assert C2 == pytest.approx(0.5 / (2.4 * 1.4), rel=1e-14), "C2 should be (p-1)/((p+q)(q+N(p-1)))"
    assert C3 == pytest.approx(1 / 6, rel=1e-14), "C3 should be (p-1)q/(2p^2(p+N(p-1))(2q-p))"


def test_window_violation_lists_every_bound():
    """Test that every violated inequality is reported, not just the first."""
    config = ExponentConfig(N=1, p=0.9, q=1.0)
    with pytest.raises(WindowViolation) as excinfo:
        validate(config)

    names = {v.name for v in excinfo.value.violations}
    logger.info(f"Violations: {names}")
    assert names == {"p > p_c", "q < q_star"}, "Both violated bounds should be listed"
    assert "p > p_c" in str(excinfo.value), "Message should name the violated bound"
    assert all(v.margin <= 0 for v in excinfo.value.violations), "Violations carry non-positive margins"


@pytest.mark.parametrize(
    "N, p, q, bound",
    [
        (1, 1.5, 0.7, "q > p/2"),
        (1, 1.5, 1.2, "q < q_star"),
        (2, 1.3, 0.7, "p > p_c"),
        (1, 2.0, 1.2, "p < 2"),
    ],
)
def test_single_bound_violations(N, p, q, bound):
    """Test each edge of the exponent window separately."""
    names = [v.name for v in window_violations(ExponentConfig(N=N, p=p, q=q))]
    logger.info(f"N={N} p={p} q={q}: {names}")
    assert bound in names, f"{bound} should be reported for N={N}, p={p}, q={q}"


def test_window_edges_are_open():
    """Test that the boundary values themselves are rejected."""
    assert window_violations(ExponentConfig(N=1, p=1.5, q=0.75)), "q = p/2 should be rejected"
    assert window_violations(ExponentConfig(N=1, p=1.5, q=1.0)), "q = q* should be rejected"
    assert not window_violations(ExponentConfig(N=2, p=1.6, q=0.9)), "second config should be valid"


def test_config_model_rejects_bad_dimension():
    """Test pydantic validation of the spatial dimension."""
    with pytest.raises(ValidationError):
        ExponentConfig(N=0, p=1.5, q=0.9)


@hypothesis_settings(max_examples=300, deadline=None)
@given(config=valid_configs())
def test_invariants_hold_for_random_configs(config):
    """Test the structural identities on random valid configurations, edges included."""
    try:
        consts = validate(config)
    except ConstantOutOfRange as e:
        # only w* overflowing double precision may be refused
        assert e.name == "w_star", f"{config} refused for {e.name}"
        assert e.log_value > e.log_limit, "refusal should mean the logarithm is beyond the limit"
        return
    assert np.isfinite(float(consts.w_star)), f"{config} has a non-finite w*"
    failed = [name for name, ok in constant_invariants(consts).items() if not ok]
    assert not failed, f"{config} fails {failed}"


def test_w_star_overflow_is_refused():
    """Test that a valid config whose w* exceeds double precision raises instead of returning inf."""
    config = ExponentConfig(N=4, p=1.99888, q=1.19506)
    assert not window_violations(config), "config should lie inside the window"

    with pytest.raises(ConstantOutOfRange) as excinfo:
        validate(config)
    logger.info(f"Refused: {excinfo.value}")
    assert excinfo.value.log_value > np.log(np.finfo(np.float64).max), "log w* should exceed the double range"
    assert "extended precision" in str(excinfo.value), "message should suggest a remedy"

    if np.finfo(np.longdouble).max > np.finfo(np.float64).max:
        extended = validate(config, extended=True)
        assert np.isfinite(extended.w_star), "w* should fit a long double"
        with pytest.raises(ConstantOutOfRange):
            extended.as_float()


def test_plateau_identity_near_critical_p():
    """Test the plateau identity where 1/(p-1) is large."""
    consts = validate(ExponentConfig(N=1, p=1.006409, q=0.50568))
    gap = plateau_identity_gap(consts)
    logger.info(f"Plateau identity gap near p_c: {gap}")
    assert gap <= 1e-12, "log-form identity should hold to rounding near p_c"
    assert constant_invariants(consts)["plateau identity"], "invariant should pass"


def test_plateau_identity(consts):
    """Test mu w* = (w*/(p(N+1)-2N))^{1/(p-1)} at the reference configuration."""
    gap = plateau_identity_gap(consts)
    logger.info(f"Plateau identity gap: {gap}")
    assert gap <= 1e-14, "plateau identity should hold to rounding"


def test_extended_precision(reference_config, consts):
    """Test that long double constants agree with the double ones."""
    extended = validate(reference_config, extended=True)

    assert extended.extended, "extended flag should be recorded"
    assert extended.dtype is np.longdouble, "extended constants use longdouble"
    assert isinstance(extended.alpha, np.longdouble), "alpha should be a longdouble"
    assert float(extended.alpha) == 2.0, "alpha should still be exactly 2"
    assert float(extended.w_star) == pytest.approx(float(consts.w_star), rel=1e-15), "w* should agree"
    assert float(extended.log_w_star) == pytest.approx(np.log(3.0), rel=1e-15), "log w* should be log 3"
    assert extended.as_float().dtype is np.float64, "as_float should drop to double"
    assert extended.to_dict()["extended"] is True, "to_dict should carry the flag"


def test_bounds(consts):
    """Test the gradient bound and the extinction bound derived from it."""
    a = 1.0
    bound = gradient_bound(a, consts)
    radius = extinction_lower_bound(a, consts)
    logger.info(f"gradient bound {bound}, extinction bound {radius}")

    assert bound == pytest.approx(2 ** (1 / 0.9), rel=1e-14), "gradient bound should be (alpha a)^{1/q}"
    assert radius == pytest.approx(a / bound, rel=1e-14), "extinction bound should be a over the gradient bound"


def test_plateau_cap(consts):
    """Test that the seed bound at the cap reaches twice the plateau value."""
    cap = plateau_cap(consts)
    _, w_low = plateau_seed_bound(cap, consts)
    logger.info(f"cap a={cap}, w bound {w_low}")

    assert cap > 0, "cap should be positive"
    assert w_low == pytest.approx(2 * float(consts.w_star), rel=1e-10), "bound should equal 2 w* at the cap"
