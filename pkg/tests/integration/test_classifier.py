"""
Tests for labelling orbits, seeding and bisecting the critical bracket and
sweeping parameter grids.
"""
import logging

import numpy as np
import pytest

from vssprofile.classifier import (
    BracketError,
    ClassLabel,
    Label,
    ResolutionFloor,
    SweepItem,
    bisect,
    classify,
    interval_pattern,
    interval_structure_ok,
    sweep,
)
from vssprofile.params import InvalidParameter, validate
from vssprofile.shooter import Termination

logger = logging.getLogger("vss-tests")


def test_classify_extinct_orbit(settings, consts):
    """Test that an orbit reaching f = 0 is labelled A with its witnesses."""
    label = classify(1e-2, settings, consts)
    logger.info(f"Label: {label.to_dict()}")

    assert label.kind == Label.A, "small a should be labelled A"
    assert label.R is not None, "A labels carry the extinction radius"
    assert label.w_max < float(consts.w_star), "A orbits stay below w*"
    assert label.wprime_sign_changes == 1, "A orbits change the sign of w' exactly once"
    assert label.to_dict()["label"] == "A", "to_dict should carry the label text"


def test_classify_crossing_orbit(settings, consts):
    """Test that an orbit crossing the plateau is labelled C."""
    label = classify(1e3, settings, consts)
    logger.info(f"Label: {label.to_dict()}")

    assert label.kind == Label.C, "large a should be labelled C"
    assert label.r_cross is not None, "C labels carry the crossing radius"
    assert label.wprime_sign_changes == 0, "w' should not change sign before the crossing"
    assert label.wprime_min > 0, "w' should be positive at every sample up to r_cross"
    assert label.without_profile().profile is None, "without_profile should drop the orbit"


def test_seed_bracket(seed, settings, consts):
    """Test that the seed endpoints are powers of two with the expected labels."""
    a_A, a_C = seed
    logger.info(f"Seed: [{a_A}, {a_C}]")

    assert a_A < a_C, "a_A should lie below a_C"
    assert np.log2(a_A) == int(np.log2(a_A)), "a_A should be a power of two"
    assert np.log2(a_C) == int(np.log2(a_C)), "a_C should be a power of two"
    assert classify(a_A, settings, consts).kind == Label.A, "a_A should be in A"
    assert classify(a_C, settings, consts).kind == Label.C, "a_C should be in C"


def test_bisect_converges(bracket):
    """Test the width, iteration count and shrinking history of the bracket."""
    logger.info(f"Bracket: {bracket.to_dict()}")

    assert bracket.relative_width <= 1e-9, "bracket should reach the target width"
    assert bracket.iterations <= 60, "bisection should converge within 60 iterations"
    widths = [hi - lo for lo, hi in bracket.history]
    assert all(b < a for a, b in zip(widths, widths[1:])), "every iteration should shrink the bracket"
    assert bracket.a_lo < bracket.midpoint < bracket.a_hi, "midpoint should lie inside the bracket"


def test_converged_midpoint_is_undetermined(bracket, settings, consts):
    """Test that the converged midpoint rides the plateau to the horizon."""
    assert bracket.midpoint_profile.termination == Termination.HORIZON_REACHED, "midpoint should reach R_max"

    label = classify(bracket.midpoint, settings, consts)
    logger.info(f"Midpoint label: {label.to_dict()}")
    assert label.kind == Label.UNDETERMINED, "midpoint should be neither A nor C"
    assert label.w_at_horizon == pytest.approx(float(consts.w_star), rel=0.05), "w should sit near w* at the horizon"


def test_bisect_consistent_across_widths(seed, bracket, settings, consts):
    """Test that a coarser bisection agrees with the fine bracket."""
    a_A, a_C = seed
    coarse = bisect(a_A, a_C, 1e-6, settings, consts)
    logger.info(f"Coarse a_lo {coarse.a_lo}, fine a_lo {bracket.a_lo}")

    assert float(coarse.a_lo) == pytest.approx(float(bracket.a_lo), rel=1e-6), "a_lo should agree to 1e-6"
    assert coarse.iterations < bracket.iterations, "the coarse bracket should need fewer iterations"


def test_bisect_stops_at_double_resolution(bracket, settings, reference_config):
    """Test that extended bisection refuses midpoints that round onto an endpoint."""
    if np.finfo(np.longdouble).eps >= np.finfo(np.float64).eps:
        pytest.skip("long double is no wider than double on this platform")
    extended = validate(reference_config, extended=True)
    lo = float(bracket.a_lo)
    hi = lo + 4 * float(np.spacing(lo))

    with pytest.raises(ResolutionFloor) as excinfo:
        bisect(lo, hi, 1e-30, settings, extended, check_endpoints=False)
    logger.info(f"Stopped: {excinfo.value}")
    assert "double precision" in str(excinfo.value), "message should name the double-precision floor"
    assert excinfo.value.iterations == 2, "two representable midpoints fit between the endpoints"


def test_bisect_rejects_swapped_endpoints(seed, settings, consts):
    """Test that misclassified endpoints raise BracketError."""
    a_A, a_C = seed
    with pytest.raises(BracketError):
        bisect(a_C, a_A * 0.5, 1e-3, settings, consts)


def test_sweep_structure(settings, consts):
    """Test that a log sweep reads A...A [U] C...C with the label witnesses."""
    items = sweep(np.logspace(-3, 3, 61), settings, consts)
    pattern = interval_pattern(items)
    logger.info(f"Sweep pattern: {pattern}")

    assert len(items) == 61, "every grid point should produce an item"
    assert all(item.error is None for item in items), "no sweep run should fail"
    assert interval_structure_ok(items), f"labels should not interleave: {pattern}"
    assert pattern.startswith("A") and pattern.endswith("C"), "sweep should span from A to C"
    for item in items:
        if item.label.kind == Label.A:
            assert item.label.wprime_sign_changes == 1, f"A orbit a={item.a} should have one w' sign change"


def test_sweep_parallel_matches_serial(settings, consts):
    """Test that worker processes change nothing but speed."""
    grid = np.logspace(-2, 2, 9)
    serial = sweep(grid, settings, consts, jobs=1)
    parallel = sweep(grid, settings, consts, jobs=2)
    assert [i.a for i in serial] == [i.a for i in parallel], "order should follow the input"
    assert [i.label for i in serial] == [i.label for i in parallel], "labels should be identical"


def test_sweep_rejects_non_positive(settings, consts):
    """Test that a non-positive parameter is refused up front."""
    with pytest.raises(InvalidParameter):
        sweep([1.0, -1.0], settings, consts)


def test_interval_structure_detects_interleaving():
    """Test the pattern helpers on hand-built sweep items."""

    def item(a, kind):
        return SweepItem(a=a, label=ClassLabel(a=a, kind=kind))

    ordered = [item(1.0, Label.A), item(2.0, Label.UNDETERMINED), item(3.0, Label.C)]
    mixed = [item(1.0, Label.A), item(2.0, Label.C), item(3.0, Label.A)]

    assert interval_pattern(ordered) == "A U C", "pattern should compress runs"
    assert interval_structure_ok(ordered), "A U C is a valid structure"
    assert not interval_structure_ok(mixed), "A C A interleaves"
    assert interval_pattern([SweepItem(a=1.0, error="boom")]) == "", "failed items are skipped"
