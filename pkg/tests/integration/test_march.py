"""
Tests for the event-driven stepping engine on systems with known solutions.
"""
import logging
import math

import numpy as np
import pytest

from vssprofile._march import Event, MarchInterrupted, log_grid, march

logger = logging.getLogger("vss-tests")


def decay(r, y):
    """y' = -y."""
    return -y


def test_log_grid_is_global():
    """Test that grids over different ranges share their common points."""
    wide = log_grid(1e-3, 1e3, 8)
    narrow = log_grid(1e-1, 1e1, 8)
    logger.info(f"{len(wide)} and {len(narrow)} grid points")

    assert np.all(np.isin(narrow, wide)), "narrow grid should be a subset of the wide grid"
    assert wide[0] > 1e-3 and wide[-1] < 1e3, "grid should lie in the open interval"
    assert log_grid(2.0, 1.0, 8).size == 0, "empty range should give an empty grid"


def test_samples_match_exact_solution():
    """Test dense-output sampling against exp(-r)."""
    grid = np.array([0.5, 1.0, 2.0, 3.0])
    result = march(
        decay, 0.0, [1.0], 4.0, sample_radii=grid, rel_tol=1e-12, abs_tol=1e-14, max_steps=10_000
    )
    logger.info(f"{result.steps} steps, terminal {result.terminal}")

    assert result.terminal == "horizon", "run should end at the horizon"
    assert result.r_end == 4.0, "run should end exactly at r_max"
    assert result.r[0] == 0.0 and result.r[-1] == 4.0, "samples should include both ends"
    for r in grid:
        i = int(np.searchsorted(result.r, r))
        assert result.r[i] == r, f"r={r} should be sampled exactly"
        assert result.y[i, 0] == pytest.approx(math.exp(-r), rel=1e-10), f"y({r}) should be exp(-r)"


def test_terminal_event_is_located():
    """Test that a terminal event stops the march at its root."""
    threshold = Event("half", lambda r, y: float(y[0]) - 0.5)
    result = march(
        decay,
        0.0,
        [1.0],
        10.0,
        sample_radii=np.linspace(0.1, 9.9, 99),
        events=[threshold],
        rel_tol=1e-12,
        abs_tol=1e-14,
        max_steps=10_000,
    )
    logger.info(f"Terminated {result.terminal} at r={result.r_end}")

    assert result.terminal == "half", "the terminal event should end the run"
    assert result.r_end == pytest.approx(math.log(2), rel=1e-10), "root should be ln 2"
    assert np.all(result.r[:-1] < result.r_end), "no sample should lie past the root"


def test_non_terminal_event_recorded_once():
    """Test that a non-terminal event records its first crossing only."""
    oscillator = lambda r, y: np.array([y[1], -y[0]])  # noqa: E731
    crossing = Event("down", lambda r, y: float(y[0]), terminal=False, direction=-1)
    result = march(
        oscillator,
        0.0,
        [1.0, 0.0],
        10.0,
        sample_radii=np.empty(0),
        events=[crossing],
        rel_tol=1e-12,
        abs_tol=1e-14,
        max_steps=10_000,
    )
    logger.info(f"Events: {result.events}")

    assert result.terminal == "horizon", "non-terminal events should not stop the run"
    assert result.events["down"] == pytest.approx(math.pi / 2, rel=1e-9), "first downward zero is pi/2"


def test_step_budget():
    """Test that exhausting the step budget keeps the partial samples."""
    with pytest.raises(MarchInterrupted) as excinfo:
        march(decay, 0.0, [1.0], 1e6, sample_radii=np.empty(0), rel_tol=1e-12, abs_tol=1e-14, max_steps=3)

    assert excinfo.value.reason == "step_limit", "reason should be step_limit"
    assert excinfo.value.partial.steps == 3, "partial result should record the steps taken"
