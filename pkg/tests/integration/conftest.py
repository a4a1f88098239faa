"""
Session-scoped fixtures shared by the vssprofile tests.

Bracketing the critical parameter and integrating the slow orbit are the
expensive steps; they run once per session.
"""
import logging

import pytest

from vssprofile.classifier import bisect, seed_bracket
from vssprofile.params import ExponentConfig, validate
from vssprofile.shooter import IntegratorSettings, integrate

logger = logging.getLogger("vss-tests")


@pytest.fixture(scope="session")
def reference_config():
    """The reference exponents N=1, p=1.5, q=0.9."""
    return ExponentConfig(N=1, p=1.5, q=0.9)


@pytest.fixture(scope="session")
def consts(reference_config):
    """Validated constants of the reference configuration."""
    return validate(reference_config)


@pytest.fixture(scope="session")
def second_consts():
    """Validated constants of the second configuration N=2, p=1.6, q=0.9."""
    return validate(ExponentConfig(N=2, p=1.6, q=0.9))


@pytest.fixture(scope="session")
def settings():
    """Default integrator settings."""
    return IntegratorSettings()


@pytest.fixture(scope="session")
def seed(settings, consts):
    """Powers of two a_A in A and a_C in C."""
    a_A, a_C = seed_bracket(settings, consts)
    logger.info(f"Seed bracket: [{a_A}, {a_C}]")
    return a_A, a_C


@pytest.fixture(scope="session")
def bracket(seed, settings, consts):
    """The critical bracket bisected to relative width 1e-9."""
    a_A, a_C = seed
    result = bisect(a_A, a_C, 1e-9, settings, consts)
    logger.info(f"Bracket: [{result.a_lo}, {result.a_hi}] after {result.iterations} iterations")
    return result


@pytest.fixture(scope="session")
def slow_orbit(bracket, settings, consts):
    """An orbit well above the bracket, integrated to a long horizon."""
    a = 4 * float(bracket.a_hi)
    run = settings.with_horizon(settings.R_max * 10)
    profile = integrate(a, run, consts, stop_on_plateau=False)
    logger.info(f"Slow orbit a={a} ended {profile.termination} at r={profile.r_end}")
    return profile
