"""
Shooting computation of the very singular self-similar profile of fast
diffusion with gradient absorption, with the diagnostics that verify it.
"""

import importlib.metadata

from vssprofile.params import (
    ConstantOutOfRange,
    DerivedConstants,
    ExponentConfig,
    InvalidParameter,
    WindowViolation,
    validate,
)
from vssprofile.shooter import IntegratorSettings, Profile, Termination, integrate

try:
    __version__ = importlib.metadata.version("vssprofile")
except importlib.metadata.PackageNotFoundError:
    __version__ = "0.0.0-dev"

__all__ = [
    "ConstantOutOfRange",
    "DerivedConstants",
    "ExponentConfig",
    "IntegratorSettings",
    "InvalidParameter",
    "Profile",
    "Termination",
    "WindowViolation",
    "integrate",
    "validate",
]
