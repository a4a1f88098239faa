# vssprofile/params.py
"""
Exponent window validation and the closed-form constants of the profile
equation

    (|f'|^{p-2} f')' + (N-1)/r |f'|^{p-2} f' + alpha f + beta r f' - |f'|^q = 0.

Everything downstream works from a :class:`DerivedConstants`, obtained only
through :func:`validate`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, List, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

Scalar = Union[float, np.floating]


class ExponentConfig(BaseModel):
    """The triple (N, p, q) that fixes one profile equation."""

    model_config = ConfigDict(frozen=True)

    N: int = Field(1, ge=1, description="Spatial dimension")
    p: float = Field(1.5, description="Diffusion exponent")
    q: float = Field(0.9, description="Absorption exponent")


@dataclass(frozen=True)
class BoundViolation:
    """One failed inequality of the exponent window."""

    name: str
    value: float
    bound: float
    margin: float

    def __str__(self) -> str:
        return (
            f"{self.name} (value={self.value:.6g}, bound={self.bound:.6g}, "
            f"margin={self.margin:.3g})"
        )


class WindowViolation(ValueError):
    """Raised when (N, p, q) lies outside the admissible exponent window."""

    def __init__(self, config: ExponentConfig, violations: List[BoundViolation]):
        self.config = config
        self.violations = violations
        listed = "; ".join(str(v) for v in violations)
        super().__init__(
            f"N={config.N}, p={config.p}, q={config.q} violates {listed}"
        )


class ConstantOutOfRange(ValueError):
    """Raised when a derived constant lies outside the range of the working precision."""

    def __init__(self, config: ExponentConfig, name: str, log_value: float, log_limit: float):
        self.config = config
        self.name = name
        self.log_value = log_value
        self.log_limit = log_limit
        super().__init__(
            f"N={config.N}, p={config.p}, q={config.q}: {name} = exp({log_value:.6g}) "
            f"is beyond the representable limit exp({log_limit:.6g}); "
            "move p away from the window edge or use extended precision"
        )


class InvalidParameter(ValueError):
    """A numeric input such as the shooting parameter is outside its domain."""


@dataclass(frozen=True)
class DerivedConstants:
    """Closed-form quantities derived from a validated ExponentConfig.

    Values are numpy scalars: float64 normally, longdouble when ``extended``
    is set. Use :meth:`as_float` before handing them to code that only works
    in double precision.
    """

    config: ExponentConfig
    N: int
    p: Scalar
    q: Scalar
    alpha: Scalar
    beta: Scalar
    mu: Scalar
    eta: Scalar
    w_star: Scalar
    q_star: Scalar
    p_c: Scalar
    slow_exponent: Scalar
    fast_exponent: Scalar
    alpha_minus_beta_mu: Scalar
    C1: Scalar
    C2: Scalar
    C3: Scalar
    uniq_denominator: Scalar
    log_w_star: Scalar
    extended: bool = field(default=False)

    @property
    def dtype(self) -> type:
        return np.longdouble if self.extended else np.float64

    @property
    def eps(self) -> float:
        return float(np.finfo(self.dtype).eps)

    def as_float(self) -> "DerivedConstants":
        """Return a float64 copy (identity when already in double precision)."""
        if not self.extended:
            return self
        if not np.isfinite(np.float64(self.w_star)):
            raise ConstantOutOfRange(
                self.config, "w_star", float(self.log_w_star), float(np.log(np.finfo(np.float64).max))
            )
        values = {
            name: np.float64(getattr(self, name))
            for name in _NUMERIC_FIELDS
        }
        return replace(self, extended=False, **values)

    def to_dict(self) -> Dict[str, Any]:
        """Plain-float mapping for JSON reports."""
        data = {name: float(getattr(self, name)) for name in _NUMERIC_FIELDS}
        data["N"] = self.N
        data["extended"] = self.extended
        return data


_NUMERIC_FIELDS = (
    "p",
    "q",
    "alpha",
    "beta",
    "mu",
    "eta",
    "w_star",
    "q_star",
    "p_c",
    "slow_exponent",
    "fast_exponent",
    "alpha_minus_beta_mu",
    "C1",
    "C2",
    "C3",
    "uniq_denominator",
    "log_w_star",
)


def window_violations(config: ExponentConfig) -> List[BoundViolation]:
    """Every strict inequality of the exponent window that ``config`` fails."""
    N, p, q = config.N, config.p, config.q
    p_c = 2.0 * N / (N + 1)
    q_star = p - N / (N + 1)
    checks = [
        ("p > p_c", p, p_c, p - p_c),
        ("p < 2", p, 2.0, 2.0 - p),
        ("q > p/2", q, p / 2.0, q - p / 2.0),
        ("q < q_star", q, q_star, q_star - q),
    ]
    return [
        BoundViolation(name=name, value=value, bound=bound, margin=margin)
        for name, value, bound, margin in checks
        if not margin > 0.0
    ]


def expansion_coefficients(config: ExponentConfig) -> Tuple[float, float, float]:
    """Coefficients C1, C2, C3 of the series of f near the origin."""
    consts = validate(config)
    return float(consts.C1), float(consts.C2), float(consts.C3)


def _decimal(value: float) -> Fraction:
    """The decimal number a float was written as, e.g. 0.9 -> 9/10."""
    return Fraction(repr(float(value)))


def _rational_constants(config: ExponentConfig) -> Dict[str, Fraction]:
    n = Fraction(config.N)
    p = _decimal(config.p)
    q = _decimal(config.q)
    alpha = (p - q) / (2 * q - p)
    beta = (q - p + 1) / (2 * q - p)
    mu = p / (2 - p)
    return {
        "p": p,
        "q": q,
        "alpha": alpha,
        "beta": beta,
        "mu": mu,
        "eta": -(2 * q - p) / (2 - p),
        "q_star": p - n / (n + 1),
        "p_c": 2 * n / (n + 1),
        "slow_exponent": alpha / beta,
        "fast_exponent": mu,
        "alpha_minus_beta_mu": alpha - beta * mu,
        "C1": (p - 1) / p,
        "C2": (p - 1) / ((p + q) * (q + n * (p - 1))),
        "C3": (p - 1) * q / (2 * p**2 * (p + n * (p - 1)) * (2 * q - p)),
        "uniq_denominator": p * (n + 1) - 2 * n,
    }


def validate(config: ExponentConfig, extended: bool = False) -> DerivedConstants:
    """Check the exponent window and compute all derived constants.

    Rational constants are evaluated exactly from the decimal values of p
    and q and rounded once, so that e.g. alpha is exactly 2 for p=1.5,
    q=0.9.

    Args:
        config: The exponent triple.
        extended: Evaluate in ``numpy.longdouble`` instead of float64.

    Raises:
        WindowViolation: listing every violated bound, not just the first.
        ConstantOutOfRange: w* is not representable at the working precision.
    """
    violations = window_violations(config)
    if violations:
        raise WindowViolation(config, violations)

    dt = np.longdouble if extended else np.float64
    exact = _rational_constants(config)
    if extended:
        values = {name: _value(v, dt) for name, v in exact.items()}
    else:
        values = {name: dt(float(v)) for name, v in exact.items()}
    log_w_star = _log_w_star(exact, config.N, dt)
    info = np.finfo(dt)
    log_max, log_tiny = np.log(info.max), np.log(info.tiny)
    if not log_tiny < log_w_star < log_max:
        limit = log_max if log_w_star > 0 else log_tiny
        raise ConstantOutOfRange(config, "w_star", float(log_w_star), float(limit))
    w_star = np.exp(log_w_star)

    consts = DerivedConstants(
        config=config,
        N=config.N,
        w_star=w_star,
        log_w_star=log_w_star,
        extended=extended,
        **values,
    )
    logger.debug(
        "validated N=%d p=%s q=%s: alpha=%s beta=%s mu=%s w*=%s",
        config.N,
        config.p,
        config.q,
        float(consts.alpha),
        float(consts.beta),
        float(consts.mu),
        float(w_star),
    )
    return consts


def _value(value: Fraction, dt: type):
    return dt(value.numerator) / dt(value.denominator)


def _log(value: Fraction, dt: type):
    return np.log(_value(value, dt))


def _log_w_star(exact: Dict[str, Fraction], N: int, dt: type):
    """log w* = [(p-1) log mu + log(mu-N) - log(beta mu - alpha)] / (2-p).

    w* overflows double precision as p approaches 2; its logarithm stays
    moderate.
    """
    p, mu = exact["p"], exact["mu"]
    numerator = (
        _value(p - 1, dt) * _log(mu, dt)
        + _log(mu - N, dt)
        - _log(-exact["alpha_minus_beta_mu"], dt)
    )
    return numerator / _value(2 - p, dt)


def constant_invariants(consts: DerivedConstants) -> Dict[str, bool]:
    """The structural inequalities every valid configuration satisfies."""
    rel = 1e-12
    inverse = 1 / (2 - consts.p)
    beta_mu = consts.beta * consts.mu
    # alpha and beta*mu both grow like 1/(2q-p) and cancel
    scale = max(abs(consts.alpha), abs(beta_mu), abs(inverse))
    return {
        "mu > N": bool(consts.mu > consts.N),
        "eta < 0": bool(consts.eta < 0),
        "alpha - beta*mu = -1/(2-p)": bool(
            abs(consts.alpha - beta_mu + inverse) <= rel * scale
        ),
        "alpha - N*beta > 0": bool(consts.alpha - consts.N * consts.beta > 0),
        "slow < fast": bool(consts.slow_exponent < consts.fast_exponent),
        "uniq_denominator > 0": bool(consts.uniq_denominator > 0),
        "plateau identity": plateau_identity_gap(consts) <= rel,
    }


def plateau_identity_gap(consts: DerivedConstants) -> float:
    """Gap in mu*w* = (w*/(p(N+1)-2N))^{1/(p-1)}, checked in log form.

    Both sides are compared as (p-1)(log mu + log w*) = log w* - log D and
    the residual is taken relative to the largest term. Raising to 1/(p-1)
    directly would amplify rounding by up to 1/(p-1) near p_c.
    """
    p_minus_one = consts.p - 1
    log_mu = np.log(consts.mu)
    log_d = np.log(consts.uniq_denominator)
    log_w = consts.log_w_star
    lhs = p_minus_one * (log_mu + log_w)
    rhs = log_w - log_d
    scale = max(1.0, abs(float(p_minus_one * log_mu)), abs(float(log_w)), abs(float(log_d)))
    return float(abs(lhs - rhs)) / scale


def gradient_bound(a: Scalar, consts: DerivedConstants) -> float:
    """Upper bound (alpha a)^{1/q} on |f'| along the orbit started at a."""
    return float((consts.alpha * a) ** (1 / consts.q))


def extinction_lower_bound(a: Scalar, consts: DerivedConstants) -> float:
    """alpha^{-1/q} a^{(q-1)/q}: no orbit can reach zero before this radius."""
    q = consts.q
    return float(consts.alpha ** (-1 / q) * a ** ((q - 1) / q))


def plateau_seed_bound(a: Scalar, consts: DerivedConstants) -> Tuple[float, float]:
    """Radius r0 and the closed-form lower bound on w(r0; a).

    For large ``a`` this bound exceeds 2 w*, which places ``a`` in the
    set of parameters whose orbit crosses the plateau.
    """
    p, q = consts.p, consts.q
    r0 = extinction_lower_bound(a, consts) / 2
    w_low = (
        consts.alpha ** (-p / (q * (2 - p)))
        * 2 ** (-2 / (2 - p))
        * a ** ((2 * q - p) / (q * (2 - p)))
    )
    return r0, float(w_low)


def plateau_cap(consts: DerivedConstants) -> float:
    """Smallest a for which :func:`plateau_seed_bound` guarantees w > 2 w*."""
    p, q = consts.p, consts.q
    inner = (
        2
        * consts.w_star
        * consts.alpha ** (p / (q * (2 - p)))
        * 2 ** (2 / (2 - p))
    )
    return float(inner ** (q * (2 - p) / (2 * q - p)))
