# vssprofile/shooter.py
"""
Shooting from the origin.

The profile equation is singular at r = 0 and at f' = 0 when p < 2, so it is
never integrated in terms of f''. Instead the flux F = -|f'|^{p-2} f' is
carried as the second unknown, which turns the problem into the first-order
system

    f' = -|F|^{(2-p)/(p-1)} F
    F' = -(N-1)/r F + alpha f - beta r |F|^{(2-p)/(p-1)} F - |F|^{q/(p-1)}

with locally Lipschitz right side. The origin itself is covered by the
four-term series of :func:`series_eval` up to a small handoff radius.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.interpolate import CubicSpline

from vssprofile._march import Event, MarchInterrupted, log_grid, march
from vssprofile._utils import StrEnum
from vssprofile.params import DerivedConstants, InvalidParameter, gradient_bound

logger = logging.getLogger(__name__)


# ─────────────────────────────────────────────────────────────
#  Errors
# ─────────────────────────────────────────────────────────────


class ShooterError(Exception):
    """Base class for integration failures."""


class DomainError(ShooterError, ValueError):
    """The right side was evaluated at r <= 0."""

    def __init__(self, r: float):
        self.r = r
        super().__init__(f"right side undefined at r={r}; the origin is covered by the series")


class StepLimit(ShooterError):
    """The step budget ran out before any terminal condition."""

    def __init__(self, profile: "Profile", max_steps: int):
        self.profile = profile
        self.max_steps = max_steps
        super().__init__(
            f"step budget {max_steps} exhausted at r={profile.r_end:.6g} for a={profile.a:.17g}; "
            "loosen rel_tol/abs_tol or lower R_max"
        )


class NonFiniteState(ShooterError):
    """The solver produced a non-finite state or could not continue."""

    def __init__(self, a: float, r: float, detail: str):
        self.a = a
        self.r = r
        super().__init__(f"integration for a={a:.17g} broke down at r={r:.6g}: {detail}")


class HorizonReached(ShooterError):
    """The limit profile has no zero before R_max."""

    def __init__(self, R_max: float):
        self.R_max = R_max
        super().__init__(f"limit profile still positive at R_max={R_max:.6g}; raise R_max")


# ─────────────────────────────────────────────────────────────
#  Types
# ─────────────────────────────────────────────────────────────


class Termination(StrEnum):
    F_HIT_ZERO = "FHitZero"
    W_CROSSED_PLATEAU = "WCrossedPlateau"
    HORIZON_REACHED = "HorizonReached"
    STEP_LIMIT = "StepLimit"


@dataclass(frozen=True)
class State:
    """A point (r, f, F) of the first-order system."""

    r: float
    f: float
    F: float

    def fprime(self, consts: DerivedConstants) -> float:
        return flux_to_slope(self.F, float(consts.p))


class IntegratorSettings(BaseModel):
    """Numerical knobs of a shooting run."""

    model_config = ConfigDict(frozen=True)

    r_switch: Optional[float] = Field(
        None,
        gt=0,
        description="Series-to-ODE handoff radius; None selects it from abs_tol and a",
    )
    rel_tol: float = Field(1e-10, gt=0, description="Relative local error tolerance")
    abs_tol: float = Field(1e-14, gt=0, description="Absolute local error tolerance")
    R_max: float = Field(1e4, gt=0, description="Integration horizon")
    max_steps: int = Field(10_000_000, gt=0, description="Accepted-step budget")
    sample_spacing: int = Field(64, gt=0, description="Log-uniform samples per decade")
    plateau_margin: float = Field(
        1e-3, gt=0, description="Relative margin above w* that counts as crossing"
    )
    series_floor: float = Field(
        1e-4, gt=0, description="Smallest positive sample radius inside the series region"
    )
    method: Literal["DOP853", "RK45"] = Field(
        "DOP853", description="Embedded Runge-Kutta pair"
    )

    @model_validator(mode="after")
    def _check_horizon(self) -> "IntegratorSettings":
        if self.r_switch is not None and not self.R_max > self.r_switch:
            raise ValueError(f"R_max={self.R_max} must exceed r_switch={self.r_switch}")
        return self

    def with_horizon(self, R_max: float) -> "IntegratorSettings":
        return self.model_copy(update={"R_max": R_max})

    def handoff_radius(self, a: float, consts: DerivedConstants) -> float:
        """Radius where the series hands over to the integrator.

        The default equates the size of the first dropped series term with
        ``abs_tol``.
        """
        if self.r_switch is not None:
            return self.r_switch
        p = float(consts.p)
        k = float(a) * float(consts.alpha) / consts.N
        r = min(1e-2, self.abs_tol ** ((p - 1) / (2 * p)) * k ** (-1 / (2 * p)))
        return min(r, self.R_max / 2)


@dataclass(frozen=True)
class Profile:
    """A sampled orbit (r, f, f', w, w', E) together with how it ended.

    Sample arrays are read-only. ``R`` is set for FHitZero, ``r_cross`` for
    WCrossedPlateau and ``R1`` whenever w' changed sign.
    """

    a: float
    r: np.ndarray
    f: np.ndarray
    fprime: np.ndarray
    w: np.ndarray
    wprime: np.ndarray
    E: np.ndarray
    termination: Termination
    r_end: float
    r_switch: float
    R: Optional[float] = None
    R1: Optional[float] = None
    r_cross: Optional[float] = None
    steps: int = 0

    @classmethod
    def build(
        cls,
        a: float,
        r: np.ndarray,
        f: np.ndarray,
        fprime: np.ndarray,
        consts: DerivedConstants,
        termination: Termination,
        **meta,
    ) -> "Profile":
        """Assemble a Profile, deriving w, w' and E from (r, f, f')."""
        c = consts.as_float()
        mu, p, alpha = float(c.mu), float(c.p), float(c.alpha)
        r = np.asarray(r, dtype=float)
        f = np.asarray(f, dtype=float)
        fprime = np.asarray(fprime, dtype=float)
        w = r**mu * f
        wprime = r ** (mu - 1) * (r * fprime + mu * f)
        E = (p - 1) / p * np.abs(fprime) ** p + alpha / 2 * f**2
        arrays = {}
        for name, values in (("r", r), ("f", f), ("fprime", fprime), ("w", w), ("wprime", wprime), ("E", E)):
            values = np.array(values, dtype=float)
            values.setflags(write=False)
            arrays[name] = values
        meta.setdefault("r_end", float(r[-1]))
        meta.setdefault("r_switch", 0.0)
        return cls(a=float(a), termination=termination, **arrays, **meta)

    @property
    def samples(self) -> np.ndarray:
        """Rows (r, f, f', w, w', E)."""
        return np.column_stack([self.r, self.f, self.fprime, self.w, self.wprime, self.E])

    def index_of(self, radius: float) -> int:
        """Index of the sample at ``radius`` (must be a sample radius)."""
        i = int(np.searchsorted(self.r, radius))
        for j in (i, i - 1, i + 1):
            if 0 <= j < len(self.r) and math.isclose(self.r[j], radius, rel_tol=1e-14, abs_tol=0.0):
                return j
        raise KeyError(f"r={radius} is not a sample radius")

    def interior(self) -> slice:
        """Samples with r > 0, excluding a terminal zero of f."""
        stop = len(self.r) - 1 if self.termination == Termination.F_HIT_ZERO else len(self.r)
        return slice(1, stop)


# ─────────────────────────────────────────────────────────────
#  Series and right side
# ─────────────────────────────────────────────────────────────


def flux_to_slope(F: float, p: float) -> float:
    """f' = -|F|^{(2-p)/(p-1)} F."""
    return -math.copysign(abs(F) ** (1 / (p - 1)), F)


def slope_to_flux(fprime: float, p: float) -> float:
    """F = -|f'|^{p-2} f'."""
    return -math.copysign(abs(fprime) ** (p - 1), fprime)


def series_eval(a, r, consts: DerivedConstants, absorption: bool = True):
    """Four-term expansion of (f, f') about the origin for f(0) = a.

    ``r`` may be a scalar or an array. With ``absorption=False`` the term
    produced by the gradient absorption is dropped, which gives the series of
    the limit problem solved by :func:`limit_profile`.
    """
    dt = consts.dtype
    p, q, N = consts.p, consts.q, consts.N
    a = dt(a)
    r = np.asarray(r, dtype=dt)
    k = a * consts.alpha / N
    e1 = p / (p - 1)
    e2 = (p + q) / (p - 1)
    e3 = 2 * p / (p - 1)
    c1 = consts.C1 * k ** (1 / (p - 1))
    c2 = consts.C2 * k ** ((q - p + 2) / (p - 1)) if absorption else dt(0)
    c3 = consts.C3 * k ** ((3 - p) / (p - 1))
    f = a - c1 * r**e1 + c2 * r**e2 + c3 * r**e3
    fprime = -e1 * c1 * r ** (e1 - 1) + e2 * c2 * r ** (e2 - 1) + e3 * c3 * r ** (e3 - 1)
    if np.ndim(f) == 0:
        return dt(f), dt(fprime)
    return f, fprime


VectorField = Callable[[float, float, float], Tuple[float, float]]


def vector_field(consts: DerivedConstants, absorption: bool = True) -> VectorField:
    """The first-order system as a plain function (r, f, F) -> (df/dr, dF/dr).

    Constants are bound once in double precision. ``absorption=False`` drops
    the |F|^{q/(p-1)} sink, which gives the limit problem.
    """
    c = consts.as_float()
    n1 = float(c.N - 1)
    alpha, beta = float(c.alpha), float(c.beta)
    s = (2 - float(c.p)) / (float(c.p) - 1)
    t = float(c.q) / (float(c.p) - 1)
    sink = 1.0 if absorption else 0.0

    def field(r: float, f: float, F: float) -> Tuple[float, float]:
        aF = abs(F)
        drift = aF**s * F
        return -drift, -n1 * F / r + alpha * f - beta * r * drift - sink * aF**t

    return field


def rhs(r: float, state: State, consts: DerivedConstants) -> Tuple[float, float]:
    """Right side (df/dr, dF/dr) of the first-order system at ``state``."""
    if not r > 0:
        raise DomainError(r)
    return vector_field(consts)(r, state.f, state.F)


def _base_system(consts: DerivedConstants, absorption: bool = True):
    field = vector_field(consts, absorption)

    def fun(r, y):
        return np.array(field(r, float(y[0]), float(y[1])))

    return fun


def _slope_event(consts: DerivedConstants) -> Event:
    mu = float(consts.mu)
    p = float(consts.p)

    def wprime_sign(r, y):
        return r * flux_to_slope(float(y[1]), p) + mu * float(y[0])

    return Event("w_prime_zero", wprime_sign, terminal=False, direction=-1)


def _series_head(a, r_switch: float, settings: IntegratorSettings, consts: DerivedConstants, absorption: bool = True):
    radii = np.concatenate(([0.0], log_grid(settings.series_floor, r_switch, settings.sample_spacing)))
    radii = radii[radii < r_switch]
    f, fprime = series_eval(a, radii, consts, absorption=absorption)
    fprime = np.where(radii == 0.0, 0.0, np.asarray(fprime, dtype=float))
    return radii, np.asarray(f, dtype=float), fprime


def sample_grid(r_switch: float, settings: IntegratorSettings, extra: Sequence[float] = ()) -> np.ndarray:
    grid = log_grid(r_switch, settings.R_max, settings.sample_spacing)
    if len(extra):
        grid = np.union1d(grid, np.asarray(extra, dtype=float))
    return grid


# ─────────────────────────────────────────────────────────────
#  Integration
# ─────────────────────────────────────────────────────────────


_TERMINATIONS = {
    "f_zero": Termination.F_HIT_ZERO,
    "w_cross": Termination.W_CROSSED_PLATEAU,
    "horizon": Termination.HORIZON_REACHED,
    "step_limit": Termination.STEP_LIMIT,
}


def integrate(
    a: float,
    settings: IntegratorSettings,
    consts: DerivedConstants,
    *,
    stop_on_plateau: bool = True,
    sample_at: Sequence[float] = (),
) -> Profile:
    """Shoot from f(0) = a, f'(0) = 0.

    Terminates at the first of: f reaching zero, w reaching
    (1 + plateau_margin) w* (only when ``stop_on_plateau``), the horizon
    ``R_max``. The first sign change of w' is recorded as ``R1``. Extra
    sample radii beyond the handoff may be requested with ``sample_at``.

    Raises:
        StepLimit: the step budget ran out; the partial profile is attached.
        NonFiniteState: the state became non-finite or the solver gave up.
    """
    if not a > 0:
        raise InvalidParameter(f"shooting parameter must be positive, got {a}")
    r_sw = settings.handoff_radius(float(a), consts)
    f0, fp0 = series_eval(a, r_sw, consts)
    p = float(consts.p)
    mu = float(consts.mu)
    y0 = [float(f0), slope_to_flux(float(fp0), p)]

    events = [Event("f_zero", lambda r, y: float(y[0])), _slope_event(consts)]
    if stop_on_plateau:
        threshold = (1 + settings.plateau_margin) * float(consts.w_star)
        events.append(
            Event("w_cross", lambda r, y: threshold - r**mu * float(y[0]))
        )

    head_r, head_f, head_fp = _series_head(a, r_sw, settings, consts)
    try:
        result = march(
            _base_system(consts),
            r_sw,
            y0,
            settings.R_max,
            sample_radii=sample_grid(r_sw, settings, sample_at),
            events=events,
            rel_tol=settings.rel_tol,
            abs_tol=settings.abs_tol,
            max_steps=settings.max_steps,
            method=settings.method,
        )
    except MarchInterrupted as exc:
        if exc.reason != "step_limit":
            raise NonFiniteState(float(a), exc.partial.r_end, str(exc)) from exc
        partial = _assemble(a, head_r, head_f, head_fp, exc.partial, r_sw, consts)
        raise StepLimit(partial, settings.max_steps) from exc

    profile = _assemble(a, head_r, head_f, head_fp, result, r_sw, consts)
    logger.debug(
        "a=%.17g terminated %s at r=%.6g after %d steps",
        float(a),
        profile.termination,
        profile.r_end,
        profile.steps,
    )
    return profile


def _assemble(a, head_r, head_f, head_fp, result, r_sw, consts) -> Profile:
    p = float(consts.p)
    tail_fp = np.array([flux_to_slope(F, p) for F in result.y[:, 1]])
    termination = _TERMINATIONS[result.terminal]
    tail_f = np.array(result.y[:, 0], dtype=float)
    if termination == Termination.F_HIT_ZERO:
        # the event root is where f vanishes
        tail_f[-1] = 0.0
    return Profile.build(
        a,
        np.concatenate((head_r, result.r)),
        np.concatenate((head_f, tail_f)),
        np.concatenate((head_fp, tail_fp)),
        consts,
        termination,
        r_end=float(result.r_end),
        r_switch=float(r_sw),
        R=float(result.r_end) if termination == Termination.F_HIT_ZERO else None,
        R1=result.events.get("w_prime_zero"),
        r_cross=float(result.r_end) if termination == Termination.W_CROSSED_PLATEAU else None,
        steps=result.steps,
    )


def limit_profile(settings: IntegratorSettings, consts: DerivedConstants) -> Profile:
    """Solve the small-a limit problem (no absorption) with h(0)=1, h'(0)=0.

    The returned profile terminates at its first zero S0, stored as ``R``.

    Raises:
        HorizonReached: h stays positive up to R_max.
    """
    a = 1.0
    r_sw = settings.handoff_radius(a, consts)
    f0, fp0 = series_eval(a, r_sw, consts, absorption=False)
    y0 = [float(f0), slope_to_flux(float(fp0), float(consts.p))]
    head_r, head_f, head_fp = _series_head(a, r_sw, settings, consts, absorption=False)
    try:
        result = march(
            _base_system(consts, absorption=False),
            r_sw,
            y0,
            settings.R_max,
            sample_radii=sample_grid(r_sw, settings),
            events=[Event("f_zero", lambda r, y: float(y[0])), _slope_event(consts)],
            rel_tol=settings.rel_tol,
            abs_tol=settings.abs_tol,
            max_steps=settings.max_steps,
            method=settings.method,
        )
    except MarchInterrupted as exc:
        raise NonFiniteState(a, exc.partial.r_end, str(exc)) from exc
    if result.terminal != "f_zero":
        raise HorizonReached(settings.R_max)
    profile = _assemble(a, head_r, head_f, head_fp, result, r_sw, consts)
    logger.info("limit profile: S0=%.12g, h'(S0)=%.6g", profile.R, profile.fprime[-1])
    return profile


def rescaled(profile: Profile, consts: DerivedConstants) -> Tuple[np.ndarray, np.ndarray]:
    """Map an orbit to the variables of the limit problem: s = r a^{(2-p)/p}, g = f/a."""
    p = float(consts.p)
    return profile.r * profile.a ** ((2 - p) / p), profile.f / profile.a


def limit_deviation(profile: Profile, limit: Profile, consts: DerivedConstants) -> float:
    """max |g(s) - h(s)| over s in [0, S0/2]."""
    s, g = rescaled(profile, consts)
    h = CubicSpline(limit.r, limit.f)
    window = s <= limit.R / 2
    if not window.any():
        raise ValueError("profile has no samples inside [0, S0/2]")
    return float(np.max(np.abs(g[window] - h(s[window]))))


# ─────────────────────────────────────────────────────────────
#  Properties of a profile
# ─────────────────────────────────────────────────────────────


class ProfileProperties(BaseModel):
    """Sign structure, gradient bound and energy decay of one orbit."""

    a: float
    termination: str
    sign_ok: bool = Field(..., description="f > 0 and f' < 0 on interior samples")
    max_abs_fprime: float
    gradient_bound: float = Field(..., description="(alpha a)^{1/q}")
    gradient_ok: bool
    energy_ok: bool = Field(
        ..., description="dE/dr < 0 at every interior sample and E never increases beyond rounding"
    )
    energy_rate_max: float = Field(
        ..., description="max of dE/dr = -(N-1)/r |f'|^p - beta r f'^2 + f'|f'|^q over interior samples"
    )
    energy_strict_fraction: float = Field(
        ..., description="Fraction of consecutive pairs with a resolved strict decrease"
    )
    gradient_ratio_sup: Optional[float] = Field(
        None, description="sup |f'|/f^{2/p} for orbits reaching R_max"
    )
    gradient_ratio_at_one: Optional[float] = None
    gradient_ratio_ok: Optional[bool] = None

    @property
    def ok(self) -> bool:
        return self.sign_ok and self.gradient_ok and self.energy_ok and self.gradient_ratio_ok is not False


def profile_properties(
    profile: Profile, consts: DerivedConstants, abs_tol: float = 1e-14
) -> ProfileProperties:
    inner = profile.interior()
    f = profile.f[inner]
    fp = profile.fprime[inner]
    sign_ok = bool(np.all(f > 0) and np.all(fp < 0))

    bound = gradient_bound(profile.a, consts)
    max_fp = float(np.max(np.abs(profile.fprime)))

    c = consts.as_float()
    r = profile.r[inner]
    rate = (
        -float(c.N - 1) / r * np.abs(fp) ** float(c.p)
        - float(c.beta) * r * fp**2
        + fp * np.abs(fp) ** float(c.q)
    )
    rate_max = float(np.max(rate)) if rate.size else 0.0

    E = profile.E[1:]
    dE = np.diff(E)
    floor = 4 * np.finfo(float).eps * np.abs(E[:-1])
    energy_ok = bool(np.all(rate < 0) and np.all(dE <= floor))
    strict = float(np.mean(dE < -floor)) if dE.size else 1.0

    ratio_sup = ratio_one = ratio_ok = None
    if profile.termination == Termination.HORIZON_REACHED and profile.r[-1] >= 1.0:
        p = float(consts.p)
        positive = profile.r > 0
        ratio = np.abs(profile.fprime[positive]) / profile.f[positive] ** (2 / p)
        ratio_sup = float(np.max(ratio))
        i1 = int(np.searchsorted(profile.r, 1.0))
        ratio_one = float(np.abs(profile.fprime[i1]) / profile.f[i1] ** (2 / p))
        ratio_ok = ratio_sup <= 10 * ratio_one

    return ProfileProperties(
        a=profile.a,
        termination=str(profile.termination),
        sign_ok=sign_ok,
        max_abs_fprime=max_fp,
        gradient_bound=bound,
        gradient_ok=max_fp <= bound + 10 * abs_tol,
        energy_ok=energy_ok,
        energy_rate_max=rate_max,
        energy_strict_fraction=strict,
        gradient_ratio_sup=ratio_sup,
        gradient_ratio_at_one=ratio_one,
        gradient_ratio_ok=ratio_ok,
    )


class ExpansionResidual(BaseModel):
    """Integrated orbit versus the four-term series at chosen radii."""

    a: float
    radii: List[float]
    f_residual: List[float] = Field(..., description="|f - series| / r^{2p/(p-1)}")
    fprime_residual: List[float] = Field(..., description="|f' - series'| / r^{(p+1)/(p-1)}")
    predicted_decade_ratio: float = Field(
        ..., description="10^{(2q-p)/(p-1)}: decay per decade of the normalized residual"
    )


def expansion_residual(
    a: float, radii: Sequence[float], settings: IntegratorSettings, consts: DerivedConstants
) -> ExpansionResidual:
    """Measure how fast the series remainder vanishes towards the origin.

    ``settings.r_switch`` should lie below ``min(radii)``; otherwise the
    compared values come from the series itself.
    """
    radii = sorted(float(r) for r in radii)
    run = settings.with_horizon(2 * radii[-1])
    profile = integrate(a, run, consts, stop_on_plateau=False, sample_at=radii)
    p, q = float(consts.p), float(consts.q)
    f_res, fp_res = [], []
    for r in radii:
        i = profile.index_of(r)
        fs, fps = series_eval(a, r, consts)
        f_res.append(abs(profile.f[i] - float(fs)) / r ** (2 * p / (p - 1)))
        fp_res.append(abs(profile.fprime[i] - float(fps)) / r ** ((p + 1) / (p - 1)))
    return ExpansionResidual(
        a=float(a),
        radii=radii,
        f_residual=f_res,
        fprime_residual=fp_res,
        predicted_decade_ratio=10 ** ((2 * q - p) / (p - 1)),
    )


def fixed_step_reference(
    a: float,
    r_start: float,
    r_stop: float,
    step: float,
    consts: DerivedConstants,
    checkpoints: Sequence[float] = (),
) -> Dict[float, Tuple[float, float]]:
    """Classical fourth-order Runge-Kutta with a fixed step, from the series at ``r_start``.

    Each checkpoint is hit exactly by shortening the steps of the segment
    leading to it. Returns (f, f') at every checkpoint and at ``r_stop``.
    """
    c = consts.as_float()
    p = float(c.p)
    field = vector_field(c)

    def advance(r, f, F, r_to):
        n = max(1, int(math.ceil((r_to - r) / step - 1e-9)))
        h = (r_to - r) / n
        for _ in range(n):
            k1f, k1F = field(r, f, F)
            k2f, k2F = field(r + h / 2, f + h / 2 * k1f, F + h / 2 * k1F)
            k3f, k3F = field(r + h / 2, f + h / 2 * k2f, F + h / 2 * k2F)
            k4f, k4F = field(r + h, f + h * k3f, F + h * k3F)
            f += h / 6 * (k1f + 2 * k2f + 2 * k3f + k4f)
            F += h / 6 * (k1F + 2 * k2F + 2 * k3F + k4F)
            r += h
        return f, F

    f0, fp0 = series_eval(a, r_start, c)
    f, F = float(f0), slope_to_flux(float(fp0), p)
    r = r_start
    out: Dict[float, Tuple[float, float]] = {}
    targets = sorted({float(x) for x in checkpoints if r_start < x < r_stop} | {float(r_stop)})
    for target in targets:
        f, F = advance(r, f, F, target)
        r = target
        out[target] = (f, flux_to_slope(F, p))
    return out
