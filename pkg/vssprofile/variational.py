# vssprofile/variational.py
"""
Sensitivity of orbits to the shooting parameter.

The derivative fa = d f(r; a)/da solves the equation obtained by
differentiating the profile equation in a. It is integrated together with
the orbit itself as the five-component system (f, F, fa, Fa, G), where Fa is
the a-derivative of the flux and

    G = mu a fa - r f' - mu f

is the monotonicity gap, so that mu a wa - r w' = r^mu G with wa = r^mu fa.
Carrying G as its own unknown keeps the gap accurate near the origin, where
both sides of the comparison vanish.

The module also evaluates the linearized operator L_a of the w-equation on
wa and on r w', with every second and third derivative obtained from the
system by substitution rather than by differencing samples.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from vssprofile._march import Event, MarchInterrupted, march
from vssprofile.params import DerivedConstants, InvalidParameter
from vssprofile.shooter import (
    IntegratorSettings,
    NonFiniteState,
    Profile,
    StepLimit,
    Termination,
    _assemble,
    _series_head,
    _slope_event,
    integrate,
    sample_grid,
    series_eval,
    slope_to_flux,
)

logger = logging.getLogger(__name__)


class VariationalError(Exception):
    """Base class for failures of the a-derivative integration."""


class BaseProfileTerminated(VariationalError):
    """The orbit reached f = 0 before the requested radius."""

    def __init__(self, a: float, R: float, r_stop: float):
        self.a = a
        self.R = R
        self.r_stop = r_stop
        super().__init__(
            f"orbit for a={a:.17g} vanishes at R={R:.12g} before r_stop={r_stop:.6g}; "
            "the a-derivative is only defined on [0, R)"
        )


@dataclass(frozen=True)
class VariationalProfile:
    """An orbit together with its a-derivative on the same radii.

    ``mono_gap`` is mu a wa - r w', computed as r^mu G.
    """

    base: Profile
    fa: np.ndarray
    fa_prime: np.ndarray
    Fa: np.ndarray
    gap: np.ndarray
    wa: np.ndarray
    mono_gap: np.ndarray

    @property
    def a(self) -> float:
        return self.base.a

    @property
    def r(self) -> np.ndarray:
        return self.base.r


def _frozen(values) -> np.ndarray:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return values


def variational_series(a, r, consts: DerivedConstants):
    """a-derivative of the series of :func:`series_eval`: (fa, fa') near the origin.

    fa(0) = 1 and fa'(0) = 0 for every a.
    """
    dt = consts.dtype
    p, q, N = consts.p, consts.q, consts.N
    a = dt(a)
    r = np.asarray(r, dtype=dt)
    k = a * consts.alpha / N
    e1 = p / (p - 1)
    e2 = (p + q) / (p - 1)
    e3 = 2 * p / (p - 1)
    d1 = consts.C1 * k ** (1 / (p - 1)) / ((p - 1) * a)
    d2 = consts.C2 * (q - p + 2) / (p - 1) * k ** ((q - p + 2) / (p - 1)) / a
    d3 = consts.C3 * (3 - p) / (p - 1) * k ** ((3 - p) / (p - 1)) / a
    fa = 1 - d1 * r**e1 + d2 * r**e2 + d3 * r**e3
    fa_prime = -e1 * d1 * r ** (e1 - 1) + e2 * d2 * r ** (e2 - 1) + e3 * d3 * r ** (e3 - 1)
    if np.ndim(fa) == 0:
        return dt(fa), dt(fa_prime)
    return fa, fa_prime


def gap_series(a, r, consts: DerivedConstants):
    """G = mu a fa - r f' - mu f from the series.

    Only the absorption term survives the cancellation, leaving
    C2 (a alpha/N)^{(q-p+2)/(p-1)} (2q-p)/(2-p) r^{(p+q)/(p-1)}, which is
    positive near the origin.
    """
    c = consts.as_float()
    p, q = float(c.p), float(c.q)
    k = float(a) * float(c.alpha) / c.N
    coefficient = float(c.C2) * k ** ((q - p + 2) / (p - 1)) * (2 * q - p) / (2 - p)
    return coefficient * np.asarray(r, dtype=float) ** ((p + q) / (p - 1))


def _variational_system(a: float, consts: DerivedConstants):
    c = consts.as_float()
    p, q = float(c.p), float(c.q)
    n1 = float(c.N - 1)
    alpha, beta, mu = float(c.alpha), float(c.beta), float(c.mu)
    s = (2 - p) / (p - 1)
    t = q / (p - 1)
    mu_a = mu * float(a)

    def fun(r, y):
        f, F, fa, Fa, _ = (float(v) for v in y)
        aF = abs(F)
        drift = aF**s * F
        slope = aF**s / (p - 1)
        sink = aF**t
        sink_slope = t * aF ** (t - 1) * math.copysign(1.0, F) if aF > 0 else 0.0
        df = -drift
        dF = -n1 * F / r + alpha * f - beta * r * drift - sink
        dfa = -slope * Fa
        dFa = -n1 * Fa / r + alpha * fa - beta * r * slope * Fa - sink_slope * Fa
        fpp = -slope * dF
        dG = mu_a * dfa - (1 + mu) * df - r * fpp
        return np.array([df, dF, dfa, dFa, dG])

    return fun


def integrate_variational(
    a: float,
    settings: IntegratorSettings,
    consts: DerivedConstants,
    r_stop: Optional[float] = None,
) -> VariationalProfile:
    """Integrate an orbit and its a-derivative up to f = 0 or the horizon.

    The horizon is ``r_stop`` when given, ``settings.R_max`` otherwise. The
    plateau stop of :func:`integrate` is never applied.

    Raises:
        BaseProfileTerminated: ``r_stop`` was given and f vanishes before it.
        StepLimit: the step budget ran out.
        NonFiniteState: the state became non-finite.
    """
    if not a > 0:
        raise InvalidParameter(f"shooting parameter must be positive, got {a}")
    run = settings if r_stop is None else settings.with_horizon(r_stop)
    c = consts.as_float()
    p = float(c.p)
    mu = float(c.mu)
    r_sw = run.handoff_radius(float(a), consts)

    f0, fp0 = series_eval(a, r_sw, consts)
    fa0, fap0 = variational_series(a, r_sw, consts)
    F0 = slope_to_flux(float(fp0), p)
    Fa0 = -(p - 1) * abs(float(fp0)) ** (p - 2) * float(fap0)
    y0 = [float(f0), F0, float(fa0), Fa0, float(gap_series(a, r_sw, consts))]

    head_r, head_f, head_fp = _series_head(a, r_sw, run, consts)
    try:
        result = march(
            _variational_system(a, consts),
            r_sw,
            y0,
            run.R_max,
            sample_radii=sample_grid(r_sw, run),
            events=[Event("f_zero", lambda r, y: float(y[0])), _slope_event(consts)],
            rel_tol=run.rel_tol,
            abs_tol=run.abs_tol,
            max_steps=run.max_steps,
            method=run.method,
        )
    except MarchInterrupted as exc:
        if exc.reason != "step_limit":
            raise NonFiniteState(float(a), exc.partial.r_end, str(exc)) from exc
        partial = _assemble(a, head_r, head_f, head_fp, exc.partial, r_sw, consts)
        raise StepLimit(partial, run.max_steps) from exc

    base = _assemble(a, head_r, head_f, head_fp, result, r_sw, consts)
    if r_stop is not None and base.termination == Termination.F_HIT_ZERO:
        raise BaseProfileTerminated(float(a), base.R, r_stop)

    head_fa, head_fap = variational_series(a, head_r, consts)
    head_fa = np.asarray(head_fa, dtype=float)
    head_fap = np.where(head_r == 0.0, 0.0, np.asarray(head_fap, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        head_Fa = np.where(
            head_r == 0.0, 0.0, -(p - 1) * np.abs(head_fp) ** (p - 2) * head_fap
        )
    head_gap = gap_series(a, head_r, consts)

    Fa = np.concatenate((head_Fa, result.y[:, 3]))
    s = (2 - p) / (p - 1)
    tail_fap = -np.abs(result.y[:, 1]) ** s * result.y[:, 3] / (p - 1)
    fa = np.concatenate((head_fa, result.y[:, 2]))
    fa_prime = np.concatenate((head_fap, tail_fap))
    gap = np.concatenate((head_gap, result.y[:, 4]))
    r = base.r
    profile = VariationalProfile(
        base=base,
        fa=_frozen(fa),
        fa_prime=_frozen(fa_prime),
        Fa=_frozen(Fa),
        gap=_frozen(gap),
        wa=_frozen(r**mu * fa),
        mono_gap=_frozen(r**mu * gap),
    )
    logger.debug(
        "variational run a=%.17g ended %s at r=%.6g", float(a), base.termination, base.r_end
    )
    return profile


# ─────────────────────────────────────────────────────────────
#  Monotonicity
# ─────────────────────────────────────────────────────────────


class MonotonicityReport(BaseModel):
    a: float
    interval_end: float = Field(..., description="R1 when w' changes sign, else the last radius")
    samples: int
    gap_ok: bool = Field(..., description="mu a wa > r w' at every checked sample")
    positivity_ok: bool = Field(..., description="wa > 0 at every checked sample")
    first_violation: Optional[float] = None
    min_relative_gap: Optional[float] = Field(
        None, description="min of (mu a wa - r w') / (mu a |wa| + |r w'|)"
    )
    near_origin_coefficient: float = Field(
        ..., description="(2q-p)/(2-p): sign of the gap as r -> 0"
    )

    @property
    def ok(self) -> bool:
        return self.gap_ok and self.positivity_ok and self.near_origin_coefficient > 0


def monotonicity_check(
    vp: VariationalProfile, consts: DerivedConstants, r_min: float = 1e-4
) -> MonotonicityReport:
    """Check mu a wa > r w' and wa > 0 on the initial interval where w' > 0.

    Samples below ``r_min`` are skipped; both sides tend to zero there.
    """
    base = vp.base
    inner = base.interior()
    r = base.r[inner]
    end = base.R1 if base.R1 is not None else base.r_end
    mask = (r >= r_min) & (r < end)
    gap = vp.mono_gap[inner][mask]
    wa = vp.wa[inner][mask]
    rwp = r[mask] * base.wprime[inner][mask]
    good = (gap > 0) & (wa > 0)
    first = None if good.all() else float(r[mask][~good][0])
    c = consts.as_float()
    mu_a = float(c.mu) * vp.a
    rel = gap / (mu_a * np.abs(wa) + np.abs(rwp)) if gap.size else np.empty(0)

    report = MonotonicityReport(
        a=vp.a,
        interval_end=float(end),
        samples=int(mask.sum()),
        gap_ok=bool(np.all(gap > 0)),
        positivity_ok=bool(np.all(wa > 0)),
        first_violation=first,
        min_relative_gap=float(rel.min()) if rel.size else None,
        near_origin_coefficient=float((2 * c.q - c.p) / (2 - c.p)),
    )
    if first is not None:
        logger.warning("monotonicity fails for a=%.17g at r=%.6g", vp.a, first)
    return report


# ─────────────────────────────────────────────────────────────
#  Linearized operator
# ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class _Jet:
    """Values and absolute part-sums of a function and its r-derivatives."""

    values: List[np.ndarray]
    mags: List[np.ndarray]


def _leibniz(r: np.ndarray, mu: float, jet: _Jet, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """order-th derivative of r^mu g from the derivatives of g."""
    value = np.zeros_like(r)
    mag = np.zeros_like(r)
    for k in range(order + 1):
        falling = math.prod(mu - i for i in range(k))
        factor = math.comb(order, k) * falling * r ** (mu - k)
        value = value + factor * jet.values[order - k]
        mag = mag + np.abs(factor) * jet.mags[order - k]
    return value, mag


@dataclass(frozen=True)
class OperatorSamples:
    """L_a(wa) and L_a(r w') at the interior samples of a variational run."""

    r: np.ndarray
    la_wa: np.ndarray
    la_wa_scale: np.ndarray
    la_rwprime: np.ndarray
    la_rwprime_scale: np.ndarray
    closed_form: np.ndarray
    r_switch: float

    @property
    def la_wa_normalized(self) -> np.ndarray:
        return self.la_wa / self.la_wa_scale


def operator_samples(vp: VariationalProfile, consts: DerivedConstants) -> OperatorSamples:
    """Evaluate L_a on wa and on r w' from the sampled state.

    Each value comes with the sum of the absolute values of everything
    added to form it, which bounds its rounding error.
    """
    c = consts.as_float()
    p, q, N = float(c.p), float(c.q), c.N
    alpha, beta, mu, eta = float(c.alpha), float(c.beta), float(c.mu), float(c.eta)
    amb = float(c.alpha_minus_beta_mu)

    base = vp.base
    inner = base.interior()
    r = base.r[inner]
    f = base.f[inner]
    fp = base.fprime[inner]
    fa = vp.fa[inner]
    Fa = vp.Fa[inner]

    F = np.abs(fp) ** (p - 1) * -np.sign(fp)
    aF = np.abs(F)
    sgn = np.sign(F)
    with np.errstate(divide="ignore", invalid="ignore"):
        P = aF ** ((2 - p) / (p - 1)) * F
        P1 = aF ** ((2 - p) / (p - 1)) / (p - 1)
        P2 = (2 - p) / (p - 1) ** 2 * aF ** ((3 - 2 * p) / (p - 1)) * sgn
        Q = aF ** (q / (p - 1))
        Q1 = q / (p - 1) * aF ** ((q - p + 1) / (p - 1)) * sgn

    dF_parts = [-(N - 1) * F / r, alpha * f, -beta * r * P, -Q]
    dF = sum(dF_parts)
    m_dF = sum(np.abs(x) for x in dF_parts)
    fpp = -P1 * dF
    m_fpp = P1 * m_dF
    d2F_parts = [
        (N - 1) * F / r**2,
        -(N - 1) * dF / r,
        alpha * fp,
        -beta * P,
        -beta * r * P1 * dF,
        -Q1 * dF,
    ]
    d2F = sum(d2F_parts)
    m_d2F = (N - 1) * aF / r**2 + (N - 1) * m_dF / r + alpha * np.abs(fp) + beta * np.abs(P)
    m_d2F = m_d2F + (beta * r * P1 + np.abs(Q1)) * m_dF
    fppp = -P2 * dF**2 - P1 * d2F
    m_fppp = np.abs(P2) * m_dF**2 + P1 * m_d2F

    base_jet = _Jet(
        values=[f, fp, fpp, fppp],
        mags=[np.abs(f), np.abs(fp), m_fpp, m_fppp],
    )
    w, m_w = _leibniz(r, mu, base_jet, 0)
    w1, m_w1 = _leibniz(r, mu, base_jet, 1)
    w2, m_w2 = _leibniz(r, mu, base_jet, 2)
    w3, m_w3 = _leibniz(r, mu, base_jet, 3)

    W = r ** (mu + 1) * fp
    aW = np.abs(W)
    bracket = amb * w + beta * r * w1 - r**eta * aW**q
    m_bracket = abs(amb) * m_w + beta * r * m_w1 + r**eta * aW**q

    def apply(phi, d1, d2, shift, m_phi, m_d1, m_d2, m_shift):
        terms = [
            (p - 1) * r**2 * d2,
            (N - 1 - 2 * mu * (p - 1)) * r * d1,
            mu * (mu - N) * phi,
            (2 - p) * aW ** (-p) * W * shift * bracket,
            aW ** (2 - p) * (amb * phi + beta * r * d1),
            -(aW ** (2 - p)) * q * r**eta * aW ** (q - 2) * W * shift,
        ]
        mags = [
            (p - 1) * r**2 * m_d2,
            abs(N - 1 - 2 * mu * (p - 1)) * r * m_d1,
            abs(mu * (mu - N)) * m_phi,
            (2 - p) * aW ** (1 - p) * m_shift * m_bracket,
            aW ** (2 - p) * (abs(amb) * m_phi + beta * r * m_d1),
            aW ** (2 - p) * q * r**eta * aW ** (q - 1) * m_shift,
        ]
        return sum(terms), sum(mags)

    # wa = r^mu fa; r wa' - mu wa = r^{mu+1} fa'
    fap = -P1 * Fa
    dFa_parts = [-(N - 1) * Fa / r, alpha * fa, -beta * r * P1 * Fa, -Q1 * Fa]
    dFa = sum(dFa_parts)
    m_dFa = sum(np.abs(x) for x in dFa_parts)
    fapp = -P2 * dF * Fa - P1 * dFa
    m_fapp = np.abs(P2) * m_dF * np.abs(Fa) + P1 * m_dFa
    var_jet = _Jet(values=[fa, fap, fapp], mags=[np.abs(fa), np.abs(fap), m_fapp])
    wa, m_wa = _leibniz(r, mu, var_jet, 0)
    wa1, m_wa1 = _leibniz(r, mu, var_jet, 1)
    wa2, m_wa2 = _leibniz(r, mu, var_jet, 2)
    shift_a = r ** (mu + 1) * fap
    la_wa, la_wa_scale = apply(wa, wa1, wa2, shift_a, m_wa, m_wa1, m_wa2, np.abs(shift_a))

    # phi = r w'; r phi' - mu phi = r W'
    phi, m_phi = r * w1, r * m_w1
    d1, m_d1 = w1 + r * w2, m_w1 + r * m_w2
    d2, m_d2 = 2 * w2 + r * w3, 2 * m_w2 + r * m_w3
    shift = r ** (mu + 1) * (r * fpp + (mu + 1) * fp)
    m_shift = r ** (mu + 1) * (r * m_fpp + (mu + 1) * np.abs(fp))
    la_rw, la_rw_scale = apply(phi, d1, d2, shift, m_phi, m_d1, m_d2, m_shift)

    closed = eta * r**eta * aW ** (q - p + 2)
    return OperatorSamples(
        r=r,
        la_wa=la_wa,
        la_wa_scale=la_wa_scale,
        la_rwprime=la_rw,
        la_rwprime_scale=la_rw_scale,
        closed_form=closed,
        r_switch=base.r_switch,
    )


class LinearizedReport(BaseModel):
    a: float
    checked_from: float = Field(..., description="Smallest radius checked (the series handoff)")
    samples: int
    max_wa_residual: float = Field(..., description="max |L_a(wa)| / sum of its term magnitudes")
    rwprime_negative: bool = Field(..., description="no resolved sample with L_a(r w') >= 0")
    closed_form_samples: int = Field(
        ..., description="Samples where the closed form of L_a(r w') is well-conditioned"
    )
    max_closed_form_deviation: Optional[float] = Field(
        None, description="max |L_a(r w') - closed form| / |closed form| on those samples"
    )

    def passed(self, tolerance: float = 1e-6, closed_tolerance: float = 1e-8) -> bool:
        deviation_ok = (
            self.closed_form_samples > 0
            and self.max_closed_form_deviation is not None
            and self.max_closed_form_deviation <= closed_tolerance
        )
        return self.max_wa_residual <= tolerance and self.rwprime_negative and deviation_ok


CONDITION_LIMIT = 1e6


def linearized_residual(vp: VariationalProfile, consts: DerivedConstants) -> LinearizedReport:
    """L_a(wa) = 0 and L_a(r w') = eta r^eta |W|^{q-p+2} < 0 on the integrated range."""
    ops = operator_samples(vp, consts)
    checked = ops.r >= ops.r_switch
    eps = np.finfo(float).eps
    la_wa = np.abs(ops.la_wa_normalized[checked])
    rw = ops.la_rwprime[checked]
    rw_scale = ops.la_rwprime_scale[checked]
    closed = ops.closed_form[checked]

    resolved_positive = rw >= 16 * eps * rw_scale
    conditioned = rw_scale <= CONDITION_LIMIT * np.abs(closed)
    deviation = np.abs(rw[conditioned] - closed[conditioned]) / np.abs(closed[conditioned])

    report = LinearizedReport(
        a=vp.a,
        checked_from=float(ops.r_switch),
        samples=int(checked.sum()),
        max_wa_residual=float(la_wa.max()) if la_wa.size else 0.0,
        rwprime_negative=not bool(resolved_positive.any()),
        closed_form_samples=int(conditioned.sum()),
        max_closed_form_deviation=float(deviation.max()) if deviation.size else None,
    )
    logger.info(
        "L_a residuals for a=%.17g: wa %.3g, closed form %s on %d samples",
        vp.a,
        report.max_wa_residual,
        report.max_closed_form_deviation,
        report.closed_form_samples,
    )
    return report


# ─────────────────────────────────────────────────────────────
#  Finite-difference oracle
# ─────────────────────────────────────────────────────────────


class FiniteDifferenceReport(BaseModel):
    a: float
    h: float
    window: Tuple[float, float]
    samples: int
    max_deviation: float = Field(
        ..., description="max |central difference - fa| / max |fa| over the window"
    )


def finite_difference_check(
    a: float,
    settings: IntegratorSettings,
    consts: DerivedConstants,
    h_rel: float = 1e-6,
    r_max: float = 10.0,
) -> FiniteDifferenceReport:
    """Compare fa with (f(r; a+h) - f(r; a-h)) / 2h on [r_switch, min(R(a), r_max)].

    The three runs share one handoff radius and therefore one sample grid;
    only radii sampled by all of them before their own termination enter.
    """
    r_sw = settings.handoff_radius(float(a), consts)
    run = settings.model_copy(
        update={"r_switch": r_sw, "R_max": min(settings.R_max, r_max)}
    )
    h = h_rel * float(a)
    vp = integrate_variational(a, run, consts)
    upper = integrate(a + h, run, consts, stop_on_plateau=False)
    lower = integrate(a - h, run, consts, stop_on_plateau=False)

    def grid_points(profile: Profile) -> np.ndarray:
        return profile.r[profile.interior()]

    common = np.intersect1d(grid_points(vp.base), grid_points(upper))
    common = np.intersect1d(common, grid_points(lower))
    common = common[common >= r_sw]
    if common.size == 0:
        raise ValueError(f"no common sample radii beyond r_switch={r_sw:.6g}")

    def at(profile: Profile, values: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(profile.r, common)
        return values[idx]

    fd = (at(upper, upper.f) - at(lower, lower.f)) / (2 * h)
    fa = at(vp.base, vp.fa)
    deviation = float(np.max(np.abs(fd - fa)) / np.max(np.abs(fa)))
    logger.info("finite-difference check a=%.17g: max deviation %.3g", float(a), deviation)
    return FiniteDifferenceReport(
        a=float(a),
        h=h,
        window=(float(common[0]), float(common[-1])),
        samples=int(common.size),
        max_deviation=deviation,
    )
