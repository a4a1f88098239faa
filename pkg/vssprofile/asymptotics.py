# vssprofile/asymptotics.py
"""
Tail diagnostics of sampled orbits.

Orbits that survive to large r decay either like r^{-p/(2-p)} (fast, the
critical orbit) or like r^{-(p-q)/(q-p+1)} (slow, every orbit above the
critical parameter). The helpers here fit those power laws, estimate the
slow-orbit amplitude k(a), follow the logarithmic slope Lambda = -r f'/f and
measure how the near-critical orbit settles on the plateau w = w*.
"""

from __future__ import annotations

import logging
import math
import warnings
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import OptimizeWarning, curve_fit

from vssprofile.params import DerivedConstants, plateau_identity_gap
from vssprofile.shooter import Profile, Termination

logger = logging.getLogger(__name__)

MIN_WINDOW_SAMPLES = 16
PLATEAU_TOLERANCE = 0.05


class AsymptoticsError(Exception):
    """Base class for tail-analysis failures."""


class WindowTooNarrow(AsymptoticsError):
    def __init__(self, reason: str):
        super().__init__(f"fit window too narrow: {reason}")


class NotConverged(AsymptoticsError):
    def __init__(self, estimate: float, oscillation: float):
        self.estimate = estimate
        self.oscillation = oscillation
        super().__init__(
            f"r^(alpha/beta) f has not settled: estimate {estimate:.6g} "
            f"oscillates by {oscillation:.3%} over the last decade"
        )


class InsufficientTail(AsymptoticsError):
    def __init__(self, reason: str):
        super().__init__(f"not enough tail for the Lambda diagnostic: {reason}")


class NoPlateau(AsymptoticsError):
    def __init__(self, tolerance: float):
        self.tolerance = tolerance
        super().__init__(f"no sample has |w - w*|/w* < {tolerance}")


# ─────────────────────────────────────────────────────────────
#  Power-law tails
# ─────────────────────────────────────────────────────────────


class TailFit(BaseModel):
    exponent: float = Field(..., description="Fitted decay power of f")
    amplitude: float = Field(..., description="Fitted prefactor")
    window: Tuple[float, float] = Field(..., description="[r_min, r_max] used")
    residual: float = Field(..., description="Max relative deviation of the fit on the window")
    orbit: Literal["fast", "slow"]
    samples: int


def last_decade(profile: Profile) -> Tuple[float, float]:
    """The decade ending at the horizon of an orbit that reached it."""
    if profile.termination != Termination.HORIZON_REACHED:
        raise WindowTooNarrow(
            f"orbit ended by {profile.termination} at r={profile.r_end:.6g} "
            "before one decade of tail"
        )
    return profile.r_end / 10, profile.r_end


def _window_mask(profile: Profile, window: Tuple[float, float]) -> np.ndarray:
    lo, hi = window
    return (profile.r >= lo * (1 - 1e-12)) & (profile.r <= hi * (1 + 1e-12)) & (profile.f > 0)


def fit_tail(
    profile: Profile,
    consts: DerivedConstants,
    window: Optional[Tuple[float, float]] = None,
) -> TailFit:
    """Least-squares slope of log f against log r over ``window``.

    The default window is the last decade of an orbit that reached its
    horizon.

    Raises:
        WindowTooNarrow: the window spans less than a decade or holds fewer
            than 16 samples with f > 0.
    """
    if window is None:
        window = last_decade(profile)
    lo, hi = window
    if not (lo > 0 and hi >= 10 * lo * (1 - 1e-9)):
        raise WindowTooNarrow(f"[{lo:.6g}, {hi:.6g}] spans less than a decade")
    mask = _window_mask(profile, window)
    n = int(mask.sum())
    if n < MIN_WINDOW_SAMPLES:
        raise WindowTooNarrow(f"{n} samples with f > 0 in [{lo:.6g}, {hi:.6g}]")

    log_r = np.log(profile.r[mask])
    log_f = np.log(profile.f[mask])
    slope, intercept = np.polyfit(log_r, log_f, 1)
    exponent = -float(slope)
    amplitude = float(np.exp(intercept))
    fitted = amplitude * profile.r[mask] ** (-exponent)
    residual = float(np.max(np.abs(fitted / profile.f[mask] - 1)))

    fast, slow = float(consts.fast_exponent), float(consts.slow_exponent)
    orbit = "fast" if abs(exponent - fast) < abs(exponent - slow) else "slow"
    logger.debug("tail fit on [%.3g, %.3g]: exponent %.6g (%s)", lo, hi, exponent, orbit)
    return TailFit(
        exponent=exponent,
        amplitude=amplitude,
        window=(float(lo), float(hi)),
        residual=residual,
        orbit=orbit,
        samples=n,
    )


class SlowLimit(BaseModel):
    k: float = Field(..., description="Mean of r^(alpha/beta) f over the last decade")
    oscillation: float = Field(..., description="(max - min)/k over the last decade")
    converged: bool
    window: Tuple[float, float]


def slow_limit_k(
    profile: Profile, consts: DerivedConstants, strict: bool = True
) -> SlowLimit:
    """Estimate k(a) = lim r^{alpha/beta} f(r; a) for a slow orbit.

    The estimate is the average over the log-uniform samples of the last
    decade, i.e. a Cesaro mean in log r. With ``strict`` an oscillation of
    1% or more raises :class:`NotConverged`; otherwise it is only flagged.
    """
    window = last_decade(profile)
    mask = _window_mask(profile, window)
    if mask.sum() < MIN_WINDOW_SAMPLES:
        raise WindowTooNarrow(f"{int(mask.sum())} samples in the last decade")
    scaled = profile.r[mask] ** float(consts.slow_exponent) * profile.f[mask]
    k = float(np.mean(scaled))
    oscillation = float((scaled.max() - scaled.min()) / k)
    converged = oscillation < 0.01
    if strict and not converged:
        raise NotConverged(k, oscillation)
    return SlowLimit(k=k, oscillation=oscillation, converged=converged, window=window)


# ─────────────────────────────────────────────────────────────
#  Logarithmic slope
# ─────────────────────────────────────────────────────────────


class LambdaDiagnostic(BaseModel):
    tau_samples: List[Tuple[float, float]] = Field(..., description="(tau, Lambda(tau)) for r = e^tau >= 1")
    limit_estimate: float
    rate_estimate: Optional[float] = Field(
        None, description="Fitted exponential rate of |Lambda - limit|; None when Lambda is constant"
    )
    fit_residual: float = Field(..., description="rms(Lambda - fit) / rms(Lambda - limit) on the fit window")
    fit_window: Tuple[float, float]
    within_bounds: bool = Field(..., description="0 < Lambda < mu at every sample")
    ode_residual: float = Field(
        ..., description="Max normalized residual of the differential equation satisfied by Lambda"
    )


def _lambda_ode_residual(r, f, fprime, consts: DerivedConstants) -> float:
    c = consts.as_float()
    p, q, N = float(c.p), float(c.q), c.N
    alpha, beta, mu = float(c.alpha), float(c.beta), float(c.mu)
    F = np.abs(fprime) ** (p - 1)
    dF = -(N - 1) / r * F + alpha * f - beta * r * F ** (1 / (p - 1)) - F ** (q / (p - 1))
    fpp = -F ** ((2 - p) / (p - 1)) * dF / (p - 1)
    lam = -r * fprime / f
    w = r**mu * f
    lhs = (p - 1) * (lam + lam**2 - r**2 * fpp / f)
    terms = [
        (p - 1) * lam**2,
        (p - N) * lam,
        lam ** (2 - p) * w ** (2 - p) * alpha,
        -(lam ** (2 - p)) * w ** (2 - p) * beta * lam,
        -(lam ** (q - p + 2)) * r ** (p - q) * f ** (q - p + 1),
    ]
    rhs = sum(terms)
    scale = np.abs(lhs) + sum(np.abs(t) for t in terms)
    return float(np.max(np.abs(lhs - rhs) / scale))


def lambda_diagnostic(
    profile: Profile, consts: DerivedConstants, fit_decades: float = 2.0
) -> LambdaDiagnostic:
    """Lambda(tau) = -r f'/f at r = e^tau >= 1 and its exponential approach to a limit.

    The model Lambda = L + c exp(-theta (tau - tau0)) is fitted over the last
    ``fit_decades`` decades of samples.

    Raises:
        InsufficientTail: fewer than 16 samples with r >= 1, or less than a
            decade of them.
    """
    mask = (profile.r >= 1.0) & (profile.f > 0)
    if mask.sum() < MIN_WINDOW_SAMPLES:
        raise InsufficientTail(f"{int(mask.sum())} samples with r >= 1")
    r = profile.r[mask]
    if r[-1] < 10 * r[0] * (1 - 1e-9):
        raise InsufficientTail(f"samples with r >= 1 end at r={r[-1]:.6g}")
    f = profile.f[mask]
    fprime = profile.fprime[mask]
    tau = np.log(r)
    lam = -r * fprime / f
    mu = float(consts.mu)
    within = bool(np.all((lam > 0) & (lam < mu)))

    fit = tau >= tau[-1] - fit_decades * math.log(10)
    t_fit, l_fit = tau[fit], lam[fit]
    t0 = float(t_fit[0])
    rate: Optional[float]
    if np.ptp(l_fit) <= 1e-12 * max(1.0, float(np.max(np.abs(l_fit)))):
        limit, rate, residual = float(np.mean(l_fit)), None, 0.0
    else:

        def model(t, L, c, theta):
            return L + c * np.exp(-theta * (t - t0))

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, _ = curve_fit(
                model,
                t_fit,
                l_fit,
                p0=(float(l_fit[-1]), float(l_fit[0] - l_fit[-1]), 1.0),
                bounds=([-np.inf, -np.inf, 0.0], [np.inf, np.inf, 50.0]),
                maxfev=20000,
            )
        limit, rate = float(popt[0]), float(popt[2])
        spread = float(np.sqrt(np.mean((l_fit - limit) ** 2)))
        misfit = float(np.sqrt(np.mean((l_fit - model(t_fit, *popt)) ** 2)))
        residual = misfit / spread if spread > 0 else 0.0

    return LambdaDiagnostic(
        tau_samples=list(zip(tau.tolist(), lam.tolist())),
        limit_estimate=limit,
        rate_estimate=rate,
        fit_residual=residual,
        fit_window=(float(math.exp(t_fit[0])), float(math.exp(t_fit[-1]))),
        within_bounds=within,
        ode_residual=_lambda_ode_residual(r, f, fprime, consts),
    )


# ─────────────────────────────────────────────────────────────
#  Near-critical plateau
# ─────────────────────────────────────────────────────────────


def plateau_window(
    profile: Profile, consts: DerivedConstants, tolerance: float = PLATEAU_TOLERANCE
) -> Tuple[int, int]:
    """Index range [i0, i1] of the longest log-interval with |w - w*|/w* < tolerance.

    Raises:
        NoPlateau: no sample is that close to w*.
    """
    w_star = float(consts.w_star)
    inside = (profile.r > 0) & (np.abs(profile.w - w_star) < tolerance * w_star)
    best: Optional[Tuple[int, int]] = None
    best_span = -1.0
    i = 0
    n = len(inside)
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and inside[j + 1]:
            j += 1
        span = math.log10(profile.r[j] / profile.r[i])
        if span > best_span:
            best, best_span = (i, j), span
        i = j + 1
    if best is None:
        raise NoPlateau(tolerance)
    return best


class CriticalReport(BaseModel):
    window: Tuple[float, float]
    decades: float = Field(..., description="log10 of the window's radius ratio")
    max_rwprime: float = Field(..., description="max |r w'| / (mu w*) on the window")
    slope_ratio_range: Tuple[float, float] = Field(
        ..., description="min and max of f' / (-(w*/(p(N+1)-2N))^{1/(p-1)} r^{-2/(2-p)})"
    )
    w_deviation: float = Field(..., description="max |w/w* - 1| on the window")
    identity_gap: float = Field(..., description="plateau identity evaluated at w = w*")
    identity_gap_on_plateau: float = Field(
        ..., description="plateau identity evaluated at the median w of the window"
    )


def critical_asymptotics(
    profile: Profile, consts: DerivedConstants, tolerance: float = PLATEAU_TOLERANCE
) -> CriticalReport:
    """How closely a near-critical orbit follows w = w* on its plateau.

    Raises:
        NoPlateau: the orbit never comes within ``tolerance`` of w*.
    """
    i0, i1 = plateau_window(profile, consts, tolerance)
    sl = slice(i0, i1 + 1)
    c = consts.as_float()
    p, mu, w_star = float(c.p), float(c.mu), float(c.w_star)
    D = float(c.uniq_denominator)
    r = profile.r[sl]
    w = profile.w[sl]

    rwprime = np.abs(r * profile.wprime[sl]) / (mu * w_star)
    target = -((w_star / D) ** (1 / (p - 1))) * r ** (-2 / (2 - p))
    ratio = profile.fprime[sl] / target
    w_mid = float(np.median(w))
    gap_mid = abs(mu * w_mid - (w_mid / D) ** (1 / (p - 1))) / (mu * w_mid)

    report = CriticalReport(
        window=(float(r[0]), float(r[-1])),
        decades=float(math.log10(r[-1] / r[0])),
        max_rwprime=float(rwprime.max()),
        slope_ratio_range=(float(ratio.min()), float(ratio.max())),
        w_deviation=float(np.max(np.abs(w / w_star - 1))),
        identity_gap=plateau_identity_gap(consts),
        identity_gap_on_plateau=float(gap_mid),
    )
    logger.info(
        "plateau [%.4g, %.4g] (%.2f decades): max|rw'|/(mu w*)=%.3g",
        report.window[0],
        report.window[1],
        report.decades,
        report.max_rwprime,
    )
    return report
