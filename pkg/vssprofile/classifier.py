# vssprofile/classifier.py
"""
Sorting shooting parameters into the extinct set A and the plateau-crossing
set C, and bisecting between them towards the critical parameter a*.

The critical value itself is never returned as a label: it is the limit of
the brackets produced by :func:`bisect`. Runs that neither go extinct nor
cross the plateau before the horizon are labelled Undetermined.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from vssprofile._utils import StrEnum
from vssprofile.params import DerivedConstants, InvalidParameter, plateau_cap
from vssprofile.shooter import IntegratorSettings, Profile, Termination, integrate

logger = logging.getLogger(__name__)

MAX_DOUBLINGS = 60
HORIZON_RETRY_FACTOR = 4.0


class ClassifierError(Exception):
    """Base class for classification and bracketing failures."""


class SweepExhausted(ClassifierError):
    def __init__(self, direction: str, last_a: float):
        self.direction = direction
        self.last_a = last_a
        super().__init__(
            f"no {'A' if direction == 'down' else 'C'} member found after "
            f"{MAX_DOUBLINGS} {'halvings' if direction == 'down' else 'doublings'} "
            f"(last a={last_a:.6g}); check the configuration or raise R_max"
        )


class BracketError(ClassifierError):
    def __init__(self, a: float, expected: str, got: str):
        self.a = a
        self.expected = expected
        self.got = got
        super().__init__(f"a={a:.17g} classified {got}, expected {expected}")


class ResolutionFloor(ClassifierError):
    """The bracket cannot shrink further at the working precision."""

    def __init__(self, a_lo: float, a_hi: float, iterations: int, hint: str = "rerun with --extended-precision"):
        self.a_lo = a_lo
        self.a_hi = a_hi
        self.iterations = iterations
        super().__init__(
            f"bracket [{a_lo:.17g}, {a_hi:.17g}] hit the resolution floor after "
            f"{iterations} iterations; {hint}"
        )


class Label(StrEnum):
    A = "A"
    C = "C"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class ClassLabel:
    """Outcome of one shooting run, with the event data that witnesses it."""

    a: float
    kind: Label
    R: Optional[float] = None
    R1: Optional[float] = None
    r_cross: Optional[float] = None
    w_at_horizon: Optional[float] = None
    wprime_at_horizon: Optional[float] = None
    w_max: float = 0.0
    wprime_min: float = 0.0
    wprime_sign_changes: int = 0
    profile: Optional[Profile] = field(default=None, repr=False, compare=False)

    def without_profile(self) -> "ClassLabel":
        return replace(self, profile=None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a": self.a,
            "label": str(self.kind),
            "R": self.R,
            "R1": self.R1,
            "r_cross": self.r_cross,
            "w_at_horizon": self.w_at_horizon,
            "wprime_at_horizon": self.wprime_at_horizon,
            "w_max": self.w_max,
            "wprime_min": self.wprime_min,
            "wprime_sign_changes": self.wprime_sign_changes,
        }


def wprime_sign_changes(profile: Profile) -> int:
    """Number of sign changes of the sampled w' over interior samples."""
    signs = np.sign(profile.wprime[1:])
    signs = signs[signs != 0]
    return int(np.count_nonzero(np.diff(signs)))


def classify(
    a: float, settings: IntegratorSettings, consts: DerivedConstants
) -> ClassLabel:
    """Run one orbit and label it A, C or Undetermined.

    Integrator errors (StepLimit, NonFiniteState) propagate.
    """
    profile = integrate(a, settings, consts)
    common = dict(
        a=float(a),
        R1=profile.R1,
        w_max=float(np.max(profile.w[profile.interior()])),
        wprime_min=float(np.min(profile.wprime[profile.interior()])),
        wprime_sign_changes=wprime_sign_changes(profile),
        profile=profile,
    )
    if profile.termination == Termination.F_HIT_ZERO:
        label = ClassLabel(kind=Label.A, R=profile.R, **common)
    elif profile.termination == Termination.W_CROSSED_PLATEAU:
        label = ClassLabel(kind=Label.C, r_cross=profile.r_cross, **common)
    else:
        label = ClassLabel(
            kind=Label.UNDETERMINED,
            w_at_horizon=float(profile.w[-1]),
            wprime_at_horizon=float(profile.wprime[-1]),
            **common,
        )
    logger.info("a=%.17g -> %s (r_end=%.6g)", float(a), label.kind, profile.r_end)
    return label


# ─────────────────────────────────────────────────────────────
#  Bracketing
# ─────────────────────────────────────────────────────────────


def seed_bracket(
    settings: IntegratorSettings, consts: DerivedConstants
) -> Tuple[float, float]:
    """Find a_A in A and a_C in C among powers of two.

    Halving from a = 1 stops at the first A member and remembers the smallest
    C member met on the way. Only if none was met, doubling from a = 2 runs
    until the first C member; it never passes the closed-form cap above which
    every orbit crosses the plateau.

    Raises:
        SweepExhausted: no member found within 60 halvings or doublings.
    """
    a_A: Optional[float] = None
    a_C: Optional[float] = None
    for k in range(MAX_DOUBLINGS + 1):
        a = 2.0**-k
        kind = classify(a, settings, consts).kind
        if kind == Label.A:
            a_A = a
            break
        if kind == Label.C:
            a_C = a
    if a_A is None:
        raise SweepExhausted("down", 2.0**-MAX_DOUBLINGS)

    if a_C is None:
        cap = plateau_cap(consts)
        logger.debug("upward sweep capped at a=%.6g", cap)
        for k in range(1, MAX_DOUBLINGS + 1):
            a = 2.0**k
            kind = classify(a, settings, consts).kind
            if kind == Label.C:
                a_C = a
                break
            if a >= cap:
                raise SweepExhausted("up", a)
        else:
            raise SweepExhausted("up", 2.0**MAX_DOUBLINGS)

    logger.info("seed bracket: a_A=%.6g a_C=%.6g", a_A, a_C)
    return a_A, a_C


@dataclass(frozen=True)
class Bracket:
    """A shrinking interval [a_lo, a_hi] with a_lo in A and a_hi in C."""

    a_lo: Any
    a_hi: Any
    iterations: int
    target_width: float
    midpoint_profile: Profile = field(repr=False)
    history: Tuple[Tuple[float, float], ...] = field(default=(), repr=False)

    @property
    def midpoint(self) -> float:
        return float((self.a_lo + self.a_hi) / 2)

    @property
    def relative_width(self) -> float:
        return float((self.a_hi - self.a_lo) / self.a_lo)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "a_lo": float(self.a_lo),
            "a_hi": float(self.a_hi),
            "iterations": self.iterations,
            "midpoint": self.midpoint,
            "relative_width": self.relative_width,
            "target_width": self.target_width,
        }
        if isinstance(self.a_lo, np.longdouble):
            data["a_lo_extended"] = np.format_float_scientific(self.a_lo, unique=True)
            data["a_hi_extended"] = np.format_float_scientific(self.a_hi, unique=True)
        return data


def _side(
    a: float, settings: IntegratorSettings, consts: DerivedConstants
) -> Label:
    label = classify(a, settings, consts)
    if label.kind != Label.UNDETERMINED:
        return label.kind
    longer = settings.with_horizon(settings.R_max * HORIZON_RETRY_FACTOR)
    logger.warning(
        "a=%.17g undetermined at R_max=%.3g; retrying at %.3g",
        a,
        settings.R_max,
        longer.R_max,
    )
    label = classify(a, longer, consts)
    if label.kind != Label.UNDETERMINED:
        return label.kind
    side = Label.A if label.w_at_horizon < float(consts.w_star) else Label.C
    logger.warning(
        "a=%.17g still undetermined (w=%.6g at horizon); taking side %s",
        a,
        label.w_at_horizon,
        side,
    )
    return side


def bisect(
    a_A: float,
    a_C: float,
    target_width: float,
    settings: IntegratorSettings,
    consts: DerivedConstants,
    check_endpoints: bool = True,
) -> Bracket:
    """Bisect [a_A, a_C] until (a_hi - a_lo)/a_lo <= target_width.

    Undetermined midpoints get one retry with a four times longer horizon;
    if that is still inconclusive the side is chosen by comparing w at the
    horizon with w*. Arithmetic on the bracket uses longdouble when the
    constants were validated with extended precision, but every midpoint is
    shot in double precision, so the bracket cannot resolve parameters
    closer than adjacent doubles.

    Raises:
        BracketError: an endpoint does not classify as expected.
        ResolutionFloor: the width reached 32 machine epsilons first, or the
            midpoint rounds to an endpoint in double precision.
    """
    if check_endpoints:
        for a, expected in ((a_A, Label.A), (a_C, Label.C)):
            got = classify(a, settings, consts).kind
            if got != expected:
                raise BracketError(a, str(expected), str(got))

    dt = consts.dtype
    lo, hi = dt(a_A), dt(a_C)
    eps = dt(consts.eps)
    history: List[Tuple[float, float]] = [(float(lo), float(hi))]
    iterations = 0
    while (hi - lo) / lo > target_width:
        if hi - lo <= 32 * eps * lo:
            raise ResolutionFloor(float(lo), float(hi), iterations)
        mid = (lo + hi) / 2
        if float(mid) in (float(lo), float(hi)):
            raise ResolutionFloor(
                float(lo), float(hi), iterations, hint="midpoints are shot in double precision"
            )
        if _side(float(mid), settings, consts) == Label.A:
            lo = mid
        else:
            hi = mid
        iterations += 1
        history.append((float(lo), float(hi)))
        logger.info(
            "bisect %d: [%.17g, %.17g] width %.3g",
            iterations,
            float(lo),
            float(hi),
            float((hi - lo) / lo),
        )

    midpoint = float((lo + hi) / 2)
    profile = integrate(midpoint, settings, consts)
    return Bracket(
        a_lo=lo,
        a_hi=hi,
        iterations=iterations,
        target_width=target_width,
        midpoint_profile=profile,
        history=tuple(history),
    )


# ─────────────────────────────────────────────────────────────
#  Sweeps
# ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SweepItem:
    a: float
    label: Optional[ClassLabel] = None
    error: Optional[str] = None


def _classify_item(
    a: float, settings: IntegratorSettings, consts: DerivedConstants
) -> SweepItem:
    try:
        return SweepItem(a=a, label=classify(a, settings, consts).without_profile())
    except Exception as e:
        return SweepItem(a=a, error=f"{type(e).__name__}: {e}")


def sweep(
    a_values: Sequence[float],
    settings: IntegratorSettings,
    consts: DerivedConstants,
    jobs: int = 1,
    progress: bool = False,
) -> List[SweepItem]:
    """Classify every value independently; output order follows input order.

    With ``jobs > 1`` the runs are spread over worker processes. Each run is
    deterministic, so the result does not depend on ``jobs``. A failing run
    is recorded in its item's ``error`` and does not stop the sweep.
    """
    values = [float(a) for a in a_values]
    for a in values:
        if not a > 0:
            raise InvalidParameter(f"shooting parameters must be positive, got {a}")

    results: List[Optional[SweepItem]] = [None] * len(values)
    with tqdm(total=len(values), desc="sweep", unit=" run", disable=not progress) as bar:
        if jobs <= 1:
            for i, a in enumerate(values):
                results[i] = _classify_item(a, settings, consts)
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                future_to_index = {
                    executor.submit(_classify_item, a, settings, consts): i
                    for i, a in enumerate(values)
                }
                for future in as_completed(future_to_index):
                    results[future_to_index[future]] = future.result()
                    bar.update(1)
    return [item for item in results if item is not None]


def interval_pattern(items: Sequence[SweepItem]) -> str:
    """Compress the labels of a sweep sorted by a into a run pattern like 'A C'."""
    ordered = sorted((item for item in items if item.label is not None), key=lambda item: item.a)
    runs: List[str] = []
    for item in ordered:
        tag = "U" if item.label.kind == Label.UNDETERMINED else str(item.label.kind)
        if not runs or runs[-1] != tag:
            runs.append(tag)
    return " ".join(runs)


def interval_structure_ok(items: Sequence[SweepItem]) -> bool:
    """True when sorted labels read A...A [U...U] C...C (any part may be empty)."""
    pattern = interval_pattern(items).split()
    order = {"A": 0, "U": 1, "C": 2}
    ranks = [order[tag] for tag in pattern]
    return ranks == sorted(ranks) and len(ranks) == len(set(ranks))
