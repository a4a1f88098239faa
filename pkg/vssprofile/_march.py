# vssprofile/_march.py
"""
Event-driven marching of a first-order system with scipy's explicit
Runge-Kutta solver objects.

The solver is advanced one accepted step at a time so the caller keeps
control of the step budget, of sampling on a fixed radius grid and of event
localization on the step's dense output.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import DOP853, RK45
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

SOLVERS = {"DOP853": DOP853, "RK45": RK45}

System = Callable[[float, np.ndarray], np.ndarray]
EventFunction = Callable[[float, np.ndarray], float]


@dataclass(frozen=True)
class Event:
    """A scalar function of (r, y) whose sign change is located by root finding.

    ``direction`` is -1 for a crossing from positive to non-positive values
    and +1 for the opposite. Non-terminal events are recorded at their first
    occurrence only.
    """

    name: str
    func: EventFunction
    terminal: bool = True
    direction: int = -1

    def crossed(self, before: float, after: float) -> bool:
        if self.direction < 0:
            return before > 0.0 and after <= 0.0
        return before < 0.0 and after >= 0.0


@dataclass
class MarchResult:
    r: np.ndarray
    y: np.ndarray
    events: Dict[str, float] = field(default_factory=dict)
    terminal: Optional[str] = None
    r_end: float = 0.0
    steps: int = 0


class MarchInterrupted(Exception):
    """The march stopped before any terminal condition.

    ``reason`` is one of ``"step_limit"``, ``"non_finite"`` or
    ``"solver_failed"``; ``partial`` holds everything sampled so far.
    """

    def __init__(self, reason: str, message: str, partial: MarchResult):
        self.reason = reason
        self.partial = partial
        super().__init__(message)


def log_grid(r_lo: float, r_hi: float, per_decade: int) -> np.ndarray:
    """Points 10**(j/per_decade) lying in the open interval (r_lo, r_hi).

    The grid is global, so every run shares the same sample radii.
    """
    if r_hi <= r_lo:
        return np.empty(0)
    j_lo = int(np.floor(np.log10(r_lo) * per_decade))
    j_hi = int(np.ceil(np.log10(r_hi) * per_decade))
    grid = 10.0 ** (np.arange(j_lo, j_hi + 1) / per_decade)
    return grid[(grid > r_lo) & (grid < r_hi)]


def march(
    system: System,
    r0: float,
    y0: Sequence[float],
    r_max: float,
    *,
    sample_radii: np.ndarray,
    events: Sequence[Event] = (),
    rel_tol: float,
    abs_tol: float,
    max_steps: int,
    method: str = "DOP853",
) -> MarchResult:
    """Integrate ``system`` from ``r0`` towards ``r_max``.

    The returned samples start at ``r0``, include every radius of
    ``sample_radii`` reached before termination, and end at the terminal
    radius (an event root or ``r_max``).

    Raises:
        MarchInterrupted: on step budget exhaustion, a non-finite state or a
            solver failure; ``partial`` carries the samples taken so far.
    """
    solver = SOLVERS[method](
        system, r0, np.asarray(y0, dtype=float), r_max, rtol=rel_tol, atol=abs_tol
    )
    pending = np.sort(np.asarray(sample_radii, dtype=float))
    pending = pending[(pending > r0) & (pending < r_max)]
    cursor = 0

    rs: List[float] = [r0]
    ys: List[np.ndarray] = [np.array(solver.y, copy=True)]
    recorded: Dict[str, float] = {}
    g_prev = [ev.func(r0, solver.y) for ev in events]
    steps = 0

    def _result(terminal: Optional[str], r_end: float) -> MarchResult:
        return MarchResult(
            r=np.asarray(rs),
            y=np.vstack(ys),
            events=dict(recorded),
            terminal=terminal,
            r_end=r_end,
            steps=steps,
        )

    while True:
        if steps >= max_steps:
            raise MarchInterrupted(
                "step_limit",
                f"step budget of {max_steps} exhausted at r={solver.t:.6g}",
                _result("step_limit", solver.t),
            )
        message = solver.step()
        steps += 1
        if solver.status == "failed":
            raise MarchInterrupted(
                "solver_failed",
                f"solver failed at r={solver.t:.6g}: {message}",
                _result("solver_failed", solver.t),
            )
        if not np.all(np.isfinite(solver.y)):
            raise MarchInterrupted(
                "non_finite",
                f"non-finite state {solver.y} at r={solver.t:.6g}",
                _result("non_finite", solver.t),
            )

        t_old, t_new = solver.t_old, solver.t
        g_new = [ev.func(t_new, solver.y) for ev in events]
        crossings = [
            i
            for i, ev in enumerate(events)
            if ev.crossed(g_prev[i], g_new[i])
            and (ev.terminal or ev.name not in recorded)
        ]
        upto = cursor
        while upto < len(pending) and pending[upto] <= t_new:
            upto += 1

        dense = solver.dense_output() if (crossings or upto > cursor) else None

        terminal_name: Optional[str] = None
        terminal_r = t_new
        if crossings:
            xtol = max(min(abs_tol, rel_tol * t_old), 1e-300)
            roots = []
            for i in crossings:
                ev = events[i]
                if g_new[i] == 0.0:
                    root = t_new
                else:
                    root = brentq(
                        lambda r, ev=ev: ev.func(r, dense(r)), t_old, t_new, xtol=xtol
                    )
                roots.append((root, ev))
            roots.sort(key=lambda item: item[0])
            for root, ev in roots:
                if ev.terminal:
                    terminal_name, terminal_r = ev.name, root
                    break
            for root, ev in roots:
                if not ev.terminal and root <= terminal_r:
                    recorded.setdefault(ev.name, root)
                    logger.debug("event %s at r=%.12g", ev.name, root)

        if upto > cursor:
            batch = pending[cursor:upto]
            if terminal_name is not None:
                batch = batch[batch < terminal_r]
            if batch.size:
                values = dense(batch)
                rs.extend(batch.tolist())
                ys.extend(values.T)
            cursor = upto

        if terminal_name is not None:
            rs.append(terminal_r)
            ys.append(np.asarray(dense(terminal_r), dtype=float))
            logger.debug("terminal event %s at r=%.12g after %d steps", terminal_name, terminal_r, steps)
            return _result(terminal_name, terminal_r)

        if solver.status == "finished":
            if rs[-1] < t_new:
                rs.append(t_new)
                ys.append(np.array(solver.y, copy=True))
            logger.debug("horizon r=%.6g reached after %d steps", t_new, steps)
            return _result("horizon", t_new)

        g_prev = g_new
