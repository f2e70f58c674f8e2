"""Box-constrained projected gradient descent with Armijo backtracking.

Trial points are ``P(p - a g)``, projected onto ``[0, 1]^n``, with the
step length ``a`` taken from the short Barzilai-Borwein formula ``s.y / y.y``
after the first iteration (the first step is ``initial_step / |g|_inf``), and
backtracked by ``backtrack`` until the Armijo condition holds.  Only accepted
points are committed to the tracker.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import check_box
from .objective import Evaluation, Objective

STEP_MIN, STEP_MAX = 1e-30, 1e30


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 100
    g_tol: float = 1e-12
    step_tol: float = 1e-10
    initial_step: float = 1.0
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 50
    fd_step: float = 1e-6
    gradient: str = "closed-form"

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        for name in ("g_tol", "step_tol", "initial_step", "armijo", "fd_step"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive" % name)
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.gradient not in ("closed-form", "fd"):
            raise ValueError("gradient mode must be 'closed-form' or 'fd'")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    p: np.ndarray
    g: float
    f: float
    k: int
    phi: float
    warning: str | None = None
    terms: dict = field(default_factory=dict)


@dataclass
class RunResult:
    p_opt: np.ndarray
    g_opt: float
    f_opt: float
    k_opt: int
    iterations: int
    function_calls: int
    gradient_calls: int
    start: IterationRecord
    log: list
    wall_time: float
    reason: str
    warnings: list
    evaluated: list
    final: Evaluation | None = None
    error: str | None = None

    @property
    def records(self) -> list:
        """Start point followed by every accepted iterate."""
        return [self.start] + list(self.log)


class OptimizationError(RuntimeError):
    """Pipeline failure during a run; ``partial`` holds the result up to that point."""

    def __init__(self, message, partial: RunResult):
        super().__init__(message)
        self.partial = partial


def _record(ev: Evaluation, iteration: int, warning=None) -> IterationRecord:
    return IterationRecord(iteration, ev.p.copy(), ev.g, ev.f, ev.k, ev.phi, warning, dict(ev.terms))


def fd_gradient(objective: Objective, ev: Evaluation, iteration: int = 0) -> np.ndarray:
    """Forward-difference gradient, backward at the upper bound; probes stay in the box."""
    return objective.fd_gradient(ev, iteration)


def optimize(objective: Objective, p0, cfg: OptimizerConfig | None = None) -> RunResult:
    """Minimize ``objective`` over the unit box starting from ``p0``."""
    cfg = cfg or OptimizerConfig()
    objective.fd_step = cfg.fd_step
    grad_fn = objective.gradient if cfg.gradient == "closed-form" else objective.fd_gradient
    t0 = time.perf_counter()
    p = check_box(p0).copy()
    log: list[IterationRecord] = []
    state = {"ev": None, "start": None}

    def result(reason, error=None):
        ev = state["ev"]
        return RunResult(
            p_opt=ev.p.copy() if ev else p.copy(), g_opt=ev.g if ev else np.nan, f_opt=ev.f if ev else np.nan,
            k_opt=ev.k if ev else objective.tracker.index, iterations=len(log),
            function_calls=objective.function_calls, gradient_calls=objective.gradient_calls,
            start=state["start"], log=log, wall_time=time.perf_counter() - t0, reason=reason,
            warnings=objective.tracker.warnings, evaluated=list(objective.evaluated), final=ev, error=error)

    try:
        ev = objective.evaluate(p, 0)
        objective.commit(ev, 0)
        state["ev"] = ev
        state["start"] = _record(ev, 0)
        if ev.g < cfg.g_tol:
            return result("g_tol")
        grad = grad_fn(ev, 0)
        step = cfg.initial_step / max(np.abs(grad).max(), STEP_MIN)
        for it in range(1, cfg.max_iterations + 1):
            d = np.clip(ev.p - step * grad, 0.0, 1.0) - ev.p
            if np.abs(d).max() <= cfg.step_tol:
                return result("stationary")
            slope = float(grad @ d)
            t = 1.0
            for _ in range(cfg.max_backtracks + 1):
                trial = objective.evaluate(np.clip(ev.p + t * d, 0.0, 1.0), it)
                if trial.g <= ev.g + cfg.armijo * t * slope:
                    break
                t *= cfg.backtrack
                if t * np.abs(d).max() <= cfg.step_tol:
                    return result("line_search")
            else:
                return result("line_search")
            warning = objective.commit(trial, it)
            s = trial.p - ev.p
            new_grad = grad_fn(trial, it)
            y = new_grad - grad
            sy = float(s @ y)
            step = float(np.clip(sy / float(y @ y), STEP_MIN, STEP_MAX)) if sy > 0 else \
                cfg.initial_step / max(np.abs(new_grad).max(), STEP_MIN)
            log.append(_record(trial, it, warning))
            ev, grad = trial, new_grad
            state["ev"] = ev
            if ev.g < cfg.g_tol:
                return result("g_tol")
            if np.abs(s).max() <= cfg.step_tol:
                return result("step_tol")
        return result("max_iterations")
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        partial = result("error", "%s: %s" % (type(exc).__name__, exc))
        raise OptimizationError(str(exc), partial) from exc
