"""Objective functions for frequency tuning and field flatness.

Three variants are supported:

``squared-error-lambda``
    ``0.5 (lam_ref - lam_k)^2``
``squared-error-f-penalty``
    ``(f_ref - f_k)^2 + s |p - p_ref|^2``
``flatness-combined``
    ``(1 - eta1) + (1 - eta2) + alpha (f_ref - f_k)^2 + beta |p - p_ref|^2``

``p - p_ref`` is measured in normalized parameter space.  The tracked index
``k`` comes from a :class:`~cavopt.tracking.Tracker`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .eigen import freq_to_lambda, lambda_to_freq
from .geometry import check_box
from .pipeline import AxisSamples
from .tracking import Selection, Tracker

VARIANTS = ("squared-error-lambda", "squared-error-f-penalty", "flatness-combined")
GRADIENT_MODES = ("closed-form", "fd")
STD_DDOF = 1


@dataclass(frozen=True)
class FlatnessReport:
    peaks: np.ndarray
    eta1: float
    eta2: float
    samples: AxisSamples | None = None
    ddof: int = STD_DDOF


def flatness_from_peaks(peaks, ddof: int = STD_DDOF) -> tuple[float, float]:
    """``(eta1, eta2)`` of a set of cell peak values."""
    pk = np.abs(np.asarray(peaks, dtype=float))
    mean = pk.mean()
    if not mean > 0:
        raise ValueError("flatness undefined for zero mean peak")
    eta1 = 1.0 - (pk.max() - pk.min()) / mean
    eta2 = 1.0 - (pk.std(ddof=ddof) if pk.size > ddof else 0.0) / mean
    return float(eta1), float(eta2)


def flatness(samples: AxisSamples, windows, ddof: int = STD_DDOF) -> FlatnessReport:
    """Per-cell peaks of ``samples`` and the two flatness measures.

    ``windows`` holds one ``[xi0, xi1]`` interval per cell; a sample belongs
    to the cell whose half-open interval contains it (the last one is closed).
    """
    windows = np.asarray(windows, dtype=float).reshape(-1, 2)
    peaks = np.empty(windows.shape[0])
    for j, (a, b) in enumerate(windows):
        last = j == windows.shape[0] - 1
        inside = (samples.xi >= a) & ((samples.xi <= b) if last else (samples.xi < b))
        if not inside.any():
            raise ValueError("cell window [%g, %g] holds no samples" % (a, b))
        peaks[j] = np.abs(samples.values[inside]).max()
    eta1, eta2 = flatness_from_peaks(peaks, ddof)
    return FlatnessReport(peaks, eta1, eta2, samples, ddof)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Variant and constants of an objective.

    Frequencies are in Hz, ``alpha`` in 1/Hz^2, ``s`` in Hz^2.
    """

    variant: str
    lambda_ref: float | None = None
    f_ref: float | None = None
    s: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    p_ref: tuple | None = None
    gradient: str = "closed-form"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError("unknown objective variant %r" % self.variant)
        if self.gradient not in GRADIENT_MODES:
            raise ValueError("gradient mode must be one of %s" % (GRADIENT_MODES,))
        if min(self.s, self.alpha, self.beta) < 0:
            raise ValueError("objective weights must be nonnegative")
        if self.variant == "squared-error-lambda":
            if (self.lambda_ref is None) == (self.f_ref is None):
                raise ValueError("squared-error-lambda needs exactly one of lambda_ref, f_ref")
            if self.s or self.alpha or self.beta:
                raise ValueError("squared-error-lambda takes no weights")
        else:
            if self.f_ref is None or self.lambda_ref is not None:
                raise ValueError("%s needs f_ref (and no lambda_ref)" % self.variant)
            if self.variant == "squared-error-f-penalty" and (self.alpha or self.beta):
                raise ValueError("squared-error-f-penalty takes s only")
            if self.variant == "flatness-combined" and self.s:
                raise ValueError("flatness-combined takes alpha and beta, not s")
        weighted = self.s if self.variant == "squared-error-f-penalty" else self.beta
        if weighted and self.p_ref is None:
            raise ValueError("a parameter penalty needs p_ref")

    @property
    def target_lambda(self) -> float:
        return self.lambda_ref if self.lambda_ref is not None else freq_to_lambda(self.f_ref)

    def with_gradient(self, mode: str) -> "ObjectiveSpec":
        return ObjectiveSpec(self.variant, self.lambda_ref, self.f_ref, self.s, self.alpha, self.beta,
                             self.p_ref, mode)


@dataclass(frozen=True, eq=False)
class Evaluation:
    p: np.ndarray
    g: float
    terms: dict
    k: int
    phi: float
    lam: float
    f: float
    selection: Selection
    snapshot: object
    flatness: FlatnessReport | None = None

    def to_dict(self) -> dict:
        return {"g": self.g, "terms": dict(self.terms), "k": self.k + 1, "phi": self.phi}


def fd_steps(p, fd_step: float):
    """Forward steps ``max(fd_step |p_n|, fd_step)``, negated where that would leave the box."""
    p = np.asarray(p, dtype=float)
    h = np.maximum(fd_step * np.abs(p), fd_step)
    return np.where(p + h > 1.0, -h, h)


@dataclass
class Objective:
    """Evaluates one objective on a pipeline, consulting the tracker at every call.

    Counts every objective evaluation (including finite-difference probes) in
    ``function_calls`` and records each evaluated design vector.
    """

    spec: ObjectiveSpec
    pipeline: object
    tracker: Tracker
    fd_step: float = 1e-6
    flatness_step: float = 1e-3
    function_calls: int = 0
    gradient_calls: int = 0
    evaluated: list = field(default_factory=list)

    def __post_init__(self):
        if self.spec.p_ref is not None and len(self.spec.p_ref) != self.pipeline.n_params:
            raise ValueError("p_ref has %d entries, expected %d" % (len(self.spec.p_ref), self.pipeline.n_params))

    def _pdiff(self, p):
        if self.spec.p_ref is None:
            return np.zeros_like(p)
        return p - np.asarray(self.spec.p_ref, dtype=float)

    def _flatness(self, snap, k) -> FlatnessReport:
        return flatness(self.pipeline.axis_field(snap, k), self.pipeline.cells)

    def evaluate(self, p, iteration: int = 0) -> Evaluation:
        p = check_box(p, self.pipeline.n_params).copy()
        self.function_calls += 1
        self.evaluated.append(p.copy())
        snap = self.pipeline.solve(p)
        sel = self.tracker.select(snap.solution, snap.mass, iteration)
        k = sel.index
        lam = float(snap.solution.eigenvalues[k])
        f = lambda_to_freq(max(lam, 0.0))
        spec = self.spec
        flat = None
        if spec.variant == "squared-error-lambda":
            terms = {"lambda": 0.5 * (spec.target_lambda - lam) ** 2}
        else:
            pd = self._pdiff(p)
            if spec.variant == "squared-error-f-penalty":
                terms = {"frequency": (spec.f_ref - f) ** 2, "penalty": spec.s * float(pd @ pd)}
            else:
                flat = self._flatness(snap, k)
                terms = {
                    "eta1": 1.0 - flat.eta1,
                    "eta2": 1.0 - flat.eta2,
                    "frequency": spec.alpha * (spec.f_ref - f) ** 2,
                    "penalty": spec.beta * float(pd @ pd),
                }
        g = float(sum(terms.values()))
        return Evaluation(p, g, terms, k, sel.phi, lam, f, sel, snap, flat)

    def _flatness_value(self, p, iteration) -> float:
        ev = self.evaluate(p, iteration)
        return ev.terms["eta1"] + ev.terms["eta2"]

    def gradient(self, ev: Evaluation, iteration: int = 0, delta: float | None = None) -> np.ndarray:
        """Closed-form gradient at an evaluated point.

        ``delta`` overrides the control-point difference step of nonlinear
        families (default: the pipeline's choice).

        The flatness terms are not differentiable where two cell peaks tie
        (for a symmetric chain the two end cells tie along the whole mirror
        plane), so they are differenced centrally, which averages the
        one-sided slopes there; one-sided differences are used at the box
        faces.
        """
        self.gradient_calls += 1
        spec = self.spec
        p, lam, f = ev.p, ev.lam, ev.f
        dlam = self.pipeline.eigen_derivative(ev.snapshot, ev.k, delta).dlam
        if spec.variant == "squared-error-lambda":
            return -(spec.target_lambda - lam) * dlam
        df = f / (2.0 * lam) * dlam
        pd = self._pdiff(p)
        if spec.variant == "squared-error-f-penalty":
            return -2.0 * (spec.f_ref - f) * df + 2.0 * spec.s * pd
        grad = -2.0 * spec.alpha * (spec.f_ref - f) * df + 2.0 * spec.beta * pd
        base = ev.terms["eta1"] + ev.terms["eta2"]
        for n, h in enumerate(np.full(p.size, self.flatness_step)):
            lo, hi = max(p[n] - h, 0.0), min(p[n] + h, 1.0)
            values = []
            for x in (lo, hi):
                q = p.copy()
                q[n] = x
                values.append(base if x == p[n] else self._flatness_value(q, iteration))
            grad[n] += (values[1] - values[0]) / (hi - lo)
        return grad

    def fd_gradient(self, ev: Evaluation, iteration: int = 0) -> np.ndarray:
        """Forward-difference gradient of the whole objective."""
        self.gradient_calls += 1
        p = ev.p
        grad = np.empty_like(p)
        for n, h in enumerate(fd_steps(p, self.fd_step)):
            q = p.copy()
            q[n] += h
            grad[n] = (self.evaluate(q, iteration).g - ev.g) / h
        return grad

    def commit(self, ev: Evaluation, iteration: int = 0) -> str | None:
        return self.tracker.commit(ev.selection, ev.snapshot.solution, ev.snapshot.mass, iteration)

    def mode_label(self, ev: Evaluation) -> str | None:
        labels = getattr(ev.snapshot, "labels", None)
        return None if labels is None else labels[ev.k]
