"""Parameter sweeps, derivative checks and field reports built on a scenario."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import assemble
from .eigen import gevp_residuals
from .geometry import check_box
from .objective import flatness
from .sensitivity import SensitivityError

AFFINE_TOL = {"dK": 1e-6, "dM": 1e-6, "dlam": 1e-5, "dg": 1e-5}
NONLINEAR_TOL = {"dK": 1e-4, "dM": 1e-4, "dlam": 1e-3, "dg": 1e-3}
FLATNESS_DG_TOL = 1e-3


@dataclass
class SweepResult:
    columns: list
    rows: list
    warnings: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows], dtype=float)


def sweep(scenario, param: int | None = None, samples: int | None = None, p_base=None) -> SweepResult:
    """Frequencies along one parameter with the other parameters held at ``p_base``.

    Columns: ``p``, ``x`` (physical value), ``f_1..f_K`` by magnitude order,
    ``f_tracked``, ``k_tracked`` (1-based), ``phi`` and, for closed-form
    pipelines, ``f_<label>`` per catalogued mode.
    """
    conf = scenario.data.get("sweep", {})
    param = conf.get("param", 0) if param is None else param
    samples = conf.get("samples", 21) if samples is None else samples
    pipe = scenario.pipeline
    if not 0 <= param < pipe.n_params:
        raise ValueError("parameter index %d out of range" % param)
    if samples < 1:
        raise ValueError("need at least one sample")
    base = check_box(scenario.p0 if p_base is None else p_base, pipe.n_params).copy()
    xs = np.linspace(0.0, 1.0, samples) if samples > 1 else np.array([base[param]])
    tracker = scenario.tracker()
    rows, columns = [], None
    labels = getattr(pipe, "modes", None) if pipe.analytic else None
    for i, x in enumerate(xs):
        q = base.copy()
        q[param] = x
        snap = pipe.solve(q)
        sol = snap.solution
        sel = tracker.select(sol, snap.mass, i)
        tracker.commit(sel, sol, snap.mass, i)
        freqs = sol.frequencies
        if columns is None:
            columns = ["p", "x"] + ["f_%d" % (j + 1) for j in range(freqs.size)] + ["f_tracked", "k_tracked", "phi"]
            if labels:
                columns += ["f_%s" % lab for lab in labels]
        row = [float(x), float(pipe.physical(q)[param])] + [float(v) for v in freqs]
        row += [float(freqs[sel.index]), sel.index + 1, sel.phi]
        if labels:
            by_label = pipe.frequencies_by_label(snap)
            row += [by_label[lab] for lab in labels]
        rows.append(row)
    return SweepResult(columns, rows, tracker.warnings)


def _interior_point(p, h):
    return np.clip(p, h, 1.0 - h)


def _rel(a, b, scale):
    diff = np.linalg.norm(np.asarray(a) - np.asarray(b))
    ref = max(np.linalg.norm(b), scale)
    return float(diff / ref)


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def check_derivatives(scenario, p=None, h: float = 1e-5, delta: float | None = None,
                      n_modes: int = 3, richardson: bool = True) -> dict:
    """Closed-form derivatives against central differences of the full pipeline.

    ``delta`` is the control-point difference step of nonlinear families
    (default: the pipeline's own step, else ``1e-3``).

    Relative errors use Frobenius norms for matrices; a derivative that
    vanishes is compared against ``1e-12`` times the matrix norm instead.
    """
    pipe = scenario.pipeline
    n = pipe.n_params
    p = _interior_point(check_box(scenario.p0 if p is None else p, n), h)
    affine = pipe.analytic or pipe.family.is_affine
    tol = dict(AFFINE_TOL if affine else NONLINEAR_TOL)
    if scenario.spec.variant == "flatness-combined":
        tol["dg"] = max(tol["dg"], FLATNESS_DG_TOL)
    if delta is None and not affine:
        delta = pipe.velocity_step if pipe.velocity_step is not None else 1e-3
    report = {"p": p.tolist(), "h": h, "delta": delta, "affine": bool(affine), "thresholds": tol, "parameters": []}
    snap = pipe.solve(p)
    minus = [pipe.solve(np.where(np.arange(n) == j, p - h, p)) for j in range(n)]
    plus = [pipe.solve(np.where(np.arange(n) == j, p + h, p)) for j in range(n)]
    modes = sorted(set(range(min(n_modes, len(snap.solution)))) | {scenario.mode_index})
    entries = [{"index": j, "checks": {}} for j in range(n)]

    if not pipe.analytic:
        system, dsys = pipe.derivatives(snap, delta)
        for j in range(n):
            for name, mat, d in (("dK", "K", dsys.dK[j]), ("dM", "M", dsys.dM[j])):
                fd = (_dense(getattr(assemble(pipe.space, plus[j].net), mat))
                      - _dense(getattr(assemble(pipe.space, minus[j].net), mat))) / (2 * h)
                scale = 1e-12 * np.linalg.norm(_dense(getattr(system, mat)))
                entries[j]["checks"][name] = {
                    "rel_error": _rel(_dense(d), fd, scale), "norm": float(np.linalg.norm(fd))}

    for k in modes:
        try:
            dlam = pipe.eigen_derivative(snap, k, delta).dlam
        except SensitivityError as exc:
            for e in entries:
                e["checks"]["dlam_%d" % (k + 1)] = {"skipped": str(exc)}
            continue
        lam = snap.solution.eigenvalues[k]
        for j in range(n):
            fd = (plus[j].solution.eigenvalues[k] - minus[j].solution.eigenvalues[k]) / (2 * h)
            entries[j]["checks"]["dlam_%d" % (k + 1)] = {
                "rel_error": _rel(dlam[j], fd, 1e-12 * abs(lam)), "closed_form": float(dlam[j]), "fd": float(fd)}
        if richardson and not affine and k == scenario.mode_index:
            base_delta = delta
            half = pipe.eigen_derivative(snap, k, base_delta / 2).dlam
            full = pipe.eigen_derivative(snap, k, base_delta).dlam
            fd_all = np.array([(plus[j].solution.eigenvalues[k] - minus[j].solution.eigenvalues[k]) / (2 * h)
                               for j in range(n)])
            report["richardson"] = {
                "delta": base_delta,
                "error": np.abs(full - fd_all).tolist(),
                "error_half": np.abs(half - fd_all).tolist(),
            }

    obj = scenario.make_objective()
    ev = obj.evaluate(p)
    grad = obj.gradient(ev, delta=delta)
    for j in range(n):
        g_plus = scenario.make_objective().evaluate(plus[j].p).g
        g_minus = scenario.make_objective().evaluate(minus[j].p).g
        fd = (g_plus - g_minus) / (2 * h)
        entries[j]["checks"]["dg"] = {
            "rel_error": _rel(grad[j], fd, 1e-12 * max(abs(ev.g), 1e-300)), "closed_form": float(grad[j]), "fd": float(fd)}

    failures = []
    for e in entries:
        for name, c in e["checks"].items():
            if "rel_error" not in c:
                continue
            limit = tol["dlam" if name.startswith("dlam") else name]
            c["threshold"] = limit
            c["passed"] = bool(c["rel_error"] <= limit)
            if not c["passed"]:
                failures.append("parameter %d %s: %.3e > %.1e" % (e["index"], name, c["rel_error"], limit))
    report["parameters"] = entries
    report["failures"] = failures
    report["passed"] = not failures
    return report


@dataclass
class AxisReport:
    xi: np.ndarray
    points: np.ndarray
    values: np.ndarray
    cell: np.ndarray
    is_peak: np.ndarray
    peaks: np.ndarray
    eta1: float
    eta2: float
    k: int
    frequency: float


def axis_report(scenario, p=None, k: int | None = None, samples_per_cell: int | None = None) -> AxisReport:
    """On-axis field of mode ``k`` (default: the configured tracked mode) with cell peaks."""
    pipe = scenario.pipeline
    if pipe.analytic:
        raise ValueError("axis field needs a discrete geometry")
    p = check_box(scenario.p0 if p is None else p, pipe.n_params)
    k = scenario.mode_index if k is None else k
    snap = pipe.solve(p)
    samples = pipe.axis_field(snap, k, samples_per_cell)
    rep = flatness(samples, pipe.cells)
    cells = pipe.cells
    cell = np.searchsorted(cells[1:, 0], samples.xi, side="right")
    is_peak = np.zeros(samples.xi.size, dtype=bool)
    for j in range(cells.shape[0]):
        idx = np.flatnonzero(cell == j)
        is_peak[idx[np.argmax(samples.values[idx])]] = True
    return AxisReport(samples.xi, samples.points, samples.values, cell, is_peak, rep.peaks, rep.eta1, rep.eta2,
                      k, float(snap.solution.frequencies[k]))


def solve_report(scenario, p=None) -> dict:
    """Spectrum at one design vector."""
    pipe = scenario.pipeline
    p = check_box(scenario.p0 if p is None else p, pipe.n_params)
    snap = pipe.solve(p)
    sol = snap.solution
    k = scenario.mode_index
    out = {
        "p": p.tolist(),
        "physical": pipe.physical(p).tolist(),
        "eigenvalues": sol.eigenvalues.tolist(),
        "frequencies": sol.frequencies.tolist(),
        "k_tracked": k + 1,
        "f_tracked": float(sol.frequencies[k]),
        "degenerate_pairs": [[a + 1, b + 1] for a, b in sol.degenerate],
    }
    if pipe.analytic:
        out["labels"] = list(snap.labels)
    else:
        out["n_dof"] = int(pipe.space.n_dof)
        out["kernel_dimension"] = int(sol.kernel_cut)
        out["kernel_threshold"] = sol.threshold
        out["residuals"] = gevp_residuals(snap.system, sol).tolist()
    return out
