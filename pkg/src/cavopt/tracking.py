"""Mode tracking by M-weighted correlation with the previously accepted eigenvector.

Eigenvalue order is not a stable label: when two branches cross, the
``k``-th smallest eigenvalue belongs to a different physical mode.  The
tracker picks, among the reported candidates, the eigenvector most
correlated with the last accepted one.

Selection (:func:`select_index`) is pure; :meth:`Tracker.commit` records a
selection once the optimizer accepts the iterate, so line-search trials do
not generate spurious crossing warnings.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

PHI_FLOOR = 0.5
TIE_TOL = 1e-3


class TrackingError(RuntimeError):
    """No candidate is convincingly correlated with the tracked mode."""


def correlation(e_cand, e_prev, M=None) -> float:
    """M-weighted correlation coefficient of two vectors, in ``[-1, 1]``."""
    a = np.asarray(e_cand, dtype=float)
    b = np.asarray(e_prev, dtype=float)
    Mb = b if M is None else M @ b
    Ma = a if M is None else M @ a
    na, nb = float(a @ Ma), float(b @ Mb)
    if not (na > 0 and nb > 0):
        raise ValueError("correlation needs nonzero vectors")
    phi = float(a @ Mb) / (np.sqrt(na) * np.sqrt(nb))
    return float(np.clip(phi, -1.0, 1.0))


@dataclass
class TrackerState:
    vector: np.ndarray
    index: int
    eigenvalue: float
    history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


@dataclass(frozen=True)
class Selection:
    index: int
    phi: float
    correlations: np.ndarray
    warning: str | None = None
    tie: bool = False


def crossing_message(iteration: int, old_k: int, new_k: int, phi: float) -> str:
    """Log line for a change of tracked index (indices shown 1-based)."""
    return "CROSSING iter=%d old_k=%d new_k=%d phi=%.6f" % (iteration, old_k + 1, new_k + 1, phi)


def select_index(solution, state: TrackerState, M=None, iteration: int = 0,
                 floor: float = PHI_FLOOR, tie_tol: float = TIE_TOL) -> Selection:
    """Index of the candidate eigenvector best matching the tracked one.

    Uses ``|phi|`` so arbitrary eigenvector signs do not matter.  When the
    best two candidates are within ``tie_tol``, the one whose eigenvalue is
    closer to the previously tracked eigenvalue wins.
    """
    vecs = solution.eigenvectors
    if vecs.shape[1] == 0:
        raise TrackingError("no candidate eigenvectors")
    Mprev = state.vector if M is None else M @ state.vector
    norms = np.einsum("ij,ij->j", vecs, vecs if M is None else M @ vecs)
    phis = np.clip((vecs.T @ Mprev) / np.sqrt(norms * float(state.vector @ Mprev)), -1.0, 1.0)
    mag = np.abs(phis)
    order = np.argsort(-mag, kind="stable")
    best = int(order[0])
    if mag[best] < floor:
        listing = ", ".join("%d:%.3f" % (i + 1, v) for i, v in enumerate(phis))
        raise TrackingError("no mode correlates above %.2f with the tracked mode (phi = %s)" % (floor, listing))
    tie = False
    if mag.size > 1 and mag[best] - mag[order[1]] < tie_tol:
        tie = True
        close = [int(i) for i in order if mag[best] - mag[i] < tie_tol]
        lam = solution.eigenvalues
        best = min(close, key=lambda i: (abs(lam[i] - state.eigenvalue), i))
        logger.info("tracking tie at iter=%d between candidates %s", iteration, [i + 1 for i in close])
    warning = None
    if best != state.index:
        warning = crossing_message(iteration, state.index, best, float(phis[best]))
    return Selection(best, float(phis[best]), phis, warning, tie)


class Tracker:
    """Owns the tracked mode of one run.

    With ``enabled=False`` the index stays fixed (plain magnitude ordering),
    while correlations are still reported for diagnostics.
    """

    def __init__(self, index: int, enabled: bool = True, floor: float = PHI_FLOOR, tie_tol: float = TIE_TOL):
        if index < 0:
            raise ValueError("tracked index must be nonnegative")
        self.initial_index = int(index)
        self.enabled = bool(enabled)
        self.floor = floor
        self.tie_tol = tie_tol
        self.state: TrackerState | None = None

    @property
    def index(self) -> int:
        return self.initial_index if self.state is None else self.state.index

    @property
    def warnings(self) -> list[str]:
        return [] if self.state is None else list(self.state.warnings)

    def select(self, solution, M=None, iteration: int = 0) -> Selection:
        n = solution.eigenvectors.shape[1]
        if self.state is None or not self.enabled:
            k = self.index
            if k >= n:
                raise TrackingError("tracked index %d exceeds the %d reported modes" % (k + 1, n))
            phis = np.full(n, np.nan)
            phi = 1.0
            if self.state is not None:
                phis = np.array([correlation(solution.eigenvectors[:, j], self.state.vector, M) for j in range(n)])
                phi = float(phis[k])
            return Selection(k, phi, phis)
        return select_index(solution, self.state, M, iteration, self.floor, self.tie_tol)

    def commit(self, selection: Selection, solution, M=None, iteration: int = 0) -> str | None:
        """Accept ``selection`` as the tracked mode for the next comparison."""
        vec = np.array(solution.eigenvectors[:, selection.index], dtype=float)
        vec /= np.sqrt(float(vec @ (vec if M is None else M @ vec)))
        lam = float(solution.eigenvalues[selection.index])
        if self.state is None:
            self.state = TrackerState(vec, selection.index, lam)
        else:
            self.state.vector, self.state.index, self.state.eigenvalue = vec, selection.index, lam
        self.state.history.append((iteration, selection.index, selection.phi))
        warning = selection.warning if self.enabled else None
        if warning:
            self.state.warnings.append(warning)
            logger.warning(warning)
        return warning
