"""Eigenpair derivatives from the bordered linear system and the basic cost gradient.

Differentiating ``K e = lam M e`` together with the normalization
``e_star^T M e = 1`` gives, per design parameter,

    [ K - lam M    -M e ] [ de   ]   [ -dK e + lam dM e  ]
    [ e_star^T M     0  ] [ dlam ] = [ -e_star^T dM e    ]

which is solved once by LU with partial pivoting for all right-hand sides.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


class SensitivityError(ArithmeticError):
    """Eigenpair derivative not available (near-degenerate eigenvalue or singular system)."""


@dataclass(frozen=True, eq=False)
class EigenSensitivity:
    dlam: np.ndarray
    dvec: np.ndarray
    e_star: np.ndarray
    rcond: float
    residual: float


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def eigenpair_derivative(system, dsystem, lam: float, vec, e_star=None, neighbors=None,
                         gap_tol: float = 1e-8) -> EigenSensitivity:
    """Derivatives of the eigenpair ``(lam, vec)`` with respect to every parameter.

    Parameters
    ----------
    system, dsystem : SystemPair and SystemDerivative (or objects with
        ``K, M`` and ``dK, dM`` lists).
    e_star : normalization vector; defaults to a frozen copy of ``vec``.
        ``vec`` must satisfy ``e_star^T M vec = 1``.
    neighbors : other eigenvalues of the spectrum; a relative gap below
        ``gap_tol`` raises :class:`SensitivityError`.
    """
    K, M = _dense(system.K), _dense(system.M)
    e = np.asarray(vec, dtype=float)
    e_star = e.copy() if e_star is None else np.asarray(e_star, dtype=float)
    if neighbors is not None:
        others = np.asarray(neighbors, dtype=float)
        if others.size:
            gap = np.min(np.abs(others - lam))
            if gap <= gap_tol * abs(lam):
                raise SensitivityError(
                    "sensitivity unreliable near crossing: relative gap %.2e at lambda=%.10g" % (gap / abs(lam), lam))
    n = e.size
    Me = M @ e
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = K - lam * M
    B[:n, n] = -Me
    B[n, :n] = e_star @ M
    n_p = len(dsystem.dK)
    rhs = np.zeros((n + 1, n_p))
    for j, (dK, dM) in enumerate(zip(dsystem.dK, dsystem.dM)):
        dKe = dK @ e
        dMe = dM @ e
        rhs[:n, j] = -dKe + lam * dMe
        rhs[n, j] = -(e_star @ dMe)
    anorm = np.linalg.norm(B, 1)
    lu, piv, info = sla.lapack.dgetrf(B)
    if info != 0:
        raise SensitivityError("bordered eigen-derivative matrix is singular")
    rcond, _ = sla.lapack.dgecon(lu, anorm, norm="1")
    if rcond < np.finfo(float).eps:
        raise SensitivityError("bordered eigen-derivative matrix is numerically singular (rcond=%.2e)" % rcond)
    sol = sla.lu_solve((lu, piv), rhs) if n_p else np.zeros((n + 1, 0))
    resid = B @ sol - rhs
    scale = np.linalg.norm(rhs) + np.finfo(float).tiny
    return EigenSensitivity(sol[n].copy(), sol[:n].copy(), e_star, float(rcond), float(np.linalg.norm(resid) / scale))


def rayleigh_derivative(system, dsystem, lam: float, vec) -> np.ndarray:
    """``e^T (dK - lam dM) e / e^T M e`` for each parameter (simple eigenvalues)."""
    e = np.asarray(vec, dtype=float)
    eMe = e @ (system.M @ e)
    return np.array([e @ (dK @ e) - lam * (e @ (dM @ e)) for dK, dM in zip(dsystem.dK, dsystem.dM)]) / eMe


def cost_gradient(lam_ref: float, lam: float, dlam) -> np.ndarray:
    """Gradient of ``0.5 (lam_ref - lam)^2`` given ``dlam/dp``."""
    return -(lam_ref - lam) * np.asarray(dlam, dtype=float)
