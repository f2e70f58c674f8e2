"""Generalized symmetric eigenproblem ``K e = lambda M e`` and the frequency relation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

MU0 = 4e-7 * math.pi
EPS0 = 8.8541878128e-12
C0 = 1.0 / math.sqrt(MU0 * EPS0)

KERNEL_TAU = 1e-6


class EigenError(np.linalg.LinAlgError):
    """Eigen-solve failure (e.g. mass matrix not positive definite)."""


@dataclass(frozen=True, eq=False)
class EigenSolution:
    """Smallest non-kernel eigenpairs, ascending.

    Attributes
    ----------
    eigenvalues : (m,) array
    eigenvectors : (n, m) array, M-orthonormal columns
    kernel_eigenvalues : eigenvalues classified as discrete-gradient kernel
    kernel_cut : index of the first physical eigenvalue among all computed ones
    threshold : absolute kernel threshold used
    degenerate : index pairs ``(i, i+1)`` whose relative gap is below the cluster tolerance
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    kernel_eigenvalues: np.ndarray
    kernel_cut: int
    threshold: float
    degenerate: tuple = ()

    @property
    def frequencies(self) -> np.ndarray:
        return lambda_to_freq(self.eigenvalues)

    def __len__(self):
        return self.eigenvalues.size


def lambda_to_freq(lam, mu: float = MU0, eps: float = EPS0):
    """Frequency in Hz of the eigenvalue ``lam`` (m^-2)."""
    arr = np.asarray(lam, dtype=float)
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise ValueError("eigenvalue must be finite and nonnegative, got %r" % (lam,))
    f = np.sqrt(arr) / (2.0 * math.pi * math.sqrt(mu * eps))
    return float(f) if np.ndim(lam) == 0 else f


def freq_to_lambda(f, mu: float = MU0, eps: float = EPS0):
    """Inverse of :func:`lambda_to_freq`."""
    arr = np.asarray(f, dtype=float)
    lam = (2.0 * math.pi * arr) ** 2 * mu * eps
    return float(lam) if np.ndim(f) == 0 else lam


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def _fix_signs(vecs):
    if vecs.size == 0:
        return vecs
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def solve_gevp(system, n_wanted: int = 8, kernel_hint: int = 0, tau: float = KERNEL_TAU,
               cluster_tol: float = 1e-8) -> EigenSolution:
    """Smallest ``n_wanted`` non-kernel eigenpairs of ``(K, M)``.

    ``system`` is a :class:`~cavopt.assembly.SystemPair` or a ``(K, M)``
    tuple.  Eigenvalues below ``tau`` times an estimate of the largest
    eigenvalue are classified as kernel (discrete gradients of
    curl-conforming spaces).  The estimate is the larger of the largest
    computed eigenvalue and ``max(K_ii / M_ii)``, a Rayleigh-quotient lower
    bound, so a computed subset holding only kernel modes is still
    classified correctly.  ``kernel_hint`` is the expected kernel dimension
    and only sizes the computed subset.
    """
    K, M = (system.K, system.M) if hasattr(system, "K") else system
    K, M = _dense(K), _dense(M)
    n = K.shape[0]
    if n == 0:
        raise EigenError("empty system")
    if n_wanted < 1:
        raise ValueError("n_wanted must be positive")
    try:
        sla.cholesky(M, lower=True)
    except np.linalg.LinAlgError as exc:
        raise EigenError("mass matrix is not positive definite") from exc
    diag_scale = float(np.max(np.diag(K) / np.diag(M)))
    count = min(n, kernel_hint + n_wanted + 2)
    while True:
        if count < n:
            lam, vec = sla.eigh(K, M, subset_by_index=[0, count - 1], driver="gvx")
        else:
            lam, vec = sla.eigh(K, M)
        threshold = tau * max(abs(lam[-1]), diag_scale, np.finfo(float).tiny)
        cut = int(np.searchsorted(lam, threshold))
        if count - cut >= n_wanted + 1 or count == n:
            break
        count = min(n, 2 * count)
    sel = slice(cut, min(cut + n_wanted, count))
    vals = lam[sel].copy()
    vecs = _fix_signs(vec[:, sel].copy())
    extra = lam[cut: min(cut + n_wanted + 1, count)]
    rel = np.diff(extra) / np.maximum(np.abs(extra[1:]), np.finfo(float).tiny)
    degenerate = tuple((i, i + 1) for i in np.flatnonzero(rel < cluster_tol) if i + 1 < vals.size)
    return EigenSolution(vals, vecs, lam[:cut].copy(), cut, float(threshold), degenerate)


def gevp_residuals(system, solution: EigenSolution) -> np.ndarray:
    """Relative residuals ``|K e - lambda M e| / |K e|`` per reported pair."""
    K, M = (system.K, system.M) if hasattr(system, "K") else system
    KE = K @ solution.eigenvectors
    ME = M @ solution.eigenvectors
    res = KE - ME * solution.eigenvalues
    return np.linalg.norm(res, axis=0) / np.linalg.norm(KE, axis=0)
