"""B-spline and NURBS bases on open knot vectors.

Basis functions are evaluated with the Cox-de Boor recursion in the
triangular form of Piegl & Tiller (algorithms A2.1 and A2.3), vectorized over
arrays of evaluation points.  Nets have one or two parametric axes and
control points in the plane.

Control points of a two-axis net are stored row-major over the tensor grid:
the flat index of control point ``(i, j)`` is ``i * n_v + j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class SplineDomainError(ValueError):
    """Raised when a parameter value lies outside the knot range."""


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open (clamped) knot vector of a given degree."""

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).copy()
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        d = int(self.degree)
        object.__setattr__(self, "degree", d)
        if d < 0:
            raise ValueError("degree must be nonnegative")
        if knots.ndim != 1 or knots.size < 2 * (d + 1):
            raise ValueError("knot vector too short for degree %d" % d)
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be nondecreasing")
        if not (np.all(knots[: d + 1] == knots[0]) and np.all(knots[-d - 1:] == knots[-1])):
            raise ValueError("knot vector is not open: end knots need multiplicity d+1")
        if knots[d] == knots[d + 1] and d > 0:
            raise ValueError("first knot repeated more than d+1 times")
        if knots[-d - 1] == knots[-d - 2] and d > 0:
            raise ValueError("last knot repeated more than d+1 times")
        if knots[-1] <= knots[0]:
            raise ValueError("knot vector has an empty parameter range")
        if self.n_dof < d + 1:
            raise ValueError("need at least d+1 basis functions")

    @property
    def n_dof(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot values, i.e. element boundaries."""
        return np.unique(self.knots)

    def greville(self) -> np.ndarray:
        """Greville abscissae (knot averages), one per basis function."""
        d = self.degree
        if d == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        idx = np.arange(self.n_dof)[:, None] + np.arange(1, d + 1)[None, :]
        return self.knots[idx].mean(axis=1)

    def find_span(self, xi) -> np.ndarray:
        """Knot span index for each parameter value (last span closed)."""
        xi = np.asarray(xi, dtype=float)
        lo, hi = self.domain
        if np.any(xi < lo) or np.any(xi > hi) or np.any(~np.isfinite(xi)):
            bad = xi[(xi < lo) | (xi > hi) | ~np.isfinite(xi)].ravel()[0]
            raise SplineDomainError("parameter %r outside knot range [%g, %g]" % (float(bad), lo, hi))
        span = np.searchsorted(self.knots, xi, side="right") - 1
        return np.clip(span, self.degree, self.n_dof - 1)

    def to_list(self) -> list[float]:
        return [float(k) for k in self.knots]

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))


def uniform_knots(breakpoints: Sequence[float], degree: int, subdivisions: int = 1) -> KnotVector:
    """Open knot vector with single interior knots.

    Every interval between consecutive ``breakpoints`` is split into
    ``subdivisions`` equal elements.
    """
    bp = np.unique(np.asarray(breakpoints, dtype=float))
    if subdivisions < 1:
        raise ValueError("subdivisions must be >= 1")
    pts = [bp[0]]
    for a, b in zip(bp[:-1], bp[1:]):
        pts.extend(a + (b - a) * np.arange(1, subdivisions + 1) / subdivisions)
    pts = np.asarray(pts)
    pts[-1] = bp[-1]
    knots = np.concatenate([np.full(degree, bp[0]), pts, np.full(degree, bp[-1])])
    return KnotVector(degree, knots)


def _ders_basis(knots: np.ndarray, p: int, span: np.ndarray, xi: np.ndarray, n: int) -> np.ndarray:
    """Nonzero basis functions and derivatives, shape (npts, n+1, p+1)."""
    npts = xi.size
    ndu = np.zeros((npts, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((npts, p + 1))
    right = np.zeros((npts, p + 1))
    for j in range(1, p + 1):
        left[:, j] = xi - knots[span + 1 - j]
        right[:, j] = knots[span + j] - xi
        saved = np.zeros(npts)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((npts, n + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    for r in range(p + 1):
        s1, s2 = 0, 1
        a = np.zeros((npts, 2, p + 1))
        a[:, 0, 0] = 1.0
        for k in range(1, n + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, n + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return ders


def basis_table(kv: KnotVector, xi, n_derivs: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized basis evaluation.

    Returns
    -------
    first : int array, shape (npts,)
        Index of the first active basis function at each point.
    ders : array, shape (npts, n_derivs+1, degree+1)
        ``ders[q, k, a]`` is the k-th derivative of basis ``first[q] + a``.
    """
    if n_derivs < 0 or n_derivs > kv.degree:
        raise ValueError("n_derivs must lie in [0, degree]")
    xi = np.atleast_1d(np.asarray(xi, dtype=float)).ravel()
    span = kv.find_span(xi)
    ders = _ders_basis(kv.knots, kv.degree, span, xi, n_derivs)
    return span - kv.degree, ders


def eval_bspline_basis(kv: KnotVector, xi: float, n_derivs: int = 0) -> tuple[np.ndarray, int]:
    """Values and derivatives of the ``degree+1`` B-splines active at ``xi``.

    Returns ``(table, first)`` where ``table[k, a]`` is the k-th derivative of
    basis function ``first + a``.
    """
    first, ders = basis_table(kv, [xi], n_derivs)
    return ders[0], int(first[0])


@dataclass(frozen=True, eq=False)
class NurbsNet:
    """Rational spline curve (one axis) or surface (two axes) in the plane."""

    bases: tuple
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        bases = tuple(self.bases)
        if len(bases) not in (1, 2):
            raise ValueError("nets must have one or two parametric axes")
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2).copy()
        w = np.asarray(self.weights, dtype=float).ravel().copy()
        n = int(np.prod([kv.n_dof for kv in bases]))
        if pts.shape[0] != n:
            raise ValueError("expected %d control points, got %d" % (n, pts.shape[0]))
        if w.size != n:
            raise ValueError("expected %d weights, got %d" % (n, w.size))
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n_axes(self) -> int:
        return len(self.bases)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(kv.n_dof for kv in self.bases)

    def with_points(self, points) -> "NurbsNet":
        return NurbsNet(self.bases, points, self.weights)

    def to_dict(self) -> dict:
        return {
            "degree": [kv.degree for kv in self.bases],
            "knots": [kv.to_list() for kv in self.bases],
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NurbsNet":
        degree = data["degree"]
        knots = data["knots"]
        if np.isscalar(degree):
            degree, knots = [degree], [knots]
        bases = tuple(KnotVector(d, k) for d, k in zip(degree, knots))
        if len(bases) != len(degree):
            raise ValueError("degree and knots lists differ in length")
        return cls(bases, data["points"], data["weights"])


def nurbs_table(net: NurbsNet, xi, n_derivs: int = 1):
    """Rational basis values (and first derivatives) at many points.

    Parameters
    ----------
    xi : array, shape (npts, n_axes)

    Returns
    -------
    idx : int array (npts, nloc)
        Flat control-point indices of the active functions.
    R : array (npts, nloc)
    dR : array (npts, nloc, n_axes) or None when ``n_derivs == 0``
    """
    if n_derivs not in (0, 1):
        raise ValueError("rational bases support n_derivs in {0, 1}")
    xi = np.asarray(xi, dtype=float).reshape(-1, net.n_axes)
    tabs = [basis_table(kv, xi[:, ax], min(n_derivs, kv.degree)) for ax, kv in enumerate(net.bases)]
    if net.n_axes == 1:
        (f0, t0), = tabs
        p0 = net.bases[0].degree
        idx = f0[:, None] + np.arange(p0 + 1)[None, :]
        N = t0[:, 0, :]
        dN = [t0[:, 1, :] if p0 > 0 and n_derivs else np.zeros_like(N)]
    else:
        (f0, t0), (f1, t1) = tabs
        p0, p1 = net.bases[0].degree, net.bases[1].degree
        n1 = net.bases[1].n_dof
        i0 = f0[:, None] + np.arange(p0 + 1)[None, :]
        i1 = f1[:, None] + np.arange(p1 + 1)[None, :]
        idx = (i0[:, :, None] * n1 + i1[:, None, :]).reshape(xi.shape[0], -1)
        N = (t0[:, 0, :, None] * t1[:, 0, None, :]).reshape(xi.shape[0], -1)
        d0 = t0[:, 1, :] if p0 > 0 and n_derivs else np.zeros_like(t0[:, 0, :])
        d1 = t1[:, 1, :] if p1 > 0 and n_derivs else np.zeros_like(t1[:, 0, :])
        dN = [
            (d0[:, :, None] * t1[:, 0, None, :]).reshape(xi.shape[0], -1),
            (t0[:, 0, :, None] * d1[:, None, :]).reshape(xi.shape[0], -1),
        ]
    w = net.weights[idx]
    Nw = N * w
    W = Nw.sum(axis=1, keepdims=True)
    R = Nw / W
    if not n_derivs:
        return idx, R, None
    dR = np.empty(R.shape + (net.n_axes,))
    for ax in range(net.n_axes):
        dNw = dN[ax] * w
        dW = dNw.sum(axis=1, keepdims=True)
        dR[:, :, ax] = (dNw - R * dW) / W
    return idx, R, dR


def eval_nurbs_basis(net: NurbsNet, xi, n_derivs: int = 0):
    """Rational basis functions active at a single parameter point.

    Returns ``(idx, R, dR)``; ``dR`` has shape (nloc, n_axes) and is None
    when ``n_derivs == 0``.
    """
    idx, R, dR = nurbs_table(net, np.atleast_1d(xi)[None, :], n_derivs)
    return idx[0], R[0], (None if dR is None else dR[0])


def eval_point(net: NurbsNet, xi) -> tuple[np.ndarray, np.ndarray]:
    """Physical point and Jacobian ``d x / d xi`` (shape (2, n_axes))."""
    idx, R, dR = eval_nurbs_basis(net, xi, 1)
    P = net.points[idx]
    return R @ P, P.T @ dR


def eval_points(net: NurbsNet, xi) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`eval_point`: shapes (npts, 2) and (npts, 2, n_axes)."""
    idx, R, dR = nurbs_table(net, xi, 1)
    P = net.points[idx]
    x = np.einsum("ql,qli->qi", R, P)
    jac = np.einsum("qli,qlj->qij", P, dR)
    return x, jac


def identity_net(u: KnotVector, v: KnotVector) -> NurbsNet:
    """Unit-weight net reproducing the identity map of the parameter domain."""
    gu, gv = u.greville(), v.greville()
    pts = np.stack(np.meshgrid(gu, gv, indexing="ij"), axis=-1).reshape(-1, 2)
    return NurbsNet((u, v), pts, np.ones(pts.shape[0]))


def rectangle_net(width: float = 1.0, height: float = 1.0) -> NurbsNet:
    """Bilinear single-element net of the rectangle [0, width] x [0, height]."""
    kv = KnotVector(1, [0.0, 0.0, 1.0, 1.0])
    net = identity_net(kv, kv)
    return net.with_points(net.points * np.array([width, height]))
