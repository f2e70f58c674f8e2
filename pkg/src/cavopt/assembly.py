"""Discrete spline spaces on a patch and assembly of K, M and their shape derivatives.

Two spaces are supported:

``scalar``
    Tensor-product splines of degree ``d`` with homogeneous Dirichlet data
    (Helmholtz / TM-type problems).  ``K = (grad u, grad v)``, ``M = (u, v)``.
``curl``
    Curl-conforming pair with component degrees ``(d-1, d)`` and ``(d, d-1)``,
    tangential trace eliminated (2D Maxwell with PEC walls).  Fields are
    pulled back covariantly, ``v = J^{-T} v_hat``, and the scalar curl as
    ``curl v = curl_hat v_hat / det J``.

Shape derivatives are taken at the current geometry.  With ``A' = dV/dx`` the
gradient of the displacement field at a quadrature point::

    d det      =  tr A'
    d (1/det)  = -tr A'                      (curl stiffness factor)
    d (det J^-1 J^-T) = tr A' I - A' - A'^T  (curl mass, scalar stiffness)

and the scalar mass factor derivative is ``tr A'``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .geometry import DisplacementField, GeometryError
from .splines import KnotVector, NurbsNet, _ders_basis, basis_table, eval_points, uniform_knots

SCALAR = "scalar"
CURL = "curl"

_KIND_ALIASES = {
    "scalar": SCALAR,
    "scalar-h1": SCALAR,
    "scalar-h1-dirichlet": SCALAR,
    "curl": CURL,
    "curl-conforming": CURL,
    "curl-conforming-tangential-zero": CURL,
}


class AssemblyError(GeometryError):
    """Nonpositive Jacobian determinant met during assembly."""


def canonical_kind(kind: str) -> str:
    try:
        return _KIND_ALIASES[kind.lower()]
    except KeyError:
        raise ValueError("unknown space kind %r" % kind) from None


@dataclass(frozen=True, eq=False)
class Component:
    bases: tuple
    offset: int

    @property
    def shape(self):
        return tuple(kv.n_dof for kv in self.bases)

    @property
    def size(self):
        return int(np.prod(self.shape))


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _axis_table(kv: KnotVector, elems: np.ndarray, qx: np.ndarray):
    """Basis values and first derivatives at per-element points, span fixed per element."""
    mid = 0.5 * (elems[:, 0] + elems[:, 1])
    span = kv.find_span(mid)
    nq = qx.shape[1]
    ders = _ders_basis(kv.knots, kv.degree, np.repeat(span, nq), qx.ravel(), min(1, kv.degree))
    if kv.degree == 0:
        ders = np.concatenate([ders, np.zeros_like(ders)], axis=1)
    return span - kv.degree, ders.reshape(elems.shape[0], nq, 2, kv.degree + 1)


def _tensor(Tu, Tv, du, dv):
    """Tensor-product basis table (E, Q, L) from per-axis tables."""
    a = Tu[:, None, :, None, du, :, None]
    b = Tv[None, :, None, :, dv, None, :]
    t = a * b
    ne = t.shape[0] * t.shape[1]
    nq = t.shape[2] * t.shape[3]
    return t.reshape(ne, nq, -1)


def _tensor_index(fu, fv, Lu, Lv, n_v, offset=0):
    iu = fu[:, None] + np.arange(Lu)[None, :]
    iv = fv[:, None] + np.arange(Lv)[None, :]
    idx = iu[:, None, :, None] * n_v + iv[None, :, None, :]
    return offset + idx.reshape(fu.size * fv.size, Lu * Lv)


class DiscreteSpace:
    """Spline space on the parameter domain of a two-axis net.

    DoFs are numbered lexicographically by component, then by tensor index
    (first axis slowest).  ``free`` lists the unconstrained DoFs; system
    matrices are always returned restricted to them.
    """

    def __init__(self, kind, degree, breakpoints, subdivisions):
        self.kind = canonical_kind(kind)
        self.degree = int(degree)
        self.breakpoints = tuple(np.asarray(b, dtype=float) for b in breakpoints)
        self.subdivisions = tuple(int(s) for s in subdivisions)
        d = self.degree
        (bu, bv), (su, sv) = self.breakpoints, self.subdivisions
        if self.kind == SCALAR:
            if d < 1:
                raise ValueError("scalar space needs degree >= 1")
            comps = [(uniform_knots(bu, d, su), uniform_knots(bv, d, sv))]
        else:
            if d < 2:
                raise ValueError("curl-conforming space needs degree >= 2")
            comps = [
                (uniform_knots(bu, d - 1, su), uniform_knots(bv, d, sv)),
                (uniform_knots(bu, d, su), uniform_knots(bv, d - 1, sv)),
            ]
        offset = 0
        self.components = []
        for c in comps:
            comp = Component(c, offset)
            self.components.append(comp)
            offset += comp.size
        self.n_total = offset

        constrained = np.zeros(self.n_total, dtype=bool)
        for ci, comp in enumerate(self.components):
            nu, nv = comp.shape
            m = np.zeros((nu, nv), dtype=bool)
            if self.kind == SCALAR:
                m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
            elif ci == 0:
                m[:, 0] = m[:, -1] = True
            else:
                m[0, :] = m[-1, :] = True
            constrained[comp.offset: comp.offset + comp.size] = m.ravel()
        self.constrained = constrained
        self.free = np.flatnonzero(~constrained)

        ref = uniform_knots(bu, d, su), uniform_knots(bv, d, sv)
        self.kernel_dim = 0 if self.kind == SCALAR else (ref[0].n_dof - 2) * (ref[1].n_dof - 2)
        self.elements = tuple(np.stack([k.breakpoints[:-1], k.breakpoints[1:]], axis=1) for k in ref)
        self.n_elements = tuple(e.shape[0] for e in self.elements)
        self._quad = None
        self._geo_cache = {}

    @property
    def n_dof(self) -> int:
        return self.free.size

    def _quadrature(self):
        if self._quad is not None:
            return self._quad
        nq = self.degree + 1
        gx, gw = _gauss(nq)
        qx, qw = [], []
        for el in self.elements:
            h = el[:, 1] - el[:, 0]
            qx.append(el[:, :1] + h[:, None] * gx[None, :])
            qw.append(h[:, None] * gw[None, :])
        weights = (qw[0][:, None, :, None] * qw[1][None, :, None, :]).reshape(
            self.n_elements[0] * self.n_elements[1], nq * nq)
        points = np.stack(np.broadcast_arrays(qx[0][:, None, :, None], qx[1][None, :, None, :]), axis=-1)
        points = points.reshape(weights.shape + (2,))
        comps = []
        for comp in self.components:
            (fu, Tu), (fv, Tv) = (_axis_table(kv, el, q) for kv, el, q in zip(comp.bases, self.elements, qx))
            Lu, Lv = Tu.shape[-1], Tv.shape[-1]
            comps.append({
                "idx": _tensor_index(fu, fv, Lu, Lv, comp.shape[1], comp.offset),
                "val": _tensor(Tu, Tv, 0, 0),
                "du": _tensor(Tu, Tv, 1, 0),
                "dv": _tensor(Tu, Tv, 0, 1),
            })
        self._quad = {"x": qx, "w": weights, "points": points, "comps": comps}
        return self._quad

    def _geometry_tables(self, net: NurbsNet):
        key = (tuple(net.bases), net.weights.tobytes())
        hit = self._geo_cache.get(key)
        if hit is not None:
            return hit
        quad = self._quadrature()
        (fu, Tu), (fv, Tv) = (_axis_table(kv, el, q) for kv, el, q in zip(net.bases, self.elements, quad["x"]))
        Lu, Lv = Tu.shape[-1], Tv.shape[-1]
        idx = _tensor_index(fu, fv, Lu, Lv, net.bases[1].n_dof)
        N = _tensor(Tu, Tv, 0, 0)
        dN = np.stack([_tensor(Tu, Tv, 1, 0), _tensor(Tu, Tv, 0, 1)], axis=-1)
        w = net.weights[idx][:, None, :]
        Nw = N * w
        W = Nw.sum(axis=2, keepdims=True)
        R = Nw / W
        dNw = dN * w[..., None]
        dW = dNw.sum(axis=2, keepdims=True)
        dR = (dNw - R[..., None] * dW) / W[..., None]
        self._geo_cache = {key: (idx, R, dR)}
        return idx, R, dR

    def geometry_at_quadrature(self, net: NurbsNet):
        """Jacobian data of ``net`` at all quadrature points."""
        _check_compatible(self, net)
        idx, R, dR = self._geometry_tables(net)
        P = net.points[idx]
        jac = np.einsum("eli,eqlj->eqij", P, dR)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        bad = ~(det > 0)
        if np.any(bad):
            e, q = np.argwhere(bad)[0]
            xhat = self._quadrature()["points"][e, q]
            x = np.einsum("l,li->i", R[e, q], P[e])
            raise AssemblyError(
                "nonpositive Jacobian determinant %.3e at reference point (%.6g, %.6g), physical (%.6g, %.6g)"
                % (det[e, q], xhat[0], xhat[1], x[0], x[1]))
        jinv = np.empty_like(jac)
        jinv[..., 0, 0] = jac[..., 1, 1] / det
        jinv[..., 1, 1] = jac[..., 0, 0] / det
        jinv[..., 0, 1] = -jac[..., 0, 1] / det
        jinv[..., 1, 0] = -jac[..., 1, 0] / det
        return {"idx": idx, "R": R, "dR": dR, "jac": jac, "det": det, "jinv": jinv}

    def __repr__(self):
        return "DiscreteSpace(kind=%r, degree=%d, elements=%s, n_dof=%d)" % (
            self.kind, self.degree, self.n_elements, self.n_dof)


def _check_compatible(space: DiscreteSpace, net: NurbsNet):
    if net.n_axes != 2:
        raise ValueError("discrete spaces need a two-axis net")
    for bp, kv in zip(space.breakpoints, net.bases):
        if bp.size != kv.breakpoints.size or not np.allclose(bp, kv.breakpoints, rtol=0, atol=1e-14):
            raise ValueError("net knot lines differ from those the space was built on")


def build_space(net: NurbsNet, kind: str, degree: int, refinement: int = 0, subdivisions=None) -> DiscreteSpace:
    """Analysis space whose elements refine the knot spans of ``net``.

    Each geometry knot span is split into ``subdivisions[axis] * 2**refinement``
    uniform elements (``subdivisions`` defaults to one per axis).
    """
    if net.n_axes != 2:
        raise ValueError("discrete spaces need a two-axis net")
    if refinement < 0:
        raise ValueError("refinement must be nonnegative")
    base = (1, 1) if subdivisions is None else tuple(subdivisions)
    if len(base) != 2 or min(base) < 1:
        raise ValueError("subdivisions must be two positive integers")
    subs = tuple(int(s) * 2 ** int(refinement) for s in base)
    space = DiscreteSpace(kind, degree, [kv.breakpoints for kv in net.bases], subs)
    space.geometry_at_quadrature(net)
    return space


@dataclass(frozen=True, eq=False)
class SystemPair:
    K: sp.csr_matrix
    M: sp.csr_matrix

    @property
    def n_dof(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True, eq=False)
class SystemDerivative:
    dK: list = field(default_factory=list)
    dM: list = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return len(self.dK)


def jterm_derivatives(dvdx) -> tuple[float, float, np.ndarray]:
    """Derivatives ``(d det, d J_K, d J_M)`` of the pullback factors at the current geometry."""
    A = np.asarray(dvdx, dtype=float)
    tr = A[..., 0, 0] + A[..., 1, 1]
    dJM = tr[..., None, None] * np.eye(2) - A - np.swapaxes(A, -1, -2)
    return tr, -tr, dJM


def _scatter(space: DiscreteSpace, idx, local):
    local = 0.5 * (local + np.swapaxes(local, 1, 2))
    L = idx.shape[1]
    rows = np.broadcast_to(idx[:, :, None], (idx.shape[0], L, L))
    cols = np.broadcast_to(idx[:, None, :], (idx.shape[0], L, L))
    A = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(space.n_total,) * 2).tocsr()
    A = A[space.free][:, space.free].tocsr()
    A.sort_indices()
    return A


def _field_data(space: DiscreteSpace, geo):
    """Physical test-function data on each element: (idx, values, gradients or curls)."""
    comps = space._quadrature()["comps"]
    jinv = geo["jinv"]
    if space.kind == SCALAR:
        c = comps[0]
        gref = np.stack([c["du"], c["dv"]], axis=-1)
        grad = np.einsum("eqji,eqlj->eqli", jinv, gref)
        return c["idx"], c["val"], grad
    c0, c1 = comps
    idx = np.concatenate([c0["idx"], c1["idx"]], axis=1)
    z0, z1 = np.zeros_like(c0["val"]), np.zeros_like(c1["val"])
    vref = np.concatenate([np.stack([c0["val"], z0], -1), np.stack([z1, c1["val"]], -1)], axis=2)
    vphys = np.einsum("eqji,eqlj->eqli", jinv, vref)
    curl_ref = np.concatenate([-c0["dv"], c1["du"]], axis=2)
    curl = curl_ref / geo["det"][..., None]
    return idx, vphys, curl


def _assemble(space: DiscreteSpace, net: NurbsNet, fields=()):
    geo = space.geometry_at_quadrature(net)
    wdet = space._quadrature()["w"] * geo["det"]
    idx, val, der = _field_data(space, geo)
    if space.kind == SCALAR:
        K = np.einsum("eq,eqli,eqmi->elm", wdet, der, der, optimize=True)
        M = np.einsum("eq,eql,eqm->elm", wdet, val, val, optimize=True)
    else:
        K = np.einsum("eq,eql,eqm->elm", wdet, der, der, optimize=True)
        M = np.einsum("eq,eqli,eqmi->elm", wdet, val, val, optimize=True)
    system = SystemPair(_scatter(space, idx, K), _scatter(space, idx, M))
    if not fields:
        return system, None
    gidx, dR, jinv = geo["idx"], geo["dR"], geo["jinv"]
    dK, dM = [], []
    for df in fields:
        if df.net.points.shape != net.points.shape:
            raise ValueError("displacement field belongs to a different net")
        dP = df.velocities[gidx]
        dvdxi = np.einsum("eli,eqlj->eqij", dP, dR)
        dvdx = np.einsum("eqij,eqjk->eqik", dvdxi, jinv)
        ddet, dJK, dJM = jterm_derivatives(dvdx)
        if space.kind == SCALAR:
            dK_loc = np.einsum("eq,eqli,eqij,eqmj->elm", wdet, der, dJM, der, optimize=True)
            dM_loc = np.einsum("eq,eql,eqm->elm", wdet * ddet, val, val, optimize=True)
        else:
            dK_loc = np.einsum("eq,eql,eqm->elm", wdet * dJK, der, der, optimize=True)
            dM_loc = np.einsum("eq,eqli,eqij,eqmj->elm", wdet, val, dJM, val, optimize=True)
        dK.append(_scatter(space, idx, dK_loc))
        dM.append(_scatter(space, idx, dM_loc))
    return system, SystemDerivative(dK, dM)


def assemble(space: DiscreteSpace, net: NurbsNet) -> SystemPair:
    """Stiffness and mass matrices restricted to the free DoFs."""
    return _assemble(space, net)[0]


def assemble_derivatives(space: DiscreteSpace, net: NurbsNet, fields) -> SystemDerivative:
    """Closed-form ``dK/dp_n`` and ``dM/dp_n``, one pair per displacement field."""
    fields = list(fields)
    if not fields:
        return SystemDerivative()
    return _assemble(space, net, fields)[1]


def assemble_with_derivatives(space: DiscreteSpace, net: NurbsNet, fields):
    """Both the system pair and its derivatives from one geometry evaluation."""
    system, deriv = _assemble(space, net, list(fields))
    return system, deriv if deriv is not None else SystemDerivative()


def expand(space: DiscreteSpace, coeffs) -> np.ndarray:
    """Free-DoF coefficient vector to the full vector with zeros on constrained DoFs."""
    full = np.zeros(space.n_total)
    full[space.free] = coeffs
    return full


def evaluate_field(space: DiscreteSpace, net: NurbsNet, coeffs, xi):
    """Physical field at reference points.

    Returns the scalar field (npts,) for scalar spaces and the covariant
    push-forward (npts, 2) for curl-conforming spaces.
    """
    xi = np.asarray(xi, dtype=float).reshape(-1, 2)
    full = expand(space, coeffs)
    vals = []
    for comp in space.components:
        (fu, tu), (fv, tv) = basis_table(comp.bases[0], xi[:, 0]), basis_table(comp.bases[1], xi[:, 1])
        Lu, Lv = tu.shape[-1], tv.shape[-1]
        iu = fu[:, None] + np.arange(Lu)
        iv = fv[:, None] + np.arange(Lv)
        gidx = comp.offset + iu[:, :, None] * comp.shape[1] + iv[:, None, :]
        phi = tu[:, 0, :, None] * tv[:, 0, None, :]
        vals.append(np.einsum("qab,qab->q", phi, full[gidx]))
    if space.kind == SCALAR:
        return vals[0]
    _, jac = eval_points(net, xi)
    vhat = np.stack(vals, axis=-1)
    return np.linalg.solve(np.swapaxes(jac, 1, 2), vhat[..., None])[..., 0]


def write_matrix_market(system: SystemPair, directory, prefix: str = "") -> list[Path]:
    """Dump K and M as MatrixMarket coordinate files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mat in (("K", system.K), ("M", system.M)):
        path = directory / ("%s%s.mtx" % (prefix, name))
        scipy.io.mmwrite(str(path), sp.coo_matrix(mat), symmetry="general", precision=17)
        paths.append(path)
    return paths


def assemble_1d(kv: KnotVector) -> tuple[np.ndarray, np.ndarray]:
    """Unconstrained stiffness and mass matrices of a 1D basis on its parameter interval."""
    el = np.stack([kv.breakpoints[:-1], kv.breakpoints[1:]], axis=1)
    gx, gw = _gauss(kv.degree + 1)
    h = el[:, 1] - el[:, 0]
    qx = el[:, :1] + h[:, None] * gx
    qw = h[:, None] * gw
    first, T = _axis_table(kv, el, qx)
    K = np.zeros((kv.n_dof, kv.n_dof))
    M = np.zeros_like(K)
    for e in range(el.shape[0]):
        sl = slice(first[e], first[e] + kv.degree + 1)
        K[sl, sl] += np.einsum("q,qa,qb->ab", qw[e], T[e, :, 1], T[e, :, 1])
        M[sl, sl] += np.einsum("q,qa,qb->ab", qw[e], T[e, :, 0], T[e, :, 0])
    return K, M
