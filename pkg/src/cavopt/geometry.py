"""Parametrized geometry families and their displacement fields.

A family maps a normalized design vector ``p`` in the unit box to a
:class:`~cavopt.splines.NurbsNet`.  Each normalized parameter maps affinely
onto a physical range (``bounds``).  Shape derivatives need the control-point
velocities ``dP_i/dp_n``; affine families supply them exactly, the others by
a one-sided difference of the parameter-to-control-point map.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .splines import KnotVector, NurbsNet, eval_point, nurbs_table, rectangle_net


class ParameterDomainError(ValueError):
    """Design vector outside the unit box."""


class GeometryError(ArithmeticError):
    """Degenerate (singular or inverted) geometry map."""


def check_box(p, n_params: int | None = None) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if n_params is not None and p.shape != (n_params,):
        raise ParameterDomainError("expected %d parameters, got shape %s" % (n_params, p.shape))
    if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise ParameterDomainError("design vector %s leaves the box [0, 1]^n" % np.array2string(p))
    return p


def default_fd_step(p_n: float) -> float:
    return max(0.01 * abs(p_n), 1e-3)


@dataclass(frozen=True)
class DisplacementField:
    """Control-point velocities of one parameter on the current net."""

    velocities: np.ndarray
    net: NurbsNet

    def __post_init__(self):
        v = np.asarray(self.velocities, dtype=float).reshape(-1, 2)
        if v.shape[0] != self.net.points.shape[0]:
            raise ValueError("one velocity per control point required")
        object.__setattr__(self, "velocities", v)


def eval_displacement(df: DisplacementField, xhat) -> tuple[np.ndarray, np.ndarray]:
    """Displacement ``V`` and its physical gradient ``dV/dx`` at a reference point."""
    net = df.net
    xhat = np.atleast_1d(np.asarray(xhat, dtype=float))
    idx, R, dR = nurbs_table(net, xhat[None, :], 1)
    idx, R, dR = idx[0], R[0], dR[0]
    dP = df.velocities[idx]
    value = R @ dP
    _, jac = eval_point(net, xhat)
    det = np.linalg.det(jac)
    if not det > 0:
        raise GeometryError("singular geometry Jacobian (det=%g) at reference point %s" % (det, xhat.tolist()))
    return value, (dP.T @ dR) @ np.linalg.inv(jac)


class GeometryFamily:
    """Base class; subclasses implement :meth:`net` and optionally exact velocities."""

    kind = "abstract"
    is_affine = False

    def __init__(self, bounds, cells=None):
        self.bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if np.any(self.bounds[:, 1] <= self.bounds[:, 0]):
            raise ValueError("each bound needs lo < hi")
        self.cells = None if cells is None else np.asarray(cells, dtype=float).reshape(-1, 2)

    @property
    def n_params(self) -> int:
        return self.bounds.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.bounds[:, 1] - self.bounds[:, 0]

    def physical(self, p) -> np.ndarray:
        p = check_box(p, self.n_params)
        return self.bounds[:, 0] + self.widths * p

    def normalized(self, phys) -> np.ndarray:
        return (np.asarray(phys, dtype=float) - self.bounds[:, 0]) / self.widths

    def net(self, p) -> NurbsNet:
        raise NotImplementedError

    def exact_velocity(self, p, n: int) -> np.ndarray | None:
        """Exact ``dP/dp_n`` if available in closed form."""
        return None

    def velocity(self, p, n: int, delta: float | None = None) -> DisplacementField:
        p = check_box(p, self.n_params)
        base = self.net(p)
        exact = self.exact_velocity(p, n)
        if exact is not None:
            return DisplacementField(exact, base)
        if delta is None:
            delta = default_fd_step(p[n])
        if not delta > 0:
            raise ValueError("finite-difference step must be positive")
        q = p.copy()
        if p[n] + delta <= 1.0:
            q[n] = p[n] + delta
            dP = (self.net(q).points - base.points) / delta
        else:
            q[n] = p[n] - delta
            dP = (base.points - self.net(q).points) / delta
        return DisplacementField(dP, base)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "bounds": self.bounds.tolist()}
        if self.cells is not None:
            out["cells"] = self.cells.tolist()
        return out


class ScaledRectangle(GeometryFamily):
    """Single parameter: the x-extent of the base net, scaled about its left edge."""

    kind = "scaled-rectangle"
    is_affine = True

    def __init__(self, bounds, base_net: NurbsNet | None = None, cells=None):
        super().__init__(bounds, cells)
        if self.n_params != 1:
            raise ValueError("scaled-rectangle has exactly one parameter")
        self.base_net = base_net if base_net is not None else rectangle_net(1.0, 1.0)
        x = self.base_net.points[:, 0]
        self._x0 = x.min()
        self._xhat = (x - x.min()) / (x.max() - x.min())

    def net(self, p):
        width = self.physical(p)[0]
        pts = self.base_net.points.copy()
        pts[:, 0] = self._x0 + width * self._xhat
        return self.base_net.with_points(pts)

    def exact_velocity(self, p, n):
        v = np.zeros_like(self.base_net.points)
        v[:, 0] = self.widths[0] * self._xhat
        return v

    def to_dict(self):
        out = super().to_dict()
        out["base_net"] = self.base_net.to_dict()
        return out


class ExplicitControlPath(GeometryFamily):
    """Control points move along straight paths: ``P = P0 + sum_n phys_n * D_n``."""

    kind = "explicit-control-path"
    is_affine = True

    def __init__(self, bounds, base_net: NurbsNet, paths, cells=None):
        super().__init__(bounds, cells)
        self.base_net = base_net
        self.paths = np.asarray(paths, dtype=float).reshape(self.n_params, -1, 2)
        if self.paths.shape[1] != base_net.points.shape[0]:
            raise ValueError("each path needs one displacement per control point")

    def net(self, p):
        phys = self.physical(p)
        return self.base_net.with_points(self.base_net.points + np.tensordot(phys, self.paths, axes=1))

    def exact_velocity(self, p, n):
        return self.widths[n] * self.paths[n]

    def to_dict(self):
        out = super().to_dict()
        out["base_net"] = self.base_net.to_dict()
        out["paths"] = self.paths.tolist()
        return out


def uniform_scaling(bounds, base_net: NurbsNet | None = None) -> ExplicitControlPath:
    """Family ``P = s * P_hat`` with the scale ``s`` as the only parameter."""
    base = base_net if base_net is not None else rectangle_net(1.0, 1.0)
    zero = base.with_points(np.zeros_like(base.points))
    return ExplicitControlPath(bounds, zero, base.points[None])


@dataclass(frozen=True)
class ChainLayout:
    """Fixed dimensions of a multi-cell chain (meters)."""

    n_cells: int = 3
    cell_length: float = 0.1
    iris_half_height: float = 0.02
    bump_weight: float = 0.8348623853211009

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("a chain needs at least two cells")
        if not (self.cell_length > 0 and self.iris_half_height > 0 and self.bump_weight > 0):
            raise ValueError("chain dimensions and bump weight must be positive")


def arc_weight(amplitude: float, half_chord: float) -> float:
    """Middle weight of the rational quadratic that is an exact circular arc."""
    return float(np.cos(2.0 * np.arctan(amplitude / half_chord)))


class MultiCellChain(GeometryFamily):
    """Symmetric channel of coupled cells along the x-axis.

    Parameters (physical): length of the first cell, length of the last cell,
    and the bump amplitude shared by all cells.  Each cell wall is a rational
    quadratic Bezier bump above an iris of fixed half-height.  The middle
    control point sits where the end tangents of a circular arc with the given
    amplitude (sagitta) meet, at height ``2 A / (1 - (A / c)^2)`` above the
    iris for half-chord ``c``; the middle weight is fixed by the layout, so the
    wall is an exact circular arc only for the amplitude that weight was
    chosen for.  The control points therefore depend nonlinearly on all three
    parameters.
    """

    kind = "multi-cell-chain"
    is_affine = False

    def __init__(self, bounds, layout: ChainLayout | None = None):
        layout = layout or ChainLayout()
        n = layout.n_cells
        cells = np.stack([np.arange(n) / n, np.arange(1, n + 1) / n], axis=1)
        super().__init__(bounds, cells)
        if self.n_params != 3:
            raise ValueError("multi-cell-chain has exactly three parameters")
        self.layout = layout
        shortest = min(self.bounds[0, 0], self.bounds[1, 0], layout.cell_length)
        if self.bounds[0, 0] <= 0 or self.bounds[1, 0] <= 0 or self.bounds[2, 0] <= 0:
            raise ValueError("chain parameters must be positive")
        if self.bounds[2, 1] >= 0.5 * shortest:
            raise ValueError("bump amplitude must stay below half the shortest cell length")
        breaks = np.repeat(np.arange(1, n) / n, 2)
        self._kv_axial = KnotVector(2, np.concatenate([[0.0, 0.0, 0.0], breaks, [1.0, 1.0, 1.0]]))
        self._kv_trans = KnotVector(1, [0.0, 0.0, 1.0, 1.0])
        w_axial = np.ones(2 * n + 1)
        w_axial[1::2] = layout.bump_weight
        self._weights = np.repeat(w_axial, 2)

    def cell_lengths(self, phys) -> np.ndarray:
        lengths = np.full(self.layout.n_cells, self.layout.cell_length)
        lengths[0], lengths[-1] = phys[0], phys[1]
        return lengths

    def net(self, p):
        phys = self.physical(p)
        lengths = self.cell_lengths(phys)
        amp = phys[2]
        edges = np.concatenate([[0.0], np.cumsum(lengths)])
        ratio = amp / (0.5 * lengths)
        ctrl = 2.0 * amp / (1.0 - ratio ** 2)
        xs = np.empty(2 * lengths.size + 1)
        ys = np.empty_like(xs)
        xs[0::2] = edges
        xs[1::2] = edges[:-1] + 0.5 * lengths
        ys[0::2] = self.layout.iris_half_height
        ys[1::2] = self.layout.iris_half_height + ctrl
        pts = np.empty((xs.size, 2, 2))
        pts[:, 0, 0] = pts[:, 1, 0] = xs
        pts[:, 0, 1] = -ys
        pts[:, 1, 1] = ys
        return NurbsNet((self._kv_axial, self._kv_trans), pts.reshape(-1, 2), self._weights)

    def to_dict(self):
        out = super().to_dict()
        out["chain"] = {
            "n_cells": self.layout.n_cells,
            "cell_length": self.layout.cell_length,
            "iris_half_height": self.layout.iris_half_height,
            "bump_weight": self.layout.bump_weight,
        }
        return out


def family_net(fam: GeometryFamily, p) -> NurbsNet:
    return fam.net(p)


def control_velocity(fam: GeometryFamily, p, n: int, delta: float | None = None) -> DisplacementField:
    return fam.velocity(p, n, delta)


def family_from_dict(data: dict) -> GeometryFamily:
    kind = data["kind"]
    bounds = data["bounds"]
    cells = data.get("cells")
    if kind == "scaled-rectangle":
        base = NurbsNet.from_dict(data["base_net"]) if "base_net" in data else None
        return ScaledRectangle(bounds, base, cells)
    if kind == "explicit-control-path":
        return ExplicitControlPath(bounds, NurbsNet.from_dict(data["base_net"]), data["paths"], cells)
    if kind == "multi-cell-chain":
        fam = MultiCellChain(bounds, ChainLayout(**data.get("chain", {})))
        if cells is not None and not np.allclose(np.asarray(cells, dtype=float), fam.cells):
            raise ValueError("cells of a multi-cell-chain are fixed by its layout")
        return fam
    raise ValueError("unknown geometry family kind %r" % kind)


def load_family(path) -> GeometryFamily:
    return family_from_dict(json.loads(Path(path).read_text()))
