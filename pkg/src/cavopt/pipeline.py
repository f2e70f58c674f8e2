"""Parameter-to-spectrum pipelines.

A pipeline turns a normalized design vector into a :class:`Snapshot`
(eigenpairs plus the mass matrix used for tracking) and differentiates a
selected eigenvalue with respect to the design parameters.
:class:`DiscretePipeline` assembles and solves a spline discretization;
:class:`PillboxPipeline` evaluates closed-form pillbox modes and stands in for
it in the analytic scenario.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assembly import SCALAR, assemble, assemble_with_derivatives, build_space, evaluate_field
from .eigen import EigenSolution, lambda_to_freq, solve_gevp
from .geometry import GeometryFamily, check_box
from .oracle import PillboxSpec, bessel_zero, parse_label
from .sensitivity import EigenSensitivity, eigenpair_derivative
from .splines import NurbsNet, eval_points

DEFAULT_PILLBOX_MODES = ("TM010", "TE111", "TM011", "TE112", "TM110", "TE211", "TM012", "TE011")


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Everything computed for one design vector."""

    p: np.ndarray
    solution: EigenSolution
    mass: object = None
    system: object = None
    net: NurbsNet | None = None
    labels: tuple | None = None

    @property
    def frequencies(self) -> np.ndarray:
        return self.solution.frequencies


@dataclass(frozen=True)
class AxisSamples:
    xi: np.ndarray
    points: np.ndarray
    values: np.ndarray


def field_on_axis(space, net: NurbsNet, eigenvector, n_samples: int) -> AxisSamples:
    """Field magnitude along the image of the reference centerline ``eta = 1/2``.

    Samples sit at the midpoints of ``n_samples`` equal intervals in ``xi``.
    Scalar spaces report ``|u|``; curl-conforming spaces report the magnitude
    of the component tangent to the centerline.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    xi = (np.arange(n_samples) + 0.5) / n_samples
    ref = np.stack([xi, np.full(n_samples, 0.5)], axis=1)
    values = evaluate_field(space, net, eigenvector, ref)
    points, jac = eval_points(net, ref)
    if space.kind == SCALAR:
        mag = np.abs(values)
    else:
        tangent = jac[:, :, 0]
        tangent = tangent / np.linalg.norm(tangent, axis=1, keepdims=True)
        mag = np.abs(np.einsum("qi,qi->q", values, tangent))
    return AxisSamples(xi, points, mag)


class DiscretePipeline:
    """Spline discretization of one geometry family.

    The analysis space is built once: every family keeps its knot lines fixed,
    so only the control points (and hence the matrices) change with ``p``.
    """

    analytic = False

    def __init__(self, family: GeometryFamily, kind: str = "scalar", degree: int = 2, refinement: int = 0,
                 subdivisions=None, n_wanted: int = 8, velocity_step: float | None = None,
                 samples_per_cell: int = 64):
        self.family = family
        self.n_wanted = int(n_wanted)
        self.velocity_step = velocity_step
        self.samples_per_cell = int(samples_per_cell)
        mid = np.full(family.n_params, 0.5)
        self.space = build_space(family.net(mid), kind, degree, refinement, subdivisions)

    @property
    def n_params(self) -> int:
        return self.family.n_params

    @property
    def cells(self) -> np.ndarray:
        return np.array([[0.0, 1.0]]) if self.family.cells is None else self.family.cells

    def physical(self, p) -> np.ndarray:
        return self.family.physical(p)

    def solve(self, p) -> Snapshot:
        p = check_box(p, self.n_params)
        net = self.family.net(p)
        system = assemble(self.space, net)
        sol = solve_gevp(system, self.n_wanted, kernel_hint=self.space.kernel_dim)
        return Snapshot(p, sol, system.M, system, net)

    def fields(self, p, delta: float | None = None):
        step = self.velocity_step if delta is None else delta
        return [self.family.velocity(p, n, step) for n in range(self.n_params)]

    def derivatives(self, snap: Snapshot, delta: float | None = None):
        """Closed-form system derivatives at the snapshot's design vector."""
        return assemble_with_derivatives(self.space, snap.net, self.fields(snap.p, delta))

    def eigen_derivative(self, snap: Snapshot, k: int, delta: float | None = None) -> EigenSensitivity:
        _, dsys = self.derivatives(snap, delta)
        lam = snap.solution.eigenvalues
        neighbors = np.delete(lam, k)
        return eigenpair_derivative(snap.system, dsys, lam[k], snap.solution.eigenvectors[:, k],
                                    neighbors=neighbors)

    def axis_field(self, snap: Snapshot, k: int, samples_per_cell: int | None = None) -> AxisSamples:
        per_cell = self.samples_per_cell if samples_per_cell is None else samples_per_cell
        n = per_cell * self.cells.shape[0]
        return field_on_axis(self.space, snap.net, snap.solution.eigenvectors[:, k], n)


class PillboxPipeline:
    """Closed-form pillbox cavity with the radius as the only design parameter.

    Each catalogued mode is represented by a fixed unit vector, so the
    correlation of two snapshots identifies modes exactly; the mass matrix is
    the identity.
    """

    analytic = True

    def __init__(self, bounds=((0.02, 0.07),), length: float = 0.1, modes=DEFAULT_PILLBOX_MODES):
        self.bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if self.bounds.shape[0] != 1 or not self.bounds[0, 1] > self.bounds[0, 0] > 0:
            raise ValueError("pillbox needs one positive radius range lo < hi")
        self.length = float(length)
        self.modes = tuple(modes)
        if len(set(self.modes)) != len(self.modes):
            raise ValueError("duplicate pillbox mode labels")
        self._roots = []
        for label in self.modes:
            family, m, n, p = parse_label(label)
            self._roots.append((bessel_zero("J" if family == "TM" else "J'", m, n), p * math.pi / self.length))
        self._roots = np.array(self._roots)
        self.n_wanted = len(self.modes)

    @property
    def n_params(self) -> int:
        return 1

    def physical(self, p) -> np.ndarray:
        p = check_box(p, 1)
        return self.bounds[:, 0] + (self.bounds[:, 1] - self.bounds[:, 0]) * p

    def spec(self, p) -> PillboxSpec:
        return PillboxSpec(float(self.physical(p)[0]), self.length)

    def _lambdas(self, r: float) -> np.ndarray:
        x, kz = self._roots[:, 0], self._roots[:, 1]
        return (x / r) ** 2 + kz ** 2

    def solve(self, p) -> Snapshot:
        p = check_box(p, 1)
        lam = self._lambdas(float(self.physical(p)[0]))
        order = np.argsort(lam, kind="stable")
        vecs = np.eye(lam.size)[:, order]
        sol = EigenSolution(lam[order], vecs, np.empty(0), 0, 0.0)
        return Snapshot(p, sol, None, None, None, tuple(self.modes[i] for i in order))

    def eigen_derivative(self, snap: Snapshot, k: int, delta: float | None = None) -> EigenSensitivity:
        r = float(self.physical(snap.p)[0])
        mode = int(np.argmax(snap.solution.eigenvectors[:, k]))
        x = self._roots[mode, 0]
        dlam = -2.0 * x ** 2 / r ** 3 * (self.bounds[0, 1] - self.bounds[0, 0])
        e = snap.solution.eigenvectors[:, k]
        return EigenSensitivity(np.array([dlam]), np.zeros((e.size, 1)), e.copy(), 1.0, 0.0)

    def frequencies_by_label(self, snap: Snapshot) -> dict[str, float]:
        f = lambda_to_freq(snap.solution.eigenvalues)
        return {lab: float(v) for lab, v in zip(snap.labels, f)}
