"""The two PDE-constrained shape functionals: states, adjoints, derivatives.

Interface identification: fit the conductivity interface so the zero-mean
potential matches target measurements; tracking objective plus optional
perimeter regularization.  Compliance: minimize load work plus a volume
penalty for a plane-strain elastic structure.

Shape derivatives are assembled in volume form as linear functionals over
nodal deformation fields.  Every term uses quadrature that is *exact* for
the discrete objective under nodal mesh motion, so the assembled functional
is the exact derivative of the discrete functional along the perturbation
of identity; finite differences of the objective converge to it at first
order.  For the interface problem this includes two compatibility terms
involving the Lagrange multipliers of the zero-mean solves: the constant
flux makes the pure-Neumann data incompatible, the multiplier acts as a
uniform volume source, and its pairing with the moving volume contributes
to the exact derivative.
"""

from __future__ import annotations

import dataclasses

import numpy as np

import matplotlib.tri as mtri

from dataclasses import dataclass

from scipy.spatial import cKDTree

from . import fem
from .fem import LinearFunctional, NodalField
from .mesh import DIRICHLET, NEUMANN_LOAD, OUTER, SHAPE, Mesh, shape_perimeter


class Target:
    """Interface for target data: values and gradients at query points."""

    def values_at(self, points: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def gradients_at(self, points: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class MeshTarget(Target):
    """Target measurements stored as a P1 field on a fixed reference mesh.

    Queries locate points in the reference triangulation and interpolate;
    points marginally outside (floating-point slack) are clamped to the
    nearest element.  Querying a reference node reproduces its stored value
    bitwise.
    """

    def __init__(self, mesh: Mesh, values: np.ndarray):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=float)
        tri = mtri.Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1],
                                 mesh.triangles)
        self._finder = tri.get_trifinder()
        self._grads = fem.cell_gradients(mesh, self.values)
        self._tree = cKDTree(mesh.nodes)
        self._vertex_tris = [[] for _ in range(mesh.n_nodes)]
        for t, tri_nodes in enumerate(mesh.triangles):
            for v in tri_nodes:
                self._vertex_tris[int(v)].append(t)

    def _locate(self, points: np.ndarray):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        cells = np.asarray(self._finder(points[:, 0], points[:, 1]), dtype=np.int64)
        lost = np.nonzero(cells < 0)[0]
        for q in lost:
            # clamp to the best incident triangle of the nearest node
            node = int(self._tree.query(points[q])[1])
            best, best_violation = None, np.inf
            for t in self._vertex_tris[node]:
                w = self._barycentric(points[q][None, :], np.array([t]))[0]
                violation = -min(w.min(), 0.0)
                if violation < best_violation:
                    best, best_violation = t, violation
            cells[q] = best
        return points, cells

    def _barycentric(self, points, cells):
        p = self.mesh.nodes[self.mesh.triangles[cells]]
        x, y = points[:, 0], points[:, 1]
        x0, y0 = p[:, 0, 0], p[:, 0, 1]
        x1, y1 = p[:, 1, 0], p[:, 1, 1]
        x2, y2 = p[:, 2, 0], p[:, 2, 1]
        det = (y1 - y2) * (x0 - x2) + (x2 - x1) * (y0 - y2)
        w0 = ((y1 - y2) * (x - x2) + (x2 - x1) * (y - y2)) / det
        w1 = ((y2 - y0) * (x - x2) + (x0 - x2) * (y - y2)) / det
        return np.column_stack([w0, w1, 1.0 - w0 - w1])

    def values_at(self, points: np.ndarray) -> np.ndarray:
        points, cells = self._locate(points)
        w = np.clip(self._barycentric(points, cells), 0.0, None)
        w /= w.sum(axis=1, keepdims=True)
        return np.einsum("qi,qi->q", w, self.values[self.mesh.triangles[cells]])

    def gradients_at(self, points: np.ndarray) -> np.ndarray:
        _, cells = self._locate(points)
        return self._grads[cells]


class FunctionTarget(Target):
    """Analytic target: callables for values and gradients at points."""

    def __init__(self, fn, grad_fn):
        self._fn = fn
        self._grad = grad_fn

    def values_at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.asarray(self._fn(points), dtype=float)

    def gradients_at(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.asarray(self._grad(points), dtype=float)


@dataclass(frozen=True)
class InterfaceProblem:
    """Interface identification data.

    ``kappa_in``/``kappa_out`` are the conductivities of the two regions
    (distinct values make the interface identifiable), ``flux`` the scalar
    Neumann input on the outer boundary, ``perimeter_weight`` the weight of
    the perimeter regularization, and ``target`` the measurement data.
    """

    kappa_in: float
    kappa_out: float
    flux: float
    perimeter_weight: float = 0.0
    target: Target | None = None

    def __post_init__(self):
        if self.kappa_in <= 0.0 or self.kappa_out <= 0.0:
            raise ValueError("conductivities must be positive")
        if self.perimeter_weight < 0.0:
            raise ValueError("perimeter_weight must be nonnegative")

    def with_target(self, target: Target) -> "InterfaceProblem":
        return dataclasses.replace(self, target=target)

    def cell_kappa(self, mesh: Mesh) -> np.ndarray:
        return np.where(mesh.cell_region == 1, self.kappa_in, self.kappa_out)


def interface_state(problem: InterfaceProblem, mesh: Mesh, *,
                    return_multiplier: bool = False, strict: bool = True):
    """Zero-mean potential driven by the boundary flux.

    The constant-flux data is not Neumann-compatible; the zero-mean
    Lagrange formulation returns the least-squares-consistent solution
    (multiplier = total influx / area).
    """
    K = fem.assemble_stiffness(mesh, 1, problem.cell_kappa(mesh))
    b = fem.boundary_load(mesh, OUTER, problem.flux)
    return fem.solve_zero_mean(K, b, mesh, return_multiplier=return_multiplier,
                               strict=strict)


def _target_values(problem: InterfaceProblem, mesh: Mesh) -> np.ndarray:
    if problem.target is None:
        raise ValueError("problem has no target data")
    return problem.target.values_at(mesh.nodes)


def interface_adjoint(problem: InterfaceProblem, mesh: Mesh,
                      y: NodalField, *, strict: bool = True) -> NodalField:
    """Zero-mean adjoint of the tracking term."""
    K = fem.assemble_stiffness(mesh, 1, problem.cell_kappa(mesh))
    M = fem.assemble_mass(mesh, 1)
    r = y.values - _target_values(problem, mesh)
    return fem.solve_zero_mean(K, -(M @ r), mesh, strict=strict)


def interface_objective(problem: InterfaceProblem, mesh: Mesh,
                        y: NodalField) -> float:
    """Tracking misfit plus weighted shape perimeter."""
    M = fem.assemble_mass(mesh, 1)
    r = y.values - _target_values(problem, mesh)
    return 0.5 * float(r @ (M @ r)) + problem.perimeter_weight * shape_perimeter(mesh)


def _perimeter_derivative(mesh: Mesh, weight: float, coeffs: np.ndarray):
    # tangential divergence over shape edges == exact derivative of the
    # polyline length under nodal motion
    edges = mesh.edges_with(SHAPE)
    if len(edges) == 0 or weight == 0.0:
        return
    d = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
    tau = d / np.linalg.norm(d, axis=1)[:, None]
    np.add.at(coeffs, edges[:, 1], weight * tau)
    np.add.at(coeffs, edges[:, 0], -weight * tau)


def interface_shape_derivative(problem: InterfaceProblem, mesh: Mesh,
                               y: NodalField, p: NodalField) -> LinearFunctional:
    """Volume-form derivative of the interface objective.

    Terms: the div(W)-weighted tracking density, the moving-target term
    paired through the consistent mass matrix, the kappa-gradient term, the
    Neumann-compatibility multiplier terms, and the perimeter term in
    tangential-divergence form.
    """
    tris = mesh.triangles
    area = mesh.signed_areas
    g = fem.hat_gradients(mesh)
    ybar = _target_values(problem, mesh)
    r = y.values - ybar
    grad_y = fem.cell_gradients(mesh, y.values)
    grad_p = fem.cell_gradients(mesh, p.values)
    kappa = problem.cell_kappa(mesh)

    M = fem.assemble_mass(mesh, 1)
    lumped = fem.lumped_areas(mesh)
    b = fem.boundary_load(mesh, OUTER, problem.flux)
    c_state = float(b.coeffs.sum()) / mesh.area
    d_adj = -float(lumped @ r) / mesh.area

    rt = r[tris]
    track = (area / 12.0) * (rt.sum(axis=1) ** 2 + (rt ** 2).sum(axis=1))
    gy_gp = np.einsum("ma,ma->m", grad_y, grad_p)
    p_sum = p.values[tris].sum(axis=1)
    y_sum = y.values[tris].sum(axis=1)
    div_weight = (0.5 * track + kappa * area * gy_gp
                  + (area / 3.0) * (c_state * p_sum + d_adj * y_sum))

    coeffs = np.zeros((mesh.n_nodes, 2))
    ka = (kappa * area)
    for k in range(3):
        gk = g[:, k, :]
        cell = (div_weight[:, None] * gk
                - ka[:, None] * np.einsum("ma,ma->m", gk, grad_p)[:, None] * grad_y
                - ka[:, None] * np.einsum("ma,ma->m", gk, grad_y)[:, None] * grad_p)
        np.add.at(coeffs, tris[:, k], cell)

    grad_ybar = problem.target.gradients_at(mesh.nodes)
    coeffs -= (M @ r)[:, None] * grad_ybar

    _perimeter_derivative(mesh, problem.perimeter_weight, coeffs)
    return LinearFunctional(mesh, coeffs)


def make_target(problem: InterfaceProblem, reference_mesh: Mesh) -> MeshTarget:
    """Solve the state on the ground-truth mesh and wrap it as target data."""
    y = interface_state(problem, reference_mesh)
    return MeshTarget(reference_mesh, y.values)


def generate_target(problem: InterfaceProblem, reference_mesh: Mesh,
                    working_mesh: Mesh | None = None) -> NodalField:
    """Target measurements transferred to the working mesh by interpolation.

    Measurement potentials are defined up to an additive constant; after a
    cross-mesh transfer the field is re-gauged to the zero-mean space of
    the destination mesh.  A transfer onto the reference mesh itself is the
    bitwise identity.
    """
    target = make_target(problem, reference_mesh)
    if working_mesh is None or working_mesh is reference_mesh:
        return NodalField(reference_mesh, target.values_at(reference_mesh.nodes))
    values = target.values_at(working_mesh.nodes)
    values = values - fem.integrate(working_mesh, values) / working_mesh.area
    return NodalField(working_mesh, values)


@dataclass(frozen=True)
class ComplianceProblem:
    """Compliance minimization data for the plane-strain bridge.

    Lame parameters derive from Young's modulus and the Poisson ratio;
    ``volume_weight`` penalizes the structure area.
    """

    body_force: tuple = (0.0, 0.0)
    load: tuple = (0.0, -0.25)
    young: float = 1.0
    poisson: float = 0.3
    volume_weight: float = 0.0

    def __post_init__(self):
        if self.young <= 0.0:
            raise ValueError("young must be positive")
        if not 0.0 <= self.poisson < 0.5:
            raise ValueError("poisson must lie in [0, 0.5)")
        if self.volume_weight < 0.0:
            raise ValueError("volume_weight must be nonnegative")

    @property
    def mu(self) -> float:
        return self.young / (2.0 * (1.0 + self.poisson))

    @property
    def lam(self) -> float:
        return (self.young * self.poisson
                / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson)))


def _load_functional(problem: ComplianceProblem, mesh: Mesh) -> LinearFunctional:
    f = np.asarray(problem.body_force, dtype=float)
    coeffs = fem.lumped_areas(mesh)[:, None] * f[None, :]
    coeffs = coeffs + fem.boundary_load(mesh, NEUMANN_LOAD, problem.load).coeffs
    return LinearFunctional(mesh, coeffs)


def _dirichlet_dofs(mesh: Mesh) -> np.ndarray:
    nodes = mesh.nodes_with(DIRICHLET)
    if len(nodes) == 0:
        raise ValueError("mesh has no DIRICHLET boundary (singular operator)")
    return np.concatenate([2 * nodes, 2 * nodes + 1])


def compliance_state(problem: ComplianceProblem, mesh: Mesh, *,
                     strict: bool = True) -> NodalField:
    """Elastic displacement under body force and boundary load."""
    K = fem.assemble_elasticity(mesh, problem.mu, problem.lam)
    b = _load_functional(problem, mesh)
    A, rhs = fem.apply_dirichlet(K, b.coeffs.ravel(), _dirichlet_dofs(mesh))
    x = fem.solve_spd(A, rhs, strict=strict)
    return NodalField(mesh, x.reshape(-1, 2))


def compliance_objective(problem: ComplianceProblem, mesh: Mesh,
                         y: NodalField) -> float:
    """Load work plus the volume penalty."""
    return _load_functional(problem, mesh)(y) + problem.volume_weight * mesh.area


def _stress(problem: ComplianceProblem, mesh: Mesh, y: NodalField):
    J = fem.vector_cell_gradients(mesh, y.values)
    eps = 0.5 * (J + np.transpose(J, (0, 2, 1)))
    tr = eps[:, 0, 0] + eps[:, 1, 1]
    sigma = 2.0 * problem.mu * eps
    sigma[:, 0, 0] += problem.lam * tr
    sigma[:, 1, 1] += problem.lam * tr
    return J, eps, sigma


def compliance_shape_derivative(problem: ComplianceProblem, mesh: Mesh,
                                y: NodalField) -> LinearFunctional:
    """Volume-form derivative of the compliance objective.

    Compliance is self-adjoint (adjoint = -state), which folds the state
    sensitivity into: twice the load-density div(W) term, twice the
    energy-density pairing with sym(grad y grad W), minus the energy
    density times div(W), plus the volume term and the (doubled) moving
    boundary-load term on the load segment.
    """
    tris = mesh.triangles
    area = mesh.signed_areas
    g = fem.hat_gradients(mesh)
    J, eps, sigma = _stress(problem, mesh, y)
    f = np.asarray(problem.body_force, dtype=float)

    energy = np.einsum("mab,mab->m", sigma, eps)
    y_mean = y.values[tris].mean(axis=1)
    div_weight = (2.0 * (y_mean @ f) - energy) * area + problem.volume_weight * area
    JTsigma = np.einsum("mac,mab->mcb", J, sigma)

    coeffs = np.zeros((mesh.n_nodes, 2))
    for k in range(3):
        gk = g[:, k, :]
        cell = (div_weight[:, None] * gk
                + 2.0 * area[:, None] * np.einsum("mcb,mb->mc", JTsigma, gk))
        np.add.at(coeffs, tris[:, k], cell)

    load = np.asarray(problem.load, dtype=float)
    edges = mesh.edges_with(NEUMANN_LOAD)
    if len(edges):
        d = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
        tau = d / np.linalg.norm(d, axis=1)[:, None]
        gy = 0.5 * (y.values[edges[:, 0]] + y.values[edges[:, 1]]) @ load
        np.add.at(coeffs, edges[:, 1], 2.0 * gy[:, None] * tau)
        np.add.at(coeffs, edges[:, 0], -2.0 * gy[:, None] * tau)
    return LinearFunctional(mesh, coeffs)
