"""Riemannian shape gradients from an assembled shape derivative.

Two metrics identify a deformation field V with the derivative dJ:

* the Sobolev-type outer metric of integer order s, realized as a cascade
  of s Helmholtz-type solves (M + A K) -- the 2s-th order operator split
  into s second-order problems chained through mass-matrix transfers;
* the Steklov-Poincare inner metric, realized through a linear elasticity
  operator with a harmonically graded shear modulus.

Both solve with homogeneous Dirichlet conditions on every fixed boundary
node (outer boundary, supports, load segment); shape nodes stay free, so
gradients can move the shape while the hold-all boundary never moves.
"""

from __future__ import annotations

import numpy as np

from dataclasses import dataclass


from . import fem
from .fem import LinearFunctional, NodalField
from .mesh import Mesh


@dataclass(frozen=True)
class HsMetric:
    """Order-s Sobolev metric; ``smoothing`` weights the Laplacian term.

    The CLI exposes ``smoothing`` as --A.
    """

    order: int
    smoothing: float

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be a positive integer")
        if self.smoothing <= 0.0:
            raise ValueError("smoothing must be positive")


@dataclass(frozen=True)
class SpMetric:
    """Steklov-Poincare metric with graded shear modulus (lambda = 0)."""

    mu_min: float
    mu_max: float

    def __post_init__(self):
        if not 0.0 < self.mu_min <= self.mu_max:
            raise ValueError("need 0 < mu_min <= mu_max")


def gradient_dirichlet_dofs(mesh: Mesh) -> np.ndarray:
    """Vector DoFs clamped in every gradient solve: fixed boundary nodes."""
    nodes = mesh.fixed_boundary_nodes
    return np.concatenate([2 * nodes, 2 * nodes + 1])


def _dj_vector(mesh: Mesh, dJ) -> np.ndarray:
    coeffs = dJ.coeffs if isinstance(dJ, LinearFunctional) else np.asarray(dJ)
    if coeffs.shape != (mesh.n_nodes, 2):
        raise ValueError("shape derivative must be a vector functional on the mesh")
    return coeffs.ravel().astype(float)


def _helmholtz(mesh: Mesh, smoothing: float):
    M = fem.assemble_mass(mesh, 2)
    K = fem.assemble_stiffness(mesh, 2)
    return M, (M + smoothing * K).tocsr()


def hs_gradient(metric: HsMetric, mesh: Mesh, dJ, *,
                strict: bool = True) -> NodalField:
    """Shape gradient for the order-s metric via the split solve cascade.

    Solves (M + A K) X = rhs s times: the first right-hand side is the
    shape derivative, subsequent ones are mass-weighted transfers M X of
    the previous solution, so the s solves compose the discrete operator
    consistently.  The returned field is exactly zero on clamped DoFs.
    """
    rhs = _dj_vector(mesh, dJ)
    M, S = _helmholtz(mesh, metric.smoothing)
    dofs = gradient_dirichlet_dofs(mesh)
    S_bc, rhs_bc = fem.apply_dirichlet(S, rhs, dofs)
    x = fem.solve_spd(S_bc, rhs_bc, strict=strict)
    for _ in range(metric.order - 1):
        rhs = np.asarray(M @ x)
        rhs[dofs] = 0.0
        x = fem.solve_spd(S_bc, rhs, strict=strict)
    return NodalField(mesh, x.reshape(-1, 2))


def sp_mu_field(metric: SpMetric, mesh: Mesh) -> NodalField:
    """Harmonic shear modulus: mu_min on the shape, mu_max on fixed boundary."""
    shape_nodes = np.nonzero(mesh.node_is_shape)[0]
    fixed_nodes = mesh.fixed_boundary_nodes
    if len(shape_nodes) == 0 or len(fixed_nodes) == 0:
        raise ValueError("mesh must carry SHAPE and fixed boundary markers")
    K = fem.assemble_stiffness(mesh, 1)
    lift = np.zeros(mesh.n_nodes)
    lift[fixed_nodes] = metric.mu_max
    lift[shape_nodes] = metric.mu_min
    dofs = np.union1d(shape_nodes, fixed_nodes)
    A, b = fem.apply_dirichlet(K, -np.asarray(K @ lift), dofs)
    x = fem.solve_spd(A, b)
    return NodalField(mesh, x + lift)


def sp_gradient(metric: SpMetric, mesh: Mesh, dJ, *,
                strict: bool = True) -> NodalField:
    """Shape gradient for the Steklov-Poincare metric (elasticity solve)."""
    rhs = _dj_vector(mesh, dJ)
    mu = sp_mu_field(metric, mesh)
    A = fem.assemble_elasticity(mesh, mu.values, 0.0)
    A_bc, rhs_bc = fem.apply_dirichlet(A, rhs, gradient_dirichlet_dofs(mesh))
    x = fem.solve_spd(A_bc, rhs_bc, strict=strict)
    return NodalField(mesh, x.reshape(-1, 2))


def shape_gradient(metric, mesh: Mesh, dJ, *, strict: bool = True) -> NodalField:
    """Dispatch to the metric-specific gradient solve."""
    if isinstance(metric, HsMetric):
        return hs_gradient(metric, mesh, dJ, strict=strict)
    if isinstance(metric, SpMetric):
        return sp_gradient(metric, mesh, dJ, strict=strict)
    raise TypeError(f"unknown metric {metric!r}")


def metric_inner(metric, mesh: Mesh, V: NodalField, W: NodalField) -> float:
    """Evaluate the discrete metric bilinear form g(V, W).

    For order s the discrete operator is S (M^-1 S)^(s-1) restricted to the
    free DoFs, matching the composition realized by the solve cascade.
    """
    dofs = gradient_dirichlet_dofs(mesh)
    v = V.values.ravel().copy()
    w = W.values.ravel().copy()
    v[dofs] = 0.0
    w[dofs] = 0.0
    if isinstance(metric, SpMetric):
        mu = sp_mu_field(metric, mesh)
        A = fem.assemble_elasticity(mesh, mu.values, 0.0)
        # v and w vanish on clamped DoFs, so the raw pairing equals the
        # eliminated one
        return float(w @ (A @ v))
    M, S = _helmholtz(mesh, metric.smoothing)
    S_bc, _ = fem.apply_dirichlet(S, v, dofs)
    M_bc, _ = fem.apply_dirichlet(M, v, dofs)
    u = np.asarray(S_bc @ v)
    u[dofs] = 0.0
    for _ in range(metric.order - 1):
        u = fem.solve_spd(M_bc, u)
        u = np.asarray(S_bc @ u)
        u[dofs] = 0.0
    return float(w @ u)


def riesz_residual(metric, mesh: Mesh, V: NodalField, dJ,
                   probes) -> float:
    """Worst relative Riesz identification error over probe fields.

    Probes must vanish on the clamped DoFs; the residual compares the
    metric pairing g(V, W) against the shape derivative dJ(W).
    """
    dJ = dJ if isinstance(dJ, LinearFunctional) else LinearFunctional(mesh, dJ)
    worst = 0.0
    for W in probes:
        if not isinstance(W, NodalField):
            W = NodalField(mesh, W)
        lhs = metric_inner(metric, mesh, V, W)
        rhs = dJ(W)
        worst = max(worst, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return worst
