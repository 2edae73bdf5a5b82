"""Piecewise-linear finite element assembly and sparse solves.

All operators are assembled with exact formulas for products of P1 basis
functions on affine triangles, so there is no quadrature error on any
matrix entry.  Vector-valued fields use interleaved degrees of freedom
``(node0_x, node0_y, node1_x, ...)``, i.e. ``values.ravel()`` of an (N, 2)
array.
"""

from __future__ import annotations

import numpy as np

from dataclasses import dataclass

from scipy import sparse
from scipy.sparse.linalg import splu

from .mesh import Mesh


class SolveError(RuntimeError):
    """Linear solve failed to reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class NodalField:
    """P1 coefficients on mesh nodes: scalar (N,) or 2-vector (N, 2)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.shape not in ((self.mesh.n_nodes,), (self.mesh.n_nodes, 2)):
            raise ValueError(f"bad field shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field has non-finite entries")
        object.__setattr__(self, "values", values)
        values.flags.writeable = False

    @property
    def arity(self) -> int:
        return 1 if self.values.ndim == 1 else 2


@dataclass(frozen=True)
class LinearFunctional:
    """Discrete linear form ``W -> sum(coeffs * W)`` over nodal fields."""

    mesh: Mesh
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.ascontiguousarray(self.coeffs, dtype=float)
        if coeffs.shape not in ((self.mesh.n_nodes,), (self.mesh.n_nodes, 2)):
            raise ValueError(f"bad functional shape {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)
        coeffs.flags.writeable = False

    @property
    def arity(self) -> int:
        return 1 if self.coeffs.ndim == 1 else 2

    def __call__(self, field) -> float:
        values = field.values if isinstance(field, NodalField) else np.asarray(field)
        return float(np.vdot(self.coeffs.ravel(), values.ravel()))


def hat_gradients(mesh: Mesh) -> np.ndarray:
    """Constant gradients of the three hat functions per triangle, (M, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.signed_areas
    g = np.empty((mesh.n_cells, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        g[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    g /= (2.0 * area)[:, None, None]
    return g


def cell_gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Piecewise-constant gradient of a scalar P1 field, (M, 2)."""
    g = hat_gradients(mesh)
    return np.einsum("mi,mij->mj", values[mesh.triangles], g)


def vector_cell_gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Jacobian of a vector P1 field per cell, (M, 2, 2) with J[a, b] = dW_a/dx_b."""
    g = hat_gradients(mesh)
    return np.einsum("mia,mib->mab", values[mesh.triangles], g)


def lumped_areas(mesh: Mesh) -> np.ndarray:
    """Nodal lumped areas (row sums of the scalar mass matrix)."""
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, mesh.triangles.ravel(),
              np.repeat(mesh.signed_areas / 3.0, 3))
    return out


def integrate(mesh: Mesh, values: np.ndarray) -> float:
    """Exact integral of a nodal P1 field over the mesh."""
    return float(lumped_areas(mesh) @ np.asarray(values))


def _scatter(rows, cols, vals, n) -> sparse.csr_matrix:
    return sparse.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(n, n)).tocsr()


def _expand_vector(rows, cols, vals, n_nodes):
    """Duplicate a scalar nodal pattern onto both interleaved components."""
    r = np.concatenate([2 * rows.ravel(), 2 * rows.ravel() + 1])
    c = np.concatenate([2 * cols.ravel(), 2 * cols.ravel() + 1])
    v = np.concatenate([vals.ravel(), vals.ravel()])
    return sparse.coo_matrix((v, (r, c)), shape=(2 * n_nodes, 2 * n_nodes)).tocsr()


def assemble_mass(mesh: Mesh, arity: int = 1) -> sparse.csr_matrix:
    """P1 mass matrix; entry sum equals mesh area times arity."""
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = mesh.signed_areas[:, None, None] * local[None, :, :]
    rows = np.repeat(mesh.triangles, 3, axis=1).reshape(-1, 3, 3)
    cols = np.tile(mesh.triangles, 3).reshape(-1, 3, 3)
    if arity == 1:
        return _scatter(rows, cols, vals, mesh.n_nodes)
    return _expand_vector(rows, cols, vals, mesh.n_nodes)


def assemble_stiffness(mesh: Mesh, arity: int = 1,
                       cell_coeff=None) -> sparse.csr_matrix:
    """P1 stiffness matrix with an optional positive per-cell coefficient.

    For arity 2 this is the component-wise vector Laplacian: the scalar
    pattern applied to each interleaved component.
    """
    if cell_coeff is None:
        coeff = np.ones(mesh.n_cells)
    else:
        coeff = np.broadcast_to(np.asarray(cell_coeff, dtype=float),
                                (mesh.n_cells,))
        if np.any(coeff <= 0.0):
            raise ValueError("cell coefficient must be strictly positive")
    g = hat_gradients(mesh)
    vals = np.einsum("m,mia,mja->mij", coeff * mesh.signed_areas, g, g)
    rows = np.repeat(mesh.triangles, 3, axis=1).reshape(-1, 3, 3)
    cols = np.tile(mesh.triangles, 3).reshape(-1, 3, 3)
    if arity == 1:
        return _scatter(rows, cols, vals, mesh.n_nodes)
    return _expand_vector(rows, cols, vals, mesh.n_nodes)


def assemble_elasticity(mesh: Mesh, mu, lam: float = 0.0) -> sparse.csr_matrix:
    """Linear elasticity operator 2 mu eps(u):eps(v) + lam tr tr.

    ``mu`` may be a constant or a nodal field; nodal values are averaged at
    element centroids.  Rigid translations and the infinitesimal rotation
    lie in the kernel until Dirichlet rows are eliminated.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 1:
        if np.any(mu <= 0.0):
            raise ValueError("mu must be strictly positive")
        mu_cell = mu[mesh.triangles].mean(axis=1)
    else:
        if mu <= 0.0:
            raise ValueError("mu must be strictly positive")
        mu_cell = np.full(mesh.n_cells, float(mu))
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")

    g = hat_gradients(mesh)
    m = mesh.n_cells
    # Voigt strain rows (exx, eyy, gxy) for the 6 local dofs (x0,y0,x1,y1,x2,y2)
    B = np.zeros((m, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    D = np.zeros((m, 3, 3))
    D[:, 0, 0] = D[:, 1, 1] = 2.0 * mu_cell + lam
    D[:, 0, 1] = D[:, 1, 0] = lam
    D[:, 2, 2] = mu_cell
    Ke = np.einsum("m,mki,mkl,mlj->mij", mesh.signed_areas, B, D, B)

    dofs = np.empty((m, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    rows = np.repeat(dofs, 6, axis=1).reshape(m, 6, 6)
    cols = np.tile(dofs, 6).reshape(m, 6, 6)
    return _scatter(rows, cols, Ke, 2 * mesh.n_nodes)


def apply_dirichlet(matrix: sparse.spmatrix, rhs: np.ndarray,
                    dofs) -> tuple:
    """Symmetric elimination: zero rows/columns, unit diagonal, zero rhs."""
    dofs = np.asarray(dofs, dtype=np.int64)
    n = matrix.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    P = sparse.diags(keep)
    out = (P @ matrix @ P + sparse.diags(1.0 - keep)).tocsr()
    b = np.asarray(rhs, dtype=float) * keep
    return out, b


def _pcg(A, b, tol: float, max_iter: int):
    """Conjugate gradients with diagonal (Jacobi) preconditioning."""
    diag = A.diagonal()
    inv = np.where(np.abs(diag) > 0.0, 1.0 / diag, 1.0)
    x = np.zeros_like(b)
    r = b.copy()
    z = inv * r
    p = z.copy()
    rz = r @ z
    norm_b = np.linalg.norm(b)
    for _ in range(max_iter):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * norm_b:
            return x
        z = inv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x


def solve_spd(matrix: sparse.spmatrix, rhs: np.ndarray, *,
              tol: float = 1e-10, method: str = "auto",
              strict: bool = True) -> np.ndarray:
    """Solve a symmetric positive definite sparse system.

    ``method`` is "auto" (sparse LU plus iterative refinement), or "pcg"
    (Jacobi-preconditioned conjugate gradients capped at 10 N iterations).
    The relative residual ||Ax-b||/||b|| is always verified against ``tol``;
    with ``strict`` a violation raises SolveError, otherwise the best-effort
    solution is returned (used on badly conditioned late-stage meshes).
    """
    rhs = np.asarray(rhs, dtype=float)
    norm_b = np.linalg.norm(rhs)
    if norm_b == 0.0:
        return np.zeros_like(rhs)
    n = matrix.shape[0]
    if method == "pcg":
        x = _pcg(matrix.tocsr(), rhs, tol, 10 * n)
    elif method == "auto":
        lu = splu(sparse.csc_matrix(matrix))
        x = lu.solve(rhs)
        for _ in range(3):
            r = rhs - matrix @ x
            if np.linalg.norm(r) <= tol * norm_b:
                break
            x = x + lu.solve(r)
    else:
        raise ValueError(f"unknown method {method!r}")
    residual = np.linalg.norm(rhs - matrix @ x) / norm_b
    if strict and not residual <= tol:
        raise SolveError(f"{method} solve did not converge", residual)
    return x


def solve_zero_mean(stiffness: sparse.spmatrix, rhs, mesh: Mesh, *,
                    tol: float = 1e-10, check_compatible: bool = False,
                    return_multiplier: bool = False, strict: bool = True):
    """Solve a pure-Neumann system on the zero-mean subspace.

    The zero-mean constraint is enforced with one Lagrange multiplier
    (bordered system), which also absorbs incompatible right-hand sides by
    returning the least-squares-consistent solution; ``check_compatible``
    enables the strict compatibility precondition instead.
    """
    coeffs = rhs.coeffs if isinstance(rhs, LinearFunctional) else np.asarray(rhs)
    coeffs = coeffs.astype(float).ravel()
    m = lumped_areas(mesh)
    if check_compatible:
        total = abs(float(coeffs.sum()))
        if total > tol * max(np.linalg.norm(coeffs), 1e-300):
            raise SolveError("incompatible pure-Neumann right-hand side", total)
    K = sparse.csr_matrix(stiffness)
    n = K.shape[0]
    bordered = sparse.bmat([[K, m[:, None]], [m[None, :], None]], format="csc")
    b = np.concatenate([coeffs, [0.0]])
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        y, mult = np.zeros(n), 0.0
    else:
        lu = splu(bordered)
        x = lu.solve(b)
        for _ in range(3):
            r = b - bordered @ x
            if np.linalg.norm(r) <= tol * norm_b:
                break
            x = x + lu.solve(r)
        residual = np.linalg.norm(b - bordered @ x) / norm_b
        if strict and not residual <= tol:
            raise SolveError("zero-mean solve did not converge", residual)
        y, mult = x[:n], float(x[n])
    field = NodalField(mesh, y)
    return (field, mult) if return_multiplier else field


def boundary_load(mesh: Mesh, marker: int, value) -> LinearFunctional:
    """Edge-wise trapezoid quadrature of ``integral(g . v ds)`` on marked edges."""
    edges = mesh.edges_with(marker)
    if len(edges) == 0:
        raise ValueError(f"mesh has no edges with marker {marker}")
    lengths = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]],
                             axis=1)
    value = np.asarray(value, dtype=float)
    if value.ndim == 0:
        coeffs = np.zeros(mesh.n_nodes)
        np.add.at(coeffs, edges.ravel(),
                  np.repeat(0.5 * lengths * float(value), 2))
    else:
        coeffs = np.zeros((mesh.n_nodes, 2))
        w = np.repeat(0.5 * lengths, 2)
        np.add.at(coeffs, edges.ravel(), w[:, None] * value[None, :])
    return LinearFunctional(mesh, coeffs)


def l2_norm(field: NodalField) -> float:
    """L2 norm sqrt(v' M v) with the mass matrix of matching arity."""
    M = assemble_mass(field.mesh, 1)
    v = field.values
    if field.arity == 1:
        return float(np.sqrt(max(v @ (M @ v), 0.0)))
    return float(np.sqrt(max(v[:, 0] @ (M @ v[:, 0]) + v[:, 1] @ (M @ v[:, 1]), 0.0)))
