"""Validation utilities: finite-difference derivative checks and the
gradient comparison across metrics on a shared shape derivative."""

from __future__ import annotations

import time

import numpy as np

from dataclasses import dataclass

from . import fem, metrics, problems
from .mesh import SHAPE, Mesh, deform
from ._delaunay import distance_to_segments


def smooth_interior_fields(mesh: Mesh, count: int, seed: int = 0,
                           width: float | None = None) -> list:
    """Random smooth vector fields vanishing on the fixed boundary.

    Fields are low-order trigonometric polynomials shaped by a smooth
    cutoff that decays to zero toward the non-SHAPE marked polylines; the
    fixed boundary nodes are zeroed exactly.
    """
    rng = np.random.default_rng(seed)
    pts = mesh.nodes
    fixed_edges = mesh.boundary_edges[mesh.boundary_markers != SHAPE]
    seg_a = pts[fixed_edges[:, 0]]
    seg_b = pts[fixed_edges[:, 1]]
    dist = distance_to_segments(pts, seg_a, seg_b).min(axis=1)
    if width is None:
        width = 4.0 * float(np.median(
            np.linalg.norm(seg_b - seg_a, axis=1)))
    s = np.clip(dist / width, 0.0, 1.0)
    cutoff = s * s * (3.0 - 2.0 * s)
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]))
    fields = []
    for _ in range(count):
        values = np.zeros((mesh.n_nodes, 2))
        for comp in range(2):
            acc = np.zeros(mesh.n_nodes)
            for _ in range(3):
                k = rng.uniform(0.5, 3.0, size=2) * np.pi / scale
                phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
                acc += (rng.normal() * np.sin(k[0] * pts[:, 0] + phase[0])
                        * np.sin(k[1] * pts[:, 1] + phase[1]))
            values[:, comp] = acc
        values *= cutoff[:, None]
        values[mesh.fixed_boundary_nodes] = 0.0
        norm = np.abs(values).max()
        if norm > 0:
            values /= norm
        fields.append(fem.NodalField(mesh, values))
    return fields


def _objective(problem, mesh: Mesh) -> float:
    if isinstance(problem, problems.InterfaceProblem):
        y = problems.interface_state(problem, mesh)
        return problems.interface_objective(problem, mesh, y)
    y = problems.compliance_state(problem, mesh)
    return problems.compliance_objective(problem, mesh, y)


def shape_derivative(problem, mesh: Mesh) -> fem.LinearFunctional:
    if isinstance(problem, problems.InterfaceProblem):
        y = problems.interface_state(problem, mesh)
        p = problems.interface_adjoint(problem, mesh, y)
        return problems.interface_shape_derivative(problem, mesh, y, p)
    y = problems.compliance_state(problem, mesh)
    return problems.compliance_shape_derivative(problem, mesh, y)


@dataclass(frozen=True)
class FdReport:
    steps: tuple
    errors: tuple
    order: float
    derivative: float


def fd_check(problem, mesh: Mesh, field: fem.NodalField,
             steps=(1e-2, 1e-3, 1e-4, 1e-5)) -> FdReport:
    """Compare the assembled derivative against objective differences.

    The observed order is the least-squares slope of log(error) against
    log(step); the assembly is exact for the discrete functional, so the
    expected order is one.
    """
    J0 = _objective(problem, mesh)
    dJ = shape_derivative(problem, mesh)(field)
    errors = []
    for t in steps:
        J_t = _objective(problem, deform(mesh, field.values, t))
        errors.append(abs((J_t - J0) / t - dJ))
    log_t = np.log(np.asarray(steps))
    log_e = np.log(np.maximum(errors, 1e-300))
    order = float(np.polyfit(log_t, log_e, 1)[0])
    return FdReport(tuple(steps), tuple(errors), order, dJ)


@dataclass(frozen=True)
class GradientReport:
    metric_name: str
    l2_norm: float
    solve_seconds: float
    field: fem.NodalField


def compare_gradients(problem, mesh: Mesh, metric_table: dict) -> list:
    """One shape derivative, one gradient solve per metric.

    ``metric_table`` maps display names to metric objects.  The timer wraps
    only the gradient solve, not the state/adjoint solves or assembly.
    """
    dJ = shape_derivative(problem, mesh)
    reports = []
    for name, metric in metric_table.items():
        t0 = time.perf_counter()
        V = metrics.shape_gradient(metric, mesh, dJ)
        seconds = time.perf_counter() - t0
        reports.append(GradientReport(name, fem.l2_norm(V), seconds, V))
    return reports
