"""Riemannian steepest descent on deforming meshes.

Each iteration solves the state (and adjoint where needed), assembles the
shape derivative, identifies the gradient under the configured metric, and
retracts with the perturbation of identity ``x - t V``.  Steps that invert
elements or crash the mesh quality are retried with halved stepsizes; the
run loop triggers a full remesh when the quality falls below a threshold,
halving the working stepsize at every remesh.
"""

from __future__ import annotations

import numpy as np

from dataclasses import dataclass, field, replace

from . import fem, meshing, metrics, problems
from .mesh import InvertedElement, Mesh, deform, mesh_quality
from ._delaunay import BoundaryIntersectionError, TriangulationError


class StepFailure(RuntimeError):
    """No admissible step found after exhausting the halving budget."""


@dataclass(frozen=True)
class GradNorm:
    """Stop when the L2 norm of the gradient drops below ``tol``."""

    tol: float

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class Plateau:
    """Stop when the objective improved less than ``eps`` over ``window`` steps."""

    window: int = 10
    eps: float = 1e-5

    def __post_init__(self):
        if self.window < 1 or self.eps <= 0.0:
            raise ValueError("window must be >= 1 and eps positive")


@dataclass(frozen=True)
class DescentConfig:
    metric: object
    stepsize: float
    max_iters: int
    stop: object
    remesh_quality_threshold: float = 0.0  # 0 disables remeshing
    step_halving_cap: int = 30
    remesh_target_h: float | None = None   # None: median marked edge length
    armijo: bool = False                    # optional backtracking guard

    def __post_init__(self):
        if self.stepsize <= 0.0:
            raise ValueError("stepsize must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    objective: float
    grad_l2: float
    mesh_quality: float
    stepsize_used: float
    remeshed: bool = False
    descent: float = 0.0  # dJ(V) >= 0, the squared metric norm of the gradient


@dataclass
class History:
    records: list = field(default_factory=list)
    reason: str = ""
    remesh_count: int = 0
    final_mesh: Mesh | None = None

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]


def _iterate(problem, mesh: Mesh):
    """Solve state/adjoint and assemble objective plus shape derivative.

    Solves run best-effort: late-stage runs of the rough metrics operate on
    near-degenerate meshes where the strict residual bound is unattainable
    in double precision, and the comparison experiments must keep going.
    """
    if isinstance(problem, problems.InterfaceProblem):
        y = problems.interface_state(problem, mesh, strict=False)
        p = problems.interface_adjoint(problem, mesh, y, strict=False)
        J = problems.interface_objective(problem, mesh, y)
        dJ = problems.interface_shape_derivative(problem, mesh, y, p)
    elif isinstance(problem, problems.ComplianceProblem):
        y = problems.compliance_state(problem, mesh, strict=False)
        J = problems.compliance_objective(problem, mesh, y)
        dJ = problems.compliance_shape_derivative(problem, mesh, y)
    else:
        raise TypeError(f"unknown problem {problem!r}")
    return J, dJ


def step(problem, mesh: Mesh, config: DescentConfig,
         stepsize: float | None = None) -> tuple:
    """One descent step; returns (new_mesh, record).

    The trial stepsize is halved (up to the cap) whenever the deformed mesh
    has an inverted element or loses more than half its quality; with the
    Armijo flag an insufficient objective decrease also triggers halving.
    Raises StepFailure once the budget is exhausted.
    """
    t0 = config.stepsize if stepsize is None else stepsize
    J, dJ = _iterate(problem, mesh)
    V = metrics.shape_gradient(config.metric, mesh, dJ, strict=False)
    grad_l2 = fem.l2_norm(V)
    descent = dJ(V)
    quality = mesh_quality(mesh)

    if not descent > 0.0:
        # gradient numerically zero: fixed point, nothing to move
        rec = IterationRecord(0, J, grad_l2, quality, 0.0, descent=max(descent, 0.0))
        return mesh, rec

    t = t0
    for _ in range(config.step_halving_cap + 1):
        try:
            trial = deform(mesh, -V.values, t)
        except InvertedElement:
            t *= 0.5
            continue
        q_new = mesh_quality(trial)
        if q_new < 0.5 * quality:
            t *= 0.5
            continue
        if config.armijo:
            J_new, _ = _iterate(problem, trial)
            if J_new > J - 1e-4 * t * descent:
                t *= 0.5
                continue
        rec = IterationRecord(0, J, grad_l2, q_new, t, descent=descent)
        return trial, rec
    raise StepFailure(
        f"no admissible step after {config.step_halving_cap} halvings from t={t0:g}")


def stop_check(records, rule) -> bool:
    """Evaluate a stopping rule against the iteration records so far."""
    if not records:
        raise ValueError("history is empty")
    if isinstance(rule, GradNorm):
        return records[-1].grad_l2 < rule.tol
    if isinstance(rule, Plateau):
        if len(records) < rule.window + 1:
            return False
        tail = [r.objective for r in records[-(rule.window + 1):]]
        return max(tail[:-1]) - tail[-1] < rule.eps
    raise TypeError(f"unknown stop rule {rule!r}")


def _median_marked_edge(mesh: Mesh) -> float:
    d = mesh.nodes[mesh.boundary_edges[:, 1]] - mesh.nodes[mesh.boundary_edges[:, 0]]
    return float(np.median(np.linalg.norm(d, axis=1)))


def run(problem, initial_mesh: Mesh, config: DescentConfig) -> History:
    """Full descent loop with remeshing, stopping rules, and history.

    Termination reasons: "converged" (stop rule), "max_iters", or
    "step_failure" (after a remesh was already attempted or remeshing is
    disabled/impossible).
    """
    history = History()
    mesh = initial_mesh
    t = config.stepsize
    remesh_h = config.remesh_target_h or _median_marked_edge(initial_mesh)
    remeshed_since_failure = False

    k = 0
    try:
        while k < config.max_iters:
            try:
                mesh, rec = step(problem, mesh, config, stepsize=t)
            except StepFailure:
                if config.remesh_quality_threshold > 0.0 and not remeshed_since_failure:
                    mesh = meshing.remesh(mesh, remesh_h)
                    history.remesh_count += 1
                    remeshed_since_failure = True
                    t *= 0.5
                    continue
                history.reason = "step_failure"
                break
            remeshed_since_failure = False
            rec = replace(rec, iter=k)
            if (config.remesh_quality_threshold > 0.0
                    and rec.mesh_quality < config.remesh_quality_threshold):
                try:
                    mesh = meshing.remesh(mesh, remesh_h)
                    history.remesh_count += 1
                    rec = replace(rec, remeshed=True)
                except BoundaryIntersectionError:
                    raise
                except TriangulationError:
                    # stalled refinement is not irrecoverable: keep the
                    # degraded mesh and slow down instead
                    pass
                t *= 0.5
            history.records.append(rec)
            if rec.stepsize_used == 0.0 or stop_check(history.records, config.stop):
                history.reason = "converged"
                break
            k += 1
    except TriangulationError as exc:
        # self-intersecting boundary (or an unrecoverable remesh after a
        # failed step): the shape has degenerated beyond repair
        history.reason = f"step_failure ({exc})"
    if not history.reason:
        history.reason = "max_iters"
    history.final_mesh = mesh
    return history
