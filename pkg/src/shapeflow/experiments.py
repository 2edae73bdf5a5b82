"""Preset configurations for the two reference experiments.

Experiment "interface": identify a conductivity inclusion in the unit
box [-1,0] x [-0.5,0.5] from boundary-driven measurements; the initial
shape is a circle of radius 0.2 at (-0.5, 0) and the target measurements
are synthesized from a ground-truth oval inclusion on its own mesh.

Experiment "bridge": compliance minimization of the 2D bridge outline
with four circular holes as the movable shape, clamped supports, and a
downward load on the deck center.
"""

from __future__ import annotations

import numpy as np


from . import meshing, problems
from .metrics import HsMetric, SpMetric
from .optimizer import DescentConfig, GradNorm, Plateau

INTERFACE_BOUNDS = ((-1.0, -0.5), (0.0, 0.5))
INTERFACE_CIRCLE = ((-0.5, 0.0), 0.2)
INTERFACE_TARGET_H = 0.035
INTERFACE_TOL = 2e-4
INTERFACE_MAX_ITERS = 500

BRIDGE_TARGET_H = 0.1
BRIDGE_MAX_ITERS = 600
BRIDGE_REMESH_THRESHOLD = 0.1
BRIDGE_REMESH_H = 0.15

# per-metric (smoothing A, stepsize t) for the interface experiment
INTERFACE_VARIANTS = {
    "sp": (None, 0.01),
    "h1": (0.0625, 0.01),
    "h2": (0.5, 0.25),
    "h3": (0.2, 0.40),
    "h4": (0.05, 0.05),
}
INTERFACE_SP_MU = (5.0, 20.0)

# per-metric smoothing A for the bridge experiment; initial stepsize 1
BRIDGE_VARIANTS = {
    "sp": None,
    "h2": 0.8,
    "h3": 0.25,
    "h4": 0.15,
}
BRIDGE_SP_MU = (5.0, 15.0)
BRIDGE_STEPSIZE = 1.0


# ground-truth inclusion: a two-lobed (lung-like) curve, offset from the
# initial circle; reaching it demands a large deformation, which is what
# separates the metric variants
TRUE_INTERFACE = {"center": (-0.41, 0.09), "r_mean": 0.24, "lobes": 0.48}
TRUE_INTERFACE_H = 0.0175


def true_interface_loop(spacing: float = TRUE_INTERFACE_H) -> np.ndarray:
    """Ground-truth inclusion boundary used to synthesize the target data."""
    cx, cy = TRUE_INTERFACE["center"]
    r_mean = TRUE_INTERFACE["r_mean"]
    n = max(24, int(round(2.0 * np.pi * r_mean / spacing)))
    theta = 2.0 * np.pi * np.arange(n) / n
    r = r_mean * (1.0 + TRUE_INTERFACE["lobes"] * np.cos(2.0 * theta))
    return np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])


def interface_problem() -> problems.InterfaceProblem:
    return problems.InterfaceProblem(kappa_in=0.05, kappa_out=1.0, flux=10.0,
                                     perimeter_weight=0.0)


def interface_setup(target_h: float = INTERFACE_TARGET_H):
    """(problem with target data, initial mesh) for the interface experiment.

    Target measurements come from the ground-truth inclusion solved on its
    own finer mesh, so the working meshes never reproduce them exactly.
    """
    problem = interface_problem()
    reference = meshing.interface_mesh_from_loop(
        INTERFACE_BOUNDS, true_interface_loop(), TRUE_INTERFACE_H)
    problem = problem.with_target(problems.make_target(problem, reference))
    initial = meshing.generate_interface_mesh(
        INTERFACE_BOUNDS, INTERFACE_CIRCLE[0], INTERFACE_CIRCLE[1], target_h)
    return problem, initial


def bridge_problem() -> problems.ComplianceProblem:
    return problems.ComplianceProblem(body_force=(0.0, 0.0), load=(0.0, -0.25),
                                      young=1.0, poisson=0.3,
                                      volume_weight=9.9e-2)


def bridge_setup(target_h: float = BRIDGE_TARGET_H):
    """(problem, initial mesh) for the bridge experiment."""
    mesh = meshing.generate_bridge_mesh(meshing.BRIDGE_OUTLINE,
                                        meshing.BRIDGE_HOLES, target_h)
    return bridge_problem(), mesh


def make_metric(name: str, smoothing: float | None = None,
                mu_min: float | None = None, mu_max: float | None = None,
                experiment: str = "interface"):
    """Metric object for a variant name, with experiment defaults."""
    name = name.lower()
    if name == "sp":
        default = INTERFACE_SP_MU if experiment == "interface" else BRIDGE_SP_MU
        return SpMetric(mu_min if mu_min is not None else default[0],
                        mu_max if mu_max is not None else default[1])
    if name in ("h1", "h2", "h3", "h4"):
        order = int(name[1])
        if smoothing is None:
            table = INTERFACE_VARIANTS if experiment == "interface" else BRIDGE_VARIANTS
            if name not in table:
                raise ValueError(f"no default smoothing for {name} in {experiment}")
            smoothing = table[name] if experiment == "bridge" else table[name][0]
        return HsMetric(order=order, smoothing=smoothing)
    raise ValueError(f"unknown metric {name!r}")


def interface_config(name: str, smoothing: float | None = None,
                     stepsize: float | None = None,
                     tol: float = INTERFACE_TOL,
                     max_iters: int = INTERFACE_MAX_ITERS,
                     mu_min: float | None = None,
                     mu_max: float | None = None) -> DescentConfig:
    metric = make_metric(name, smoothing, mu_min, mu_max, "interface")
    if stepsize is None:
        stepsize = INTERFACE_VARIANTS[name.lower()][1]
    return DescentConfig(metric=metric, stepsize=stepsize, max_iters=max_iters,
                         stop=GradNorm(tol), remesh_quality_threshold=0.0)


def bridge_config(name: str, smoothing: float | None = None,
                  stepsize: float = BRIDGE_STEPSIZE,
                  max_iters: int = BRIDGE_MAX_ITERS,
                  mu_min: float | None = None,
                  mu_max: float | None = None,
                  plateau_eps: float = 1e-5) -> DescentConfig:
    metric = make_metric(name, smoothing, mu_min, mu_max, "bridge")
    return DescentConfig(metric=metric, stepsize=stepsize, max_iters=max_iters,
                         stop=Plateau(10, plateau_eps),
                         remesh_quality_threshold=BRIDGE_REMESH_THRESHOLD,
                         remesh_target_h=BRIDGE_REMESH_H)
