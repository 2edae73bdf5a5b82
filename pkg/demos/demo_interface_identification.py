"""Interface identification end to end on a coarse mesh.

Synthesizes target measurements from a ground-truth inclusion, checks the
assembled shape derivative against finite differences, and runs a short
Riemannian descent with the order-2 Sobolev metric.
"""

from shapeflow import experiments, optimizer
from shapeflow.diagnostics import fd_check, smooth_interior_fields
from shapeflow.problems import (interface_adjoint, interface_objective,
                                interface_state)

# 1. problem data: conductivity contrast 0.05 vs 1, boundary flux 10; the
#    target state comes from the ground-truth inclusion on its own mesh
problem, mesh = experiments.interface_setup(target_h=0.05)
print(f"initial mesh: {mesh.n_nodes} nodes")

y = interface_state(problem, mesh)
p = interface_adjoint(problem, mesh, y)
print(f"initial misfit J = {interface_objective(problem, mesh, y):.4f}")
print(f"state range [{y.values.min():.2f}, {y.values.max():.2f}], "
      f"adjoint range [{p.values.min():.3f}, {p.values.max():.3f}]")

# 2. the assembled derivative is the exact derivative of the discrete
#    objective: finite differences converge at first order (checked with a
#    smooth analytic target; the mesh-interpolated target has gradient
#    kinks across reference cells that contaminate coarse difference steps)
import numpy as np
from shapeflow.problems import FunctionTarget

smooth_problem = problem.with_target(FunctionTarget(
    lambda p: np.sin(2.0 * p[:, 0]) * np.cos(1.5 * p[:, 1]),
    lambda p: np.column_stack([2.0 * np.cos(2.0 * p[:, 0]) * np.cos(1.5 * p[:, 1]),
                               -1.5 * np.sin(2.0 * p[:, 0]) * np.sin(1.5 * p[:, 1])])))
W = smooth_interior_fields(mesh, 1, seed=2)[0]
report = fd_check(smooth_problem, mesh, W)
print("finite-difference check: errors",
      " ".join(f"{e:.2e}" for e in report.errors),
      f"-> observed order {report.order:.2f}")

# 3. descend with the H^2 metric (A = 0.5, t = 0.25, the preset values)
config = experiments.interface_config("h2", max_iters=120)
history = optimizer.run(problem, mesh, config)
print(f"descent: {history.reason} after {len(history.records)} iterations")
step_count = len(history.records)
for k in sorted({0, step_count // 4, step_count // 2, 3 * step_count // 4,
                 step_count - 1}):
    r = history.records[k]
    print(f"  iter {r.iter:3d}: J={r.objective:.5f}  |V|={r.grad_l2:.2e}  "
          f"quality={r.mesh_quality:.3f}")
