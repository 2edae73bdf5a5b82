"""Shape optimization of 2D triangular meshes with Sobolev-type outer
metrics and the Steklov-Poincare inner metric as baseline."""

from .mesh import (DIRICHLET, NEUMANN_LOAD, OUTER, SHAPE, InvertedElement,
                   Mesh, MeshFileError, MeshValidationError, deform,
                   mesh_quality, read_fields, read_mesh, shape_perimeter,
                   triangle_quality, validate, write_mesh)
from .meshing import (BRIDGE_HOLES, BRIDGE_OUTLINE, generate_bridge_mesh,
                      generate_interface_mesh, interface_mesh_from_loop,
                      remesh)
from ._delaunay import BoundaryIntersectionError, TriangulationError
from .fem import (LinearFunctional, NodalField, SolveError, apply_dirichlet,
                  assemble_elasticity, assemble_mass, assemble_stiffness,
                  boundary_load, l2_norm, solve_spd, solve_zero_mean)
from .problems import (ComplianceProblem, FunctionTarget, InterfaceProblem,
                       MeshTarget, compliance_objective,
                       compliance_shape_derivative, compliance_state,
                       generate_target, interface_adjoint,
                       interface_objective, interface_shape_derivative,
                       interface_state, make_target)
from .metrics import (HsMetric, SpMetric, hs_gradient, metric_inner,
                      riesz_residual, shape_gradient, sp_gradient,
                      sp_mu_field)
from .optimizer import (DescentConfig, GradNorm, History, IterationRecord,
                        Plateau, StepFailure, run, step, stop_check)

__version__ = "0.1.0"
