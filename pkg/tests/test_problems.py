import numpy as np
import pytest

from shapeflow import fem, meshing, problems
from shapeflow.mesh import NEUMANN_LOAD, SHAPE, deform, shape_perimeter

from conftest import INTERFACE_BOUNDS, analytic_target, structured_square_mesh


# ---------------------------------------------------------------------------
# independent quadrature oracles (plain loops, no shared assembly helpers)


def hat_grads_of(p0, p1, p2):
    area2 = ((p1[0] - p0[0]) * (p2[1] - p0[1])
             - (p1[1] - p0[1]) * (p2[0] - p0[0]))
    g = np.array([
        [p1[1] - p2[1], p2[0] - p1[0]],
        [p2[1] - p0[1], p0[0] - p2[0]],
        [p0[1] - p1[1], p1[0] - p0[0]],
    ]) / area2
    return g, 0.5 * area2


def interface_derivative_oracle(problem, mesh, y, p, W):
    """Direct per-element quadrature of the interface volume derivative."""
    ybar = problem.target.values_at(mesh.nodes)
    gybar = problem.target.gradients_at(mesh.nodes)
    r = y.values - ybar
    kappa_cells = problem.cell_kappa(mesh)
    b = fem.boundary_load(mesh, 0, problem.flux)
    area_total = mesh.area
    c_state = b.coeffs.sum() / area_total
    d_adj = -(fem.lumped_areas(mesh) @ r) / area_total

    total = 0.0
    for tri, kap in zip(mesh.triangles, kappa_cells):
        pts = mesh.nodes[tri]
        g, area = hat_grads_of(*pts)
        gy = sum(y.values[tri[i]] * g[i] for i in range(3))
        gp = sum(p.values[tri[i]] * g[i] for i in range(3))
        gradW = np.zeros((2, 2))
        for i in range(3):
            gradW += np.outer(W[tri[i]], g[i])
        divW = gradW[0, 0] + gradW[1, 1]
        rr = r[tri]
        total += 0.5 * divW * (area / 12.0) * (rr.sum() ** 2 + (rr ** 2).sum())
        total += kap * area * (gy @ ((divW * np.eye(2) - gradW - gradW.T) @ gp))
        total += divW * (area / 3.0) * (c_state * p.values[tri].sum()
                                        + d_adj * y.values[tri].sum())
    # moving-target term through the consistent mass pairing
    M = fem.assemble_mass(mesh, 1)
    eta = np.einsum("ij,ij->i", gybar, W)
    total -= r @ (M @ eta)
    # perimeter term: exact derivative of the polyline length
    if problem.perimeter_weight > 0.0:
        for (i, j) in mesh.edges_with(SHAPE):
            d = mesh.nodes[j] - mesh.nodes[i]
            tau = d / np.hypot(*d)
            total += problem.perimeter_weight * tau @ (W[j] - W[i])
    return total


def compliance_derivative_oracle(problem, mesh, y, W):
    """Direct per-element quadrature of the compliance volume derivative."""
    mu, lam = problem.mu, problem.lam
    f = np.asarray(problem.body_force)
    load = np.asarray(problem.load)
    total = 0.0
    for tri in mesh.triangles:
        pts = mesh.nodes[tri]
        g, area = hat_grads_of(*pts)
        J = np.zeros((2, 2))
        gradW = np.zeros((2, 2))
        for i in range(3):
            J += np.outer(y.values[tri[i]], g[i])
            gradW += np.outer(W[tri[i]], g[i])
        eps = 0.5 * (J + J.T)
        sigma = 2.0 * mu * eps + lam * np.trace(eps) * np.eye(2)
        divW = gradW[0, 0] + gradW[1, 1]
        ymean = y.values[tri].mean(axis=0)
        total += 2.0 * (f @ ymean) * divW * area
        total += 2.0 * area * np.tensordot(sigma, J @ gradW)
        total -= area * np.tensordot(sigma, eps) * divW
        total += problem.volume_weight * divW * area
    for (i, j) in mesh.edges_with(NEUMANN_LOAD):
        d = mesh.nodes[j] - mesh.nodes[i]
        tau = d / np.hypot(*d)
        gy = load @ (0.5 * (y.values[i] + y.values[j]))
        total += 2.0 * gy * tau @ (W[j] - W[i])
    return total


def observed_order(errors, steps):
    return float(np.polyfit(np.log(steps), np.log(np.maximum(errors, 1e-300)), 1)[0])


# ---------------------------------------------------------------------------
# interface problem


def test_interface_state_constant_kappa_zero_flux(interface_mesh):
    prob = problems.InterfaceProblem(kappa_in=1.0, kappa_out=1.0, flux=0.0)
    y = problems.interface_state(prob, interface_mesh)
    assert np.abs(y.values).max() == 0.0


def test_interface_state_independent_of_interface_without_contrast(interface_mesh):
    from shapeflow.mesh import Mesh
    prob = problems.InterfaceProblem(kappa_in=1.0, kappa_out=1.0, flux=10.0)
    # same geometry, opposite interface labelling: without contrast the
    # state cannot see where the interface is
    m1 = interface_mesh
    m2 = Mesh(m1.nodes, m1.triangles, 1 - m1.cell_region, m1.boundary_edges,
              m1.boundary_markers, m1.node_is_shape)
    y1 = problems.interface_state(prob, m1)
    y2 = problems.interface_state(prob, m2)
    assert np.abs(y1.values - y2.values).max() < 1e-8
    # different triangulations of the same geometry agree to mesh accuracy
    m3 = meshing.generate_interface_mesh(INTERFACE_BOUNDS, (-0.6, 0.1), 0.15, 0.06)
    y3 = problems.interface_state(prob, m3)
    samples = np.array([(-0.9, -0.4), (-0.2, 0.3), (-0.5, 0.42), (-0.13, -0.38)])
    v1 = problems.MeshTarget(m1, y1.values).values_at(samples)
    v3 = problems.MeshTarget(m3, y3.values).values_at(samples)
    assert np.abs(v1 - v3).max() < 5e-3
    assert abs(fem.integrate(m3, y3.values)) < 1e-10


def test_interface_state_exp1_solvability(interface_mesh):
    prob = problems.InterfaceProblem(kappa_in=0.05, kappa_out=1.0, flux=10.0)
    y, mult = problems.interface_state(prob, interface_mesh,
                                       return_multiplier=True)
    assert np.all(np.isfinite(y.values))
    assert abs(fem.integrate(interface_mesh, y.values)) < 1e-10
    # multiplier equals total influx / area (compatibility source)
    assert abs(mult - 40.0 / interface_mesh.area) < 1e-8


def test_interface_adjoint_zero_when_matched(interface_mesh):
    prob = problems.InterfaceProblem(kappa_in=0.05, kappa_out=1.0, flux=10.0)
    y = problems.interface_state(prob, interface_mesh)
    prob = prob.with_target(problems.MeshTarget(interface_mesh, y.values))
    p = problems.interface_adjoint(prob, interface_mesh, y)
    assert np.abs(p.values).max() < 1e-12


def test_interface_adjoint_self_consistency(interface_mesh,
                                            interface_problem_analytic):
    prob = interface_problem_analytic
    y = problems.interface_state(prob, interface_mesh)
    p = problems.interface_adjoint(prob, interface_mesh, y)
    # substitute phi = y - mean into the adjoint identity
    K = fem.assemble_stiffness(interface_mesh, 1, prob.cell_kappa(interface_mesh))
    M = fem.assemble_mass(interface_mesh, 1)
    r = y.values - prob.target.values_at(interface_mesh.nodes)
    lhs = y.values @ (K @ p.values)
    rhs = -(r @ (M @ y.values))
    # the adjoint multiplier shifts the identity by d * integral(y) = 0
    assert abs(lhs - rhs) < 1e-8 * max(abs(lhs), abs(rhs), 1.0)


def test_interface_objective_values(interface_mesh):
    prob = problems.InterfaceProblem(kappa_in=0.05, kappa_out=1.0, flux=10.0)
    y = problems.interface_state(prob, interface_mesh)
    matched = prob.with_target(problems.MeshTarget(interface_mesh, y.values))
    assert problems.interface_objective(matched, interface_mesh, y) == 0.0

    mesh = meshing.generate_interface_mesh(INTERFACE_BOUNDS, (-0.5, 0.0), 0.2, 0.02)
    with_perim = problems.InterfaceProblem(
        kappa_in=0.05, kappa_out=1.0, flux=10.0, perimeter_weight=1.0)
    y2 = problems.interface_state(with_perim, mesh)
    with_perim = with_perim.with_target(problems.MeshTarget(mesh, y2.values))
    J = problems.interface_objective(with_perim, mesh, y2)
    assert abs(J - 2.0 * np.pi * 0.2) / (2.0 * np.pi * 0.2) < 1e-3


def test_interface_tracking_term_is_mass_quadratic(interface_mesh,
                                                   interface_problem_analytic):
    prob = interface_problem_analytic
    y = problems.interface_state(prob, interface_mesh)
    M = fem.assemble_mass(interface_mesh, 1)
    r = y.values - prob.target.values_at(interface_mesh.nodes)
    expected = 0.5 * r @ (M @ r)
    assert problems.interface_objective(prob, interface_mesh, y) == expected


def test_interface_derivative_zero_at_perfect_match(interface_mesh):
    prob = problems.InterfaceProblem(kappa_in=0.05, kappa_out=1.0, flux=10.0)
    y = problems.interface_state(prob, interface_mesh)
    prob = prob.with_target(problems.MeshTarget(interface_mesh, y.values))
    p = fem.NodalField(interface_mesh, np.zeros(interface_mesh.n_nodes))
    dJ = problems.interface_shape_derivative(prob, interface_mesh, y, p)
    assert np.abs(dJ.coeffs).max() < 1e-11


def test_interface_derivative_matches_quadrature_oracle(interface_mesh):
    prob = problems.InterfaceProblem(kappa_in=0.05, kappa_out=1.0, flux=10.0,
                                     perimeter_weight=0.3,
                                     ).with_target(analytic_target())
    mesh = interface_mesh
    y = problems.interface_state(prob, mesh)
    p = problems.interface_adjoint(prob, mesh, y)
    dJ = problems.interface_shape_derivative(prob, mesh, y, p)
    rng = np.random.default_rng(8)
    for _ in range(3):
        W = rng.normal(size=(mesh.n_nodes, 2))
        expected = interface_derivative_oracle(prob, mesh, y, p, W)
        got = dJ(W)
        assert abs(got - expected) < 1e-12 * max(1.0, abs(expected))


def test_interface_fd_convergence(interface_mesh, interface_problem_analytic):
    from shapeflow import diagnostics
    prob = interface_problem_analytic
    mesh = interface_mesh
    steps = (1e-2, 1e-3, 1e-4, 1e-5)
    for W in diagnostics.smooth_interior_fields(mesh, 2, seed=3):
        report = diagnostics.fd_check(prob, mesh, W, steps)
        assert report.order >= 0.9


def test_generate_target_identity_and_linears(interface_mesh):
    prob = problems.InterfaceProblem(kappa_in=0.05, kappa_out=1.0, flux=10.0)
    same = problems.generate_target(prob, interface_mesh, interface_mesh)
    y = problems.interface_state(prob, interface_mesh)
    assert np.array_equal(same.values, y.values)  # bitwise

    target = problems.MeshTarget(interface_mesh,
                                 1.0 + 2.0 * interface_mesh.nodes[:, 0]
                                 - 3.0 * interface_mesh.nodes[:, 1])
    fine = meshing.generate_interface_mesh(INTERFACE_BOUNDS, (-0.45, 0.05),
                                           0.15, 0.045)
    vals = target.values_at(fine.nodes)
    expected = 1.0 + 2.0 * fine.nodes[:, 0] - 3.0 * fine.nodes[:, 1]
    assert np.abs(vals - expected).max() < 1e-12


def test_generate_target_zero_mean_after_transfer(interface_mesh):
    prob = problems.InterfaceProblem(kappa_in=0.05, kappa_out=1.0, flux=10.0)
    reference = meshing.generate_interface_mesh(INTERFACE_BOUNDS, (-0.52, 0.03),
                                                0.22, 0.04)
    field = problems.generate_target(prob, reference, interface_mesh)
    mean = fem.integrate(interface_mesh, field.values) / interface_mesh.area
    assert abs(mean) < 1e-6


# ---------------------------------------------------------------------------
# compliance problem


def bridge_problem(**kw):
    return problems.ComplianceProblem(body_force=(0.0, 0.0), load=(0.0, -0.25),
                                      young=1.0, poisson=0.3, **kw)


def test_compliance_zero_load_zero_state(bridge_mesh):
    prob = problems.ComplianceProblem(load=(0.0, 0.0))
    y = problems.compliance_state(prob, bridge_mesh)
    assert np.abs(y.values).max() < 1e-12


def test_compliance_downward_load_moves_down(bridge_mesh):
    prob = bridge_problem()
    y = problems.compliance_state(prob, bridge_mesh)
    loaded = bridge_mesh.nodes_with(NEUMANN_LOAD)
    assert y.values[loaded, 1].mean() < 0.0


def test_compliance_energy_identity(bridge_mesh):
    prob = bridge_problem()
    y = problems.compliance_state(prob, bridge_mesh)
    K = fem.assemble_elasticity(bridge_mesh, prob.mu, prob.lam)
    load = problems._load_functional(prob, bridge_mesh)(y)
    energy = y.values.ravel() @ (K @ y.values.ravel())
    assert abs(load - energy) < 1e-8 * abs(load)


def test_compliance_objective_terms(bridge_mesh):
    prob = bridge_problem(volume_weight=9.9e-2)
    zero = fem.NodalField(bridge_mesh, np.zeros((bridge_mesh.n_nodes, 2)))
    J0 = problems.compliance_objective(prob, bridge_mesh, zero)
    assert abs(J0 - 9.9e-2 * bridge_mesh.area) < 1e-12

    y = problems.compliance_state(prob, bridge_mesh)
    J1 = problems.compliance_objective(prob, bridge_mesh, y)
    double = problems.ComplianceProblem(load=(0.0, -0.5), volume_weight=9.9e-2)
    J2 = problems.compliance_objective(double, bridge_mesh, y)
    # load term is linear in g with the state held fixed
    assert abs((J2 - J0) - 2.0 * (J1 - J0)) < 1e-12 * max(abs(J1), 1.0)


def test_compliance_derivative_pure_volume_term(square_mesh):
    prob = problems.ComplianceProblem(load=(0.0, 0.0), volume_weight=1.0)
    y = fem.NodalField(square_mesh, np.zeros((square_mesh.n_nodes, 2)))
    dJ = problems.compliance_shape_derivative(prob, square_mesh, y)
    W = np.zeros((square_mesh.n_nodes, 2))
    W[:, 0] = square_mesh.nodes[:, 0]
    assert abs(dJ(W) - 1.0) < 1e-12


def test_compliance_derivative_matches_quadrature_oracle(bridge_mesh):
    prob = bridge_problem(volume_weight=9.9e-2)
    y = problems.compliance_state(prob, bridge_mesh)
    dJ = problems.compliance_shape_derivative(prob, bridge_mesh, y)
    rng = np.random.default_rng(21)
    for _ in range(3):
        W = rng.normal(size=(bridge_mesh.n_nodes, 2))
        expected = compliance_derivative_oracle(prob, bridge_mesh, y, W)
        assert abs(dJ(W) - expected) < 1e-12 * max(1.0, abs(expected))


def test_compliance_fd_convergence(bridge_mesh):
    from shapeflow import diagnostics
    prob = bridge_problem(volume_weight=9.9e-2)
    for W in diagnostics.smooth_interior_fields(bridge_mesh, 2, seed=5):
        report = diagnostics.fd_check(prob, bridge_mesh, W)
        assert report.order >= 0.9


def test_compliance_fd_with_moving_load_segment(bridge_mesh):
    # lets the outer boundary and load segment move, validating the volume
    # terms and the doubled boundary-load term together
    from shapeflow.mesh import DIRICHLET
    prob = bridge_problem(volume_weight=9.9e-2)
    y = problems.compliance_state(prob, bridge_mesh)
    J0 = problems.compliance_objective(prob, bridge_mesh, y)
    dJ = problems.compliance_shape_derivative(prob, bridge_mesh, y)
    x, yy = bridge_mesh.nodes[:, 0], bridge_mesh.nodes[:, 1]
    W = 0.2 * np.column_stack([np.sin(0.4 * x) * np.sin(0.8 * yy + 0.4),
                               np.sin(0.3 * x + 1.0) * np.cos(0.5 * yy)])
    fixed = bridge_mesh.nodes_with(DIRICHLET)
    W[fixed] = 0.0
    dJW = dJ(W)
    errors = []
    steps = (1e-3, 1e-4, 1e-5)
    for t in steps:
        m2 = deform(bridge_mesh, W, t)
        y2 = problems.compliance_state(prob, m2)
        errors.append(abs((problems.compliance_objective(prob, m2, y2) - J0) / t - dJW))
    assert observed_order(errors, steps) >= 0.9


def test_problem_validation():
    with pytest.raises(ValueError):
        problems.InterfaceProblem(kappa_in=-1.0, kappa_out=1.0, flux=0.0)
    with pytest.raises(ValueError):
        problems.InterfaceProblem(kappa_in=1.0, kappa_out=1.0, flux=0.0,
                                  perimeter_weight=-2.0)
    with pytest.raises(ValueError):
        problems.ComplianceProblem(poisson=0.5)
    with pytest.raises(ValueError):
        problems.ComplianceProblem(young=-1.0)
