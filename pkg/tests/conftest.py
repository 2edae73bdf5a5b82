import numpy as np
import pytest

from shapeflow import meshing, problems
from shapeflow.mesh import OUTER, Mesh


def structured_square_mesh(n: int = 4) -> Mesh:
    """Structured right-triangle mesh of the unit square, OUTER boundary."""
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return i * (n + 1) + j

    tris = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    edges = []
    for k in range(n):
        edges.append((idx(k, 0), idx(k + 1, 0)))
        edges.append((idx(k, n), idx(k + 1, n)))
        edges.append((idx(0, k), idx(0, k + 1)))
        edges.append((idx(n, k), idx(n, k + 1)))
    edges = np.asarray(edges)
    return Mesh(nodes, np.asarray(tris), np.zeros(len(tris), dtype=int),
                edges, np.full(len(edges), OUTER),
                np.zeros(len(nodes), dtype=bool))


def two_triangle_mesh() -> Mesh:
    nodes = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    tris = np.array([(0, 1, 2), (0, 2, 3)])
    edges = np.array([(0, 1), (1, 2), (2, 3), (3, 0)])
    return Mesh(nodes, tris, np.zeros(2, dtype=int), edges,
                np.full(4, OUTER), np.zeros(4, dtype=bool))


INTERFACE_BOUNDS = ((-1.0, -0.5), (0.0, 0.5))


@pytest.fixture(scope="session")
def square_mesh():
    return structured_square_mesh(4)


@pytest.fixture(scope="session")
def interface_mesh():
    return meshing.generate_interface_mesh(INTERFACE_BOUNDS, (-0.5, 0.0), 0.2, 0.06)


@pytest.fixture(scope="session")
def interface_mesh_tiny():
    mesh = meshing.generate_interface_mesh(INTERFACE_BOUNDS, (-0.5, 0.0), 0.2, 0.12)
    assert mesh.n_nodes <= 100
    return mesh


@pytest.fixture(scope="session")
def bridge_mesh():
    return meshing.generate_bridge_mesh(meshing.BRIDGE_OUTLINE,
                                        meshing.BRIDGE_HOLES, 0.25)


def analytic_target() -> problems.FunctionTarget:
    def fn(p):
        return np.sin(2.0 * p[:, 0]) * np.cos(1.5 * p[:, 1])

    def grad(p):
        return np.column_stack([
            2.0 * np.cos(2.0 * p[:, 0]) * np.cos(1.5 * p[:, 1]),
            -1.5 * np.sin(2.0 * p[:, 0]) * np.sin(1.5 * p[:, 1]),
        ])

    return problems.FunctionTarget(fn, grad)


@pytest.fixture(scope="session")
def interface_problem_analytic():
    return problems.InterfaceProblem(
        kappa_in=0.05, kappa_out=1.0, flux=10.0).with_target(analytic_target())
