import numpy as np
import pytest

from biot_mrfem.mesh import all_natural_bc, unit_square_mesh
from biot_mrfem.spaces import (
    SpaceError,
    build_space,
    eval_basis,
    eval_div,
    eval_field,
    interpolate,
)
from biot_mrfem.verify import _l2_error_field


def test_space_dimensions(mesh4):
    assert build_space(mesh4, "lagrange1").ndof == mesh4.num_vertices
    assert build_space(mesh4, "rt0").ndof == mesh4.num_edges
    assert build_space(mesh4, "bdm1").ndof == 2 * mesh4.num_edges
    assert build_space(mesh4, "p0").ndof == mesh4.num_cells
    with pytest.raises(SpaceError):
        build_space(mesh4, "p2")


def test_rt0_normal_trace_duality(mesh4):
    """The RT0 DOF functional of basis j on edge e is the Kronecker delta."""
    space = build_space(mesh4, "rt0")
    mesh = mesh4
    for t in range(0, mesh.num_cells, 7):
        for k in range(3):
            e = mesh.cell_edges[t, k]
            # integrate the normal trace over each cell edge with 2-pt Gauss
            for kk in range(3):
                ee = mesh.cell_edges[t, kk]
                a, b = mesh.vertices[mesh.edges[ee]]
                n = mesh.edge_normals[ee]
                acc = 0.0
                for s in (0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3)):
                    x = a + s * (b - a)
                    lam = _barycentric(mesh, t, x)
                    _, vals = eval_basis(space, t, lam)
                    acc += 0.5 * vals[k] @ n
                acc *= np.linalg.norm(b - a)
                assert abs(acc - (1.0 if kk == k else 0.0)) < 1e-12


def _barycentric(mesh, t, x):
    verts = mesh.vertices[mesh.cells[t]]
    T = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    ab = np.linalg.solve(T, x - verts[0])
    return np.array([1 - ab.sum(), ab[0], ab[1]])


def test_bdm1_dofs_are_endpoint_normal_values(mesh4):
    """Basis 2e+m has unit normal trace at endpoint m of edge e, zero at the other."""
    mesh = mesh4
    space = build_space(mesh, "bdm1")
    rng = np.random.default_rng(0)
    for t in rng.integers(0, mesh.num_cells, 5):
        for k in range(3):
            e = mesh.cell_edges[t, k]
            n = mesh.edge_normals[e]
            for m, v in enumerate(mesh.edges[e]):
                lam = np.zeros(3)
                lam[list(mesh.cells[t]).index(v)] = 1.0
                _, vals = eval_basis(space, t, lam)
                # trace of every local basis function on edge e at this vertex
                for kk in range(3):
                    if mesh.cell_edges[t, kk] != e:
                        continue
                    for mm in range(2):
                        expect = 1.0 if mm == m else 0.0
                        got = vals[2 * kk + mm] @ n
                        assert abs(got - expect) < 1e-12


def test_interpolation_reproduces_linears():
    mesh = unit_square_mesh(3)
    f = lambda x: np.array([1.0 + 2 * x[0] - x[1], 3.0 - x[0] + 0.5 * x[1]])
    for fam, tol in (("bdm1", 1e-13),):
        space = build_space(mesh, fam)
        c = interpolate(space, f)
        assert _l2_error_field(space, c, f, vector=True) < tol
    # RT0 reproduces fields of the form a + b x
    g = lambda x: np.array([1.0 + 0.7 * x[0], -2.0 + 0.7 * x[1]])
    space = build_space(mesh, "rt0")
    c = interpolate(space, g)
    assert _l2_error_field(space, c, g, vector=True) < 1e-13


def test_interpolation_orders():
    f = lambda x: np.array([np.sin(np.pi * x[0]) * x[1], np.cos(x[0]) + x[1] ** 2])
    errs = {"rt0": [], "bdm1": []}
    for n in (4, 8, 16):
        mesh = unit_square_mesh(n)
        for fam in errs:
            space = build_space(mesh, fam)
            errs[fam].append(_l2_error_field(space, interpolate(space, f), f, vector=True))
    for fam, order in (("rt0", 1.0), ("bdm1", 2.0)):
        e = np.array(errs[fam])
        rates = np.log2(e[:-1] / e[1:])
        assert abs(rates[-1] - order) < 0.15, (fam, rates)


def test_div_consistency(mesh4):
    """Divergence tables agree with finite differences of the evaluated field."""
    for fam in ("rt0", "bdm1"):
        space = build_space(mesh4, fam)
        rng = np.random.default_rng(1)
        c = rng.standard_normal(space.ndof)
        t = 3
        lam = np.array([0.3, 0.3, 0.4])
        dv = eval_div(space, c, t)
        # FD of eval_field in physical coordinates
        verts = mesh4.vertices[mesh4.cells[t]]
        x0 = lam @ verts
        h = 1e-6

        def field(x):
            lamx = _barycentric(mesh4, t, x)
            return eval_field(space, c, t, lamx)

        fd = (field(x0 + [h, 0])[0] - field(x0 - [h, 0])[0]) / (2 * h) + (
            field(x0 + [0, h])[1] - field(x0 - [0, h])[1]
        ) / (2 * h)
        assert abs(dv - fd) < 1e-6


def test_essential_masks():
    mesh = unit_square_mesh(3)
    bc = all_natural_bc(mesh)
    bc.mechanics["left"] = "r"
    bc.flow["bottom"] = "q"
    r_space = build_space(mesh, "lagrange1", bc, field="rotation")
    u_space = build_space(mesh, "rt0", bc, field="displacement")
    q_space = build_space(mesh, "bdm1", bc, field="flux")
    left_verts = np.where(mesh.vertices[:, 0] == 0)[0]
    assert set(np.where(r_space.essential)[0]) == set(left_verts)
    left_edges = [e for e, t in mesh.boundary_tags.items() if t == "left"]
    assert set(np.where(u_space.essential)[0]) == set(left_edges)
    bottom_edges = [e for e, t in mesh.boundary_tags.items() if t == "bottom"]
    expect = {2 * e + m for e in bottom_edges for m in range(2)}
    assert set(np.where(q_space.essential)[0]) == expect
