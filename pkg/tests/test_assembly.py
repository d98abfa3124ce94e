import numpy as np
import pytest

from biot_mrfem.assembly import (
    ProblemData,
    assemble_rhs,
    curl_matrix,
    div_matrix,
    mass_matrix,
    operator_blocks,
)
from biot_mrfem.mesh import all_natural_bc, unit_square_mesh
from biot_mrfem.spaces import build_space, interpolate
from biot_mrfem.system import MaterialParams, build_biot_spaces


def test_mass_matrix_total_measure(mesh4):
    """Constant-one fields integrate to the domain area."""
    r_space = build_space(mesh4, "lagrange1")
    ones = np.ones(r_space.ndof)
    M = mass_matrix(r_space)
    assert abs(ones @ (M @ ones) - 1.0) < 1e-13
    p_space = build_space(mesh4, "p0")
    Mp = mass_matrix(p_space)
    assert abs(np.ones(p_space.ndof) @ (Mp @ np.ones(p_space.ndof)) - 1.0) < 1e-14


def test_mass_matrix_spd(mesh4):
    for fam in ("lagrange1", "rt0", "bdm1", "p0"):
        M = mass_matrix(build_space(mesh4, fam)).toarray()
        assert abs(M - M.T).max() < 1e-15
        assert np.linalg.eigvalsh(M).min() > 0


def test_curl_is_incidence_matrix(mesh4):
    B_r = curl_matrix(build_space(mesh4, "lagrange1"), build_space(mesh4, "rt0"))
    B = B_r.toarray()
    for e in range(mesh4.num_edges):
        a, b = mesh4.edges[e]
        row = np.zeros(mesh4.num_vertices)
        row[a], row[b] = 1.0, -1.0
        assert np.array_equal(B[e], row)


def test_complex_property_exact(mesh4):
    """div(curl r) = 0 holds exactly in floating point."""
    for fam in (1, 2):
        spaces = build_biot_spaces(mesh4, fam)
        b = operator_blocks(spaces)
        prod = b.B_u @ b.B_r
        assert prod.nnz == 0 or abs(prod).max() == 0.0


def test_div_matrix_against_interpolation(mesh4):
    """div of the interpolant of a linear field is its exact constant divergence."""
    f = lambda x: np.array([2.0 * x[0] + x[1], 3.0 * x[1] - 1.0])
    for fam in ("rt0", "bdm1"):
        space = build_space(mesh4, fam)
        p_space = build_space(mesh4, "p0")
        c = interpolate(space, f)
        dv = div_matrix(space, p_space) @ c
        assert np.allclose(dv, 5.0, atol=1e-12)


def test_curl_curl_kernel_is_constants(mesh4):
    spaces = build_biot_spaces(mesh4, 1)
    b = operator_blocks(spaces)
    K = b.curl_curl.toarray()
    ones = np.ones(K.shape[0])
    assert np.abs(K @ ones).max() < 1e-14
    # rank deficiency exactly one on a simply-connected mesh
    assert np.linalg.matrix_rank(K) == K.shape[0] - 1


def test_volume_rhs_exact_for_constants(mesh4):
    """A constant body force integrates to exact RT0 moments."""
    spaces = build_biot_spaces(mesh4, 1)
    bc = all_natural_bc(mesh4)
    prm = MaterialParams(mu=1.0, lam=1.0, alpha=1.0, c0=0.1, K=1.0, dt=0.01)
    fvec = np.array([1.3, -0.7])
    data = ProblemData(f_u=lambda x: fvec)
    rhs = assemble_rhs(data, spaces, bc, prm)
    # compare with M_u applied to the interpolant of the constant field
    b = operator_blocks(spaces)
    c = interpolate(spaces["u"], lambda x: fvec)
    assert np.abs(rhs.f_u - b.M_u @ c).max() < 1e-13
    assert np.abs(rhs.f_r).max() == 0.0
    assert np.abs(rhs.f_q).max() == 0.0


def test_scalar_source_rhs(mesh4):
    spaces = build_biot_spaces(mesh4, 1)
    bc = all_natural_bc(mesh4)
    prm = MaterialParams(mu=1.0, lam=1.0, alpha=1.0, c0=0.1, K=1.0, dt=0.01)
    rhs = assemble_rhs(ProblemData(f_p=lambda x: 2.0), spaces, bc, prm)
    assert np.allclose(rhs.f_p, 2.0 * mesh4.areas, atol=1e-14)


def test_boundary_rhs_divergence_theorem():
    """With sigma0 = 1, the f_u contributions sum against div-consistent fields.

    For any u_h, sum_i f_u[i] u_h[i] = \\oint nu . u_h = \\int div u_h.
    """
    mesh = unit_square_mesh(3)
    spaces = build_biot_spaces(mesh, 2)
    bc = all_natural_bc(mesh)
    prm = MaterialParams(mu=1.0, lam=1.0, alpha=0.5, c0=0.1, K=1.0, dt=0.01)
    rhs = assemble_rhs(ProblemData(sigma0=lambda x: 1.0), spaces, bc, prm)
    b = operator_blocks(spaces)
    rng = np.random.default_rng(5)
    for _ in range(5):
        c = rng.standard_normal(spaces["u"].ndof)
        total_div = mesh.areas @ (b.B_u @ c)
        assert abs(rhs.f_u @ c - total_div) < 1e-12 * max(1.0, abs(total_div))


def test_pressure_boundary_rhs_scaling(mesh4):
    """f_q is -delta times the p0 boundary functional."""
    spaces = build_biot_spaces(mesh4, 1)
    bc = all_natural_bc(mesh4)
    p0 = lambda x: x[0] + 2 * x[1]
    prm1 = MaterialParams(mu=1.0, lam=1.0, alpha=1.0, c0=0.1, K=1.0, dt=0.01)
    prm4 = prm1.replace(dt=0.04)
    r1 = assemble_rhs(ProblemData(p0=p0), spaces, bc, prm1)
    r4 = assemble_rhs(ProblemData(p0=p0), spaces, bc, prm4)
    assert np.allclose(r4.f_q, 2.0 * r1.f_q, atol=1e-14)
