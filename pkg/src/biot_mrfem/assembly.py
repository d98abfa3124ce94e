"""Exact-quadrature bilinear forms: mass matrices, curl/div coupling, right-hand sides.

All exact cell integrals use the same degree-4 symmetric triangle rule and all
edge integrals a 3-point Gauss rule, so every mass-matrix integrand occurring
at lowest order is integrated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import BoundaryConfig
from .spaces import (
    FESpace,
    SpaceError,
    GAUSS3_W,
    GAUSS3_X,
    TRI_D4_BARY,
    TRI_D4_W,
    barycentric_to_physical,
    basis_table,
    div_table,
)


def mass_matrix(space, weight=None):
    """Exact (optionally cellwise-weighted) mass matrix of a space."""
    mesh = space.mesh
    w = np.ones(mesh.num_cells) if weight is None else np.broadcast_to(
        np.asarray(weight, dtype=float), (mesh.num_cells,)
    )
    if np.any(w <= 0):
        raise SpaceError("weight must be cellwise positive")
    if space.family == "p0":
        return sp.diags(mesh.areas * w).tocsr()

    table = basis_table(space, TRI_D4_BARY)
    scale = mesh.areas * w  # (nt,)
    if space.vector_valued:
        local = np.einsum("t,q,tqid,tqjd->tij", scale, TRI_D4_W, table, table)
    else:
        local = np.einsum("t,q,tqi,tqj->tij", scale, TRI_D4_W, table, table)
    nloc = space.nloc
    rows = np.repeat(space.cell_dofs[:, :, None], nloc, axis=2).ravel()
    cols = np.repeat(space.cell_dofs[:, None, :], nloc, axis=1).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    return mat.tocsr()


def curl_matrix(r_space, u_space):
    """Coefficient map B_r taking Lagrange1 nodal values to the RT0 coefficients of the curl.

    The curl of a hat function has a constant normal trace on each edge equal
    to minus the tangential derivative, so the column of vertex j carries +1
    on edges whose low endpoint is j and -1 on edges whose high endpoint is j.
    """
    if r_space.family != "lagrange1" or u_space.family != "rt0":
        raise SpaceError("curl_matrix expects the pairing lagrange1 -> rt0")
    mesh = r_space.mesh
    ne = mesh.num_edges
    rows = np.repeat(np.arange(ne), 2)
    cols = mesh.edges.ravel()
    data = np.tile(np.array([1.0, -1.0]), ne)
    return sp.coo_matrix((data, (rows, cols)), shape=(ne, mesh.num_vertices)).tocsr()


def div_matrix(space, p_space):
    """Coefficient map of the divergence into cellwise constants.

    Row t holds the constant value of div(basis) on cell t; pairing with the
    P0 mass matrix recovers the integrals ⟨div u, p̃⟩.
    """
    if space.family not in ("rt0", "bdm1") or p_space.family != "p0":
        raise SpaceError("div_matrix expects rt0/bdm1 paired with p0")
    mesh = space.mesh
    dt = div_table(space)  # (nt, nloc)
    rows = np.repeat(np.arange(mesh.num_cells), space.nloc)
    cols = space.cell_dofs.ravel()
    mat = sp.coo_matrix(
        (dt.ravel(), (rows, cols)), shape=(mesh.num_cells, space.ndof)
    )
    return mat.tocsr()


@dataclass
class OperatorBlocks:
    """Unweighted operator representations shared by all parameter choices."""

    M_r: sp.csr_matrix
    M_u: sp.csr_matrix
    M_q: sp.csr_matrix
    M_p: sp.csr_matrix
    B_r: sp.csr_matrix
    B_u: sp.csr_matrix
    B_q: sp.csr_matrix

    @cached_property
    def Bhat_r(self):
        return (self.M_u @ self.B_r).tocsr()

    @cached_property
    def Bhat_u(self):
        return (self.M_p @ self.B_u).tocsr()

    @cached_property
    def Bhat_q(self):
        return (self.M_p @ self.B_q).tocsr()

    @cached_property
    def curl_curl(self):
        """⟨curl r, curl r̃⟩ on the rotation space (exact, via the RT0 image)."""
        return (self.B_r.T @ self.M_u @ self.B_r).tocsr()

    @cached_property
    def div_div_u(self):
        return (self.B_u.T @ self.M_p @ self.B_u).tocsr()

    @cached_property
    def div_div_q(self):
        return (self.B_q.T @ self.M_p @ self.B_q).tocsr()


def operator_blocks(spaces):
    """Assemble all mass and coupling matrices for a four-field space dict."""
    return OperatorBlocks(
        M_r=mass_matrix(spaces["r"]),
        M_u=mass_matrix(spaces["u"]),
        M_q=mass_matrix(spaces["q"]),
        M_p=mass_matrix(spaces["p"]),
        B_r=curl_matrix(spaces["r"], spaces["u"]),
        B_u=div_matrix(spaces["u"], spaces["p"]),
        B_q=div_matrix(spaces["q"], spaces["p"]),
    )


@dataclass
class RhsAssembly:
    f_r: np.ndarray
    f_u: np.ndarray
    f_q: np.ndarray
    f_p: np.ndarray

    def concatenate(self):
        return np.concatenate([self.f_r, self.f_u, self.f_q, self.f_p])


@dataclass
class ProblemData:
    """Analytic volume and boundary data; missing entries are treated as zero."""

    f_u: Optional[Callable] = None  # body force, (2,)
    f_p: Optional[Callable] = None  # folded mass source, scalar
    u0: Optional[Callable] = None  # tangential displacement datum on the u-boundary
    sigma0: Optional[Callable] = None  # normal stress datum on the u-boundary
    p0: Optional[Callable] = None  # pressure datum on the p-boundary


def _edge_normal_trace_dofs(space, e):
    """DOFs with nonzero normal trace on edge e, and their traces at the Gauss points.

    The traces are taken with respect to the global edge normal; returns
    (dofs, traces) with traces of shape (ndof_on_edge, n_gauss).
    """
    if space.family == "rt0":
        inv_len = 1.0 / space.mesh.edge_lengths[e]
        return np.array([e]), np.full((1, len(GAUSS3_X)), inv_len)
    if space.family == "bdm1":
        # nodal linears along the edge, node order (low endpoint, high endpoint)
        tr = np.stack([1.0 - GAUSS3_X, GAUSS3_X])
        return np.array([2 * e, 2 * e + 1]), tr
    raise SpaceError(f"no normal trace for family {space.family!r}")


def assemble_rhs(data, spaces, bc, params):
    """Assemble the four right-hand-side vectors of the coupled system.

    Boundary contributions follow the natural pairings: the tangential
    displacement datum pairs with the rotation test functions on the
    u-boundary, the normal stress with the displacement tests there, and the
    pressure datum with the (time-step scaled) flux tests on the p-boundary.
    """
    mesh = spaces["r"].mesh
    bc.validate(mesh)
    f_r = np.zeros(spaces["r"].ndof)
    f_u = np.zeros(spaces["u"].ndof)
    f_q = np.zeros(spaces["q"].ndof)
    f_p = np.zeros(spaces["p"].ndof)

    if data.f_u is not None:
        pts = barycentric_to_physical(mesh, TRI_D4_BARY)
        fvals = np.array(
            [[data.f_u(pts[t, qp]) for qp in range(pts.shape[1])] for t in range(mesh.num_cells)]
        )  # (nt, nq, 2)
        table = basis_table(spaces["u"], TRI_D4_BARY)
        local = np.einsum("t,q,tqd,tqjd->tj", mesh.areas, TRI_D4_W, fvals, table)
        np.add.at(f_u, spaces["u"].cell_dofs, local)

    if data.f_p is not None:
        pts = barycentric_to_physical(mesh, TRI_D4_BARY)
        fvals = np.array(
            [[float(data.f_p(pts[t, qp])) for qp in range(pts.shape[1])] for t in range(mesh.num_cells)]
        )
        f_p += mesh.areas * (fvals @ TRI_D4_W)

    for e, tag in mesh.boundary_tags.items():
        a, b = mesh.vertices[mesh.edges[e]]
        length = mesh.edge_lengths[e]
        s_out = mesh.outward_sign(e)
        nu = s_out * mesh.edge_normals[e]  # outward unit normal
        gpts = a[None, :] + GAUSS3_X[:, None] * (b - a)[None, :]

        if bc.mech_side(tag) == "u":
            if data.u0 is not None:
                # -∫ r̃ (ν × u0), hats are nodal linears along the edge
                cross = np.array(
                    [nu[0] * data.u0(x)[1] - nu[1] * data.u0(x)[0] for x in gpts]
                )
                hat = np.stack([1.0 - GAUSS3_X, GAUSS3_X])
                f_r[mesh.edges[e]] -= length * (hat * (GAUSS3_W * cross)) @ np.ones(3)
            if data.sigma0 is not None:
                # natural datum (2mu+lambda) div u - alpha p enters with +
                svals = np.array([float(data.sigma0(x)) for x in gpts])
                dofs, traces = _edge_normal_trace_dofs(spaces["u"], e)
                f_u[dofs] += s_out * length * traces @ (GAUSS3_W * svals)

        if bc.flow_side(tag) == "p" and data.p0 is not None:
            pvals = np.array([float(data.p0(x)) for x in gpts])
            dofs, traces = _edge_normal_trace_dofs(spaces["q"], e)
            f_q[dofs] -= params.delta * s_out * length * traces @ (GAUSS3_W * pvals)

    return RhsAssembly(f_r=f_r, f_u=f_u, f_q=f_q, f_p=f_p)
