"""Vertex quadrature rule and the lumped mass matrices it induces.

The rule evaluates cellwise restrictions at the three triangle vertices with
weight |cell|/3. Two basis functions interact only if they are simultaneously
nonzero at a shared cell vertex, so for spaces whose degrees of freedom are
vertex-associated (Lagrange1, BDM1) the resulting mass matrix is block
diagonal after permuting DOFs by mesh vertex, and its inverse is computed by
factorizing small dense per-vertex blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .spaces import FESpace, SpaceError, basis_table

_SUPPORTED = ("lagrange1", "rt0", "bdm1")


def _check_supported(space):
    if space.family not in _SUPPORTED:
        raise SpaceError(f"unsupported space {space.family!r} for the vertex rule")


def vertex_dof_values(space):
    """Active (dof, value) pairs at each cell vertex.

    Returns (dofs, vals): dofs (nt, 3, k) and vals (nt, 3, k) for scalar
    spaces or (nt, 3, k, 2) for vector spaces. Only basis functions that are
    analytically nonzero at the vertex are listed; for all three supported
    families that is at most two per vertex.
    """
    _check_supported(space)
    mesh = space.mesh
    nt = mesh.num_cells
    if space.family == "lagrange1":
        dofs = mesh.cells[:, :, None]
        vals = np.ones((nt, 3, 1))
        return dofs, vals

    vertex_bary = np.eye(3)
    table = basis_table(space, vertex_bary)  # (nt, 3 vertices, nloc, 2)
    if space.family == "rt0":
        # at vertex i the two local edges j != i are active
        dofs = np.empty((nt, 3, 2), dtype=np.int64)
        vals = np.empty((nt, 3, 2, 2))
        for i in range(3):
            js = [j for j in range(3) if j != i]
            dofs[:, i, :] = space.cell_dofs[:, js]
            vals[:, i, :, :] = table[:, i, js, :]
        return dofs, vals

    # bdm1: at vertex i, for each local edge j != i the dof whose endpoint is
    # that vertex; every other local basis function vanishes there
    dofs = np.empty((nt, 3, 2), dtype=np.int64)
    vals = np.empty((nt, 3, 2, 2))
    for i in range(3):
        col = 0
        for j in range(3):
            if j == i:
                continue
            e = mesh.cell_edges[:, j]
            m = (mesh.edges[e, 1] == mesh.cells[:, i]).astype(np.int64)
            loc = 2 * j + m
            dofs[:, i, col] = 2 * e + m
            vals[:, i, col, :] = table[np.arange(nt), i, loc, :]
            col += 1
    return dofs, vals


def _vertex_values(space, coeffs, dofs, vals):
    """Field values at each (cell, vertex): (nt, 3) or (nt, 3, 2)."""
    c = np.asarray(coeffs)[dofs]  # (nt, 3, k)
    if space.vector_valued:
        return np.einsum("tik,tikd->tid", c, vals)
    return np.einsum("tik,tik->ti", c, vals)


def vertex_inner_product(space, coeffs_a, coeffs_b, weight=None):
    """Quadrature inner product of two coefficient vectors on the same space."""
    _check_supported(space)
    for c in (coeffs_a, coeffs_b):
        if np.shape(c)[0] != space.ndof:
            raise SpaceError("mismatched coefficient vector length")
    dofs, vals = vertex_dof_values(space)
    fa = _vertex_values(space, coeffs_a, dofs, vals)
    fb = _vertex_values(space, coeffs_b, dofs, vals)
    w = space.mesh.areas / 3.0
    if weight is not None:
        w = w * np.asarray(weight)
    prod = np.einsum("tid,tid->ti", fa, fb) if space.vector_valued else fa * fb
    return float(np.einsum("t,ti->", w, prod))


def vertex_inner_product_const(space, coeffs, const):
    """Quadrature pairing of a field with a cellwise-constant test function.

    ``const`` is (nt,) for scalar spaces or (nt, 2) for vector spaces. By the
    exactness of the vertex rule against elementwise constants this equals the
    exact L2 pairing.
    """
    _check_supported(space)
    dofs, vals = vertex_dof_values(space)
    f = _vertex_values(space, coeffs, dofs, vals)
    w = space.mesh.areas / 3.0
    if space.vector_valued:
        return float(np.einsum("t,tid,td->", w, f, const))
    return float(np.einsum("t,ti,t->", w, f, const))


def exact_inner_product_const(space, coeffs, const):
    """Exact L2 pairing with a cellwise-constant test function.

    Basis functions are (componentwise) linear per cell, so the integral is
    area times the centroid value.
    """
    _check_supported(space)
    centroid = np.full((1, 3), 1.0 / 3.0)
    table = basis_table(space, centroid)  # (nt, 1, nloc[, 2])
    c = np.asarray(coeffs)[space.cell_dofs]
    if space.vector_valued:
        f = np.einsum("tj,tjd->td", c, table[:, 0])
        return float(np.einsum("t,td,td->", space.mesh.areas, f, const))
    f = np.einsum("tj,tj->t", c, table[:, 0])
    return float(np.einsum("t,t,t->", space.mesh.areas, f, const))


@dataclass
class LumpedMass:
    """Sparse mass matrix of the vertex rule plus its per-vertex block structure.

    ``partition`` lists, for each mesh vertex, the DOFs interacting at that
    vertex; it is None for RT0, whose edge DOFs are active at both endpoints
    and therefore admit no vertex-local elimination.
    """

    matrix: sp.csr_matrix
    space: FESpace
    partition: Optional[list] = None

    def block_min_eigenvalues(self):
        """Smallest eigenvalue of every per-vertex dense block."""
        if self.partition is None:
            raise SpaceError("no vertex-block structure for this space")
        out = np.empty(len(self.partition))
        for i, dofs in enumerate(self.partition):
            block = self.matrix[np.ix_(dofs, dofs)].toarray()
            out[i] = np.linalg.eigvalsh(block).min() if len(dofs) else np.inf
        return out

    def inverse(self):
        """Exact sparse inverse assembled from per-vertex dense block inverses."""
        if self.partition is None:
            raise SpaceError("no vertex-block structure for this space")
        return blockwise_inverse(self.matrix, self.partition)

    def solve(self, b):
        return self.inverse() @ b


def dof_partition_by_vertex(space):
    """For Lagrange1/BDM1, the list of DOF index arrays per mesh vertex."""
    mesh = space.mesh
    if space.family == "lagrange1":
        return [np.array([v]) for v in range(mesh.num_vertices)]
    if space.family == "bdm1":
        part = [[] for _ in range(mesh.num_vertices)]
        for e in range(mesh.num_edges):
            part[mesh.edges[e, 0]].append(2 * e)
            part[mesh.edges[e, 1]].append(2 * e + 1)
        return [np.asarray(p, dtype=np.int64) for p in part]
    raise SpaceError(f"no vertex-associated DOFs for family {space.family!r}")


def blockwise_inverse(matrix, partition):
    """Inverse of a matrix that is block diagonal under the given DOF partition."""
    matrix = sp.csr_matrix(matrix)
    rows, cols, data = [], [], []
    for dofs in partition:
        if len(dofs) == 0:
            continue
        block = matrix[np.ix_(dofs, dofs)].toarray()
        inv = np.linalg.inv(block)
        rr, cc = np.meshgrid(dofs, dofs, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        data.append(inv.ravel())
    out = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=matrix.shape,
    )
    return out.tocsr()


def lumped_mass(space, weight=1.0):
    """Assemble the weighted vertex-rule mass matrix ⟨w φ_i, φ_j⟩_h.

    ``weight`` is a positive scalar, a cellwise positive array (nt,), or for
    vector spaces a cellwise SPD tensor (nt, 2, 2).
    """
    _check_supported(space)
    mesh = space.mesh
    nt = mesh.num_cells
    w = np.asarray(weight, dtype=float)

    tensor = w.ndim == 3
    if tensor:
        if not space.vector_valued:
            raise SpaceError("tensor weight requires a vector-valued space")
        ev = np.linalg.eigvalsh(w)
        if np.any(ev <= 0):
            raise SpaceError("tensor weight must be SPD on every cell")
    else:
        if w.ndim == 0:
            w = np.full(nt, float(w))
        if np.any(w <= 0):
            raise SpaceError("weight must be positive on every cell")

    dofs, vals = vertex_dof_values(space)
    wq = mesh.areas / 3.0
    k = dofs.shape[2]
    if space.vector_valued:
        if tensor:
            wv = np.einsum("tde,tike->tikd", w, vals)
        else:
            wv = vals * w[:, None, None, None]
        local = np.einsum("t,tikd,tild->tikl", wq, wv, vals)
    else:
        local = np.einsum("t,t,tik,til->tikl", wq, w, vals, vals)

    rows = np.repeat(dofs[:, :, :, None], k, axis=3).ravel()
    cols = np.repeat(dofs[:, :, None, :], k, axis=2).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    partition = None
    if space.family in ("lagrange1", "bdm1"):
        partition = dof_partition_by_vertex(space)
    return LumpedMass(matrix=mat.tocsr(), space=space, partition=partition)


def norm_equivalence_ratio(space, samples, seed=0):
    """Empirical bounds on ||phi||_h / ||phi|| over random coefficient vectors.

    The seed is fixed by the caller and recorded alongside any reported
    ratios, so the measurement is reproducible.
    """
    from .assembly import mass_matrix

    _check_supported(space)
    if samples < 1:
        raise SpaceError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    M = mass_matrix(space)
    Mh = lumped_mass(space).matrix
    ratios = np.empty(samples)
    for i in range(samples):
        x = rng.standard_normal(space.ndof)
        ratios[i] = np.sqrt((x @ (Mh @ x)) / (x @ (M @ x)))
    return float(ratios.min()), float(ratios.max())
