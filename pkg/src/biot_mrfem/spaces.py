"""Lowest-order finite element spaces: Lagrange1, RT0, BDM1 and cellwise constants.

Degrees of freedom:
    Lagrange1  one per vertex (nodal value)
    RT0        one per edge (integral of the normal trace, global edge normal)
    BDM1       two per edge (normal-trace values at the two edge endpoints,
               ordered low vertex id then high vertex id)
    P0const    one per cell (cellwise constant)

The BDM1 degrees of freedom are vertex-associated on purpose: every basis
function then vanishes at all mesh vertices except its own, which is what
makes the vertex quadrature rule produce mass matrices that are block
diagonal by mesh vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mesh import Mesh, BoundaryConfig

FAMILIES = ("lagrange1", "rt0", "bdm1", "p0")

# symmetric triangle rule, exact for polynomials of degree 4 (6 points);
# barycentric coordinates and weights summing to one
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
TRI_D4_BARY = np.array(
    [
        [1 - 2 * _A1, _A1, _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [_A1, _A1, 1 - 2 * _A1],
        [1 - 2 * _A2, _A2, _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [_A2, _A2, 1 - 2 * _A2],
    ]
)
TRI_D4_W = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

# 3-point Gauss rule on [0, 1], exact for degree 5
_G = 0.5 * np.sqrt(3.0 / 5.0)
GAUSS3_X = np.array([0.5 - _G, 0.5, 0.5 + _G])
GAUSS3_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


class SpaceError(ValueError):
    """Raised for unknown families or inconsistent space usage."""


@dataclass
class FESpace:
    family: str
    mesh: Mesh
    ndof: int
    field: str
    essential: np.ndarray  # bool mask over dofs
    cell_dofs: np.ndarray  # (nt, nloc)
    vector_valued: bool
    _bdm_coeff: Optional[np.ndarray] = None  # (nt, 6 monomials, 6 local dofs)

    @property
    def free(self):
        return ~self.essential

    @property
    def nloc(self):
        return self.cell_dofs.shape[1]


_DEFAULT_FIELD = {
    "lagrange1": "rotation",
    "rt0": "displacement",
    "bdm1": "flux",
    "p0": "pressure",
}


def build_space(mesh, family, bc=None, field=None):
    """Build an FESpace on the mesh, with essential-DOF mask from the boundary config.

    ``field`` selects which unknown the space represents ('rotation',
    'displacement', 'flux' or 'pressure'); it determines which boundary side
    carries essential conditions. Defaults per family, but RT0 is used both
    for the displacement and for the family-1 flux, so pass field='flux' there.
    """
    if family not in FAMILIES:
        raise SpaceError(f"unknown family {family!r}")
    field = field or _DEFAULT_FIELD[family]

    if family == "lagrange1":
        ndof = mesh.num_vertices
        cell_dofs = mesh.cells.copy()
        vector = False
    elif family == "rt0":
        ndof = mesh.num_edges
        cell_dofs = mesh.cell_edges.copy()
        vector = True
    elif family == "bdm1":
        ndof = 2 * mesh.num_edges
        cell_dofs = _bdm_cell_dofs(mesh)
        vector = True
    else:  # p0
        ndof = mesh.num_cells
        cell_dofs = np.arange(mesh.num_cells, dtype=np.int64)[:, None]
        vector = False

    essential = np.zeros(ndof, dtype=bool)
    if bc is not None:
        bc.validate(mesh)
        for e, tag in mesh.boundary_tags.items():
            if field == "rotation" and bc.mech_side(tag) == "r":
                essential[mesh.edges[e]] = True
            elif field == "displacement" and family == "rt0" and bc.mech_side(tag) == "r":
                essential[e] = True
            elif field == "flux" and bc.flow_side(tag) == "q":
                if family == "rt0":
                    essential[e] = True
                else:
                    essential[2 * e] = essential[2 * e + 1] = True

    space = FESpace(
        family=family,
        mesh=mesh,
        ndof=ndof,
        field=field,
        essential=essential,
        cell_dofs=cell_dofs,
        vector_valued=vector,
    )
    if family == "bdm1":
        space._bdm_coeff = _bdm_coefficients(mesh)
    return space


def _bdm_cell_dofs(mesh):
    # local layout: (edge opposite vertex k, endpoint m) -> 2 * edge + m
    e = mesh.cell_edges
    dofs = np.empty((mesh.num_cells, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * e
    dofs[:, 1::2] = 2 * e + 1
    return dofs


# vector monomial basis for BDM1: (1,0), (x,0), (y,0), (0,1), (0,x), (0,y)
def _mono_values(points):
    """points (..., 2) -> (..., 6, 2)."""
    shp = points.shape[:-1]
    out = np.zeros(shp + (6, 2))
    x, y = points[..., 0], points[..., 1]
    out[..., 0, 0] = 1.0
    out[..., 1, 0] = x
    out[..., 2, 0] = y
    out[..., 3, 1] = 1.0
    out[..., 4, 1] = x
    out[..., 5, 1] = y
    return out


_MONO_DIV = np.array([0.0, 1.0, 0.0, 0.0, 0.0, 1.0])  # div of each monomial


def _bdm_coefficients(mesh):
    """Per-cell coefficient matrices C with basis_j = sum_m C[m, j] * mono_m."""
    nt = mesh.num_cells
    D = np.empty((nt, 6, 6))
    for k in range(3):  # local edge opposite vertex k
        e = mesh.cell_edges[:, k]
        n = mesh.edge_normals[e]  # (nt, 2), global normal
        for m in range(2):
            pts = mesh.vertices[mesh.edges[e, m]]  # endpoint m (low then high id)
            mono = _mono_values(pts)  # (nt, 6, 2)
            D[:, 2 * k + m, :] = np.einsum("tmd,td->tm", mono, n)
    return np.linalg.inv(D)


def barycentric_to_physical(mesh, bary):
    """bary (npts, 3) -> physical points per cell, (nt, npts, 2)."""
    return np.einsum("qi,tid->tqd", bary, mesh.vertices[mesh.cells])


def lagrange_gradients(mesh):
    """Gradients of the three hat functions per cell, (nt, 3, 2)."""
    p = mesh.vertices[mesh.cells]  # (nt, 3, 2)
    g = np.empty_like(p)
    twoA = (2.0 * mesh.areas)[:, None]
    for k in range(3):
        edge = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        # ccw rotation of the opposite edge vector, scaled by 1 / (2 area)
        g[:, k] = np.stack([-edge[:, 1], edge[:, 0]], axis=1) / twoA
    return g


def basis_table(space, bary):
    """Evaluate all local basis functions at barycentric points, for every cell.

    Returns (nt, npts, nloc) for scalar spaces and (nt, npts, nloc, 2) for
    vector spaces, with global orientation signs applied.
    """
    mesh = space.mesh
    npts = bary.shape[0]
    if space.family == "lagrange1":
        return np.broadcast_to(bary[None, :, :], (mesh.num_cells, npts, 3)).copy()
    if space.family == "p0":
        return np.ones((mesh.num_cells, npts, 1))
    pts = barycentric_to_physical(mesh, bary)
    if space.family == "rt0":
        vals = np.empty((mesh.num_cells, npts, 3, 2))
        for k in range(3):
            opp = mesh.vertices[mesh.cells[:, k]]  # vertex opposite local edge k
            vals[:, :, k, :] = (pts - opp[:, None, :]) / (
                2.0 * mesh.areas[:, None, None]
            )
            vals[:, :, k, :] *= space.mesh.cell_edge_signs[:, k, None, None]
        return vals
    # bdm1
    mono = _mono_values(pts)  # (nt, npts, 6, 2)
    return np.einsum("tqmd,tmj->tqjd", mono, space._bdm_coeff)


def div_table(space):
    """Cellwise-constant divergence of each local basis function, (nt, nloc)."""
    mesh = space.mesh
    if space.family == "rt0":
        return space.mesh.cell_edge_signs / mesh.areas[:, None]
    if space.family == "bdm1":
        return np.einsum("m,tmj->tj", _MONO_DIV, space._bdm_coeff)
    raise SpaceError(f"div undefined for family {space.family!r}")


def curl_table(space):
    """Cellwise-constant curl (-d2, d1) of each hat function, (nt, 3, 2)."""
    if space.family != "lagrange1":
        raise SpaceError(f"curl undefined for family {space.family!r}")
    g = lagrange_gradients(space.mesh)
    return np.stack([-g[:, :, 1], g[:, :, 0]], axis=2)


def eval_basis(space, cell, bary):
    """Basis values on one cell at a barycentric point: (dof_ids, values)."""
    if cell < 0 or cell >= space.mesh.num_cells:
        raise SpaceError(f"cell id {cell} out of range")
    bary = np.asarray(bary, dtype=float).reshape(1, 3)
    vals = basis_table(space, bary)[cell, 0]
    return space.cell_dofs[cell], vals


def eval_field(space, coeffs, cell, bary):
    """Evaluate a coefficient vector at a barycentric point inside ``cell``."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[0] != space.ndof:
        raise SpaceError("coefficient vector length does not match space")
    dofs, vals = eval_basis(space, cell, bary)
    return np.tensordot(coeffs[dofs], vals, axes=(0, 0))


def eval_curl(space, coeffs, cell):
    """Cellwise-constant curl of a Lagrange1 field on ``cell``, a 2-vector."""
    ct = curl_table(space)
    return np.asarray(coeffs)[space.cell_dofs[cell]] @ ct[cell]


def eval_div(space, coeffs, cell):
    """Cellwise-constant divergence of an RT0/BDM1 field on ``cell``."""
    dt = div_table(space)
    return float(np.asarray(coeffs)[space.cell_dofs[cell]] @ dt[cell])


def interpolate(space, f):
    """Canonical interpolation of an analytic field onto the space.

    f maps a point (2,) to a scalar (Lagrange1, P0const) or a 2-vector
    (RT0, BDM1).
    """
    mesh = space.mesh
    if space.family == "lagrange1":
        return np.array([float(f(x)) for x in mesh.vertices])
    if space.family == "p0":
        pts = barycentric_to_physical(mesh, TRI_D4_BARY)
        vals = np.array(
            [[float(f(pts[t, q])) for q in range(pts.shape[1])] for t in range(mesh.num_cells)]
        )
        return vals @ TRI_D4_W
    if space.family == "rt0":
        coeffs = np.zeros(space.ndof)
        for e in range(mesh.num_edges):
            a, b = mesh.vertices[mesh.edges[e]]
            n = mesh.edge_normals[e]
            acc = 0.0
            for s, w in zip(GAUSS3_X, GAUSS3_W):
                acc += w * float(np.dot(f(a + s * (b - a)), n))
            coeffs[e] = acc * mesh.edge_lengths[e]
        return coeffs
    # bdm1: normal-trace values at edge endpoints
    coeffs = np.zeros(space.ndof)
    for e in range(mesh.num_edges):
        n = mesh.edge_normals[e]
        for m in range(2):
            p = mesh.vertices[mesh.edges[e, m]]
            coeffs[2 * e + m] = float(np.dot(f(p), n))
    return coeffs


@dataclass
class FieldState:
    """Coefficient vectors of the four unknowns, tagged with their spaces."""

    r: np.ndarray
    u: np.ndarray
    q: np.ndarray
    p: np.ndarray
    spaces: dict
    family: int = 1

    def __post_init__(self):
        for name in "ruqp":
            vec = getattr(self, name)
            if vec.shape[0] != self.spaces[name].ndof:
                raise SpaceError(f"component {name!r} has wrong length")

    @classmethod
    def zero(cls, spaces, family=1):
        return cls(
            r=np.zeros(spaces["r"].ndof),
            u=np.zeros(spaces["u"].ndof),
            q=np.zeros(spaces["q"].ndof),
            p=np.zeros(spaces["p"].ndof),
            spaces=spaces,
            family=family,
        )

    def concatenate(self):
        return np.concatenate([self.r, self.u, self.q, self.p])

    @classmethod
    def from_vector(cls, vec, spaces, family=1):
        sizes = [spaces[n].ndof for n in "ruqp"]
        parts = np.split(vec, np.cumsum(sizes)[:-1])
        return cls(*parts, spaces=spaces, family=family)
