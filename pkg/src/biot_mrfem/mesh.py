"""Conforming 2D triangulations with oriented edges and tagged boundary segments.

Meshes are immutable after construction. Edges are globally oriented from the
lower to the higher vertex id, and every cell stores the relative sign of its
three edges with respect to that global orientation. This makes the sign
conventions of H(div) degrees of freedom unambiguous across the mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh input or violated mesh invariants."""


@dataclass(frozen=True)
class Mesh:
    """2D simplicial complex with oriented edges.

    Attributes:
        vertices: (nv, 2) coordinates.
        cells: (nt, 3) vertex ids, positively (counterclockwise) oriented.
        edges: (ne, 2) vertex ids with edges[i, 0] < edges[i, 1].
        cell_edges: (nt, 3); cell_edges[t, k] is the edge opposite local vertex k.
        cell_edge_signs: (nt, 3); +1 where the global edge normal is outward for the cell.
        boundary_tags: edge id -> tag.
    """

    vertices: np.ndarray
    cells: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    boundary_tags: dict = field(default_factory=dict)
    # derived geometry, filled in by build_mesh
    areas: np.ndarray = None
    edge_lengths: np.ndarray = None
    edge_normals: np.ndarray = None
    edge_tangents: np.ndarray = None
    edge_cells: np.ndarray = None

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_cells(self):
        return self.cells.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_cells[:, 1] < 0)

    def cell_vertices(self, t):
        return self.vertices[self.cells[t]]

    def outward_sign(self, edge):
        """Sign s such that s * edge_normals[edge] points out of the domain.

        Only meaningful for boundary edges.
        """
        t = self.edge_cells[edge, 0]
        k = int(np.flatnonzero(self.cell_edges[t] == edge)[0])
        return int(self.cell_edge_signs[t, k])


def _cross2(a, b):
    """z-component of the cross product of stacked 2D vectors."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def build_mesh(vertices, cells, boundary_tags=None, default_tag="boundary"):
    """Construct a validated Mesh from vertex coordinates and cell connectivity.

    Args:
        vertices: (nv, 2) array-like of coordinates.
        cells: (nt, 3) array-like of vertex ids; orientation is fixed up here.
        boundary_tags: optional mapping from a sorted vertex pair (a, b) to a tag.
            Boundary edges without an entry receive ``default_tag``.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be an (nv, 2) array")
    if cells.ndim != 2 or cells.shape[1] != 3:
        raise MeshError("cells must be an (nt, 3) array")

    # enforce positive orientation
    p0, p1, p2 = (vertices[cells[:, i]] for i in range(3))
    twice_area = _cross2(p1 - p0, p2 - p0)
    flip = twice_area < 0
    if np.any(flip):
        cells = cells.copy()
        cells[flip, 1], cells[flip, 2] = cells[flip, 2], cells[flip, 1]
        p0, p1, p2 = (vertices[cells[:, i]] for i in range(3))
        twice_area = _cross2(p1 - p0, p2 - p0)
    if np.any(twice_area <= 0):
        raise MeshError("degenerate cell (zero area)")
    areas = 0.5 * twice_area

    # global edge table, low id -> high id
    raw = np.concatenate(
        [cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]], axis=0
    )
    raw_sorted = np.sort(raw, axis=1)
    edges, inverse = np.unique(raw_sorted, axis=0, return_inverse=True)
    nt = cells.shape[0]
    cell_edges = inverse.reshape(3, nt).T.copy()

    # relative sign: +1 iff the ccw traversal (k+1 -> k+2) runs low -> high,
    # i.e. the global normal (clockwise rotation of the low->high tangent)
    # is the outward normal of this cell on that edge
    signs = np.where(raw[:, 0] < raw[:, 1], 1, -1).reshape(3, nt).T.copy()

    ne = edges.shape[0]
    edge_cells = np.full((ne, 2), -1, dtype=np.int64)
    counts = np.zeros(ne, dtype=np.int64)
    for t in range(nt):
        for k in range(3):
            e = cell_edges[t, k]
            if counts[e] >= 2:
                raise MeshError(f"edge {e} shared by more than two cells")
            edge_cells[e, counts[e]] = t
            counts[e] += 1

    tangents = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    lengths = np.linalg.norm(tangents, axis=1)
    tangents = tangents / lengths[:, None]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)

    tags = {}
    pair_tags = {tuple(sorted(k)): v for k, v in (boundary_tags or {}).items()}
    for e in np.flatnonzero(counts == 1):
        pair = (int(edges[e, 0]), int(edges[e, 1]))
        tags[int(e)] = pair_tags.get(pair, default_tag)

    mesh = Mesh(
        vertices=vertices,
        cells=cells,
        edges=edges,
        cell_edges=cell_edges,
        cell_edge_signs=signs,
        boundary_tags=tags,
        areas=areas,
        edge_lengths=lengths,
        edge_normals=normals,
        edge_tangents=tangents,
        edge_cells=edge_cells,
    )
    _check_orientation(mesh)
    return mesh


def _check_orientation(mesh):
    """Interior edges must be seen with opposite relative signs by their two cells."""
    for e in range(mesh.num_edges):
        t0, t1 = mesh.edge_cells[e]
        if t1 < 0:
            continue
        s = []
        for t in (t0, t1):
            k = int(np.flatnonzero(mesh.cell_edges[t] == e)[0])
            s.append(mesh.cell_edge_signs[t, k])
        if s[0] + s[1] != 0:
            raise MeshError(f"inconsistent orientation on interior edge {e}")


def unit_square_mesh(n):
    """Structured right-triangle mesh of the unit square with n cells per side.

    Boundary edges are tagged by side: left, right, bottom, top.
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    xv, yv = np.meshgrid(xs, xs, indexing="ij")
    vertices = np.stack([xv.ravel(), yv.ravel()], axis=1)

    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    cells = np.array(cells, dtype=np.int64)

    tags = {}
    for j in range(n):
        tags[(vid(0, j), vid(0, j + 1))] = "left"
        tags[(vid(n, j), vid(n, j + 1))] = "right"
    for i in range(n):
        tags[(vid(i, 0), vid(i + 1, 0))] = "bottom"
        tags[(vid(i, n), vid(i + 1, n))] = "top"
    return build_mesh(vertices, cells, tags)


def refine_uniform(mesh):
    """Split every triangle into four using edge midpoints; tags are inherited."""
    nv = mesh.num_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.concatenate([mesh.vertices, midpoints], axis=0)

    def mid(e):
        return nv + e

    cells = []
    for t in range(mesh.num_cells):
        v0, v1, v2 = mesh.cells[t]
        # cell_edges[t, k] is opposite vertex k
        m12, m20, m01 = (mid(mesh.cell_edges[t, k]) for k in range(3))
        cells.extend(
            [(v0, m01, m20), (v1, m12, m01), (v2, m20, m12), (m01, m12, m20)]
        )
    cells = np.array(cells, dtype=np.int64)

    tags = {}
    for e, tag in mesh.boundary_tags.items():
        a, b = mesh.edges[e]
        m = mid(e)
        tags[tuple(sorted((int(a), m)))] = tag
        tags[tuple(sorted((int(b), m)))] = tag
    return build_mesh(vertices, cells, tags)


def mesh_stats(mesh):
    """Return (h_max, h_min, shape_regularity_ratio).

    The ratio is the max over cells of diameter / inradius.
    """
    ell = mesh.edge_lengths[mesh.cell_edges]  # (nt, 3)
    diam = ell.max(axis=1)
    perimeter = ell.sum(axis=1)
    inradius = 2.0 * mesh.areas / perimeter
    return float(diam.max()), float(diam.min()), float((diam / inradius).max())


def read_mesh(path):
    """Read the plain-text mesh format.

    Header line "dim=2 nv=<V> nc=<T>", then V vertex lines "x y", then T cell
    lines "i j k", then an optional "boundary" section of lines
    "edge_vertex_a edge_vertex_b tag". '#' starts a comment.
    """
    tokens_per_line = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens_per_line.append(line.split())

    if not tokens_per_line:
        raise MeshError(f"{path}: empty mesh file")
    header = dict(tok.split("=", 1) for tok in tokens_per_line[0] if "=" in tok)
    if header.get("dim") != "2":
        raise MeshError(f"{path}: expected dim=2 header")
    try:
        nv, nt = int(header["nv"]), int(header["nc"])
    except KeyError as exc:
        raise MeshError(f"{path}: header missing {exc}") from exc

    rows = tokens_per_line[1:]
    if len(rows) < nv + nt:
        raise MeshError(f"{path}: truncated file")
    vertices = np.array([[float(x) for x in r] for r in rows[:nv]])
    cells = np.array([[int(x) for x in r] for r in rows[nv : nv + nt]])

    tags = {}
    rest = rows[nv + nt :]
    if rest:
        if rest[0] != ["boundary"]:
            raise MeshError(f"{path}: expected 'boundary' section, got {rest[0]}")
        for r in rest[1:]:
            a, b, tag = int(r[0]), int(r[1]), r[2]
            tags[tuple(sorted((a, b)))] = tag
    return build_mesh(vertices, cells, tags)


@dataclass
class BoundaryConfig:
    """Partition of boundary tags for mechanics and flow, plus boundary data.

    mechanics maps each tag to 'r' (essential: normal displacement and
    tangential rotation fixed) or 'u' (natural: tangential displacement and
    normal stress data). flow maps each tag to 'p' (pressure data, natural for
    the flux) or 'q' (essential: no normal flux).
    """

    mechanics: dict
    flow: dict
    u0: Optional[Callable] = None
    sigma0: Optional[Callable] = None
    p0: Optional[Callable] = None

    def validate(self, mesh):
        tags = set(mesh.boundary_tags.values())
        for name, part, allowed in (
            ("mechanics", self.mechanics, {"r", "u"}),
            ("flow", self.flow, {"p", "q"}),
        ):
            missing = tags - set(part)
            if missing:
                raise MeshError(f"{name} partition misses tags {sorted(missing)}")
            bad = {v for v in part.values()} - allowed
            if bad:
                raise MeshError(f"{name} partition has invalid sides {sorted(bad)}")
        if not any(self.flow[t] == "p" for t in tags):
            raise MeshError("at least one boundary tag must be on the pressure side")

    def mech_side(self, tag):
        return self.mechanics[tag]

    def flow_side(self, tag):
        return self.flow[tag]


def all_natural_bc(mesh, u0=None, sigma0=None, p0=None):
    """BoundaryConfig with every tag on the natural side (u for mechanics, p for flow)."""
    tags = set(mesh.boundary_tags.values())
    return BoundaryConfig(
        mechanics={t: "u" for t in tags},
        flow={t: "p" for t in tags},
        u0=u0,
        sigma0=sigma0,
        p0=p0,
    )
