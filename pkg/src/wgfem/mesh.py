"""Triangular meshes of the unit square and simplicial connectivity queries.

The solver operates on a structured triangulation obtained by splitting an
n x n grid of cells along the lower-left to upper-right diagonal.  All
connectivity (edges, adjacency, orientation) is derived deterministically
from the triangle list, so tests can also build small ad-hoc meshes from
raw vertex/triangle arrays.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Mesh", "build_uniform_square_mesh", "edge_geometry", "write_vtk"]


class Mesh:
    """Immutable triangle mesh with edge connectivity.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array
        Vertex indices, counterclockwise.
    edges : (ne, 2) int array
        Deduplicated, each row sorted ascending (the global edge
        orientation runs from the lower to the higher vertex index).
    triangle_edges : (nt, 3) int array
        Edge index opposite-free layout: entry ``i`` is the edge between
        local vertices ``i`` and ``(i+1) % 3``.
    triangle_edge_signs : (nt, 3) int array
        +1 where the local direction agrees with the global edge
        orientation, -1 otherwise.
    edge_triangles : (ne, 2) int array
        Adjacent triangle indices, -1 padding for boundary edges.
    boundary_edge : (ne,) bool array
    h_K : (nt,) float array
        Triangle diameters.
    h : float
        max over ``h_K``.
    """

    def __init__(self, vertices, triangles):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must be (nv, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must be (nt, 3)")

        self.vertices = vertices
        self.triangles = triangles

        p = vertices[triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(cross <= 0.0):
            raise ValueError("all triangles must be counterclockwise with positive area")
        self.areas = 0.5 * cross

        self._build_edges()

        sides = np.stack(
            [
                np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
                np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            ],
            axis=1,
        )
        self.edge_lengths_by_triangle = sides
        self.h_K = sides.max(axis=1)
        self.h = float(self.h_K.max())
        self.centroids = p.mean(axis=1)

        for arr in (
            self.vertices,
            self.triangles,
            self.edges,
            self.triangle_edges,
            self.triangle_edge_signs,
            self.edge_triangles,
            self.boundary_edge,
            self.areas,
            self.h_K,
            self.centroids,
            self.edge_lengths_by_triangle,
        ):
            arr.setflags(write=False)

    def _build_edges(self):
        tri = self.triangles
        # local edge i connects local vertices i and i+1 (mod 3)
        a = tri
        b = tri[:, [1, 2, 0]]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        pairs = np.stack([lo.ravel(), hi.ravel()], axis=1)

        index_of = {}
        edge_list = []
        tri_edges = np.empty(pairs.shape[0], dtype=np.int64)
        for i, pair in enumerate(map(tuple, pairs)):
            e = index_of.get(pair)
            if e is None:
                e = len(edge_list)
                index_of[pair] = e
                edge_list.append(pair)
            tri_edges[i] = e

        self.edges = np.array(edge_list, dtype=np.int64)
        self.triangle_edges = tri_edges.reshape(-1, 3)
        self.triangle_edge_signs = np.where(a < b, 1, -1).astype(np.int64)

        ne = len(edge_list)
        edge_tris = np.full((ne, 2), -1, dtype=np.int64)
        count = np.zeros(ne, dtype=np.int64)
        for t in range(tri.shape[0]):
            for e in self.triangle_edges[t]:
                if count[e] > 1:
                    raise ValueError(f"edge {e} shared by more than two triangles")
                edge_tris[e, count[e]] = t
                count[e] += 1
        self.edge_triangles = edge_tris
        self.boundary_edge = count == 1

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    def edge_vector(self, e):
        """Vector from the lower-index to the higher-index endpoint."""
        a, b = self.edges[e]
        return self.vertices[b] - self.vertices[a]


def build_uniform_square_mesh(n: int) -> Mesh:
    """Triangulate the unit square into ``2 n**2`` triangles.

    Each of the n x n cells is split along its lower-left to upper-right
    diagonal.  Vertices are numbered row-major (x fastest), cells row-major,
    with the lower triangle of a cell preceding the upper one, so repeated
    builds are bit-identical.
    """
    if n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    coords = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(coords, coords)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    t = 0
    for iy in range(n):
        for ix in range(n):
            v00 = iy * (n + 1) + ix
            v10 = v00 + 1
            v01 = v00 + (n + 1)
            v11 = v01 + 1
            triangles[t] = (v00, v10, v11)      # lower, CCW
            triangles[t + 1] = (v00, v11, v01)  # upper, CCW
            t += 2
    mesh = Mesh(vertices, triangles)
    mesh.structured_n = n  # enables O(1) point location on this grid
    return mesh


def edge_geometry(mesh: Mesh, e: int):
    """Midpoint, unit tangent, length, and outward normals of edge ``e``.

    The tangent follows the global edge orientation.  Normals are returned
    as a list aligned with ``mesh.edge_triangles[e]``: for each adjacent
    triangle K the normal is the outward unit normal of the boundary of K
    on this edge.
    """
    a, b = mesh.edges[e]
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    vec = pb - pa
    length = float(np.linalg.norm(vec))
    tangent = vec / length
    midpoint = 0.5 * (pa + pb)

    normals = []
    for t in mesh.edge_triangles[e]:
        if t < 0:
            continue
        n = np.array([tangent[1], -tangent[0]])
        if np.dot(n, mesh.centroids[t] - midpoint) > 0.0:
            n = -n
        normals.append(n)
    return midpoint, tangent, length, normals


def write_vtk(mesh: Mesh, path):
    """Write the mesh as legacy ASCII VTK POLYDATA (for external viewers)."""
    lines = [
        "# vtk DataFile Version 2.0",
        "wgfem mesh",
        "ASCII",
        "DATASET POLYDATA",
        f"POINTS {mesh.num_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} 0")
    lines.append(f"POLYGONS {mesh.num_triangles} {4 * mesh.num_triangles}")
    for tri in mesh.triangles:
        lines.append("3 " + " ".join(str(v) for v in tri))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
