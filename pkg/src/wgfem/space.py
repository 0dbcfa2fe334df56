"""The discrete weak space: DOF layout, projections, weak gradients, stabilizers.

A weak function v = {v0, vb} pairs an interior polynomial of degree k per
triangle with an edge polynomial of degree j per mesh edge.  Edge
coefficients are shared by the two adjacent triangles (single-valued vb),
and boundary-edge coefficients are removed from the unknown vector
(homogeneous Dirichlet data).  The discrete weak gradient lives in
[P_l(K)]^2 and is defined elementwise through integration-by-parts moments
against vector test polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import EdgeBasis, TriBasis, dim_pk, gauss_rule, log_mass_condition, triangle_rule
from .mesh import Mesh

__all__ = [
    "WGConfig",
    "DofMap",
    "WeakField",
    "ElementFrame",
    "ElementOperators",
    "project_interior",
    "project_edge",
    "project_vector",
    "project_field",
    "build_weak_gradient",
    "build_stabilizer_local",
    "build_element_operators",
    "coefficient_at",
]

PROJECTED = "projected"
PLAIN = "plain"


@dataclass(frozen=True)
class WGConfig:
    """Element family (P_k(K), P_j(boundary), [P_l(K)]^2) plus stabilizer kind.

    The space builds for every k >= 1, j >= 0, l >= 0; stability of a given
    combination is diagnosed downstream by the solvers, not here.
    """

    k: int
    j: int
    l: int
    stabilizer: str = PROJECTED

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"interior degree k must be >= 1, got {self.k}")
        if self.j < 0 or self.l < 0:
            raise ValueError("edge degree j and gradient degree l must be >= 0")
        if self.stabilizer not in (PROJECTED, PLAIN):
            raise ValueError(f"unknown stabilizer {self.stabilizer!r}")

    @property
    def m(self) -> int | None:
        """Projection degree of the projected stabilizer, max(j, l)."""
        return max(self.j, self.l) if self.stabilizer == PROJECTED else None

    @property
    def dim_interior(self) -> int:
        return dim_pk(self.k)

    @property
    def dim_edge(self) -> int:
        return self.j + 1

    @property
    def trace_degree(self) -> int:
        """Degree of the element-boundary discrepancy vb - v0, max(k, j)."""
        return max(self.k, self.j)

    def tri_exactness(self, data: bool = False) -> int:
        d = max(2 * self.k, 2 * self.l, self.k + self.l) + 2
        return d + 2 if data else d

    def edge_points(self, data: bool = False) -> int:
        n = math.ceil((2 * max(self.k, self.j, self.l) + 3) / 2)
        return n + 2 if data else n


class DofMap:
    """Global indexing: per-element interior blocks, then free-edge blocks."""

    def __init__(self, mesh: Mesh, config: WGConfig):
        dk = config.dim_interior
        dj = config.dim_edge
        nt, ne = mesh.num_triangles, mesh.num_edges

        self.mesh = mesh
        self.config = config
        self.interior_offset = np.arange(nt, dtype=np.int64) * dk
        self.n_interior = nt * dk
        self.n_edge = ne * dj

        self.edge_offset = np.full(ne, -1, dtype=np.int64)
        pos = self.n_interior
        for e in range(ne):
            if not mesh.boundary_edge[e]:
                self.edge_offset[e] = pos
                pos += dj
        self.n_free_edge = pos - self.n_interior
        self.total_free = pos
        self.n_local = dk + 3 * dj

        self.interior_offset.setflags(write=False)
        self.edge_offset.setflags(write=False)

    def element_dofs(self, t: int) -> np.ndarray:
        """Global indices of the local DOFs of triangle t; -1 marks
        boundary-edge slots (vb = 0 there)."""
        dk = self.config.dim_interior
        dj = self.config.dim_edge
        out = np.empty(self.n_local, dtype=np.int64)
        out[:dk] = self.interior_offset[t] + np.arange(dk)
        for loc, e in enumerate(self.mesh.triangle_edges[t]):
            off = self.edge_offset[e]
            sl = slice(dk + loc * dj, dk + (loc + 1) * dj)
            if off < 0:
                out[sl] = -1
            else:
                out[sl] = off + np.arange(dj)
        return out


@dataclass
class WeakField:
    """Coefficient vector of a weak function over the free DOFs."""

    mesh: Mesh
    config: WGConfig
    dofmap: DofMap
    coeffs: np.ndarray

    @classmethod
    def zeros(cls, mesh: Mesh, config: WGConfig, dofmap: DofMap | None = None):
        dofmap = dofmap or DofMap(mesh, config)
        return cls(mesh, config, dofmap, np.zeros(dofmap.total_free))

    def copy(self) -> "WeakField":
        return WeakField(self.mesh, self.config, self.dofmap, self.coeffs.copy())

    def interior_coeffs(self, t: int) -> np.ndarray:
        dk = self.config.dim_interior
        off = self.dofmap.interior_offset[t]
        return self.coeffs[off : off + dk]

    def edge_coeffs(self, e: int) -> np.ndarray:
        """Legendre coefficients of vb on edge e (zeros on boundary edges)."""
        dj = self.config.dim_edge
        off = self.dofmap.edge_offset[e]
        if off < 0:
            return np.zeros(dj)
        return self.coeffs[off : off + dj]

    def local_coeffs(self, t: int) -> np.ndarray:
        idx = self.dofmap.element_dofs(t)
        out = np.zeros(idx.shape[0])
        free = idx >= 0
        out[free] = self.coeffs[idx[free]]
        return out

    def __add__(self, other):
        return WeakField(self.mesh, self.config, self.dofmap, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return WeakField(self.mesh, self.config, self.dofmap, self.coeffs - other.coeffs)


@dataclass
class _EdgeFrame:
    edge: int
    sign: int
    length: float
    normal: np.ndarray
    t_nodes: np.ndarray       # arc parameter in [-1, 1], global orientation
    w_ref: np.ndarray         # Gauss weights, sum 2
    points: np.ndarray        # mapped global coordinates (n, 2)
    leg_vals: np.ndarray      # Legendre values up to trace_degree (n, D+1)
    t_nodes_data: np.ndarray
    w_ref_data: np.ndarray
    points_data: np.ndarray
    leg_vals_data: np.ndarray


class ElementFrame:
    """Per-element evaluation bundle: bases, mapped quadrature, trace maps."""

    def __init__(self, mesh: Mesh, config: WGConfig, t: int):
        self.mesh = mesh
        self.config = config
        self.t = t
        self.verts = mesh.vertices[mesh.triangles[t]]
        self.area = float(mesh.areas[t])
        self.h_K = float(mesh.h_K[t])
        self.centroid = mesh.centroids[t]

        self.basis_k = TriBasis(config.k, self.centroid, self.h_K)
        self.basis_l = TriBasis(config.l, self.centroid, self.h_K)

        rule = triangle_rule(config.tri_exactness())
        self.vol_points = self._map_reference(rule.points)
        self.vol_weights = rule.weights * (2.0 * self.area)
        self.vals_k, self.grads_k = self.basis_k.eval(self.vol_points)
        self.vals_l, self.grads_l = self.basis_l.eval(self.vol_points)

        rule_d = triangle_rule(config.tri_exactness(data=True))
        self.vol_points_data = self._map_reference(rule_d.points)
        self.vol_weights_data = rule_d.weights * (2.0 * self.area)
        self.vals_k_data = self.basis_k.values(self.vol_points_data)
        self.vals_l_data = self.basis_l.values(self.vol_points_data)

        self.edge_basis = EdgeBasis(config.j)
        D = config.trace_degree
        ng = config.edge_points()
        ngd = config.edge_points(data=True)
        trace_basis = EdgeBasis(D)

        self.edges = []
        for loc in range(3):
            e = mesh.triangle_edges[t][loc]
            sign = int(mesh.triangle_edge_signs[t][loc])
            a, b = mesh.edges[e]
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            vec = pb - pa
            length = float(np.linalg.norm(vec))
            tangent = vec / length
            mid = 0.5 * (pa + pb)
            # CCW interior lies left of the local direction sign*tangent,
            # so the outward normal is its clockwise rotation
            normal = sign * np.array([tangent[1], -tangent[0]])

            g = gauss_rule(ng)
            gd = gauss_rule(ngd)
            pts = mid + 0.5 * length * np.outer(g.points, tangent)
            pts_d = mid + 0.5 * length * np.outer(gd.points, tangent)
            self.edges.append(
                _EdgeFrame(
                    edge=e,
                    sign=sign,
                    length=length,
                    normal=normal,
                    t_nodes=g.points,
                    w_ref=g.weights,
                    points=pts,
                    leg_vals=trace_basis.values(g.points),
                    t_nodes_data=gd.points,
                    w_ref_data=gd.weights,
                    points_data=pts_d,
                    leg_vals_data=trace_basis.values(gd.points),
                )
            )

        # Legendre expansion (to trace_degree) of each interior basis trace
        scale = (2.0 * np.arange(D + 1) + 1.0) / 2.0
        self.trace_k = []
        for ef in self.edges:
            vals = self.basis_k.values(ef.points)
            self.trace_k.append(scale[:, None] * (ef.leg_vals * ef.w_ref[:, None]).T @ vals)

    def _map_reference(self, ref_points):
        p0, p1, p2 = self.verts
        return p0 + np.outer(ref_points[:, 0], p1 - p0) + np.outer(ref_points[:, 1], p2 - p0)

    def mass_interior(self) -> np.ndarray:
        M = self.vals_k.T @ (self.vals_k * self.vol_weights[:, None])
        return 0.5 * (M + M.T)

    def mass_gradient_basis(self) -> np.ndarray:
        M = self.vals_l.T @ (self.vals_l * self.vol_weights[:, None])
        return 0.5 * (M + M.T)

    def gradient_gram(self) -> np.ndarray:
        """Interior-block Gram of grad v0 . grad w0 (discrete H1 piece)."""
        G = np.einsum("qic,q,qjc->ij", self.grads_k, self.vol_weights, self.grads_k)
        return 0.5 * (G + G.T)

    @property
    def n_local(self) -> int:
        return self.config.dim_interior + 3 * self.config.dim_edge


@dataclass
class ElementOperators:
    """Local matrices of one element: weak gradient, stiffness, stabilizer, mass."""

    G: np.ndarray
    K_stiff: np.ndarray
    S_loc: np.ndarray
    M0: np.ndarray


def _as_matrix_coefficient(a):
    """Normalize coefficient input to (callable, is_identity, constant)."""
    if a is None:
        return None, True, None
    if callable(a):
        return a, False, None
    mat = np.asarray(a, dtype=float)
    if mat.shape == ():
        mat = float(mat) * np.eye(2)
    if mat.shape != (2, 2):
        raise ValueError("constant coefficient must be scalar or 2x2")
    w = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if w.min() <= 0.0:
        raise ValueError("coefficient matrix must be symmetric positive definite")
    return None, False, mat


def _coefficient_values(a, points):
    """Coefficient tensor at points, shape (n, 2, 2); validates SPD."""
    vals = np.asarray(a(points[:, 0], points[:, 1]), dtype=float)
    if vals.shape != (points.shape[0], 2, 2):
        raise ValueError("coefficient callable must return (n, 2, 2)")
    sym = 0.5 * (vals + np.swapaxes(vals, 1, 2))
    eigs = np.linalg.eigvalsh(sym)
    if eigs.min() <= 0.0:
        raise ValueError("coefficient matrix is not SPD at a quadrature node")
    return vals


def coefficient_at(a, points):
    """Evaluate a diffusion coefficient spec (None / constant / callable)."""
    points = np.atleast_2d(points)
    fn, is_id, const = _as_matrix_coefficient(a)
    if is_id:
        return np.broadcast_to(np.eye(2), (points.shape[0], 2, 2)).copy()
    if const is not None:
        return np.broadcast_to(const, (points.shape[0], 2, 2)).copy()
    return _coefficient_values(fn, points)


def project_interior(frame: ElementFrame, f, degree: int | None = None) -> np.ndarray:
    """L2 projection of f onto P_degree(K) (degree defaults to k)."""
    if degree is None or degree == frame.config.k:
        basis_vals = frame.vals_k_data
        M = frame.mass_interior()
    else:
        basis = TriBasis(degree, frame.centroid, frame.h_K)
        basis_vals = basis.values(frame.vol_points_data)
        vals = basis.values(frame.vol_points)
        M = vals.T @ (vals * frame.vol_weights[:, None])
    fv = np.asarray(f(frame.vol_points_data[:, 0], frame.vol_points_data[:, 1]), dtype=float)
    b = basis_vals.T @ (frame.vol_weights_data * fv)
    return np.linalg.solve(M, b)


def project_edge(frame: ElementFrame, loc: int, f, degree: int) -> np.ndarray:
    """L2 projection of f onto P_degree(e): Legendre coefficient truncation."""
    ef = frame.edges[loc]
    fv = np.asarray(f(ef.points_data[:, 0], ef.points_data[:, 1]), dtype=float)
    scale = (2.0 * np.arange(degree + 1) + 1.0) / 2.0
    leg = ef.leg_vals_data[:, : degree + 1]
    return scale * (leg.T @ (ef.w_ref_data * fv))


def project_vector(frame: ElementFrame, g, degree: int | None = None) -> np.ndarray:
    """Componentwise L2 projection of a vector field onto [P_degree(K)]^2.

    Returns an array (2, dim): x-component coefficients, then y-component.
    """
    if degree is None:
        degree = frame.config.l
    if degree == frame.config.l:
        basis_vals = frame.vals_l_data
        M = frame.mass_gradient_basis()
    else:
        basis = TriBasis(degree, frame.centroid, frame.h_K)
        basis_vals = basis.values(frame.vol_points_data)
        vals = basis.values(frame.vol_points)
        M = vals.T @ (vals * frame.vol_weights[:, None])
    gv = np.asarray(g(frame.vol_points_data[:, 0], frame.vol_points_data[:, 1]), dtype=float)
    if gv.shape != (frame.vol_points_data.shape[0], 2):
        raise ValueError("vector field must return (n, 2)")
    b = basis_vals.T @ (frame.vol_weights_data[:, None] * gv)
    return np.linalg.solve(M, b).T


def project_field(mesh: Mesh, config: WGConfig, f, dofmap: DofMap | None = None) -> WeakField:
    """Componentwise projection Q_h f = {Q_k^0 f, Q_j^b f} into the weak space."""
    dofmap = dofmap or DofMap(mesh, config)
    field = WeakField.zeros(mesh, config, dofmap)
    dk = config.dim_interior
    dj = config.dim_edge
    done_edges = np.zeros(mesh.num_edges, dtype=bool)
    for t in range(mesh.num_triangles):
        frame = ElementFrame(mesh, config, t)
        off = dofmap.interior_offset[t]
        field.coeffs[off : off + dk] = project_interior(frame, f)
        for loc in range(3):
            e = frame.edges[loc].edge
            off_e = dofmap.edge_offset[e]
            if off_e < 0 or done_edges[e]:
                continue
            field.coeffs[off_e : off_e + dj] = project_edge(frame, loc, f, config.j)
            done_edges[e] = True
    return field


def build_weak_gradient(frame: ElementFrame, route: str = "divergence") -> np.ndarray:
    """Weak-gradient matrix G: local weak DOFs -> [P_l]^2 coefficients.

    Row layout: x-component coefficients, then y-component.  ``route``
    selects the defining moments ("divergence") or the integration-by-parts
    equivalent ("gradient"); both produce the same matrix and the
    equivalence is exercised as a self-test by the verification suite.
    """
    config = frame.config
    dl = dim_pk(config.l)
    dk = config.dim_interior
    dj = config.dim_edge
    n_loc = frame.n_local

    b = np.zeros((2, dl, n_loc))
    if route == "divergence":
        # -(v0, div phi)_K for interior DOFs
        for c in range(2):
            b[c, :, :dk] = -frame.grads_l[:, :, c].T @ (frame.vol_weights[:, None] * frame.vals_k)
    elif route == "gradient":
        # (grad v0, phi)_K + <-v0, phi . n> for interior DOFs
        for c in range(2):
            b[c, :, :dk] = frame.vals_l.T @ (frame.vol_weights[:, None] * frame.grads_k[:, :, c])
        for ef in frame.edges:
            vals_l = frame.basis_l.values(ef.points)
            vals_k = frame.basis_k.values(ef.points)
            w = 0.5 * ef.length * ef.w_ref
            block = vals_l.T @ (w[:, None] * vals_k)
            for c in range(2):
                b[c, :, :dk] -= ef.normal[c] * block
    else:
        raise ValueError(f"unknown route {route!r}")

    # <vb, phi . n> for edge DOFs (identical in both routes)
    for loc, ef in enumerate(frame.edges):
        vals_l = frame.basis_l.values(ef.points)
        leg = ef.leg_vals[:, :dj]
        w = 0.5 * ef.length * ef.w_ref
        block = vals_l.T @ (w[:, None] * leg)
        sl = slice(dk + loc * dj, dk + (loc + 1) * dj)
        for c in range(2):
            b[c, :, sl] += ef.normal[c] * block

    Ml = frame.mass_gradient_basis()
    G = np.empty((2 * dl, n_loc))
    G[:dl] = np.linalg.solve(Ml, b[0])
    G[dl:] = np.linalg.solve(Ml, b[1])
    return G


def _discrepancy_map(frame: ElementFrame, loc: int) -> np.ndarray:
    """Legendre coefficients (up to trace degree) of vb - v0 on local edge."""
    config = frame.config
    D = config.trace_degree
    dk = config.dim_interior
    dj = config.dim_edge
    R = np.zeros((D + 1, frame.n_local))
    R[:, :dk] = -frame.trace_k[loc]
    sl = slice(dk + loc * dj, dk + (loc + 1) * dj)
    R[: dj, sl] = np.eye(dj)
    return R


def build_stabilizer_local(frame: ElementFrame, stabilizer: str | None = None) -> np.ndarray:
    """Local stabilizer matrix: h_K^{-1} <d, d>_e summed over the 3 edges.

    ``plain`` pairs the raw discrepancy d = vb - v0; ``projected`` first
    projects d onto P_m(e) with m = max(j, l), which in the Legendre
    representation is a coefficient truncation.
    """
    config = frame.config
    stab = stabilizer or config.stabilizer
    D = config.trace_degree
    if stab == PLAIN:
        keep = D
    elif stab == PROJECTED:
        keep = min(max(config.j, config.l), D)
    else:
        raise ValueError(f"unknown stabilizer {stab!r}")

    S = np.zeros((frame.n_local, frame.n_local))
    idx = np.arange(keep + 1)
    for loc, ef in enumerate(frame.edges):
        R = _discrepancy_map(frame, loc)[: keep + 1]
        w = ef.length / (2.0 * idx + 1.0)
        S += (R.T * w) @ R / frame.h_K
    return 0.5 * (S + S.T)


def _weighted_vector_mass(frame: ElementFrame, a) -> np.ndarray:
    """a-weighted mass of the vector basis [P_l]^2, block layout (x; y)."""
    dl = dim_pk(frame.config.l)
    fn, is_id, const = _as_matrix_coefficient(a)
    Ml = frame.mass_gradient_basis()
    M = np.zeros((2 * dl, 2 * dl))
    if is_id:
        M[:dl, :dl] = Ml
        M[dl:, dl:] = Ml
        return M
    if const is not None:
        for ci in range(2):
            for cj in range(2):
                M[ci * dl : (ci + 1) * dl, cj * dl : (cj + 1) * dl] = const[ci, cj] * Ml
        return M
    avals = _coefficient_values(fn, frame.vol_points_data)
    vals = frame.vals_l_data
    w = frame.vol_weights_data
    for ci in range(2):
        for cj in range(2):
            M[ci * dl : (ci + 1) * dl, cj * dl : (cj + 1) * dl] = vals.T @ (
                (w * avals[:, ci, cj])[:, None] * vals
            )
    return 0.5 * (M + M.T)


def build_element_operators(
    mesh: Mesh,
    config: WGConfig,
    t: int,
    a=None,
    frame: ElementFrame | None = None,
    log_condition: bool = False,
) -> ElementOperators:
    """All local operators of one element for the bilinear form."""
    frame = frame or ElementFrame(mesh, config, t)
    G = build_weak_gradient(frame)
    Ma = _weighted_vector_mass(frame, a)
    K = G.T @ Ma @ G
    S = build_stabilizer_local(frame)
    M0 = frame.mass_interior()
    if log_condition:
        log_mass_condition(M0, f"element {t} P_{config.k}")
    return ElementOperators(G=G, K_stiff=0.5 * (K + K.T), S_loc=S, M0=M0)
