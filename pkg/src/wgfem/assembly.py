"""Global sparse operators: stiffness, interior mass, loads, consistency forms.

Assembly is an element-parallel map followed by a deterministic merge; all
loops here are sequential per element, which keeps runs bit-reproducible.
Assembled operators are immutable CSR matrices behind a thin wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .space import (
    DofMap,
    ElementFrame,
    WGConfig,
    WeakField,
    build_element_operators,
    build_stabilizer_local,
    build_weak_gradient,
    coefficient_at,
    project_edge,
    project_interior,
    project_vector,
)

__all__ = [
    "SparseOperator",
    "LoadVector",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_load",
    "assemble_h1_gram",
    "assemble_consistency_forms",
]


@dataclass
class SparseOperator:
    """CSR matrix over the free DOFs with a symmetry tag."""

    matrix: sp.csr_matrix
    symmetric: bool = False

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    def __matmul__(self, x):
        return self.matrix @ x

    def quadratic_form(self, x: np.ndarray, y: np.ndarray | None = None) -> float:
        y = x if y is None else y
        return float(x @ (self.matrix @ y))

    def symmetry_defect(self) -> float:
        d = self.matrix - self.matrix.T
        scale = np.abs(self.matrix.data).max() if self.matrix.nnz else 1.0
        return float(np.abs(d.data).max() / scale) if d.nnz else 0.0


@dataclass
class LoadVector:
    values: np.ndarray
    time_stamp: float = 0.0


class _Accumulator:
    """COO triplet collector restricted to free DOFs."""

    def __init__(self, dofmap: DofMap):
        self.dofmap = dofmap
        self.rows = []
        self.cols = []
        self.vals = []

    def add(self, t: int, local: np.ndarray):
        idx = self.dofmap.element_dofs(t)
        free = idx >= 0
        gi = idx[free]
        block = local[np.ix_(free, free)]
        r, c = np.meshgrid(gi, gi, indexing="ij")
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(block.ravel())

    def tocsr(self) -> sp.csr_matrix:
        n = self.dofmap.total_free
        if not self.rows:
            return sp.csr_matrix((n, n))
        mat = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(n, n),
        )
        return mat.tocsr()


def assemble_stiffness(
    mesh: Mesh,
    config: WGConfig,
    a=None,
    dofmap: DofMap | None = None,
    split: bool = False,
):
    """Global bilinear form: sum over elements of (a grad_w ., grad_w .) + stabilizer.

    With ``split=True`` returns (full, gradient_part, stabilizer_part), each
    a SparseOperator; the parts sum to the full operator.
    """
    dofmap = dofmap or DofMap(mesh, config)
    acc = _Accumulator(dofmap)
    acc_grad = _Accumulator(dofmap) if split else None
    acc_stab = _Accumulator(dofmap) if split else None
    for t in range(mesh.num_triangles):
        ops = build_element_operators(mesh, config, t, a=a)
        acc.add(t, ops.K_stiff + ops.S_loc)
        if split:
            acc_grad.add(t, ops.K_stiff)
            acc_stab.add(t, ops.S_loc)
    A = SparseOperator(acc.tocsr(), symmetric=True)
    if split:
        return (
            A,
            SparseOperator(acc_grad.tocsr(), symmetric=True),
            SparseOperator(acc_stab.tocsr(), symmetric=True),
        )
    return A


def assemble_mass(mesh: Mesh, config: WGConfig, dofmap: DofMap | None = None) -> SparseOperator:
    """Interior-component L2 pairing; block diagonal, zero on edge DOFs."""
    dofmap = dofmap or DofMap(mesh, config)
    dk = config.dim_interior
    rows, cols, vals = [], [], []
    for t in range(mesh.num_triangles):
        frame = ElementFrame(mesh, config, t)
        M0 = frame.mass_interior()
        gi = dofmap.interior_offset[t] + np.arange(dk)
        r, c = np.meshgrid(gi, gi, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(M0.ravel())
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dofmap.total_free, dofmap.total_free),
    ).tocsr()
    return SparseOperator(mat, symmetric=True)


def assemble_load(
    mesh: Mesh, config: WGConfig, f, t: float = 0.0, dofmap: DofMap | None = None
) -> LoadVector:
    """Right-hand side (f(., t), v0); entries at edge DOFs stay zero."""
    dofmap = dofmap or DofMap(mesh, config)
    values = np.zeros(dofmap.total_free)
    dk = config.dim_interior
    for tri in range(mesh.num_triangles):
        frame = ElementFrame(mesh, config, tri)
        pts = frame.vol_points_data
        fv = np.asarray(f(pts[:, 0], pts[:, 1], t), dtype=float)
        off = dofmap.interior_offset[tri]
        values[off : off + dk] = frame.vals_k_data.T @ (frame.vol_weights_data * fv)
    return LoadVector(values=values, time_stamp=t)


def assemble_h1_gram(mesh: Mesh, config: WGConfig, dofmap: DofMap | None = None) -> SparseOperator:
    """Gram matrix of the discrete H1 seminorm.

    Elementwise gradient energy of v0 plus the h_K^{-1}-weighted raw
    boundary discrepancy (the plain stabilizer form).
    """
    dofmap = dofmap or DofMap(mesh, config)
    dk = config.dim_interior
    acc = _Accumulator(dofmap)
    for t in range(mesh.num_triangles):
        frame = ElementFrame(mesh, config, t)
        local = build_stabilizer_local(frame, stabilizer="plain")
        local[:dk, :dk] += frame.gradient_gram()
        acc.add(t, local)
    return SparseOperator(acc.tocsr(), symmetric=True)


def _polynomial_vector_field(frame: ElementFrame, coeffs):
    """Callable (x, y) -> (n, 2) for coefficients of the [P_l]^2 basis."""
    dl = coeffs.shape[1] if coeffs.ndim == 2 else coeffs.shape[0] // 2

    def fn(x, y):
        pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        vals = frame.basis_l.values(pts)
        return np.column_stack([vals @ coeffs[0], vals @ coeffs[1]])

    return fn


def _project_a_weighted(frame: ElementFrame, a, vec_coeffs):
    """Coefficients of Q_l(a * w) for w given by [P_l]^2 coefficients (2, dl)."""
    if a is None:
        return vec_coeffs
    w_fn = _polynomial_vector_field(frame, vec_coeffs)

    def aw(x, y):
        pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        avals = coefficient_at(a, pts)
        wv = w_fn(x, y)
        return np.einsum("nij,nj->ni", avals, wv)

    return project_vector(frame, aw, frame.config.l)


def assemble_consistency_forms(mesh: Mesh, config: WGConfig, a, v, grad_v, dofmap=None):
    """Consistency functionals of the elliptic error equation, as vectors.

    Returns (l1, l2, l3, s) over the free DOFs, where for a smooth field v

      l1(w) = sum_K (Ql(a Ql grad Qk0 v) - a grad v, grad w0)_K
      l2(w) = sum_K <(Ql(a Ql grad Qk0 v) - a grad v) . n, wb - w0>_bK
      l3(w) = sum_K <Qjb v - Qk0 v, Ql(a grad_w w) . n>_bK
      s(w)  = stabilizer(Q_h v, w)

    Used only in verification of the elliptic error-equation identity.
    """
    dofmap = dofmap or DofMap(mesh, config)
    dk = config.dim_interior
    dj = config.dim_edge
    D = config.trace_degree

    l1 = np.zeros(dofmap.total_free)
    l2 = np.zeros(dofmap.total_free)
    l3 = np.zeros(dofmap.total_free)

    for t in range(mesh.num_triangles):
        frame = ElementFrame(mesh, config, t)
        idx = dofmap.element_dofs(t)
        q0 = project_interior(frame, v)

        def grad_q0(x, y, q0=q0, frame=frame):
            pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
            _, grads = frame.basis_k.eval(pts)
            return np.einsum("nqc,q->nc", grads, q0)

        inner = project_vector(frame, grad_q0, config.l)
        dv_coeffs = _project_a_weighted(frame, a, inner)
        dv_fn = _polynomial_vector_field(frame, dv_coeffs)

        def F(x, y):
            pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
            avals = coefficient_at(a, pts)
            gv = np.asarray(grad_v(x, y), dtype=float)
            return dv_fn(x, y) - np.einsum("nij,nj->ni", avals, gv)

        # l1: (F, grad w0) over interior DOFs, data-margin volume rule
        pts = frame.vol_points_data
        Fv = F(pts[:, 0], pts[:, 1])
        grads_k = frame.basis_k.eval(pts)[1]
        contrib = np.einsum("nc,n,nqc->q", Fv, frame.vol_weights_data, grads_k)
        sel = idx[:dk]
        l1[sel] += contrib

        # l3 preparation: weak gradients of all local test DOFs
        G = build_weak_gradient(frame)
        dl = G.shape[0] // 2
        if a is None:
            TQ = G
        else:
            TQ = np.empty_like(G)
            for q in range(G.shape[1]):
                TQ[:, q] = _project_a_weighted(
                    frame, a, G[:, q].reshape(2, dl)
                ).ravel()

        for loc, ef in enumerate(frame.edges):
            w_data = 0.5 * ef.length * ef.w_ref_data
            pts_e = ef.points_data
            Fn = F(pts_e[:, 0], pts_e[:, 1]) @ ef.normal

            # l2: edge-DOF part +<F.n, wb>, interior part -<F.n, w0>
            vals_k_e = frame.basis_k.values(pts_e)
            leg = ef.leg_vals_data[:, :dj]
            e_idx = idx[dk + loc * dj : dk + (loc + 1) * dj]
            if e_idx[0] >= 0:
                l2[e_idx] += leg.T @ (w_data * Fn)
            l2[sel] -= vals_k_e.T @ (w_data * Fn)

            # l3: g = Qjb v - trace(Qk0 v) in Legendre coefficients up to D
            g_coeffs = -frame.trace_k[loc] @ q0
            g_coeffs[: dj] += project_edge(frame, loc, v, config.j)
            w_std = 0.5 * ef.length * ef.w_ref
            g_vals = ef.leg_vals[:, : D + 1] @ g_coeffs
            vals_l_e = frame.basis_l.values(ef.points)
            tq_n = (vals_l_e @ TQ[:dl]) * ef.normal[0] + (vals_l_e @ TQ[dl:]) * ef.normal[1]
            contrib = tq_n.T @ (w_std * g_vals)
            free = idx >= 0
            l3[idx[free]] += contrib[free]

    # stabilizer functional S(Q_h v, .); Q_h v keeps its true projected
    # values on boundary edges (v need not vanish there), while the test
    # functions live in the homogeneous space
    s = np.zeros(dofmap.total_free)
    for t in range(mesh.num_triangles):
        frame = ElementFrame(mesh, config, t)
        S_loc = build_stabilizer_local(frame)
        idx = dofmap.element_dofs(t)
        free = idx >= 0
        local_qv = [project_interior(frame, v)]
        for loc in range(3):
            local_qv.append(project_edge(frame, loc, v, config.j))
        contrib = S_loc @ np.concatenate(local_qv)
        s[idx[free]] += contrib[free]

    return l1, l2, l3, s
