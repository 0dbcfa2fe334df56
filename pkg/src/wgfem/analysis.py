"""Error norms, errors against the projected exact solution, and rates.

The tables report e^n = U_h^n - Q_h u(t_n) in the triple-bar norm
sqrt(A(e, e)) and in the L2 norm of the interior component e_0.  Observed
orders are log2 ratios of successive errors on a halving ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .assembly import SparseOperator, assemble_mass
from .mesh import Mesh
from .space import DofMap, ElementFrame, WGConfig, WeakField, build_stabilizer_local, project_field

__all__ = [
    "CONVERGED",
    "NI_UNSTABLE",
    "NI_INCONSISTENT",
    "ConvergenceRecord",
    "error_field",
    "triple_bar_norm",
    "h1_seminorm",
    "l2_norm",
    "observed_orders",
    "classify_status",
]

CONVERGED = "converged"
NI_UNSTABLE = "NI_unstable"
NI_INCONSISTENT = "NI_inconsistent"

# errors whose finest-pair ratio exceeds this do not count as decreasing
NON_DECREASE_RATIO = 0.9


@dataclass(frozen=True)
class ConvergenceRecord:
    """One ladder row: errors at final time for mesh 1/n and time step tau."""

    n: int
    tau: float
    triple_bar_error: float | None = None
    l2_error: float | None = None
    triple_bar_order: float | None = None
    l2_order: float | None = None
    status: str = CONVERGED
    detail: str = ""

    @property
    def h_label(self) -> str:
        return f"1/{self.n}"


def error_field(mesh: Mesh, config: WGConfig, U: WeakField, u_exact, t: float) -> WeakField:
    """e = U - Q_h u(., t), computed DOF-wise."""
    qh = project_field(mesh, config, lambda x, y: u_exact(x, y, t), U.dofmap)
    return U - qh


def triple_bar_norm(field: WeakField, stiffness: SparseOperator) -> float:
    """Energy norm sqrt(A(v, v)) induced by stiffness plus stabilizer."""
    q = stiffness.quadratic_form(field.coeffs)
    scale = float(field.coeffs @ field.coeffs) + 1.0
    if q < -1e-12 * scale:
        raise ArithmeticError(f"negative energy {q:.3e}; operator not PSD/symmetric")
    return math.sqrt(max(q, 0.0))


def h1_seminorm(field: WeakField) -> float:
    """Discrete H1 seminorm: elementwise gradient energy of v0 plus the
    h_K^{-1}-weighted raw boundary discrepancy."""
    mesh, config = field.mesh, field.config
    total = 0.0
    for t in range(mesh.num_triangles):
        frame = ElementFrame(mesh, config, t)
        local = field.local_coeffs(t)
        c0 = local[: config.dim_interior]
        total += c0 @ frame.gradient_gram() @ c0
        S = build_stabilizer_local(frame, stabilizer="plain")
        total += local @ S @ local
    return math.sqrt(total)


def l2_norm(field: WeakField, mass: SparseOperator | None = None) -> float:
    """L2 norm of the interior component via the assembled mass matrix."""
    if mass is None:
        mass = assemble_mass(field.mesh, field.config, field.dofmap)
    q = mass.quadratic_form(field.coeffs)
    return math.sqrt(max(q, 0.0))


def observed_orders(records: list[ConvergenceRecord]) -> list[ConvergenceRecord]:
    """Fill order columns: order_i = log2(e_{i-1} / e_i) on a halving ladder."""
    out = []
    for i, rec in enumerate(records):
        tri_order = l2_order = None
        if i > 0:
            prev = records[i - 1]
            if rec.n != 2 * prev.n:
                raise ValueError("ladder rows must halve h (double n) each step")
            tri_order = _order(prev.triple_bar_error, rec.triple_bar_error)
            l2_order = _order(prev.l2_error, rec.l2_error)
        out.append(replace(rec, triple_bar_order=tri_order, l2_order=l2_order))
    return out


def _order(prev: float | None, curr: float | None) -> float | None:
    if prev is None or curr is None or prev <= 0.0 or curr <= 0.0:
        return None
    return math.log2(prev / curr)


def classify_status(records: list[ConvergenceRecord]) -> str:
    """Table-level diagnosis.

    NI_unstable if any level failed to factorize; NI_inconsistent if all
    solves succeeded but the errors fail to decrease (ratio >= 0.9 in
    either norm) across the two finest solved levels.
    """
    if any(r.status == NI_UNSTABLE for r in records):
        return NI_UNSTABLE
    if any(r.status == NI_INCONSISTENT for r in records):
        return NI_INCONSISTENT
    solved = [r for r in records if r.triple_bar_error is not None and r.l2_error is not None]
    if len(solved) < 2:
        return CONVERGED
    prev, last = solved[-2], solved[-1]
    for e_prev, e_last in (
        (prev.triple_bar_error, last.triple_bar_error),
        (prev.l2_error, last.l2_error),
    ):
        if e_prev > 0.0 and e_last / e_prev >= NON_DECREASE_RATIO:
            return NI_INCONSISTENT
    return CONVERGED
