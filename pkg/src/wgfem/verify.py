"""Property suite: invariants checkable without any golden data.

Each property exercises one structural guarantee of the discretization
(quadrature exactness, projection identities, weak-gradient exactness,
symmetry/coercivity, stabilizer equivalence, dissipativity of the march).
The CLI ``verify`` subcommand and the acceptance tests both run this suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import factorial

import numpy as np

from .analysis import l2_norm, triple_bar_norm
from .assembly import assemble_h1_gram, assemble_load, assemble_mass, assemble_stiffness
from .basis import gauss_rule, triangle_rule
from .linalg import cg_solve, factorize
from .mesh import build_uniform_square_mesh
from .solvers import ParabolicProblem, TimeGrid, backward_euler_march, get_problem, ritz_projection
from .space import (
    DofMap,
    ElementFrame,
    WGConfig,
    WeakField,
    build_stabilizer_local,
    build_weak_gradient,
    project_edge,
    project_field,
    project_interior,
    project_vector,
)

__all__ = ["PropertyResult", "run_property_suite", "PROPERTIES"]


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str = ""


def _tri_moment(a: int, b: int) -> float:
    """Exact reference-triangle moment of x^a y^b."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def check_quadrature_exactness() -> PropertyResult:
    worst = 0.0
    for deg in range(0, 21):
        rule = triangle_rule(deg)
        if rule.weights.min() <= 0.0:
            return PropertyResult("quadrature exactness", False, f"nonpositive weight at degree {deg}")
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                got = float(rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b))
                worst = max(worst, abs(got - _tri_moment(a, b)))
    for npts in range(1, 13):
        rule = gauss_rule(npts)
        for d in range(rule.exactness_degree + 1):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            worst = max(worst, abs(float(rule.weights @ rule.points**d) - exact))
    return PropertyResult("quadrature exactness", worst <= 1e-12, f"max moment error {worst:.2e}")


def check_projection_idempotence() -> PropertyResult:
    mesh = build_uniform_square_mesh(3)
    config = WGConfig(3, 2, 2)
    frame = ElementFrame(mesh, config, 7)
    rng = np.random.default_rng(7)
    coef = rng.standard_normal(config.dim_interior)

    def poly(x, y):
        pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        return frame.basis_k.values(pts) @ coef

    worst = np.abs(project_interior(frame, poly) - coef).max()
    c1 = project_edge(frame, 1, poly, config.j)
    c2 = project_edge(frame, 1, lambda x, y: _edge_poly(frame, 1, c1, x, y), config.j)
    worst = max(worst, np.abs(c1 - c2).max())
    g = project_vector(frame, lambda x, y: np.column_stack([poly(x, y), -2.0 * poly(x, y)]))
    g2 = project_vector(frame, _vec_poly_fn(frame, g))
    worst = max(worst, np.abs(g - g2).max())
    return PropertyResult("projection idempotence", worst <= 1e-10, f"max defect {worst:.2e}")


def _edge_poly(frame, loc, coeffs, x, y):
    a, b = frame.mesh.edges[frame.edges[loc].edge]
    pa, pb = frame.mesh.vertices[a], frame.mesh.vertices[b]
    pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
    half = 0.5 * (pb - pa)
    t = (pts - 0.5 * (pa + pb)) @ half / (half @ half)
    from numpy.polynomial.legendre import legvander

    return legvander(t, len(coeffs) - 1) @ coeffs


def _vec_poly_fn(frame, coeffs):
    def fn(x, y):
        pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        vals = frame.basis_l.values(pts)
        return np.column_stack([vals @ coeffs[0], vals @ coeffs[1]])

    return fn


def check_weak_gradient_exactness() -> PropertyResult:
    """For v0 in P_k with vb = trace(v0), l >= k-1 and j >= k, the weak
    gradient reproduces grad v0 exactly; constants are in the kernel."""
    mesh = build_uniform_square_mesh(2)
    worst = 0.0
    for (k, j, l) in [(1, 1, 0), (2, 2, 1), (3, 3, 2)]:
        config = WGConfig(k, j, l)
        frame = ElementFrame(mesh, config, 3)
        G = build_weak_gradient(frame)
        rng = np.random.default_rng(k)
        coef = rng.standard_normal(config.dim_interior)

        def poly(x, y):
            pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
            return frame.basis_k.values(pts) @ coef

        def grad_poly(x, y):
            pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
            return np.einsum("nqc,q->nc", frame.basis_k.eval(pts)[1], coef)

        local = [project_interior(frame, poly)]
        for loc in range(3):
            local.append(project_edge(frame, loc, poly, config.j))
        local = np.concatenate(local)
        expected = project_vector(frame, grad_poly).ravel()
        worst = max(worst, np.abs(G @ local - expected).max())

        const = np.zeros(frame.n_local)
        const[0] = 1.0
        for loc in range(3):
            const[config.dim_interior + loc * config.dim_edge] = 1.0
        worst = max(worst, np.abs(G @ const).max())

        G2 = build_weak_gradient(frame, route="gradient")
        worst = max(worst, np.abs(G - G2).max())
    return PropertyResult("weak-gradient exactness", worst <= 1e-11, f"max defect {worst:.2e}")


def smallest_generalized_eigenvalue(A, G, iters: int = 400, tol: float = 1e-9) -> float:
    """lambda_min of A v = lambda G v for SPD A, G, by inverse power
    iteration on A^{-1} G (deterministic, one back-solve per step)."""
    fact = factorize(A)
    Gm = G.matrix
    rng = np.random.default_rng(1234)
    x = rng.standard_normal(Gm.shape[0])
    lam_prev = np.inf
    for _ in range(iters):
        y = fact.solve(Gm @ x)
        x = y / math.sqrt(max(float(y @ (Gm @ y)), 1e-300))
        lam = float(x @ (A.matrix @ x)) / float(x @ (Gm @ x))
        if abs(lam - lam_prev) <= tol * abs(lam):
            break
        lam_prev = lam
    return lam


def check_symmetry_and_coercivity() -> PropertyResult:
    msgs = []
    ok = True
    for (k, j, l) in [(1, 1, 0), (2, 1, 1), (2, 2, 2), (3, 2, 2)]:
        config = WGConfig(k, j, l)
        lam_by_h = []
        for n in (4, 8, 16):
            mesh = build_uniform_square_mesh(n)
            A = assemble_stiffness(mesh, config)
            defect = A.symmetry_defect()
            if defect > 1e-12:
                ok = False
                msgs.append(f"({k},{j},{l}) n={n}: symmetry defect {defect:.2e}")
            gram = assemble_h1_gram(mesh, config)
            lam = smallest_generalized_eigenvalue(A, gram)
            lam_by_h.append(float(lam))
            if lam <= 0:
                ok = False
                msgs.append(f"({k},{j},{l}) n={n}: lambda_min {lam:.2e} <= 0")
        spread = max(lam_by_h) / min(lam_by_h)
        if spread > 2.0:
            ok = False
            msgs.append(f"({k},{j},{l}): coercivity constant varies x{spread:.2f} across h")
    return PropertyResult(
        "symmetry and coercivity", ok,
        "; ".join(msgs) if msgs else "lambda_min > 0, stable across h, symmetric to 1e-12",
    )


def check_stabilizer_equivalence() -> PropertyResult:
    """Projected == plain whenever max(j, l) >= max(k, j); plain - projected
    is PSD when the projection truncates."""
    mesh = build_uniform_square_mesh(2)
    worst = 0.0
    for (k, j, l) in [(2, 2, 2), (1, 1, 4), (2, 3, 1)]:
        frame = ElementFrame(mesh, WGConfig(k, j, l), 1)
        d = np.abs(
            build_stabilizer_local(frame, "projected") - build_stabilizer_local(frame, "plain")
        ).max()
        worst = max(worst, d)
    if worst > 1e-12:
        return PropertyResult("stabilizer equivalence", False, f"max difference {worst:.2e}")
    frame = ElementFrame(mesh, WGConfig(2, 1, 1), 1)
    diff = build_stabilizer_local(frame, "plain") - build_stabilizer_local(frame, "projected")
    eigs = np.linalg.eigvalsh(diff)
    psd = eigs.min() >= -1e-12
    rank = int((eigs > 1e-12 * max(eigs.max(), 1.0)).sum())
    return PropertyResult(
        "stabilizer equivalence", psd and rank >= 3,
        f"identity holds to {worst:.2e}; plain-projected PSD with rank {rank}",
    )


def check_energy_decay() -> PropertyResult:
    """With f = 0 both the interior L2 norm and the energy norm of the
    backward-Euler iterates are non-increasing, for any stable config and
    any step size."""

    def psi(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x * (1.0 - x) * y * (1.0 - y)

    problem = ParabolicProblem(
        name="decay", f=lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float)),
        f_time=lambda t: 0.0, f_space=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        psi=psi,
    )
    mesh = build_uniform_square_mesh(8)
    ok = True
    msgs = []
    for (k, j, l) in [(1, 1, 0), (2, 1, 1), (2, 2, 2)]:
        config = WGConfig(k, j, l)
        A = assemble_stiffness(mesh, config)
        M = assemble_mass(mesh, config)
        for tau in (1e-1, 1e-2, 1e-3):
            trace = []

            def observer(n, t, u):
                trace.append((math.sqrt(max(u @ (M.matrix @ u), 0.0)),
                              math.sqrt(max(u @ (A.matrix @ u), 0.0))))

            backward_euler_march(
                mesh, config, problem, TimeGrid.from_tau(0.05, tau),
                initial="projection", observer=observer, stiffness=A, mass=M,
            )
            l2s = np.array([x[0] for x in trace])
            ens = np.array([x[1] for x in trace])
            if np.any(np.diff(l2s) > 1e-12) or np.any(np.diff(ens) > 1e-12):
                ok = False
                msgs.append(f"({k},{j},{l}) tau={tau:g}: increase detected")
    return PropertyResult("backward-Euler energy decay", ok,
                          "; ".join(msgs) if msgs else "L2 and energy norms non-increasing")


def check_steady_state_preservation() -> PropertyResult:
    """A time-independent source with U0 = R_h v keeps U^n = R_h v up to
    accumulated solver tolerance 1e-8 per step."""
    mesh = build_uniform_square_mesh(8)
    config = WGConfig(2, 1, 1)
    problem = get_problem("poly_steady")
    steps = 200
    grid = TimeGrid(1.0, steps)
    result = backward_euler_march(mesh, config, problem, grid, initial="ritz")
    A = result.stiffness
    u0 = ritz_projection(mesh, config, problem.a, problem.f_psi, dofmap=result.dofmap,
                         stiffness=A)
    drift = np.linalg.norm(result.final.coeffs - u0.coeffs) / np.linalg.norm(u0.coeffs)
    bound = 1e-8 * steps
    return PropertyResult("steady-state preservation", drift <= bound,
                          f"relative drift {drift:.2e} over {steps} steps (bound {bound:.1e})")


def check_temporal_order() -> PropertyResult:
    """First order in time: errors against a tau-refined reference at fixed
    h converge at rate 1.0 +- 0.2."""
    mesh = build_uniform_square_mesh(16)
    config = WGConfig(2, 2, 2)
    problem = get_problem("paper_sec5")
    dofmap = DofMap(mesh, config)
    A = assemble_stiffness(mesh, config, dofmap=dofmap)
    M = assemble_mass(mesh, config, dofmap=dofmap)

    def final_coeffs(steps):
        res = backward_euler_march(mesh, config, problem, TimeGrid(1.0, steps),
                                   stiffness=A, mass=M, dofmap=dofmap)
        return res.final

    ref = final_coeffs(640)
    errs = [l2_norm(final_coeffs(s) - ref, M) for s in (10, 20, 40)]
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ok = all(abs(r - 1.0) <= 0.2 for r in rates)
    return PropertyResult("temporal order", ok,
                          "rates " + ", ".join(f"{r:.3f}" for r in rates))


def check_l2_norm_consistency() -> PropertyResult:
    """Mass-matrix L2 norm equals direct quadrature of the interior square."""
    mesh = build_uniform_square_mesh(4)
    config = WGConfig(2, 1, 1)
    dofmap = DofMap(mesh, config)
    rng = np.random.default_rng(11)
    field = WeakField(mesh, config, dofmap, rng.standard_normal(dofmap.total_free))
    direct = 0.0
    for t in range(mesh.num_triangles):
        frame = ElementFrame(mesh, config, t)
        vals = frame.vals_k @ field.interior_coeffs(t)
        direct += float(frame.vol_weights @ vals**2)
    via_mass = l2_norm(field, assemble_mass(mesh, config, dofmap=dofmap))
    diff = abs(math.sqrt(direct) - via_mass)
    return PropertyResult("l2 norm consistency", diff <= 1e-12, f"difference {diff:.2e}")


def check_error_equation_identity() -> PropertyResult:
    """Elliptic error-equation identity at h = 1/4 for one configuration."""
    from .assembly import assemble_consistency_forms

    mesh = build_uniform_square_mesh(4)
    config = WGConfig(2, 1, 1)
    pi = np.pi
    v = lambda x, y: np.sin(pi * np.asarray(x)) * np.sin(pi * np.asarray(y))
    grad_v = lambda x, y: pi * np.column_stack(
        [np.cos(pi * np.asarray(x)) * np.sin(pi * np.asarray(y)),
         np.sin(pi * np.asarray(x)) * np.cos(pi * np.asarray(y))]
    )
    f_v = lambda x, y: 2.0 * pi**2 * v(x, y)

    dofmap = DofMap(mesh, config)
    A = assemble_stiffness(mesh, config, dofmap=dofmap)
    rh = ritz_projection(mesh, config, None, f_v, dofmap=dofmap, stiffness=A)
    qh = project_field(mesh, config, v, dofmap)
    lhs = A.matrix @ (qh.coeffs - rh.coeffs)
    l1, l2_, l3, s = assemble_consistency_forms(mesh, config, None, v, grad_v, dofmap)
    rhs = l1 + l2_ + l3 + s
    rel = np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)
    return PropertyResult("error-equation identity", rel <= 1e-8, f"relative residual {rel:.2e}")


def check_solver_agreement() -> PropertyResult:
    """Cholesky and conjugate gradients agree on random SPD systems."""
    rng = np.random.default_rng(3)
    worst = 0.0
    for trial in range(10):
        n = int(rng.integers(20, 500))
        B = rng.standard_normal((n, n)) / math.sqrt(n)
        A = B.T @ B + np.eye(n)
        b = rng.standard_normal(n)
        x1 = factorize(A).solve(b)
        x2 = cg_solve(A, b, tol=1e-14)
        worst = max(worst, np.linalg.norm(x1 - x2) / np.linalg.norm(x1))
    return PropertyResult("direct/iterative agreement", worst <= 1e-8, f"max relative gap {worst:.2e}")


def check_load_pairing() -> PropertyResult:
    """Load vectors test only the interior component; edge entries are zero."""
    mesh = build_uniform_square_mesh(4)
    config = WGConfig(2, 1, 1)
    dofmap = DofMap(mesh, config)
    load = assemble_load(mesh, config, lambda x, y, t: np.exp(x + y), 0.5, dofmap=dofmap)
    edge_part = load.values[dofmap.n_interior :]
    interior_ok = np.abs(load.values[: dofmap.n_interior]).max() > 0
    return PropertyResult(
        "load pairs against v0 only",
        interior_ok and (edge_part.size == 0 or np.abs(edge_part).max() == 0.0),
        f"max edge entry {np.abs(edge_part).max() if edge_part.size else 0.0:.1e}",
    )


PROPERTIES = [
    check_quadrature_exactness,
    check_projection_idempotence,
    check_weak_gradient_exactness,
    check_symmetry_and_coercivity,
    check_stabilizer_equivalence,
    check_energy_decay,
    check_steady_state_preservation,
    check_temporal_order,
    check_l2_norm_consistency,
    check_error_equation_identity,
    check_solver_agreement,
    check_load_pairing,
]


def run_property_suite(verbose: bool = False) -> list[PropertyResult]:
    results = []
    for prop in PROPERTIES:
        res = prop()
        results.append(res)
        if verbose:
            print(f"[{'PASS' if res.passed else 'FAIL'}] {res.name}: {res.detail}")
    return results
