from math import factorial

import numpy as np
import pytest

from wgfem.mesh import Mesh, build_uniform_square_mesh
from wgfem.space import (
    DofMap,
    ElementFrame,
    WGConfig,
    build_element_operators,
    build_stabilizer_local,
    build_weak_gradient,
    project_edge,
    project_field,
    project_interior,
    project_vector,
)


def unit_right_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def poly_on(frame, coef, degree="k"):
    basis = frame.basis_k if degree == "k" else frame.basis_l

    def fn(x, y):
        pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        return basis.values(pts) @ coef

    return fn


def weak_poly_dofs(frame, fn):
    """Local coefficients of {Q_k^0 f, Q_j^b f} on one element."""
    parts = [project_interior(frame, fn)]
    for loc in range(3):
        parts.append(project_edge(frame, loc, fn, frame.config.j))
    return np.concatenate(parts)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            WGConfig(0, 1, 1)
        with pytest.raises(ValueError):
            WGConfig(1, -1, 0)
        with pytest.raises(ValueError):
            WGConfig(1, 1, 1, "bogus")

    def test_projection_degree(self):
        assert WGConfig(2, 1, 3).m == 3
        assert WGConfig(2, 3, 1).m == 3
        assert WGConfig(2, 3, 1, "plain").m is None


class TestDofMap:
    def test_counts_single_cell(self):
        # 2 triangles x dim P1 + 1 interior edge x 2 edge DOFs = 8
        mesh = build_uniform_square_mesh(1)
        dm = DofMap(mesh, WGConfig(1, 1, 0))
        assert dm.n_interior == 6
        assert dm.n_free_edge == 2
        assert dm.total_free == 8
        assert dm.n_edge == 5 * 2

    def test_partition(self):
        mesh = build_uniform_square_mesh(3)
        config = WGConfig(2, 1, 1)
        dm = DofMap(mesh, config)
        seen = np.zeros(dm.total_free, dtype=int)
        for t in range(mesh.num_triangles):
            idx = dm.element_dofs(t)
            seen[idx[idx >= 0][: config.dim_interior]] += 1
        # interior dofs owned exactly once
        assert np.all(seen[: dm.n_interior] == 1)
        # every free edge dof reachable from exactly two elements
        seen_e = np.zeros(dm.total_free, dtype=int)
        for t in range(mesh.num_triangles):
            idx = dm.element_dofs(t)
            edge_part = idx[config.dim_interior :]
            seen_e[edge_part[edge_part >= 0]] += 1
        assert np.all(seen_e[dm.n_interior :] == 2)


class TestProjections:
    def test_interior_reproduces_polynomials(self):
        mesh = build_uniform_square_mesh(2)
        config = WGConfig(3, 2, 2)
        frame = ElementFrame(mesh, config, 4)
        rng = np.random.default_rng(0)
        coef = rng.standard_normal(config.dim_interior)
        got = project_interior(frame, poly_on(frame, coef))
        assert np.abs(got - coef).max() < 1e-11

    def test_project_x_squared_onto_p1(self):
        # oracle: solve the 3x3 moment system with exact moments a!b!/(a+b+2)!
        mesh = unit_right_triangle()
        frame = ElementFrame(mesh, WGConfig(1, 0, 0), 0)

        def M(a, b):
            return factorial(a) * factorial(b) / factorial(a + b + 2)

        gram = np.array(
            [[M(0, 0), M(1, 0), M(0, 1)],
             [M(1, 0), M(2, 0), M(1, 1)],
             [M(0, 1), M(1, 1), M(0, 2)]]
        )
        rhs = np.array([M(2, 0), M(3, 0), M(2, 1)])
        mono_coef = np.linalg.solve(gram, rhs)  # in basis (1, x, y)

        got = project_interior(frame, lambda x, y: np.asarray(x) ** 2)
        pts = np.array([[0.1, 0.2], [0.4, 0.3], [0.25, 0.5], [0.6, 0.1]])
        vals = frame.basis_k.values(pts) @ got
        want = mono_coef[0] + mono_coef[1] * pts[:, 0] + mono_coef[2] * pts[:, 1]
        assert np.abs(vals - want).max() < 1e-12

    def test_projection_rate_for_smooth_field(self):
        # L2 projection error onto P2 contracts by about 2^3 per h-halving
        errs = []
        for n in (4, 8):
            mesh = build_uniform_square_mesh(n)
            config = WGConfig(2, 1, 1)
            total = 0.0
            for t in range(mesh.num_triangles):
                frame = ElementFrame(mesh, config, t)
                f = lambda x, y: np.sin(np.pi * np.asarray(x)) * np.sin(np.pi * np.asarray(y))
                c = project_interior(frame, f)
                pts, w = frame.vol_points_data, frame.vol_weights_data
                diff = frame.vals_k_data @ c - f(pts[:, 0], pts[:, 1])
                total += float(w @ diff**2)
            errs.append(np.sqrt(total))
        rate = np.log2(errs[0] / errs[1])
        assert rate == pytest.approx(3.0, abs=0.2)

    def test_edge_projection_examples(self):
        mesh = build_uniform_square_mesh(1)
        config = WGConfig(2, 3, 1)
        frame = ElementFrame(mesh, config, 0)
        # locate the local edge running along the bottom, param t = 2x - 1
        loc = [i for i, ef in enumerate(frame.edges)
               if set(mesh.edges[ef.edge]) == {0, 1}][0]

        c = project_edge(frame, loc, lambda x, y: 4.2 * np.ones_like(np.asarray(x)), 3)
        assert c == pytest.approx([4.2, 0, 0, 0], abs=1e-13)

        c = project_edge(frame, loc, lambda x, y: 2.0 * np.asarray(x) - 1.0, 0)
        assert c[0] == pytest.approx(0.0, abs=1e-14)

        c = project_edge(frame, loc, lambda x, y: (2.0 * np.asarray(x) - 1.0) ** 2, 1)
        assert c == pytest.approx([1 / 3, 0.0], abs=1e-13)

    def test_vector_projection_componentwise(self):
        mesh = build_uniform_square_mesh(2)
        config = WGConfig(2, 1, 2)
        frame = ElementFrame(mesh, config, 1)
        rng = np.random.default_rng(5)
        cx = rng.standard_normal(frame.basis_l.dim)
        cy = rng.standard_normal(frame.basis_l.dim)

        def g(x, y):
            pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
            vals = frame.basis_l.values(pts)
            return np.column_stack([vals @ cx, vals @ cy])

        got = project_vector(frame, g)
        assert np.abs(got[0] - cx).max() < 1e-11
        assert np.abs(got[1] - cy).max() < 1e-11


class TestWeakGradient:
    def test_constant_weak_function_has_zero_gradient(self):
        mesh = build_uniform_square_mesh(2)
        config = WGConfig(2, 1, 1)
        frame = ElementFrame(mesh, config, 3)
        G = build_weak_gradient(frame)
        const = np.zeros(frame.n_local)
        const[0] = 1.0
        for loc in range(3):
            const[config.dim_interior + loc * config.dim_edge] = 1.0
        assert np.abs(G @ const).max() < 1e-12

    def test_polynomial_exactness(self):
        # v0 = p in P_k, vb = trace(p), j >= k: grad_w v = Q_l(grad p)
        mesh = build_uniform_square_mesh(2)
        for (k, j, l) in [(1, 1, 0), (2, 2, 1), (2, 2, 3)]:
            config = WGConfig(k, j, l)
            frame = ElementFrame(mesh, config, 5)
            rng = np.random.default_rng(k + l)
            coef = rng.standard_normal(config.dim_interior)
            fn = poly_on(frame, coef)

            def grad_fn(x, y):
                pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
                return np.einsum("nqc,q->nc", frame.basis_k.eval(pts)[1], coef)

            dofs = weak_poly_dofs(frame, fn)
            got = build_weak_gradient(frame) @ dofs
            want = project_vector(frame, grad_fn).ravel()
            assert np.abs(got - want).max() < 1e-11

    def test_commutes_with_projection(self):
        # grad_w(Q_h v) = Q_l(grad v) when l <= k+1 and j >= l; the only
        # defect is the quadrature error of the non-polynomial data
        mesh = build_uniform_square_mesh(16)
        pi = np.pi
        v = lambda x, y: np.sin(pi * np.asarray(x)) * np.sin(pi * np.asarray(y))
        gv = lambda x, y: pi * np.column_stack(
            [np.cos(pi * np.asarray(x)) * np.sin(pi * np.asarray(y)),
             np.sin(pi * np.asarray(x)) * np.cos(pi * np.asarray(y))]
        )
        for (k, j, l) in [(1, 2, 2), (2, 2, 2), (2, 3, 3)]:
            config = WGConfig(k, j, l)
            frame = ElementFrame(mesh, config, 100)
            dofs = weak_poly_dofs(frame, v)
            got = build_weak_gradient(frame) @ dofs
            want = project_vector(frame, gv).ravel()
            assert np.abs(got - want).max() < 1e-10

    def test_route_equivalence(self):
        mesh = build_uniform_square_mesh(3)
        for cfg in [WGConfig(1, 0, 0), WGConfig(2, 1, 1), WGConfig(4, 3, 4)]:
            frame = ElementFrame(mesh, cfg, 7)
            G1 = build_weak_gradient(frame, route="divergence")
            G2 = build_weak_gradient(frame, route="gradient")
            assert np.abs(G1 - G2).max() < 1e-11 * max(1.0, np.abs(G1).max())


class TestStabilizer:
    def test_zero_on_matching_traces(self):
        mesh = build_uniform_square_mesh(2)
        config = WGConfig(2, 2, 1)
        frame = ElementFrame(mesh, config, 2)
        rng = np.random.default_rng(9)
        dofs = weak_poly_dofs(frame, poly_on(frame, rng.standard_normal(config.dim_interior)))
        for stab in ("projected", "plain"):
            S = build_stabilizer_local(frame, stab)
            assert abs(dofs @ S @ dofs) < 1e-12

    def test_projected_equals_plain_when_projection_resolves(self):
        mesh = build_uniform_square_mesh(2)
        frame = ElementFrame(mesh, WGConfig(2, 2, 2), 3)
        d = np.abs(build_stabilizer_local(frame, "projected")
                   - build_stabilizer_local(frame, "plain")).max()
        assert d < 1e-12

    def test_projection_truncation_is_psd_deficit(self):
        mesh = build_uniform_square_mesh(2)
        frame = ElementFrame(mesh, WGConfig(2, 1, 1), 3)
        diff = build_stabilizer_local(frame, "plain") - build_stabilizer_local(frame, "projected")
        eigs = np.linalg.eigvalsh(diff)
        assert eigs.min() > -1e-12
        # one truncated Legendre mode per edge
        assert (eigs > 1e-12 * eigs.max()).sum() == 3


class TestElementOperators:
    def test_symmetry_and_definiteness(self):
        mesh = build_uniform_square_mesh(2)
        ops = build_element_operators(mesh, WGConfig(2, 1, 1), 4)
        assert np.abs(ops.K_stiff - ops.K_stiff.T).max() < 1e-12
        assert np.abs(ops.S_loc - ops.S_loc.T).max() < 1e-12
        assert np.linalg.eigvalsh(ops.S_loc).min() > -1e-12
        assert np.linalg.eigvalsh(ops.M0).min() > 0

    def test_constant_in_local_kernel(self):
        mesh = build_uniform_square_mesh(2)
        config = WGConfig(2, 1, 1)
        ops = build_element_operators(mesh, config, 0)
        const = np.zeros(config.dim_interior + 3 * config.dim_edge)
        const[0] = 1.0
        for loc in range(3):
            const[config.dim_interior + loc * config.dim_edge] = 1.0
        assert abs(const @ (ops.K_stiff + ops.S_loc) @ const) < 1e-13

    def test_coefficient_scaling(self):
        mesh = build_uniform_square_mesh(2)
        config = WGConfig(2, 1, 1)
        ops1 = build_element_operators(mesh, config, 1)
        ops2 = build_element_operators(mesh, config, 1, a=2.0)
        assert np.abs(ops2.K_stiff - 2.0 * ops1.K_stiff).max() < 1e-12
        assert np.abs(ops2.S_loc - ops1.S_loc).max() == 0.0

    def test_non_spd_coefficient_rejected(self):
        mesh = build_uniform_square_mesh(1)
        with pytest.raises(ValueError):
            build_element_operators(mesh, WGConfig(1, 1, 0), 0, a=np.array([[1.0, 0], [0, -1.0]]))

    def test_local_coercivity_lowest_order(self):
        # smallest generalized eigenvalue of A_loc vs the discrete-H1 Gram
        # on the zero-mean subspace of one element is positive
        mesh = build_uniform_square_mesh(1)
        config = WGConfig(1, 1, 0)
        frame = ElementFrame(mesh, config, 0)
        ops = build_element_operators(mesh, config, 0)
        A = ops.K_stiff + ops.S_loc
        gram = build_stabilizer_local(frame, "plain")
        gram[: config.dim_interior, : config.dim_interior] += frame.gradient_gram()
        # zero-mean complement: remove the constant weak function
        from scipy.linalg import eigh, null_space

        const = np.zeros(frame.n_local)
        const[0] = 1.0
        for loc in range(3):
            const[config.dim_interior + loc * config.dim_edge] = 1.0
        B = null_space(const[None, :])
        lam = eigh(B.T @ A @ B, B.T @ gram @ B, eigvals_only=True)[0]
        assert lam > 0.05


def test_project_field_boundary_edges_are_zero():
    mesh = build_uniform_square_mesh(2)
    config = WGConfig(2, 1, 1)
    field = project_field(mesh, config, lambda x, y: np.ones_like(np.asarray(x, dtype=float)))
    for e in np.nonzero(mesh.boundary_edge)[0]:
        assert np.all(field.edge_coeffs(e) == 0.0)
    # interior constants reproduce 1 exactly
    for t in range(mesh.num_triangles):
        c = field.interior_coeffs(t)
        assert c[0] == pytest.approx(1.0, abs=1e-12)
        assert np.abs(c[1:]).max() < 1e-12
