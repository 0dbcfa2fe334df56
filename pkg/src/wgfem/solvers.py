"""Elliptic (Ritz) solves and the fully discrete backward-Euler march.

The parabolic step solves (M/tau + A) U^n = (M/tau) U^{n-1} + F^n with the
source sampled at the new time level; the step matrix is factorized once
per march.  Edge DOFs carry no mass, so each step also enforces the
stationary constraint rows of the bilinear form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import SparseOperator, assemble_load, assemble_mass, assemble_stiffness
from .linalg import factorize
from .mesh import Mesh
from .space import DofMap, WGConfig, WeakField, project_field

__all__ = [
    "TimeGrid",
    "ParabolicProblem",
    "InstabilityDetected",
    "ritz_projection",
    "initial_field",
    "backward_euler_march",
    "PROBLEMS",
    "get_problem",
]

RITZ = "ritz"
PROJECTION = "projection"


class InstabilityDetected(Exception):
    """The march blew up; flags an inconsistent configuration."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T] with M steps; t_0 = 0 and t_M = T exactly."""

    T: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if self.T <= 0.0:
            raise ValueError("final time must be positive")

    @property
    def tau(self) -> float:
        return self.T / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)

    @classmethod
    def from_tau(cls, T: float, tau: float) -> "TimeGrid":
        """Grid with step closest to tau such that T/tau is an integer."""
        return cls(T, max(1, round(T / tau)))


@dataclass
class ParabolicProblem:
    """Data of u_t - div(a grad u) = f with u = 0 on the boundary.

    ``f`` is f(x, y, t) vectorized over points.  ``exact`` and
    ``exact_grad`` enable error measurement; ``f_psi`` = -div(a grad psi)
    enables the Ritz initial field.  When the source separates as
    f(x, y, t) = f_time(t) * f_space(x, y), the march assembles the spatial
    load once and rescales it each step.
    """

    name: str
    f: Callable
    psi: Callable
    a: object = None
    exact: Callable | None = None
    exact_t: Callable | None = None
    exact_grad: Callable | None = None
    f_psi: Callable | None = None
    f_time: Callable | None = None
    f_space: Callable | None = None


def _paper_problem() -> ParabolicProblem:
    pi = np.pi

    def space(x, y):
        return np.sin(pi * np.asarray(x)) * np.sin(pi * np.asarray(y))

    return ParabolicProblem(
        name="paper_sec5",
        a=None,
        f=lambda x, y, t: (2.0 * pi**2 - 1.0) * np.exp(-t) * space(x, y),
        f_time=lambda t: (2.0 * pi**2 - 1.0) * np.exp(-t),
        f_space=space,
        psi=space,
        f_psi=lambda x, y: 2.0 * pi**2 * space(x, y),
        exact=lambda x, y, t: np.exp(-t) * space(x, y),
        exact_t=lambda x, y, t: -np.exp(-t) * space(x, y),
        exact_grad=lambda x, y, t: np.exp(-t)
        * pi
        * np.column_stack(
            [
                np.cos(pi * np.asarray(x)) * np.sin(pi * np.asarray(y)),
                np.sin(pi * np.asarray(x)) * np.cos(pi * np.asarray(y)),
            ]
        ),
    )


def _poly_steady_problem() -> ParabolicProblem:
    def u(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return x * (1.0 - x) * y * (1.0 - y)

    def f(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return 2.0 * (y * (1.0 - y) + x * (1.0 - x))

    def grad(x, y, t=0.0):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.column_stack(
            [(1.0 - 2.0 * x) * y * (1.0 - y), x * (1.0 - x) * (1.0 - 2.0 * y)]
        )

    return ParabolicProblem(
        name="poly_steady",
        a=None,
        f=lambda x, y, t: f(x, y),
        f_time=lambda t: 1.0,
        f_space=f,
        psi=u,
        f_psi=f,
        exact=lambda x, y, t: u(x, y),
        exact_t=lambda x, y, t: np.zeros_like(np.asarray(x, dtype=float)),
        exact_grad=grad,
    )


PROBLEMS = {
    "paper_sec5": _paper_problem,
    "poly_steady": _poly_steady_problem,
}


def get_problem(name: str) -> ParabolicProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {sorted(PROBLEMS)}") from None


def ritz_projection(
    mesh: Mesh,
    config: WGConfig,
    a,
    f_v,
    dofmap: DofMap | None = None,
    stiffness: SparseOperator | None = None,
    factorization=None,
) -> WeakField:
    """Elliptic projection: the weak solution of A(R_h v, w) = (f_v, w0).

    ``f_v`` is the analytic source -div(a grad v) as a callable (x, y).
    Raises NotPositiveDefinite for non-coercive configurations.
    """
    dofmap = dofmap or DofMap(mesh, config)
    if stiffness is None:
        stiffness = assemble_stiffness(mesh, config, a=a, dofmap=dofmap)
    load = assemble_load(mesh, config, lambda x, y, t: f_v(x, y), 0.0, dofmap=dofmap)
    fact = factorization or factorize(stiffness)
    return WeakField(mesh, config, dofmap, fact.solve(load.values))


def initial_field(
    mesh: Mesh,
    config: WGConfig,
    problem: ParabolicProblem,
    mode: str = RITZ,
    dofmap: DofMap | None = None,
    stiffness: SparseOperator | None = None,
    factorization=None,
) -> WeakField:
    """Initial datum: the Ritz projection of psi, or its plain projection Q_h psi."""
    dofmap = dofmap or DofMap(mesh, config)
    if mode == PROJECTION:
        return project_field(mesh, config, problem.psi, dofmap)
    if mode == RITZ:
        if problem.f_psi is None:
            raise ValueError("Ritz initialization needs f_psi = -div(a grad psi)")
        return ritz_projection(
            mesh,
            config,
            problem.a,
            problem.f_psi,
            dofmap=dofmap,
            stiffness=stiffness,
            factorization=factorization,
        )
    raise ValueError(f"unknown initial mode {mode!r}")


@dataclass
class MarchResult:
    """Trajectory of the march: (time, field) at the requested checkpoints."""

    checkpoints: list
    grid: TimeGrid
    stiffness: SparseOperator
    mass: SparseOperator
    dofmap: DofMap

    @property
    def final(self) -> WeakField:
        return self.checkpoints[-1][1]


def backward_euler_march(
    mesh: Mesh,
    config: WGConfig,
    problem: ParabolicProblem,
    grid: TimeGrid,
    initial: str = RITZ,
    checkpoints=None,
    observer: Callable | None = None,
    stiffness: SparseOperator | None = None,
    mass: SparseOperator | None = None,
    dofmap: DofMap | None = None,
) -> MarchResult:
    """Fully implicit march of (d_tau U^n, v0) + A(U^n, v) = (f^n, v0).

    ``checkpoints`` lists times whose fields should be stored (the final
    time is always included); ``observer(n, t, coeffs)`` is called after
    every accepted step.  The factorization of the constant step matrix is
    computed once and reused for all steps.
    """
    dofmap = dofmap or DofMap(mesh, config)
    if stiffness is None:
        stiffness = assemble_stiffness(mesh, config, a=problem.a, dofmap=dofmap)
    if mass is None:
        mass = assemble_mass(mesh, config, dofmap=dofmap)

    fact_a = factorize(stiffness) if initial == RITZ else None
    u = initial_field(
        mesh, config, problem, mode=initial, dofmap=dofmap,
        stiffness=stiffness, factorization=fact_a,
    ).coeffs

    tau = grid.tau
    step_matrix = mass.matrix / tau + stiffness.matrix
    fact = factorize(SparseOperator(step_matrix.tocsr(), symmetric=True),
                     repeated=grid.steps > 8)

    separable = problem.f_time is not None and problem.f_space is not None
    if separable:
        b_space = assemble_load(
            mesh, config, lambda x, y, t: problem.f_space(x, y), 0.0, dofmap=dofmap
        ).values

    nodes = grid.nodes
    wanted = {}
    for t_req in checkpoints or []:
        idx = int(round(t_req / tau))
        if not 0 <= idx <= grid.steps or abs(nodes[idx] - t_req) > 1e-9 * max(1.0, grid.T):
            raise ValueError(f"checkpoint {t_req} is not a grid node")
        wanted[idx] = nodes[idx]
    wanted[grid.steps] = grid.T

    guard = 1e6 * np.linalg.norm(u) + 1e6
    out = []
    if 0 in wanted:
        out.append((0.0, WeakField(mesh, config, dofmap, u.copy())))

    mass_csr = mass.matrix
    for n in range(1, grid.steps + 1):
        t_n = nodes[n]
        if separable:
            rhs = mass_csr @ (u / tau) + problem.f_time(t_n) * b_space
        else:
            rhs = mass_csr @ (u / tau) + assemble_load(
                mesh, config, problem.f, t_n, dofmap=dofmap
            ).values
        u = fact.solve(rhs)
        if not np.isfinite(u).all() or np.linalg.norm(u) > guard:
            raise InstabilityDetected(f"norm blow-up at step {n} (t = {t_n:g})")
        if observer is not None:
            observer(n, t_n, u)
        if n in wanted:
            out.append((wanted[n], WeakField(mesh, config, dofmap, u.copy())))

    return MarchResult(
        checkpoints=out, grid=grid, stiffness=stiffness, mass=mass, dofmap=dofmap
    )
