"""Polynomial bases on triangles and edges, and quadrature exact to order.

Triangle rules are conical-product Gauss-Jacobi rules on the reference
triangle (0,0), (1,0), (0,1): positive weights, strictly interior points,
available at any requested exactness degree.  Edge rules are plain
Gauss-Legendre on [-1, 1].

Triangle bases are scaled centered monomials ((x-xc)/h_K)^a ((y-yc)/h_K)^b
in graded lexicographic order; the scaling keeps local mass matrices well
conditioned under refinement.  Edge bases are Legendre polynomials in the
normalized arc parameter, which makes edge mass matrices diagonal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander
from scipy.special import roots_jacobi

__all__ = [
    "QuadratureRule",
    "triangle_rule",
    "gauss_rule",
    "TriBasis",
    "EdgeBasis",
    "dim_pk",
]

log = logging.getLogger(__name__)

MAX_TRIANGLE_EXACTNESS = 20
MAX_GAUSS_POINTS = 12


def dim_pk(d: int) -> int:
    """Dimension of the polynomial space of total degree <= d in 2D."""
    return (d + 1) * (d + 2) // 2


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights; ``points`` is (n, 2) on triangles, (n,) on edges."""

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)


_triangle_cache: dict[int, QuadratureRule] = {}
_gauss_cache: dict[int, QuadratureRule] = {}


def triangle_rule(exactness: int) -> QuadratureRule:
    """Rule on the reference triangle exact for all of P_exactness.

    Conical product construction: Gauss-Jacobi (weight 1-x) in x crossed
    with Gauss-Legendre in the collapsed coordinate.  Weights sum to the
    reference area 1/2; for exactness 1 this degenerates to the one-point
    centroid rule.
    """
    if not 0 <= exactness <= MAX_TRIANGLE_EXACTNESS:
        raise ValueError(
            f"triangle exactness must be in [0, {MAX_TRIANGLE_EXACTNESS}], got {exactness}"
        )
    key = max(exactness, 1)
    rule = _triangle_cache.get(key)
    if rule is not None:
        return rule

    m = (key + 2) // 2
    xi, wx = roots_jacobi(m, 1.0, 0.0)
    t, wt = leggauss(m)
    x = 0.5 * (1.0 + xi)
    s = 0.5 * (1.0 + t)
    wx = wx / 4.0
    wt = wt / 2.0

    X = np.repeat(x, m)
    S = np.tile(s, m)
    Y = (1.0 - X) * S
    W = np.repeat(wx, m) * np.tile(wt, m)
    rule = QuadratureRule(np.column_stack([X, Y]), W, key)
    _triangle_cache[key] = rule
    return rule


def gauss_rule(points: int) -> QuadratureRule:
    """Gauss-Legendre rule on [-1, 1], exact to degree 2*points - 1."""
    if not 1 <= points <= MAX_GAUSS_POINTS:
        raise ValueError(f"gauss point count must be in [1, {MAX_GAUSS_POINTS}], got {points}")
    rule = _gauss_cache.get(points)
    if rule is None:
        t, w = leggauss(points)
        rule = QuadratureRule(t, w, 2 * points - 1)
        _gauss_cache[points] = rule
    return rule


@dataclass(frozen=True)
class TriBasis:
    """Scaled centered monomials of total degree <= degree on one element."""

    degree: int
    center: np.ndarray
    scale: float
    exponents: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        exps = [(i - j, j) for i in range(self.degree + 1) for j in range(i + 1)]
        object.__setattr__(self, "exponents", np.array(exps, dtype=np.int64))

    @property
    def dim(self) -> int:
        return dim_pk(self.degree)

    def eval(self, points):
        """Values and gradients at ``points`` (n, 2).

        Returns (values (n, dim), gradients (n, dim, 2)); gradients carry
        the 1/scale chain-rule factor.  Polynomials are global, so points
        outside the element are fine.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        u = (pts[:, 0] - self.center[0]) / self.scale
        v = (pts[:, 1] - self.center[1]) / self.scale
        d = self.degree
        n = pts.shape[0]

        # power tables, pow[:, p] = coordinate**p
        upow = np.ones((n, d + 1))
        vpow = np.ones((n, d + 1))
        for p in range(1, d + 1):
            upow[:, p] = upow[:, p - 1] * u
            vpow[:, p] = vpow[:, p - 1] * v

        a = self.exponents[:, 0]
        b = self.exponents[:, 1]
        values = upow[:, a] * vpow[:, b]

        grads = np.zeros((n, self.dim, 2))
        nz = a > 0
        grads[:, nz, 0] = a[nz] * upow[:, a[nz] - 1] * vpow[:, b[nz]] / self.scale
        nz = b > 0
        grads[:, nz, 1] = b[nz] * upow[:, a[nz]] * vpow[:, b[nz] - 1] / self.scale
        return values, grads

    def values(self, points):
        return self.eval(points)[0]


@dataclass(frozen=True)
class EdgeBasis:
    """Legendre polynomials L_0..L_degree in the arc parameter t in [-1, 1]."""

    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    def values(self, t):
        return legvander(np.asarray(t, dtype=float), self.degree)

    def mass_diagonal(self, length: float):
        """Edge mass matrix diagonal: |e| / (2 i + 1)."""
        return length / (2.0 * np.arange(self.degree + 1) + 1.0)


def log_mass_condition(matrix: np.ndarray, what: str) -> float:
    """Condition number of a local mass matrix, logged at debug level."""
    cond = float(np.linalg.cond(matrix))
    log.debug("%s mass matrix condition number: %.3e", what, cond)
    return cond
