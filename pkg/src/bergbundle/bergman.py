"""Truncated Bergman spaces: monomial Gram families, kernel, projections.

The frame is the raw monomial family ``z^alpha`` with ``|alpha| <= N`` in
graded-lexicographic order; all geometry sits in the Gram matrix ``M(t)``
and its parameter derivatives (the frame itself is never orthonormalized,
since that would entangle the holomorphic frame with ``t``).

Storage convention for sesquilinear data: ``M[beta, alpha] = (e_alpha,
e_beta)_t``, i.e. rows index the conjugated argument, so a form acts as
``(u, v)_t = v^H M u`` on coefficient vectors and projections solve
``M c = v`` directly.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backend import pair_integrals
from .numerics import (
    ConditioningError,
    NotPositiveDefiniteError,
    QuadGrid,
    equilibrated_cond,
    solve_hpd,
)
from .weights import WeightModel


class GramError(RuntimeError):
    """Gram assembly failed (non-PD metric from truncation or underflow)."""


@dataclass(frozen=True)
class Basis:
    """Monomial frame of total degree <= ``degree`` in ``n`` fiber variables."""

    n: int
    degree: int
    alphas: tuple

    @classmethod
    def total_degree(cls, n: int, degree: int) -> "Basis":
        if n < 1 or degree < 0:
            raise ValueError("need n >= 1 and degree >= 0")
        alphas = []
        for d in range(degree + 1):
            level = sorted(
                a for a in itertools.product(range(d + 1), repeat=n) if sum(a) == d
            )
            alphas.extend(level)
        return cls(n=n, degree=degree, alphas=tuple(alphas))

    @property
    def dim(self) -> int:
        return len(self.alphas)

    def frame_values(self, nodes: np.ndarray) -> np.ndarray:
        """Frame evaluated on nodes: ``V[i, k] = nodes[k]^alphas[i]``."""
        nodes = np.asarray(nodes, dtype=np.complex128)
        if nodes.ndim != 2 or nodes.shape[1] != self.n:
            raise ValueError(f"nodes must be (K, {self.n})")
        pows = [
            np.stack([nodes[:, c] ** p for p in range(self.degree + 1)])
            for c in range(self.n)
        ]
        V = np.empty((self.dim, nodes.shape[0]), dtype=np.complex128)
        for i, alpha in enumerate(self.alphas):
            row = pows[0][alpha[0]]
            for c in range(1, self.n):
                row = row * pows[c][alpha[c]]
            V[i] = row
        return V

    def frame_at(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.complex128).reshape(1, self.n)
        return self.frame_values(z)[:, 0]


@dataclass(frozen=True)
class GramFamily:
    """Gram matrix of the monomial frame at ``t`` plus its t-derivatives.

    ``M_t[j] = dM/dt_j`` and ``M_tt[j, k] = d^2 M / dt_j d conj(t_k)``,
    assembled from analytic weight partials (never finite differences).
    """

    weight_name: str
    t: np.ndarray
    basis: Basis
    M: np.ndarray
    M_t: Optional[np.ndarray]
    M_tt: Optional[np.ndarray]
    cond: float

    def __post_init__(self):
        for field in (self.t, self.M, self.M_t, self.M_tt):
            if field is not None:
                field.setflags(write=False)

    @property
    def m(self) -> int:
        return int(self.t.shape[0])

    @property
    def dim(self) -> int:
        return self.basis.dim


def density(weight: WeightModel, grid: QuadGrid, t) -> np.ndarray:
    """Quadrature density ``w_k * exp(-phi(t, z_k))`` on the grid nodes."""
    t = np.asarray(t, dtype=np.complex128).reshape(weight.m)
    phi = np.asarray(weight.phi(t, grid.nodes), dtype=np.float64)
    return grid.weights * np.exp(-phi)


def gram(weight: WeightModel, basis: Basis, grid: QuadGrid, t,
         derivatives: bool = True, cond_limit: float = 1e12) -> GramFamily:
    """Assemble the Gram family of the monomial frame at base point ``t``.

    Entry integrands: ``M``: ``e_a conj(e_b) e^-phi``; ``M_t[j]`` adds the
    factor ``-phi_j``; ``M_tt[j,k]`` the factor ``phi_j conj(phi_k) -
    phi_jk``.  Monomial frames are exponentially ill-conditioned, so the
    assembly aborts when the condition estimate of ``M`` passes
    ``cond_limit``.
    """
    if grid.n != weight.n or grid.n != basis.n:
        raise ValueError("weight, basis and grid fiber dimensions disagree")
    t = np.asarray(t, dtype=np.complex128).reshape(weight.m)
    rho = density(weight, grid, t)
    V = basis.frame_values(grid.nodes)
    M = pair_integrals(V, V, rho.astype(np.complex128))
    try:
        solve_hpd(M, np.eye(basis.dim, dtype=np.complex128)[:, :1])
    except NotPositiveDefiniteError as exc:
        raise GramError(
            "Gram matrix lost positive definiteness; increase quad_order "
            "or reduce the basis degree"
        ) from exc
    # equilibrated estimate: frame grading is a congruence, not a hazard
    cond = equilibrated_cond(M)
    if cond > cond_limit:
        raise ConditioningError(
            f"Gram condition estimate {cond:.3e} exceeds {cond_limit:.1e}; "
            "reduce the basis degree N"
        )
    M_t = M_tt = None
    if derivatives:
        pt = np.asarray(weight.phi_t(t, grid.nodes), dtype=np.complex128)
        ptt = np.asarray(weight.phi_tt(t, grid.nodes), dtype=np.complex128)
        m = weight.m
        d = basis.dim
        M_t = np.empty((m, d, d), dtype=np.complex128)
        M_tt = np.empty((m, m, d, d), dtype=np.complex128)
        for j in range(m):
            M_t[j] = pair_integrals(V, V, -pt[:, j] * rho)
        for j in range(m):
            for k in range(m):
                fac = pt[:, j] * np.conj(pt[:, k]) - ptt[:, j, k]
                M_tt[j, k] = pair_integrals(V, V, fac * rho)
    return GramFamily(
        weight_name=weight.name, t=t, basis=basis,
        M=M, M_t=M_t, M_tt=M_tt, cond=cond,
    )


def kernel_diag(gf: GramFamily, z) -> float:
    """Diagonal Bergman kernel ``K_t(z, z)`` of the truncated space.

    Equals ``row(z) M^-1 row(z)^H`` for the frame row at ``z``, i.e. the
    squared norm of point evaluation: monotone nondecreasing in the
    truncation degree for a fixed weight.
    """
    e = gf.basis.frame_at(z)
    y = solve_hpd(gf.M, np.conj(e))
    return float(np.dot(e, y).real)


def kernel_pair(gf: GramFamily, z, w) -> complex:
    """Off-diagonal kernel ``K_t(z, w) = row(z) M^-1 row(w)^H``."""
    ez = gf.basis.frame_at(z)
    ew = gf.basis.frame_at(w)
    return complex(np.dot(ez, solve_hpd(gf.M, np.conj(ew))))


def _node_values(values, grid: QuadGrid) -> np.ndarray:
    values = values(grid.nodes) if callable(values) else np.asarray(values)
    values = np.ascontiguousarray(values, dtype=np.complex128)
    if values.shape != (grid.node_count,):
        raise ValueError("values must be given on the grid nodes")
    return values


def frame_moments(gf: GramFamily, grid: QuadGrid, weight: WeightModel, values) -> np.ndarray:
    """Moment vector ``v[gamma] = (a, e_gamma)_t`` of node values ``a``."""
    rho = density(weight, grid, gf.t)
    V = gf.basis.frame_values(grid.nodes)
    a = _node_values(values, grid)
    return pair_integrals(a[None, :], V, rho.astype(np.complex128))[:, 0]


def project(gf: GramFamily, grid: QuadGrid, weight: WeightModel, values) -> np.ndarray:
    """Coefficients of the metric-orthogonal projection onto the frame span."""
    v = frame_moments(gf, grid, weight, values)
    return solve_hpd(gf.M, v)


def complement_pairing(gf: GramFamily, grid: QuadGrid, weight: WeightModel,
                       a_values, b_values) -> complex:
    """Pairing of complement projections, ``(pi_perp a, pi_perp b)_t``.

    Computed as ``(a, b) - v_b^H M^-1 v_a`` without forming the complement;
    Hermitian in (a, b) and nonnegative on the diagonal.  For fixed data it
    is nonincreasing in the truncation degree (a larger space projects more
    away).
    """
    rho = density(weight, grid, gf.t).astype(np.complex128)
    V = gf.basis.frame_values(grid.nodes)
    a = _node_values(a_values, grid)
    b = _node_values(b_values, grid)
    inner_ab = pair_integrals(a[None, :], b[None, :], rho)[0, 0]
    v_a = pair_integrals(a[None, :], V, rho)[:, 0]
    v_b = pair_integrals(b[None, :], V, rho)[:, 0]
    return complex(inner_ab - np.vdot(v_b, solve_hpd(gf.M, v_a)))


def fock_gram_oracle(basis: Basis) -> np.ndarray:
    """Closed-form Gram of the monomial frame against ``exp(-|z|^2)`` (n=1).

    Radial moments give ``(z^a, z^b) = pi * a! * delta_ab``.
    """
    if basis.n != 1:
        raise ValueError("oracle is one-dimensional")
    diag = [np.pi * math.factorial(a[0]) for a in basis.alphas]
    return np.diag(np.array(diag, dtype=np.complex128))
