"""Chern curvature of the Bergman bundle, assembled by two independent routes.

Conventions are fixed by contracts rather than by a matrix layout:

* Chern compatibility: ``d/dt_j (u, v) = (D_j u, v)`` for frame-constant
  ``v``, which forces the connection matrix ``A_j = M^-1 M_j``.
* Curvature acts on frame-constant sections as the commutator
  ``[D_j, dbar_k]``, giving the operator ``Theta_jk = M^-1 M_k^H M^-1 M_j
  - M^-1 M_jk`` and the sesquilinear blocks ``H_jk = M Theta_jk``.

The second route never differentiates the Gram matrix: it uses the ambient
multiplication bundle, whose curvature is multiplication by the mixed
Hessian of the weight, minus the second fundamental form realized through
complement pairings.  In exact arithmetic the two routes agree at every
truncation degree (both compute the curvature of the same finite-rank
subbundle); their deviation is a pure conditioning/quadrature diagnostic.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .backend import pair_integrals, weighted_sum
from .bergman import Basis, GramFamily, complement_pairing, density, gram
from .numerics import (
    QuadGrid,
    metric_whitener,
    min_eigenvalue,
    solve_hpd,
    symmetrize,
)
from .weights import DegenerateHessianError, WeightModel


@dataclass(frozen=True)
class CurvatureAssembly:
    """m x m array of sesquilinear curvature blocks over a frame.

    ``blocks[j, k]`` realizes ``(Theta_jk u, v)_t = v^H blocks[j,k] u`` on
    coefficient vectors; ``blocks[k, j]`` is the conjugate transpose block.
    """

    gram: GramFamily
    blocks: np.ndarray  # (m, m, d, d)
    route: str

    def __post_init__(self):
        self.blocks.setflags(write=False)

    @property
    def m(self) -> int:
        return int(self.blocks.shape[0])

    @property
    def dim(self) -> int:
        return int(self.blocks.shape[2])

    @property
    def M(self) -> np.ndarray:
        return self.gram.M

    def nakano_form(self, u_tuple) -> float:
        """Quadratic Nakano sum ``sum_jk (Theta_jk u_j, u_k)`` (real)."""
        u = np.asarray(u_tuple, dtype=np.complex128).reshape(self.m, self.dim)
        total = 0.0 + 0.0j
        for j in range(self.m):
            for k in range(self.m):
                total += np.vdot(u[k], self.blocks[j, k] @ u[j])
        return float(total.real)


@dataclass(frozen=True)
class PositivityReport:
    nakano_delta: float
    griffiths_delta: float
    hermiticity_residual: float
    basis_degree: int
    quad_order: tuple

    def __post_init__(self):
        if self.nakano_delta > self.griffiths_delta + 1e-10:
            raise ValueError(
                "inconsistent report: nakano_delta must not exceed griffiths_delta"
            )


def curvature_direct(gf: GramFamily) -> CurvatureAssembly:
    """Curvature blocks from the Gram family's analytic t-derivatives.

    ``H_jk = M_k^H M^-1 M_j - M_jk``; congruence-covariant under constant
    frame rescalings.
    """
    if gf.M_t is None or gf.M_tt is None:
        raise ValueError("GramFamily was assembled without derivatives")
    m, d = gf.m, gf.dim
    blocks = np.empty((m, m, d, d), dtype=np.complex128)
    solved = [solve_hpd(gf.M, gf.M_t[j]) for j in range(m)]
    for j in range(m):
        for k in range(m):
            blocks[j, k] = gf.M_t[k].conj().T @ solved[j] - gf.M_tt[j, k]
    return CurvatureAssembly(gram=gf, blocks=blocks, route="direct")


def curvature_subbundle(weight: WeightModel, basis: Basis, grid: QuadGrid, t) -> CurvatureAssembly:
    """Curvature blocks via the ambient bundle minus the second fundamental form.

    Block entries: ``H_jk(e_a, e_b) = int phi_jk e_a conj(e_b) e^-phi -
    (pi_perp(phi_j e_a), pi_perp(phi_k e_b))``, the complement pairing being
    the second fundamental form of the truncated space inside the ambient
    multiplication bundle.
    """
    gf = gram(weight, basis, grid, t, derivatives=False)
    t = gf.t
    rho = density(weight, grid, t).astype(np.complex128)
    V = basis.frame_values(grid.nodes)
    pt = np.asarray(weight.phi_t(t, grid.nodes), dtype=np.complex128)
    ptt = np.asarray(weight.phi_tt(t, grid.nodes), dtype=np.complex128)
    m, d = weight.m, basis.dim
    mult = [V * pt[:, j][None, :] for j in range(m)]
    moments = [pair_integrals(mult[j], V, rho) for j in range(m)]   # (d, d): (phi_j e_a, e_g)
    solved = [solve_hpd(gf.M, moments[j]) for j in range(m)]
    blocks = np.empty((m, m, d, d), dtype=np.complex128)
    for j in range(m):
        for k in range(m):
            ambient = pair_integrals(V, V, ptt[:, j, k] * rho)
            sff = pair_integrals(mult[j], mult[k], rho)
            correction = moments[k].conj().T @ solved[j]
            blocks[j, k] = ambient - sff + correction
    return CurvatureAssembly(gram=gf, blocks=blocks, route="subbundle")


def hermiticity_residual(ca: CurvatureAssembly) -> float:
    """Max relative defect of the block symmetry ``H_kj = H_jk^H``."""
    scale = max(float(np.max(np.abs(ca.M))), 1e-300)
    worst = 0.0
    for j in range(ca.m):
        for k in range(ca.m):
            worst = max(
                worst,
                float(np.max(np.abs(ca.blocks[j, k].conj().T - ca.blocks[k, j]))),
            )
    return worst / scale


def route_deviation(ca_a: CurvatureAssembly, ca_b: CurvatureAssembly) -> float:
    """Max blockwise deviation between two assemblies, relative to ``max|M|``."""
    scale = max(float(np.max(np.abs(ca_a.M))), 1e-300)
    worst = 0.0
    for j in range(ca_a.m):
        for k in range(ca_a.m):
            worst = max(
                worst, float(np.max(np.abs(ca_a.blocks[j, k] - ca_b.blocks[j, k])))
            )
    return worst / scale


def _whitened_blocks(ca: CurvatureAssembly) -> np.ndarray:
    """Metric-whitened blocks ``W_jk = L^-1 H_jk L^-H`` with ``M = L L^H``."""
    whiten = metric_whitener(ca.M)
    white = np.empty_like(ca.blocks)
    for j in range(ca.m):
        for k in range(ca.m):
            white[j, k] = whiten(ca.blocks[j, k])
    return white


def nakano_delta(ca: CurvatureAssembly) -> float:
    """Largest ``delta`` with ``sum (Theta_jk u_j, u_k) >= delta sum ||u_j||^2``.

    The minimum eigenvalue of the stacked whitened block matrix; the
    stacking index order follows the conjugated argument on rows.
    """
    white = _whitened_blocks(ca)
    m, d = ca.m, ca.dim
    stacked = np.empty((m * d, m * d), dtype=np.complex128)
    for j in range(m):
        for k in range(m):
            stacked[k * d:(k + 1) * d, j * d:(j + 1) * d] = white[j, k]
    return min_eigenvalue(stacked)


def _direction(theta: float, psi: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta) * np.exp(1j * psi)])


def griffiths_delta(ca: CurvatureAssembly, scan=(65, 129), polish: bool = True) -> float:
    """Worst metric-normalized eigenvalue over unit base directions.

    ``min over |v|=1`` of the smallest eigenvalue of ``sum v_j conj(v_k)
    Theta_jk`` in the bundle metric.  For m = 1 this is by definition the
    Nakano bound and the same code path is used.  For m = 2 a deterministic
    direction scan (including the coordinate and diagonal directions
    exactly) is refined by a bounded local polish.
    """
    if ca.m == 1:
        return nakano_delta(ca)
    if ca.m != 2:
        raise NotImplementedError("direction scan implemented for m <= 2")
    white = _whitened_blocks(ca)

    def value(angles) -> float:
        v = _direction(angles[0], angles[1])
        form = sum(
            v[j] * np.conj(v[k]) * white[j, k] for j in range(2) for k in range(2)
        )
        return min_eigenvalue(form)

    thetas = np.linspace(0.0, np.pi / 2.0, scan[0])
    psis = np.linspace(0.0, 2.0 * np.pi, scan[1])
    best_val, best_angles = np.inf, (0.0, 0.0)
    for th in thetas:
        for ps in psis:
            val = value((th, ps))
            if val < best_val:
                best_val, best_angles = val, (th, ps)
    if polish:
        result = minimize(
            value, np.array(best_angles), method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 200},
        )
        if result.fun < best_val:
            best_val = float(result.fun)
    return float(best_val)


def positivity_report(ca: CurvatureAssembly, quad_order=()) -> PositivityReport:
    nd = nakano_delta(ca)
    gd = griffiths_delta(ca)
    return PositivityReport(
        nakano_delta=nd,
        griffiths_delta=gd,
        hermiticity_residual=hermiticity_residual(ca),
        basis_degree=ca.gram.basis.degree,
        quad_order=tuple(quad_order),
    )


# ---------------------------------------------------------------------------
# dual bundle
# ---------------------------------------------------------------------------

def dual_assembly(ca: CurvatureAssembly) -> CurvatureAssembly:
    """Curvature assembly of the dual bundle in the dual frame.

    Dual metric: ``M* = conj(M)^-1``; dual curvature operators are the
    negative transposes of the primal ones, so ``H*_jk = -M* Theta_jk^T``.
    """
    m, d = ca.m, ca.dim
    identity = np.eye(d, dtype=np.complex128)
    M_inv = solve_hpd(ca.M, identity)
    M_star = np.conj(M_inv)
    blocks = np.empty_like(ca.blocks)
    for j in range(m):
        for k in range(m):
            theta = M_inv @ ca.blocks[j, k]
            blocks[j, k] = -M_star @ theta.T
    dual_gram = GramFamily(
        weight_name=ca.gram.weight_name + "*", t=ca.gram.t, basis=ca.gram.basis,
        M=symmetrize(M_star), M_t=None, M_tt=None, cond=ca.gram.cond,
    )
    return CurvatureAssembly(gram=dual_gram, blocks=blocks, route=ca.route + "*")


@dataclass(frozen=True)
class DualityReport:
    residuals: np.ndarray
    max_residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_residual <= self.tolerance)


def dual_curvature_check(ca: CurvatureAssembly, xi_tuples, tolerance: float = 1e-10) -> DualityReport:
    """Verify the pairing identity between dual and primal curvature sums.

    For dual tuples ``xi`` and the metric-conjugated sections ``u_j = M^-1
    conj(xi_j)``, the dual Nakano sum equals minus the primal sum with the
    tuple order swapped.  This is exact linear algebra, independent of
    quadrature, so the tolerance is near machine precision.
    """
    m, d = ca.m, ca.dim
    identity = np.eye(d, dtype=np.complex128)
    M_inv = solve_hpd(ca.M, identity)
    M_star = np.conj(M_inv)
    residuals = []
    for xi in xi_tuples:
        xi = np.asarray(xi, dtype=np.complex128).reshape(m, d)
        u = np.array([M_inv @ np.conj(xi[j]) for j in range(m)])
        lhs = 0.0 + 0.0j
        rhs = 0.0 + 0.0j
        for j in range(m):
            for k in range(m):
                theta_t = (M_inv @ ca.blocks[j, k]).T
                dual_vec = -theta_t @ xi[j]
                lhs += np.vdot(xi[k], M_star @ dual_vec)
                rhs -= np.vdot(u[j], ca.blocks[j, k] @ u[k])
        scale = max(abs(lhs), abs(rhs), 1e-300)
        residuals.append(abs(lhs - rhs) / scale)
    residuals = np.array(residuals)
    return DualityReport(
        residuals=residuals,
        max_residual=float(residuals.max()) if residuals.size else 0.0,
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# estimate checks
# ---------------------------------------------------------------------------

def _tuple_node_values(basis: Basis, V: np.ndarray, u_tuple, m: int) -> np.ndarray:
    u = np.asarray(u_tuple, dtype=np.complex128).reshape(m, basis.dim)
    return V.T @ u.T  # (K, m)


@dataclass(frozen=True)
class BoundReport:
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray           # (rhs - lhs)/scale or (lhs - rhs)/scale, >= -tol
    tolerance: float
    violations: tuple

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def max_equality_gap(self) -> float:
        return float(np.max(np.abs(self.slack))) if self.slack.size else 0.0


def _fiber_block_solve(pzz: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Batched solve of the fiber Hessian blocks against per-node targets."""
    try:
        return np.linalg.solve(pzz, target)
    except np.linalg.LinAlgError as exc:
        raise DegenerateHessianError("degenerate fiber Hessian on the grid") from exc


def hormander_check(weight: WeightModel, basis: Basis, grid: QuadGrid, t,
                    u_tuples, tolerance: float = 1e-8) -> BoundReport:
    """Minimal-solution energy against the weighted Hessian-inverse bound.

    lhs: complement pairing of ``sum_j phi_j u_j`` with itself (the squared
    norm of the minimal solution of the associated dbar problem).  rhs: the
    weighted integral of the Hessian-inverse energy of the data.  Requires
    the fiber Hessian block positive definite on the grid.
    """
    t = np.asarray(t, dtype=np.complex128).reshape(weight.m)
    gf = gram(weight, basis, grid, t, derivatives=False)
    rho = density(weight, grid, t)
    V = basis.frame_values(grid.nodes)
    pt = np.asarray(weight.phi_t(t, grid.nodes), dtype=np.complex128)
    ptz = np.asarray(weight.phi_tz(t, grid.nodes), dtype=np.complex128)
    pzz = np.asarray(weight.phi_zz(t, grid.nodes), dtype=np.complex128)
    if np.min(np.linalg.eigvalsh(pzz).min(axis=-1)) <= 0:
        raise DegenerateHessianError(
            "fiber Hessian must be positive definite on the grid"
        )
    lhs_list, rhs_list, slack, violations = [], [], [], []
    for idx, u_tuple in enumerate(u_tuples):
        u = np.asarray(u_tuple, dtype=np.complex128).reshape(weight.m, basis.dim)
        U = _tuple_node_values(basis, V, u_tuple, weight.m)      # (K, m)
        data = np.einsum("km,kmn->kn", U, ptz)                   # (K, n)
        a = np.einsum("km,km->k", U, pt)                         # sum_j phi_j u_j
        lhs = complement_pairing(gf, grid, weight, a, a).real
        solved = _fiber_block_solve(pzz, np.conj(data)[..., None])[..., 0]
        energy = np.einsum("kn,kn->k", data, solved)
        rhs = weighted_sum(energy, rho).real
        # normalize by the tuple's metric norm too, so roundoff around an
        # exact zero never registers as a violation
        norm = sum(np.vdot(u[j], gf.M @ u[j]).real for j in range(weight.m))
        scale = max(abs(lhs), abs(rhs), norm, 1e-300)
        gap = (rhs - lhs) / scale
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        slack.append(gap)
        if gap < -tolerance:
            violations.append(idx)
    return BoundReport(
        lhs=np.array(lhs_list), rhs=np.array(rhs_list), slack=np.array(slack),
        tolerance=tolerance, violations=tuple(violations),
    )


def schur_lower_bound_check(ca: CurvatureAssembly, weight: WeightModel,
                            grid: QuadGrid, u_tuples,
                            tolerance: float = 1e-6) -> BoundReport:
    """Curvature sums dominate the weighted Schur-matrix energy.

    lhs: the Nakano sum from the direct-route blocks.  rhs: the integral of
    ``sum_jk D_jk u_j conj(u_k)`` against the weight, ``D`` being the
    pointwise base-directed Schur complement of the full Hessian.
    """
    t = ca.gram.t
    basis = ca.gram.basis
    rho = density(weight, grid, t)
    V = basis.frame_values(grid.nodes)
    ptt = np.asarray(weight.phi_tt(t, grid.nodes), dtype=np.complex128)
    ptz = np.asarray(weight.phi_tz(t, grid.nodes), dtype=np.complex128)
    pzz = np.asarray(weight.phi_zz(t, grid.nodes), dtype=np.complex128)
    solved = _fiber_block_solve(pzz, np.conj(np.swapaxes(ptz, 1, 2)))
    schur = ptt - np.einsum("kmn,knp->kmp", ptz, solved)         # (K, m, m)
    lhs_list, rhs_list, slack, violations = [], [], [], []
    for idx, u_tuple in enumerate(u_tuples):
        u = np.asarray(u_tuple, dtype=np.complex128).reshape(ca.m, basis.dim)
        U = _tuple_node_values(basis, V, u_tuple, ca.m)
        lhs = ca.nakano_form(u_tuple)
        node_energy = np.einsum("kjl,kj,kl->k", schur, U, np.conj(U))
        rhs = weighted_sum(node_energy, rho).real
        norm = sum(np.vdot(u[j], ca.M @ u[j]).real for j in range(ca.m))
        scale = max(abs(lhs), abs(rhs), norm, 1e-300)
        gap = (lhs - rhs) / scale
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        slack.append(gap)
        if gap < -tolerance:
            violations.append(idx)
    return BoundReport(
        lhs=np.array(lhs_list), rhs=np.array(rhs_list), slack=np.array(slack),
        tolerance=tolerance, violations=tuple(violations),
    )


def sample_tuples(m: int, dim: int, count: int, seed: int):
    """Seeded complex Gaussian section tuples for estimate spot checks."""
    rng = np.random.default_rng(seed)
    shape = (count, m, dim)
    return list((rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
                / np.sqrt(2.0))


def blocks_text(ca: CurvatureAssembly) -> str:
    """Curvature blocks as row-major text with ``re,im`` entry pairs.

    Format: a header line ``m d route``, then for every (j, k) a line
    ``block j k`` followed by d rows of d whitespace-separated ``re,im``
    pairs (full double precision).
    """
    lines = [f"{ca.m} {ca.dim} {ca.route}"]
    for j in range(ca.m):
        for k in range(ca.m):
            lines.append(f"block {j} {k}")
            for row in ca.blocks[j, k]:
                lines.append(
                    " ".join(f"{float(v.real)!r},{float(v.imag)!r}" for v in row)
                )
    return "\n".join(lines) + "\n"


def export_blocks(ca: CurvatureAssembly, path) -> None:
    """Write :func:`blocks_text` to ``path``."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(blocks_text(ca))
