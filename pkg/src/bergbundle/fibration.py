"""Rank-two projectivized bundle instance over a one-dimensional fiber chart.

Fiber sections at twist ``l`` are ``p(zeta) d zeta`` with ``deg p <= l-2``
(the zero space below ``l = 2``), so the section space has dimension
``l - 1``: the determinant line at ``l = 2``, the bundle tensored with its
determinant at ``l = 3``, symmetric powers tensored with the determinant
above.  The fiberwise pairing is fixed so that the density is the
nonnegative ``|p|^2 e^{-l psi}`` against the Euclidean area form, which
makes fiber Grams ordinary weighted moment matrices on the chart.

Chart integrals use the substitution ``s = r^2 / (1 + r^2)`` mapping
``[0, inf)`` to ``[0, 1)``: for Fubini-Study-like decay the radial
integrand becomes a polynomial and Gauss-Legendre integrates it exactly,
with no cutoff radius at all.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bergman import Basis, GramFamily, gram
from .curvature import (
    curvature_direct,
    curvature_subbundle,
    nakano_delta,
    route_deviation,
)
from .numerics import QuadGrid
from .weights import DerivativeCheckError, WeightModel, default_probes, validate_derivatives

FIBER_RANK = 2


class DecayError(RuntimeError):
    """Chart integrand does not decay fast enough to converge."""


@dataclass(frozen=True)
class FibrationModel:
    """Twist level and fiber weight of a rank-two projectivized family.

    ``psi(t, zeta)`` is the local potential of the twisting line bundle on
    the affine chart; the model carries the same analytic partial layout as
    a weight model (``psi_t``, ``psi_tt``, ``psi_tz``, ``psi_zz``).  The
    effective chart weight is ``l * psi``.
    """

    name: str
    twist: int
    m: int
    psi: Callable
    psi_t: Callable
    psi_tt: Callable
    psi_tz: Callable
    psi_zz: Callable

    def __post_init__(self):
        if self.twist < 0:
            raise ValueError("twist level must be nonnegative")

    @property
    def section_dim(self) -> int:
        return max(self.twist - 1, 0)


def as_weight_model(fm: FibrationModel) -> WeightModel:
    """Chart weight ``phi = l * psi`` with partials scaled accordingly."""
    scale = float(fm.twist)
    return WeightModel(
        name=f"{fm.name}[l={fm.twist}]",
        m=fm.m,
        n=1,
        margin=0.0,
        phi=lambda t, z: scale * fm.psi(t, z),
        phi_t=lambda t, z: scale * fm.psi_t(t, z),
        phi_tt=lambda t, z: scale * fm.psi_tt(t, z),
        phi_tz=lambda t, z: scale * fm.psi_tz(t, z),
        phi_zz=lambda t, z: scale * fm.psi_zz(t, z),
    )


def fiber_basis(fm: FibrationModel) -> Basis:
    if fm.twist < FIBER_RANK:
        raise ValueError(
            f"twist {fm.twist} admits only the zero section; need l >= {FIBER_RANK}"
        )
    return Basis.total_degree(1, fm.twist - FIBER_RANK)


def fiber_section(fm: FibrationModel, coeffs) -> np.ndarray:
    """Coefficient vector of a section ``p(zeta) d zeta`` with ``deg p <= l-2``."""
    coeffs = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
    if coeffs.shape[0] != fm.section_dim:
        raise ValueError(
            f"twist {fm.twist} sections have {fm.section_dim} coefficients, "
            f"got {coeffs.shape[0]}"
        )
    return coeffs


def chart_grid(quad_order: int = 40) -> QuadGrid:
    """Cutoff-free polar grid on the chart via ``s = r^2 / (1 + r^2)``."""
    if quad_order < 4:
        raise ValueError("quad_order must be at least 4")
    x, w = np.polynomial.legendre.leggauss(quad_order)
    s = (x + 1.0) / 2.0
    ws = w / 2.0
    r = np.sqrt(s / (1.0 - s))
    radial_weight = ws / (2.0 * (1.0 - s) ** 2)
    n_ang = 2 * quad_order
    theta = 2.0 * np.pi * np.arange(n_ang) / n_ang
    zeta = (r[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = (radial_weight[:, None] * np.full(n_ang, 2.0 * np.pi / n_ang)).ravel()
    return QuadGrid(nodes=zeta[:, None], weights=weights)


def _check_decay(fm: FibrationModel, t, quad_order: int, grid: QuadGrid) -> None:
    """Reject fiber weights whose worst chart integrand grows toward s = 1."""
    n_ang = 2 * quad_order
    t = np.asarray(t, dtype=np.complex128).reshape(fm.m)
    psi = np.asarray(fm.psi(t, grid.nodes), dtype=np.float64).reshape(quad_order, n_ang)
    zeta = grid.nodes[:, 0].reshape(quad_order, n_ang)
    worst_power = 2 * (fm.twist - FIBER_RANK)
    r2 = np.abs(zeta) ** 2
    s = r2 / (1.0 + r2)
    # integrand per ds, worst monomial on each radial shell
    dens = np.max(
        np.abs(zeta) ** worst_power * np.exp(-fm.twist * psi) / (1.0 - s) ** 2,
        axis=1,
    )
    total = float(
        np.sum(grid.weights * (np.abs(grid.nodes[:, 0]) ** worst_power
                               * np.exp(-fm.twist * np.asarray(fm.psi(t, grid.nodes)))))
    )
    s_last = float(np.max(s))
    tail = dens[-1] * (1.0 - s_last) * 2.0 * np.pi
    if dens[-1] > 1.25 * dens[-3] and tail > 1e-8 * abs(total):
        raise DecayError(
            "insufficient decay: chart tail estimate "
            f"{tail:.3e} exceeds 1e-8 of the integral {total:.3e}"
        )


def fiber_gram(fm: FibrationModel, t, quad_order: int = 40,
               grid: QuadGrid = None, derivatives: bool = True) -> GramFamily:
    """Gram family of the fiber-section frame under the L2 fiber pairing.

    The chart misses a single fiber point (a null set), so moment integrals
    over the chart represent the full fiber integrals exactly.
    """
    basis = fiber_basis(fm)
    wm = as_weight_model(fm)
    if grid is None:
        grid = chart_grid(quad_order)
    _check_decay(fm, t, quad_order, grid)
    t_arr = np.asarray(t, dtype=np.complex128).reshape(fm.m)
    curv = np.asarray(wm.phi_zz(t_arr, grid.nodes), dtype=np.complex128)[:, 0, 0].real
    if np.min(curv) <= 0:
        raise ValueError(
            "fiber weight is not positively curved on the chart "
            f"(min l*psi_zz = {np.min(curv):.3e})"
        )
    return gram(wm, basis, grid, t_arr, derivatives=derivatives)


# ---------------------------------------------------------------------------
# determinant transformation of the lowest-twist generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DetTransformReport:
    matrix: np.ndarray
    determinant: complex
    factor: complex
    residual: float

    @property
    def passed(self) -> bool:
        return bool(self.residual <= 1e-12)


def det_transform_check(A) -> DetTransformReport:
    """Transformation law of the canonical twist-two generator.

    The generator is the alternating bilinear object with coefficient
    matrix ``S[i, j]`` on monomials ``z_i dz_j`` (S = [[0, 1], [-1, 0]]).
    Substituting ``z -> A z`` turns the coefficients into ``A^T S A``; the
    check asserts this equals ``det(A) * S`` to 1e-12, a pure
    polynomial-algebra identity.
    """
    A = np.asarray(A, dtype=np.complex128)
    if A.shape != (2, 2):
        raise ValueError("expected a 2x2 complex matrix")
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(det) < 1e-14:
        raise ValueError("matrix is singular; the coordinate change is invalid")
    S = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=np.complex128)
    transformed = A.T @ S @ A
    residual = float(np.max(np.abs(transformed - det * S)) / abs(det))
    return DetTransformReport(
        matrix=A, determinant=complex(det),
        factor=complex(transformed[0, 1]), residual=residual,
    )


@dataclass(frozen=True)
class RankReport:
    twist: int
    section_dim: int
    symmetric_rank: int

    @property
    def passed(self) -> bool:
        return self.section_dim == self.symmetric_rank


def rank_check(fm: FibrationModel) -> RankReport:
    """Section-space dimension against the symmetric-power rank count.

    At twist ``l`` the sections match the rank of the (l-2)-nd symmetric
    power of a rank-two space tensored with its determinant line, i.e.
    ``l - 1``; below twist 2 only the zero section exists.
    """
    dim = fm.section_dim
    sym_rank = (fm.twist - FIBER_RANK) + 1 if fm.twist >= FIBER_RANK else 0
    return RankReport(twist=fm.twist, section_dim=dim, symmetric_rank=sym_rank)


@dataclass(frozen=True)
class FibrationPositivityReport:
    t_values: np.ndarray
    deltas: np.ndarray
    min_delta: float
    route_deviation_max: float

    @property
    def all_positive(self) -> bool:
        return bool(np.all(self.deltas > 0))


def fibration_nakano(fm: FibrationModel, t_values, quad_order: int = 40,
                     crosscheck: bool = False) -> FibrationPositivityReport:
    """Nakano bound of the fiber-section bundle at each base grid point."""
    grid = chart_grid(quad_order)
    basis = fiber_basis(fm)
    wm = as_weight_model(fm)
    deltas, devs = [], []
    t_values = [np.asarray(t, dtype=np.complex128).reshape(fm.m) for t in t_values]
    for t in t_values:
        gf = fiber_gram(fm, t, quad_order=quad_order, grid=grid)
        ca = curvature_direct(gf)
        deltas.append(nakano_delta(ca))
        if crosscheck:
            ca_b = curvature_subbundle(wm, basis, grid, t)
            devs.append(route_deviation(ca, ca_b))
    return FibrationPositivityReport(
        t_values=np.array(t_values),
        deltas=np.array(deltas),
        min_delta=float(np.min(deltas)),
        route_deviation_max=float(np.max(devs)) if devs else float("nan"),
    )


def opposite_chart_model(fm: FibrationModel) -> FibrationModel:
    """Same family seen from the antipodal chart ``eta = 1 / zeta``.

    The transition multiplies sections by powers of ``eta``, shifting the
    potential to ``psi(t, 1/eta) + log |eta|^2``; Grams in the two charts
    agree up to the antidiagonal frame flip.
    """

    def inv(z):
        return 1.0 / z

    def psi(t, z):
        zeta = inv(z[:, 0])
        base = fm.psi(t, zeta[:, None])
        return base + np.log(np.abs(z[:, 0]) ** 2)

    def psi_t(t, z):
        return fm.psi_t(t, inv(z[:, 0])[:, None])

    def psi_tt(t, z):
        return fm.psi_tt(t, inv(z[:, 0])[:, None])

    def psi_tz(t, z):
        eta = z[:, 0]
        inner = fm.psi_tz(t, inv(eta)[:, None])
        return inner * (-1.0 / np.conj(eta) ** 2)[:, None, None]

    def psi_zz(t, z):
        eta = z[:, 0]
        inner = fm.psi_zz(t, inv(eta)[:, None])
        return inner / (np.abs(eta) ** 4)[:, None, None]

    return FibrationModel(
        name=fm.name + "~flip", twist=fm.twist, m=fm.m,
        psi=psi, psi_t=psi_t, psi_tt=psi_tt, psi_tz=psi_tz, psi_zz=psi_zz,
    )


def chart_flip_congruence(G: np.ndarray) -> np.ndarray:
    """Expected opposite-chart Gram: antidiagonal reindexing of the frame."""
    return G[::-1, ::-1]


# ---------------------------------------------------------------------------
# built-in fiber weights
# ---------------------------------------------------------------------------

def _fs_family(name: str, twist: int, twisted: bool, conformal: bool) -> FibrationModel:
    a = 1.0 / twist if conformal else 0.0

    def scale(t):
        return np.exp(2.0 * t[0].real) if twisted else 1.0

    def psi(t, z):
        c = scale(t)
        return np.log1p(c * np.abs(z[:, 0]) ** 2) + a * abs(t[0]) ** 2

    def psi_t(t, z):
        c = scale(t)
        E = c * np.abs(z[:, 0]) ** 2
        drift = E / (1.0 + E) if twisted else np.zeros(z.shape[0])
        return (drift + a * np.conj(t[0]))[:, None].astype(np.complex128)

    def psi_tt(t, z):
        c = scale(t)
        E = c * np.abs(z[:, 0]) ** 2
        curv = E / (1.0 + E) ** 2 if twisted else np.zeros(z.shape[0])
        return (curv + a)[:, None, None].astype(np.complex128)

    def psi_tz(t, z):
        if not twisted:
            return np.zeros((z.shape[0], 1, 1), dtype=np.complex128)
        c = scale(t)
        E = c * np.abs(z[:, 0]) ** 2
        return (c * z[:, 0] / (1.0 + E) ** 2)[:, None, None]

    def psi_zz(t, z):
        c = scale(t)
        E = c * np.abs(z[:, 0]) ** 2
        return (c / (1.0 + E) ** 2)[:, None, None].astype(np.complex128)

    return FibrationModel(
        name=name, twist=twist, m=1,
        psi=psi, psi_t=psi_t, psi_tt=psi_tt, psi_tz=psi_tz, psi_zz=psi_zz,
    )


_FIBER_BUILTINS = {
    "fubini_study": lambda l: _fs_family("fubini_study", l, twisted=False, conformal=False),
    "fs_conformal": lambda l: _fs_family("fs_conformal", l, twisted=False, conformal=True),
    "fs_twisted": lambda l: _fs_family("fs_twisted", l, twisted=True, conformal=True),
    "fs_twisted_flat": lambda l: _fs_family("fs_twisted_flat", l, twisted=True, conformal=False),
}


def builtin_fibration(name: str, twist: int) -> FibrationModel:
    """Construct a built-in fiber weight and self-check its partials."""
    if name not in _FIBER_BUILTINS:
        raise ValueError(
            f"unknown fiber weight {name!r}; built-ins: {sorted(_FIBER_BUILTINS)}"
        )
    fm = _FIBER_BUILTINS[name](int(twist))
    wm = as_weight_model(fm)
    if fm.twist >= FIBER_RANK:
        report = validate_derivatives(wm, default_probes(wm, count=10, seed=13))
        if not report.passed:
            raise DerivativeCheckError(
                f"fiber weight {name!r} failed its derivative self-check: {report.failures}"
            )
    return fm


def fubini_study_gram_oracle(twist: int) -> np.ndarray:
    """Closed-form chart moments of the Fubini-Study weight.

    Radial reduction gives ``(zeta^a, zeta^b) = pi * delta_ab *
    B(a+1, l-a-1) = pi * a! (l-a-2)! / (l-1)!``.
    """
    dims = max(twist - 1, 0)
    diag = [
        np.pi * math.factorial(a) * math.factorial(twist - a - 2) / math.factorial(twist - 1)
        for a in range(dims)
    ]
    return np.diag(np.array(diag, dtype=np.complex128))
