"""Plurisubharmonicity certification of kernel values on parameter grids.

Certification is deliberately redundant: a finite-difference complex
Hessian check and a circle sub-mean-value check are run side by side
(either one alone is noise-prone near tolerance).  Tolerances are
grid-adaptive, ``C * h^2`` with ``C`` estimated from third differences of
the sampled data, never absolute: psh is a second-order property, and
violations have to be separated from truncation error of the stencils.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bergman import Basis, gram, kernel_diag
from .numerics import DomainSpec, GridError, QuadGrid, build_grid
from .weights import WeightModel


@dataclass(frozen=True)
class HoloMap:
    """Holomorphic parameter-to-fiber map, validated by difference residuals."""

    fn: Callable
    m: int = 1

    def __call__(self, t):
        return complex(self.fn(np.asarray(t, dtype=np.complex128).reshape(self.m)))

    def validate(self, probes, step: float = 1e-5, tol: float = 1e-6) -> float:
        """Max Cauchy-Riemann residual |dbar f| over probes; raises above tol."""
        worst = 0.0
        for t in probes:
            t = np.asarray(t, dtype=np.complex128).reshape(self.m)
            for j in range(self.m):
                ex = np.zeros(self.m, dtype=np.complex128)
                ex[j] = step
                ey = np.zeros(self.m, dtype=np.complex128)
                ey[j] = 1j * step
                dx = (self(t + ex) - self(t - ex)) / (2 * step)
                dy = (self(t + ey) - self(t - ey)) / (2 * step)
                worst = max(worst, abs(0.5 * (dx + 1j * dy)))
        if worst > tol:
            raise GridError(
                f"map fails the Cauchy-Riemann residual check ({worst:.3e} > {tol:g})"
            )
        return worst


def poly_map(coeffs) -> HoloMap:
    """Polynomial map ``f(t) = sum_k coeffs[k] t^k`` of one parameter."""
    coeffs = tuple(complex(c) for c in coeffs)

    def fn(t):
        acc = 0.0 + 0.0j
        for c in reversed(coeffs):
            acc = acc * t[0] + c
        return acc

    return HoloMap(fn=fn, m=1)


@dataclass(frozen=True)
class GridFunction:
    """Real values sampled on a rectangular parameter grid (m = 1 or 2).

    ``axes`` holds the 2m real axes (Re/Im per complex coordinate) and
    ``values`` the matching 2m-dimensional array; spacing is uniform per
    complex coordinate.
    """

    m: int
    axes: tuple
    values: np.ndarray
    spacing: tuple

    def __post_init__(self):
        if self.m not in (1, 2):
            raise GridError("grid functions support one or two complex parameters")
        if len(self.axes) != 2 * self.m or self.values.ndim != 2 * self.m:
            raise GridError("axes/values rank must be twice the parameter count")
        if not np.all(np.isfinite(self.values)):
            raise GridError("grid values must be finite")

    def t_value(self, index) -> np.ndarray:
        return np.array(
            [
                self.axes[2 * c][index[2 * c]] + 1j * self.axes[2 * c + 1][index[2 * c + 1]]
                for c in range(self.m)
            ]
        )


def tgrid_axes(center, halfwidth: float, points: int):
    center = complex(center)
    re = np.linspace(center.real - halfwidth, center.real + halfwidth, points)
    im = np.linspace(center.imag - halfwidth, center.imag + halfwidth, points)
    return re, im


def grid_function_from_callable(fn, center, halfwidth: float, points: int,
                                m: int = 1) -> GridFunction:
    """Sample a real-valued function of ``t`` on a square grid."""
    if points < 3:
        raise GridError("grid too small: need at least 3 nodes per axis")
    centers = [complex(c) for c in np.atleast_1d(center)]
    if len(centers) != m:
        raise GridError("center must supply one complex value per parameter")
    axes = []
    for c in centers:
        re, im = tgrid_axes(c, halfwidth, points)
        axes.extend([re, im])
    spacing = tuple(float(axes[2 * c][1] - axes[2 * c][0]) for c in range(m))
    shape = tuple(len(a) for a in axes)
    values = np.empty(shape, dtype=np.float64)
    for index in np.ndindex(shape):
        t = np.array(
            [axes[2 * c][index[2 * c]] + 1j * axes[2 * c + 1][index[2 * c + 1]]
             for c in range(m)]
        )
        values[index] = float(fn(t))
    return GridFunction(m=m, axes=tuple(axes), values=values, spacing=spacing)


def kernel_along_map(weight: WeightModel, basis: Basis, domain: DomainSpec,
                     holo_map: HoloMap, center, halfwidth: float, points: int,
                     grid: QuadGrid = None) -> GridFunction:
    """Sample ``K_t(f(t), f(t))`` on a parameter grid.

    Every ``f(t)`` must sit inside the fiber domain by at least one radial
    cell (margin ``R / Q``); values are strictly positive.
    """
    if weight.m != holo_map.m:
        raise GridError("weight and map disagree on the parameter dimension")
    grid = build_grid(domain) if grid is None else grid
    margin = min(r / q for r, q in zip(domain.radii, domain.quad_order))
    radius = domain.radii[0]

    def sample(t):
        z = holo_map(t)
        if abs(z) > radius - margin:
            raise GridError(
                f"map value {z} at t={t} is not interior to the fiber domain "
                f"(radius {radius}, margin {margin:g})"
            )
        gf = gram(weight, basis, grid, t, derivatives=False)
        return kernel_diag(gf, z)

    out = grid_function_from_callable(sample, center, halfwidth, points, m=weight.m)
    if np.any(out.values <= 0):
        raise GridError("kernel values must be strictly positive")
    return out


# ---------------------------------------------------------------------------
# finite-difference complex Hessians
# ---------------------------------------------------------------------------

def _second_same(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    return np.moveaxis(out, 0, axis)


def _second_cross(values: np.ndarray, ax_a: int, ax_b: int, ha: float, hb: float) -> np.ndarray:
    v = np.moveaxis(values, (ax_a, ax_b), (0, 1))
    out = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (4.0 * ha * hb)
    return np.moveaxis(out, (0, 1), (ax_a, ax_b))


def _interior(values: np.ndarray) -> np.ndarray:
    slicer = tuple(slice(1, -1) for _ in range(values.ndim))
    return values[slicer]


def fd_complex_hessian(g: GridFunction) -> np.ndarray:
    """Mixed complex Hessian on interior nodes, shape ``(*interior, m, m)``.

    Five-point stencils per coordinate (Laplacian / 4 on the diagonal) and
    nine-point cross stencils for the mixed two-parameter entries.
    """
    for axis, a in enumerate(g.axes):
        if len(a) < 3:
            raise GridError("grid too small: need at least 3 nodes per axis")
    vals = g.values
    m = g.m
    inner_shape = tuple(s - 2 for s in vals.shape)
    out = np.empty(inner_shape + (m, m), dtype=np.complex128)
    for c in range(m):
        h = g.spacing[c]
        # _second_same shrinks only its own axis; trim the others to interior
        dxx = _trim_except(_second_same(vals, 2 * c, h), 2 * c)
        dyy = _trim_except(_second_same(vals, 2 * c + 1, h), 2 * c + 1)
        out[..., c, c] = 0.25 * (dxx + dyy)
    if m == 2:
        h1, h2 = g.spacing
        dx1x2 = _trim_except(_second_cross(vals, 0, 2, h1, h2), 0, 2)
        dy1y2 = _trim_except(_second_cross(vals, 1, 3, h1, h2), 1, 3)
        dx1y2 = _trim_except(_second_cross(vals, 0, 3, h1, h2), 0, 3)
        dy1x2 = _trim_except(_second_cross(vals, 1, 2, h1, h2), 1, 2)
        mixed = 0.25 * ((dx1x2 + dy1y2) + 1j * (dx1y2 - dy1x2))
        out[..., 0, 1] = mixed
        out[..., 1, 0] = np.conj(mixed)
    return out


def _trim_except(values: np.ndarray, *kept_axes) -> np.ndarray:
    slicer = tuple(
        slice(None) if ax in kept_axes else slice(1, -1) for ax in range(values.ndim)
    )
    return values[slicer]


def _third_difference_scale(g: GridFunction) -> float:
    worst = 0.0
    for axis in range(2 * g.m):
        h = g.spacing[axis // 2]
        v = np.moveaxis(g.values, axis, 0)
        if v.shape[0] >= 4:
            d3 = v[3:] - 3.0 * v[2:-1] + 3.0 * v[1:-2] - v[:-3]
            worst = max(worst, float(np.max(np.abs(d3))) / h**3)
    return worst


def _submean_margin(g: GridFunction) -> np.ndarray:
    """Per-node ``(circle average - center) / h^2`` on interior nodes.

    For each complex coordinate the four axis neighbours sample the radius-h
    circle; psh functions are subharmonic on every complex line, so the
    scaled deficit must not drop below the grid tolerance.  Returns the
    minimum over coordinates.
    """
    vals = g.values
    margins = []
    for c in range(g.m):
        h = g.spacing[c]
        vx = np.moveaxis(vals, 2 * c, 0)
        avg_x = vx[2:] + vx[:-2]
        avg_x = np.moveaxis(avg_x, 0, 2 * c)
        vy = np.moveaxis(vals, 2 * c + 1, 0)
        avg_y = vy[2:] + vy[:-2]
        avg_y = np.moveaxis(avg_y, 0, 2 * c + 1)
        avg = 0.25 * (_trim_except(avg_x, 2 * c) + _trim_except(avg_y, 2 * c + 1))
        center = _interior(vals)
        margins.append((avg - center) / (h * h))
    return np.minimum.reduce(margins) if len(margins) > 1 else margins[0]


@dataclass(frozen=True)
class PshReport:
    hessian_min: float
    submean_min: float
    tolerance: float
    curvature_scale: float
    violations: tuple          # ((interior index, t value, hessian, submean), ...)

    @property
    def passed(self) -> bool:
        return not self.violations


def psh_report(g: GridFunction, tol_factor: float = 1.0) -> PshReport:
    """Assert plurisubharmonicity of grid data within grid-adaptive tolerance.

    Both discretizations (FD Hessian minimum eigenvalue and circle
    sub-mean-value margin) must stay above ``-tol`` with ``tol = C h^2 +
    floor``, ``C`` estimated from third differences of the data.
    """
    hess = fd_complex_hessian(g)
    if g.m == 1:
        min_eigs = hess[..., 0, 0].real
    else:
        min_eigs = np.linalg.eigvalsh(hess)[..., 0]
    submean = _submean_margin(g)
    c_scale = _third_difference_scale(g)
    h_max = max(g.spacing)
    floor = 1e-9 * max(1.0, float(np.max(np.abs(g.values))))
    tol = tol_factor * c_scale * h_max * h_max + floor
    violations = []
    for index in np.ndindex(min_eigs.shape):
        he = float(min_eigs[index])
        sm = float(submean[index])
        if he < -tol or sm < -tol:
            full_index = tuple(i + 1 for i in index)
            violations.append((full_index, tuple(g.t_value(full_index)), he, sm))
    return PshReport(
        hessian_min=float(np.min(min_eigs)),
        submean_min=float(np.min(submean)),
        tolerance=float(tol),
        curvature_scale=float(c_scale),
        violations=tuple(violations),
    )
