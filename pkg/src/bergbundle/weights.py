"""Weight functions on a parameter-times-fiber domain, with analytic partials.

A :class:`WeightModel` carries the real weight ``phi(t, z)`` together with
all mixed Wirtinger partials that curvature assembly needs:

* ``phi_t``  : d phi / d t_j                        (K, m)
* ``phi_tt`` : d^2 phi / d t_j d conj(t_k)          (K, m, m)
* ``phi_tz`` : d^2 phi / d t_j d conj(z_lam)        (K, m, n)
* ``phi_zz`` : d^2 phi / d z_lam d conj(z_mu)       (K, n, n)

Convention: d/dt = (d/dx - i d/dy) / 2.  Analytic partials are mandatory;
central finite differences only validate them (second derivatives enter
the curvature quadratically, and difference noise would mask positivity
margins).
"""

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .numerics import (
    NotPositiveDefiniteError,
    min_eigenvalue,
    solve_hpd,
    symmetrize,
)


class DegenerateHessianError(RuntimeError):
    """Fiber Hessian block is singular where strict positivity is required."""


class DerivativeCheckError(RuntimeError):
    """Analytic partials disagree with their finite-difference validators."""


@dataclass(frozen=True)
class WeightModel:
    name: str
    m: int
    n: int
    margin: float
    phi: Callable
    phi_t: Callable
    phi_tt: Callable
    phi_tz: Callable
    phi_zz: Callable

    def point_blocks(self, t, z):
        """Hessian blocks (T, B, Z) at a single point."""
        z = _as_fiber_points(z, self.n)
        t = np.asarray(t, dtype=np.complex128).reshape(self.m)
        return (
            self.phi_tt(t, z)[0],
            self.phi_tz(t, z)[0],
            self.phi_zz(t, z)[0],
        )


@dataclass(frozen=True)
class HessianBlocks:
    """Blocks of the full complex Hessian at one point.

    The stacked (m+n) x (m+n) form [[T, B], [B^H, Z]] is Hermitian; Z must
    be positive definite wherever the Schur matrix is requested.
    """

    T: np.ndarray
    B: np.ndarray
    Z: np.ndarray

    def stacked(self) -> np.ndarray:
        top = np.hstack([self.T, self.B])
        bottom = np.hstack([self.B.conj().T, self.Z])
        return np.vstack([top, bottom])


def _as_fiber_points(z, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    if z.ndim == 0:
        z = z.reshape(1, 1)
    elif z.ndim == 1:
        z = z.reshape(-1, n) if z.size != n else z.reshape(1, n)
    if z.ndim != 2 or z.shape[1] != n:
        raise ValueError(f"fiber points must have shape (K, {n})")
    return z


def _ones(shape):
    return np.ones(shape, dtype=np.complex128)


def _zeros(shape):
    return np.zeros(shape, dtype=np.complex128)


# ---------------------------------------------------------------------------
# built-in weights
# ---------------------------------------------------------------------------

def _fock_shift(eps: float) -> WeightModel:
    # phi = |z - t|^2 + eps |t|^2 on the truncated plane
    def phi(t, z):
        d = z[:, 0] - t[0]
        return (d.real**2 + d.imag**2) + eps * abs(t[0]) ** 2

    def phi_t(t, z):
        return (-(np.conj(z[:, 0] - t[0])) + eps * np.conj(t[0]))[:, None]

    def phi_tt(t, z):
        return (1.0 + eps) * _ones((z.shape[0], 1, 1))

    def phi_tz(t, z):
        return -_ones((z.shape[0], 1, 1))

    def phi_zz(t, z):
        return _ones((z.shape[0], 1, 1))

    return WeightModel(
        name=f"fock_shift({eps:g})", m=1, n=1, margin=float(eps),
        phi=phi, phi_t=phi_t, phi_tt=phi_tt, phi_tz=phi_tz, phi_zz=phi_zz,
    )


def _product() -> WeightModel:
    # phi = |z|^2 + |t|^2: base and fiber variables separate
    def phi(t, z):
        return np.abs(z[:, 0]) ** 2 + abs(t[0]) ** 2

    def phi_t(t, z):
        return np.full((z.shape[0], 1), np.conj(t[0]), dtype=np.complex128)

    def phi_tt(t, z):
        return _ones((z.shape[0], 1, 1))

    def phi_tz(t, z):
        return _zeros((z.shape[0], 1, 1))

    def phi_zz(t, z):
        return _ones((z.shape[0], 1, 1))

    return WeightModel(
        name="product", m=1, n=1, margin=1.0,
        phi=phi, phi_t=phi_t, phi_tt=phi_tt, phi_tz=phi_tz, phi_zz=phi_zz,
    )


def _coupled() -> WeightModel:
    # phi = (1 + |t|^2) |z|^2: degenerate along z = 0, kept as a documented
    # semidefinite example
    def phi(t, z):
        return (1.0 + abs(t[0]) ** 2) * np.abs(z[:, 0]) ** 2

    def phi_t(t, z):
        return (np.conj(t[0]) * np.abs(z[:, 0]) ** 2)[:, None]

    def phi_tt(t, z):
        return (np.abs(z[:, 0]) ** 2)[:, None, None].astype(np.complex128)

    def phi_tz(t, z):
        return (np.conj(t[0]) * z[:, 0])[:, None, None]

    def phi_zz(t, z):
        return (1.0 + abs(t[0]) ** 2) * _ones((z.shape[0], 1, 1))

    return WeightModel(
        name="coupled", m=1, n=1, margin=0.0,
        phi=phi, phi_t=phi_t, phi_tt=phi_tt, phi_tz=phi_tz, phi_zz=phi_zz,
    )


def _product2() -> WeightModel:
    # phi = |z|^2 + |t1|^2 + |t2|^2
    def phi(t, z):
        return np.abs(z[:, 0]) ** 2 + abs(t[0]) ** 2 + abs(t[1]) ** 2

    def phi_t(t, z):
        out = np.empty((z.shape[0], 2), dtype=np.complex128)
        out[:, 0] = np.conj(t[0])
        out[:, 1] = np.conj(t[1])
        return out

    def phi_tt(t, z):
        out = _zeros((z.shape[0], 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 1.0
        return out

    def phi_tz(t, z):
        return _zeros((z.shape[0], 2, 1))

    def phi_zz(t, z):
        return _ones((z.shape[0], 1, 1))

    return WeightModel(
        name="product2", m=2, n=1, margin=1.0,
        phi=phi, phi_t=phi_t, phi_tt=phi_tt, phi_tz=phi_tz, phi_zz=phi_zz,
    )


def _rank_one() -> WeightModel:
    # phi = |z|^2 + |t1 + t2|^2 / 2: rank-one base Hessian, so the
    # direction t1 = -t2 is curvature-degenerate
    def phi(t, z):
        return np.abs(z[:, 0]) ** 2 + 0.5 * abs(t[0] + t[1]) ** 2

    def phi_t(t, z):
        s = 0.5 * np.conj(t[0] + t[1])
        return np.full((z.shape[0], 2), s, dtype=np.complex128)

    def phi_tt(t, z):
        return 0.5 * _ones((z.shape[0], 2, 2))

    def phi_tz(t, z):
        return _zeros((z.shape[0], 2, 1))

    def phi_zz(t, z):
        return _ones((z.shape[0], 1, 1))

    return WeightModel(
        name="rank_one", m=2, n=1, margin=0.0,
        phi=phi, phi_t=phi_t, phi_tt=phi_tt, phi_tz=phi_tz, phi_zz=phi_zz,
    )


_BUILTINS = {
    "fock_shift": (_fock_shift, 1),
    "product": (_product, 0),
    "coupled": (_coupled, 0),
    "product2": (_product2, 0),
    "rank_one": (_rank_one, 0),
}

#: Default domain pairing for each built-in weight (kind, radius).
DOMAIN_HINTS = {name: ("plane-truncation", 6.0) for name in _BUILTINS}


def builtin(name: str, params=()) -> WeightModel:
    """Construct a built-in weight and run its derivative self-check."""
    if name not in _BUILTINS:
        raise ValueError(
            f"unknown weight {name!r}; built-ins: {sorted(_BUILTINS)}"
        )
    factory, n_params = _BUILTINS[name]
    params = tuple(float(p) for p in params)
    if len(params) != n_params:
        raise ValueError(f"weight {name!r} takes {n_params} parameter(s), got {len(params)}")
    if name == "fock_shift" and params[0] < 0:
        raise ValueError("fock_shift margin must be nonnegative")
    model = factory(*params)
    report = validate_derivatives(model, default_probes(model, count=12, seed=7))
    if not report.passed:
        raise DerivativeCheckError(
            f"built-in {name!r} failed its derivative self-check: {report.failures}"
        )
    psh = check_psh(model, default_probes(model, count=12, seed=11))
    if psh.hessian_violations:
        raise DerivativeCheckError(
            f"built-in {name!r} is not plurisubharmonic at probes {psh.hessian_violations}"
        )
    return model


def add_conformal(model: WeightModel, c: float) -> WeightModel:
    """Add ``c |t|^2`` to the weight (adds exactly ``c I`` to the Schur matrix)."""
    c = float(c)

    def phi(t, z, _phi=model.phi):
        return _phi(t, z) + c * float(np.sum(np.abs(t) ** 2))

    def phi_t(t, z, _phi_t=model.phi_t):
        return _phi_t(t, z) + c * np.conj(t)[None, :]

    def phi_tt(t, z, _phi_tt=model.phi_tt):
        out = _phi_tt(t, z).copy()
        idx = np.arange(model.m)
        out[:, idx, idx] += c
        return out

    return replace(
        model,
        name=f"{model.name}+{c:g}|t|^2",
        margin=model.margin + c,
        phi=phi,
        phi_t=phi_t,
        phi_tt=phi_tt,
    )


def default_probes(model: WeightModel, count: int = 50, seed: int = 0,
                   t_radius: float = 0.8, z_radius: float = 1.5):
    """Seeded interior probe points ``(t, z)`` for validation runs."""
    rng = np.random.default_rng(seed)

    def sample_disc(radius, size):
        r = radius * np.sqrt(rng.uniform(0, 1, size))
        ang = rng.uniform(0, 2 * np.pi, size)
        return r * np.exp(1j * ang)

    probes = []
    for _ in range(count):
        t = sample_disc(t_radius, model.m)
        z = sample_disc(z_radius, model.n)
        probes.append((t, z))
    return probes


# ---------------------------------------------------------------------------
# finite-difference validation
# ---------------------------------------------------------------------------

def _phi_at(model: WeightModel, t, z) -> float:
    return float(model.phi(np.asarray(t, np.complex128),
                           np.asarray(z, np.complex128).reshape(1, model.n))[0])


def _real_coords(t, z):
    return np.concatenate([
        np.asarray(t).real, np.asarray(t).imag,
        np.asarray(z).real, np.asarray(z).imag,
    ]).astype(np.float64)


def _eval_real(model: WeightModel, x: np.ndarray) -> float:
    m, n = model.m, model.n
    t = x[:m] + 1j * x[m:2 * m]
    z = x[2 * m:2 * m + n] + 1j * x[2 * m + n:]
    return _phi_at(model, t, z)


def _axis_indices(model: WeightModel, kind: str, j: int):
    """Real-coordinate (x, y) axis indices of complex variable ``j``."""
    m, n = model.m, model.n
    if kind == "t":
        return j, m + j
    return 2 * m + j, 2 * m + n + j


def _fd_first(model, x, ax, ay, h):
    def d(step):
        ex = np.zeros_like(x); ex[ax] = step
        ey = np.zeros_like(x); ey[ay] = step
        dx = (_eval_real(model, x + ex) - _eval_real(model, x - ex)) / (2 * step)
        dy = (_eval_real(model, x + ey) - _eval_real(model, x - ey)) / (2 * step)
        return 0.5 * (dx - 1j * dy)

    return (4.0 * d(h) - d(2 * h)) / 3.0


def _fd_second_real(model, x, a, b, h):
    if a == b:
        ea = np.zeros_like(x); ea[a] = h
        return (
            _eval_real(model, x + ea) - 2.0 * _eval_real(model, x) + _eval_real(model, x - ea)
        ) / (h * h)
    ea = np.zeros_like(x); ea[a] = h
    eb = np.zeros_like(x); eb[b] = h
    return (
        _eval_real(model, x + ea + eb) - _eval_real(model, x + ea - eb)
        - _eval_real(model, x - ea + eb) + _eval_real(model, x - ea - eb)
    ) / (4 * h * h)


def _fd_mixed(model, x, axes_a, axes_b, h):
    """FD approximation of d^2 phi / d a d conj(b) via real stencils."""
    ax, ay = axes_a
    bx, by = axes_b

    def at(step):
        dxx = _fd_second_real(model, x, ax, bx, step)
        dyy = _fd_second_real(model, x, ay, by, step)
        dxy = _fd_second_real(model, x, ax, by, step)
        dyx = _fd_second_real(model, x, ay, bx, step)
        return 0.25 * ((dxx + dyy) + 1j * (dxy - dyx))

    return (4.0 * at(h) - at(2 * h)) / 3.0


@dataclass(frozen=True)
class DerivativeReport:
    deviations: dict
    max_deviation: float
    step: float
    probe_count: int
    failures: tuple

    @property
    def passed(self) -> bool:
        return not self.failures


def validate_derivatives(model: WeightModel, probes, step: float = 1e-4) -> DerivativeReport:
    """Compare analytic partials against Richardson-extrapolated differences.

    Deviations above 1e-4 fail the model, with the offending partial named.
    """
    devs = {"phi_t": 0.0, "phi_tt": 0.0, "phi_tz": 0.0, "phi_zz": 0.0}
    m, n = model.m, model.n
    for t, z in probes:
        t = np.asarray(t, np.complex128).reshape(m)
        zp = np.asarray(z, np.complex128).reshape(1, n)
        x = _real_coords(t, zp[0])
        a_t = model.phi_t(t, zp)[0]
        a_tt = model.phi_tt(t, zp)[0]
        a_tz = model.phi_tz(t, zp)[0]
        a_zz = model.phi_zz(t, zp)[0]
        for j in range(m):
            fd = _fd_first(model, x, *_axis_indices(model, "t", j), step)
            devs["phi_t"] = max(devs["phi_t"], abs(a_t[j] - fd))
            for k in range(m):
                fd2 = _fd_mixed(model, x, _axis_indices(model, "t", j),
                                _axis_indices(model, "t", k), step)
                devs["phi_tt"] = max(devs["phi_tt"], abs(a_tt[j, k] - fd2))
            for lam in range(n):
                fd2 = _fd_mixed(model, x, _axis_indices(model, "t", j),
                                _axis_indices(model, "z", lam), step)
                devs["phi_tz"] = max(devs["phi_tz"], abs(a_tz[j, lam] - fd2))
        for lam in range(n):
            for mu in range(n):
                fd2 = _fd_mixed(model, x, _axis_indices(model, "z", lam),
                                _axis_indices(model, "z", mu), step)
                devs["phi_zz"] = max(devs["phi_zz"], abs(a_zz[lam, mu] - fd2))
    failures = tuple(k for k, v in devs.items() if v > 1e-4)
    return DerivativeReport(
        deviations=devs,
        max_deviation=max(devs.values()),
        step=step,
        probe_count=len(probes),
        failures=failures,
    )


# ---------------------------------------------------------------------------
# Schur matrix and pointwise positivity
# ---------------------------------------------------------------------------

def schur_D(model: WeightModel, t, z) -> np.ndarray:
    """Base-directed Schur complement ``D = T - B Z^-1 B^H`` at one point."""
    T, B, Z = model.point_blocks(t, z)
    try:
        X = solve_hpd(Z, B.conj().T)
    except NotPositiveDefiniteError as exc:
        raise DegenerateHessianError(
            f"degenerate fiber Hessian at t={np.asarray(t)}, z={np.asarray(z)}"
        ) from exc
    return symmetrize(T - B @ X)


@dataclass(frozen=True)
class PshProbeReport:
    full_min: np.ndarray
    schur_min: np.ndarray        # nan where the fiber block is degenerate
    degenerate: np.ndarray
    hessian_violations: tuple    # probes with full Hessian PD but Schur min < -1e-10

    @property
    def passed(self) -> bool:
        return not self.hessian_violations


def check_psh(model: WeightModel, probes) -> PshProbeReport:
    """Pointwise positivity audit of the full Hessian and its Schur matrix.

    Wherever the full Hessian is positive definite (and the fiber block
    invertible), the Schur matrix must be positive semidefinite; degenerate
    fiber blocks are flagged, not failed.
    """
    full_min, schur_min, degenerate, violations = [], [], [], []
    for i, (t, z) in enumerate(probes):
        T, B, Z = model.point_blocks(t, z)
        blocks = HessianBlocks(T=T, B=B, Z=Z)
        fmin = min_eigenvalue(blocks.stacked())
        full_min.append(fmin)
        scale = max(1.0, float(np.max(np.abs(blocks.stacked()))))
        try:
            dmin = min_eigenvalue(schur_D(model, t, z))
            schur_min.append(dmin)
            degenerate.append(False)
            if fmin > 1e-10 * scale and dmin < -1e-10 * scale:
                violations.append(i)
        except DegenerateHessianError:
            schur_min.append(np.nan)
            degenerate.append(True)
    return PshProbeReport(
        full_min=np.array(full_min),
        schur_min=np.array(schur_min),
        degenerate=np.array(degenerate),
        hessian_violations=tuple(violations),
    )
