"""Deterministic reduction kernels: numba fast path, pure-numpy fallback.

Every quadrature sum in the package goes through the two entry points
below (``pair_integrals`` and ``weighted_sum``).  Both reduce along the
node axis with the same index-ordered pairwise tree (zero-pad to a power
of two, then repeatedly add the upper half onto the lower half), and both
decompose complex products into explicit real/imaginary operations, so
results are bitwise identical

* across repeated runs,
* across thread counts (each output entry is reduced inside one thread),
* across the two backends (the numpy SIMD complex-multiply kernels use
  FMA contractions that the split real arithmetic avoids).

The backend is selected once at import time from ``BERGBUNDLE_BACKEND``
("numba" or "numpy"; default: numba when importable).
"""

import os
import warnings

import numpy as np

ENV_BACKEND = "BERGBUNDLE_BACKEND"
ENV_OUTDIR = "BERGBUNDLE_OUT"


def _select_backend() -> str:
    choice = os.environ.get(ENV_BACKEND, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(
            f"{ENV_BACKEND} must be 'numba' or 'numpy', got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise ImportError(
                "BERGBUNDLE_BACKEND=numba requested but numba is not installed"
            ) from None
        warnings.warn("numba not importable; falling back to numpy backend")
        return "numpy"
    return "numba"


# Pick a threading layer that is always available before numba loads one.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

BACKEND = _select_backend()


def _padded_size(count: int) -> int:
    if count < 1:
        raise ValueError("reduction over an empty node axis")
    return 1 << (count - 1).bit_length()


# ---------------------------------------------------------------------------
# numpy fallback path
# ---------------------------------------------------------------------------

def _pair_integrals_numpy(F, G, dens):
    n_cols, n_nodes = F.shape
    n_rows = G.shape[0]
    size = _padded_size(n_nodes)
    fr, fi = np.ascontiguousarray(F.real), np.ascontiguousarray(F.imag)
    gr, gi = np.ascontiguousarray(G.real), np.ascontiguousarray(G.imag)
    dr, di = np.ascontiguousarray(dens.real), np.ascontiguousarray(dens.imag)
    # conj(G[r]) * F[c], split into components to avoid fused complex kernels
    re1 = gr[:, None, :] * fr[None, :, :] + gi[:, None, :] * fi[None, :, :]
    im1 = gr[:, None, :] * fi[None, :, :] - gi[:, None, :] * fr[None, :, :]
    buf = np.zeros((n_rows, n_cols, size, 2))
    buf[:, :, :n_nodes, 0] = re1 * dr - im1 * di
    buf[:, :, :n_nodes, 1] = re1 * di + im1 * dr
    half = size
    while half > 1:
        half >>= 1
        buf[:, :, :half, :] += buf[:, :, half:2 * half, :]
    return buf[:, :, 0, 0] + 1j * buf[:, :, 0, 1]


def _weighted_sum_numpy(values, weights):
    n_nodes = values.shape[0]
    size = _padded_size(n_nodes)
    buf = np.zeros((size, 2))
    buf[:n_nodes, 0] = values.real * weights
    buf[:n_nodes, 1] = values.imag * weights
    half = size
    while half > 1:
        half >>= 1
        buf[:half, :] += buf[half:2 * half, :]
    return complex(buf[0, 0], buf[0, 1])


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if BACKEND == "numba":
    from numba import njit, prange
    import numba

    @njit(parallel=True, cache=True)
    def _pair_integrals_jit(F, G, dens, out, size):  # pragma: no cover
        n_cols, n_nodes = F.shape
        n_rows = G.shape[0]
        for idx in prange(n_rows * n_cols):
            r = idx // n_cols
            c = idx % n_cols
            bre = np.zeros(size)
            bim = np.zeros(size)
            for k in range(n_nodes):
                gre = G[r, k].real
                gim = G[r, k].imag
                fre = F[c, k].real
                fim = F[c, k].imag
                re1 = gre * fre + gim * fim
                im1 = gre * fim - gim * fre
                bre[k] = re1 * dens[k].real - im1 * dens[k].imag
                bim[k] = re1 * dens[k].imag + im1 * dens[k].real
            half = size
            while half > 1:
                half >>= 1
                for k2 in range(half):
                    bre[k2] = bre[k2] + bre[k2 + half]
                    bim[k2] = bim[k2] + bim[k2 + half]
            out[r, c] = complex(bre[0], bim[0])

    @njit(cache=True)
    def _weighted_sum_jit(vre, vim, weights, size):  # pragma: no cover
        n_nodes = vre.shape[0]
        bre = np.zeros(size)
        bim = np.zeros(size)
        for k in range(n_nodes):
            bre[k] = vre[k] * weights[k]
            bim[k] = vim[k] * weights[k]
        half = size
        while half > 1:
            half >>= 1
            for k2 in range(half):
                bre[k2] = bre[k2] + bre[k2 + half]
                bim[k2] = bim[k2] + bim[k2 + half]
        return complex(bre[0], bim[0])

    def set_threads(count: int) -> None:
        limit = numba.config.NUMBA_NUM_THREADS
        numba.set_num_threads(min(max(1, int(count)), limit))

else:

    def set_threads(count: int) -> None:  # noqa: ARG001 - numpy path is serial
        return None


def pair_integrals(F, G, dens):
    """Batched sesquilinear node sums ``out[r, c] = sum_k conj(G[r,k]) F[c,k] dens[k]``.

    Parameters
    ----------
    F : (C, K) complex array, the linear-argument rows.
    G : (R, K) complex array, the conjugated-argument rows.
    dens : (K,) complex array, per-node density (quadrature weight included).

    The reduction over ``k`` uses the fixed index-ordered pairwise tree, so
    the result is independent of thread count and backend, bit for bit.
    """
    F = np.ascontiguousarray(F, dtype=np.complex128)
    G = np.ascontiguousarray(G, dtype=np.complex128)
    dens = np.ascontiguousarray(dens, dtype=np.complex128)
    if F.ndim != 2 or G.ndim != 2 or F.shape[1] != G.shape[1]:
        raise ValueError("F and G must be 2-d with a shared node axis")
    if dens.shape != (F.shape[1],):
        raise ValueError("density length must match the node axis")
    if BACKEND == "numba":
        out = np.empty((G.shape[0], F.shape[0]), dtype=np.complex128)
        _pair_integrals_jit(F, G, dens, out, _padded_size(F.shape[1]))
        return out
    return _pair_integrals_numpy(F, G, dens)


def weighted_sum(values, weights):
    """Deterministic ``sum_k values[k] * weights[k]`` (weights real)."""
    values = np.ascontiguousarray(values, dtype=np.complex128)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if values.shape != weights.shape or values.ndim != 1:
        raise ValueError("values and weights must be matching 1-d arrays")
    if BACKEND == "numba":
        vre = np.ascontiguousarray(values.real)
        vim = np.ascontiguousarray(values.imag)
        return _weighted_sum_jit(vre, vim, weights, _padded_size(values.shape[0]))
    return _weighted_sum_numpy(values, weights)


def backend_info() -> dict:
    info = {"backend": BACKEND}
    if BACKEND == "numba":
        import numba

        info["numba_version"] = numba.__version__
    return info
