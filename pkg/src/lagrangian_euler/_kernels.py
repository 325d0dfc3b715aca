"""Hot pointwise kernels with a numba path and a pure-numpy fallback.

Set ``LAGRANGIAN_EULER_DISABLE_NUMBA=1`` before import to force the numpy
implementations.  Both paths share signatures and are tested against each
other.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("LAGRANGIAN_EULER_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLE:
        raise ImportError("numba disabled by environment")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# -- numpy reference implementations -------------------------------------------------


def det3_numpy(m: np.ndarray) -> np.ndarray:
    """Pointwise determinant of a (3, 3, N) stack of matrices."""
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def cofactor3_numpy(m: np.ndarray) -> np.ndarray:
    """Pointwise cofactor matrix of a (3, 3, N) stack, so that m^T cof = det * I."""
    c = np.empty_like(m)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            c[i, j] = m[i1, j1] * m[i2, j2] - m[i1, j2] * m[i2, j1]
    return c


def trig_sum_numpy(coef: np.ndarray, kvals: np.ndarray, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Evaluate sum_k coef[c, k1, k2, k3] exp(i k.x) at points (P, 3); real part, shape (C, P)."""
    ncomp = coef.shape[0]
    out = np.empty((ncomp, points.shape[0]))
    for start in range(0, points.shape[0], chunk):
        p = points[start:start + chunk]
        ex = np.exp(1j * np.multiply.outer(p[:, 0], kvals))
        ey = np.exp(1j * np.multiply.outer(p[:, 1], kvals))
        ez = np.exp(1j * np.multiply.outer(p[:, 2], kvals))
        val = np.einsum("cabd,pa,pb,pd->cp", coef, ex, ey, ez, optimize=True)
        out[:, start:start + chunk] = val.real
    return out


# -- numba implementations -----------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _det3_jit(m):
        n = m.shape[2]
        out = np.empty(n)
        for p in range(n):
            out[p] = (
                m[0, 0, p] * (m[1, 1, p] * m[2, 2, p] - m[1, 2, p] * m[2, 1, p])
                - m[0, 1, p] * (m[1, 0, p] * m[2, 2, p] - m[1, 2, p] * m[2, 0, p])
                + m[0, 2, p] * (m[1, 0, p] * m[2, 1, p] - m[1, 1, p] * m[2, 0, p])
            )
        return out

    @njit(cache=True)
    def _cofactor3_jit(m):
        n = m.shape[2]
        c = np.empty_like(m)
        for p in range(n):
            for i in range(3):
                i1 = (i + 1) % 3
                i2 = (i + 2) % 3
                for j in range(3):
                    j1 = (j + 1) % 3
                    j2 = (j + 2) % 3
                    c[i, j, p] = m[i1, j1, p] * m[i2, j2, p] - m[i1, j2, p] * m[i2, j1, p]
        return c

    @njit(cache=True)
    def _trig_sum_jit(coef, kvals, points):
        ncomp = coef.shape[0]
        nk = kvals.shape[0]
        npts = points.shape[0]
        out = np.empty((ncomp, npts))
        ex = np.empty(nk, dtype=np.complex128)
        ey = np.empty(nk, dtype=np.complex128)
        ez = np.empty(nk, dtype=np.complex128)
        for p in range(npts):
            for a in range(nk):
                ex[a] = np.exp(1j * kvals[a] * points[p, 0])
                ey[a] = np.exp(1j * kvals[a] * points[p, 1])
                ez[a] = np.exp(1j * kvals[a] * points[p, 2])
            for c in range(ncomp):
                acc = 0.0
                for a in range(nk):
                    row = 0.0j
                    for b in range(nk):
                        inner = 0.0j
                        for d in range(nk):
                            inner += coef[c, a, b, d] * ez[d]
                        row += inner * ey[b]
                    acc += (row * ex[a]).real
                out[c, p] = acc
        return out


def det3(m: np.ndarray) -> np.ndarray:
    """Pointwise determinant; accepts (3, 3, ...) and returns the trailing shape."""
    shape = m.shape[2:]
    flat = np.ascontiguousarray(m.reshape(3, 3, -1), dtype=float)
    out = _det3_jit(flat) if HAS_NUMBA else det3_numpy(flat)
    return out.reshape(shape)


def cofactor3(m: np.ndarray) -> np.ndarray:
    """Pointwise cofactor matrix; accepts (3, 3, ...)."""
    flat = np.ascontiguousarray(m.reshape(3, 3, -1), dtype=float)
    out = _cofactor3_jit(flat) if HAS_NUMBA else cofactor3_numpy(flat)
    return out.reshape(m.shape)


def trig_sum(coef: np.ndarray, kvals: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Direct trigonometric summation used by spectral interpolation."""
    coef = np.ascontiguousarray(coef, dtype=np.complex128)
    kvals = np.ascontiguousarray(kvals, dtype=float)
    points = np.ascontiguousarray(points, dtype=float)
    if HAS_NUMBA:
        return _trig_sum_jit(coef, kvals, points)
    return trig_sum_numpy(coef, kvals, points)
