"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``TRANSPORT_APPROX_NUMBA=0``
to force the numpy implementations (useful for debugging and for platforms
without numba). Both paths are kept importable as ``numpy_kernels`` and
``numba_kernels`` so tests and benchmarks can compare them directly.
"""

import os
from types import SimpleNamespace

import numpy as np

_CHUNK = 1 << 22  # max elements materialized per numpy block


# ---------------------------------------------------------------- numpy path


def _cc_weights_numpy(n):
    N = n - 1
    if N == 1:
        return np.array([1.0, 1.0])
    cos_table = np.cos(np.pi * np.arange(2 * N) / N)
    j = np.arange(1, N // 2 + 1)
    b = np.where(2 * j == N, 1.0, 2.0) / (4.0 * j * j - 1.0)
    k = np.arange(n)
    s = np.empty(n)
    rows = max(1, _CHUNK // max(len(j), 1))
    for start in range(0, n, rows):
        kk = k[start : start + rows]
        idx = np.outer(kk, 2 * j) % (2 * N)
        s[start : start + rows] = cos_table[idx] @ b
    c = np.full(n, 2.0)
    c[0] = c[-1] = 1.0
    return c / N * (1.0 - s)


def _legendre_table_numpy(n, x):
    x = np.asarray(x, dtype=float)
    P = np.empty((n + 1,) + x.shape)
    D = np.empty_like(P)
    P[0] = 1.0
    D[0] = 0.0
    if n >= 1:
        P[1] = x
        D[1] = 1.0
    for m in range(1, n):
        P[m + 1] = ((2 * m + 1) * x * P[m] - m * P[m - 1]) / (m + 1)
        D[m + 1] = D[m - 1] + (2 * m + 1) * P[m]
    return P, D


def _hermite_function_table_numpy(n, x):
    # orthonormal Hermite functions psi_m; one extra row feeds the derivative
    x = np.asarray(x, dtype=float)
    P = np.empty((n + 2,) + x.shape)
    P[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    P[1] = np.sqrt(2.0) * x * P[0]
    for m in range(1, n + 1):
        P[m + 1] = np.sqrt(2.0 / (m + 1)) * x * P[m] - np.sqrt(m / (m + 1)) * P[m - 1]
    D = np.empty((n + 1,) + x.shape)
    D[0] = -np.sqrt(0.5) * P[1]
    for m in range(1, n + 1):
        D[m] = np.sqrt(m / 2.0) * P[m - 1] - np.sqrt((m + 1) / 2.0) * P[m + 1]
    return P[: n + 1], D


def _hermite_poly_table_numpy(n, x):
    x = np.asarray(x, dtype=float)
    P = np.empty((n + 1,) + x.shape)
    D = np.empty_like(P)
    P[0] = 1.0
    D[0] = 0.0
    if n >= 1:
        P[1] = 2.0 * x
        D[1] = 2.0
    for m in range(1, n):
        P[m + 1] = 2.0 * x * P[m] - 2.0 * m * P[m - 1]
        D[m + 1] = 2.0 * (m + 1) * P[m]
    return P, D


def _gaussian_kernel_sum_numpy(a, b, gamma):
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    g2 = gamma * gamma
    total = 0.0
    rows = max(1, _CHUNK // max(len(b), 1))
    for start in range(0, len(a), rows):
        d = a[start : start + rows, None] - b[None, :]
        total += np.exp(-g2 * d * d).sum()
    return total


numpy_kernels = SimpleNamespace(
    cc_weights=_cc_weights_numpy,
    legendre_table=_legendre_table_numpy,
    hermite_function_table=_hermite_function_table_numpy,
    hermite_poly_table=_hermite_poly_table_numpy,
    gaussian_kernel_sum=_gaussian_kernel_sum_numpy,
)


# ---------------------------------------------------------------- numba path


def _build_numba_kernels():
    import numba

    # the TBB layer shipped with some distributions is too old; prefer the others
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    njit = numba.njit(cache=True)

    @njit
    def cc_weights(n):
        N = n - 1
        w = np.empty(n)
        if N == 1:
            w[0] = 1.0
            w[1] = 1.0
            return w
        cos_table = np.empty(2 * N)
        for m in range(2 * N):
            cos_table[m] = np.cos(np.pi * m / N)
        half = N // 2
        for k in range(n):
            s = 0.0
            for j in range(1, half + 1):
                b = 1.0 if 2 * j == N else 2.0
                s += b / (4.0 * j * j - 1.0) * cos_table[(2 * j * k) % (2 * N)]
            c = 1.0 if (k == 0 or k == N) else 2.0
            w[k] = c / N * (1.0 - s)
        return w

    # degree-outer loops keep every inner sweep contiguous in memory
    @njit
    def _legendre_flat(n, x):
        M = x.shape[0]
        P = np.empty((n + 1, M))
        D = np.empty((n + 1, M))
        for i in range(M):
            P[0, i] = 1.0
            D[0, i] = 0.0
        if n >= 1:
            for i in range(M):
                P[1, i] = x[i]
                D[1, i] = 1.0
        for m in range(1, n):
            a = (2 * m + 1) / (m + 1.0)
            c = m / (m + 1.0)
            for i in range(M):
                P[m + 1, i] = a * x[i] * P[m, i] - c * P[m - 1, i]
                D[m + 1, i] = D[m - 1, i] + (2 * m + 1) * P[m, i]
        return P, D

    @njit
    def _hermite_function_flat(n, x):
        M = x.shape[0]
        P = np.empty((n + 2, M))
        D = np.empty((n + 1, M))
        c0 = np.pi ** -0.25
        r2 = np.sqrt(2.0)
        for i in range(M):
            P[0, i] = c0 * np.exp(-0.5 * x[i] * x[i])
            P[1, i] = r2 * x[i] * P[0, i]
        for m in range(1, n + 1):
            a = np.sqrt(2.0 / (m + 1))
            c = np.sqrt(m / (m + 1.0))
            for i in range(M):
                P[m + 1, i] = a * x[i] * P[m, i] - c * P[m - 1, i]
        h = -np.sqrt(0.5)
        for i in range(M):
            D[0, i] = h * P[1, i]
        for m in range(1, n + 1):
            lo = np.sqrt(m / 2.0)
            hi = np.sqrt((m + 1) / 2.0)
            for i in range(M):
                D[m, i] = lo * P[m - 1, i] - hi * P[m + 1, i]
        return P[: n + 1], D

    @njit
    def _hermite_poly_flat(n, x):
        M = x.shape[0]
        P = np.empty((n + 1, M))
        D = np.empty((n + 1, M))
        for i in range(M):
            P[0, i] = 1.0
            D[0, i] = 0.0
        if n >= 1:
            for i in range(M):
                P[1, i] = 2.0 * x[i]
                D[1, i] = 2.0
        for m in range(1, n):
            for i in range(M):
                P[m + 1, i] = 2.0 * x[i] * P[m, i] - 2.0 * m * P[m - 1, i]
                D[m + 1, i] = 2.0 * (m + 1) * P[m, i]
        return P, D

    @numba.njit(cache=True, parallel=True)
    def _kernel_sum(a, b, g2):
        total = 0.0
        for i in numba.prange(a.shape[0]):
            ai = a[i]
            acc = 0.0
            for j in range(b.shape[0]):
                d = ai - b[j]
                acc += np.exp(-g2 * d * d)
            total += acc
        return total

    def _shaped(flat):
        def table(n, x):
            x = np.asarray(x, dtype=float)
            P, D = flat(n, np.ascontiguousarray(x.ravel()))
            return P.reshape((n + 1,) + x.shape), D.reshape((n + 1,) + x.shape)
        return table

    def gaussian_kernel_sum(a, b, gamma):
        a = np.ascontiguousarray(a, dtype=float)
        b = np.ascontiguousarray(b, dtype=float)
        return _kernel_sum(a, b, gamma * gamma)

    return SimpleNamespace(
        cc_weights=cc_weights,
        legendre_table=_shaped(_legendre_flat),
        hermite_function_table=_shaped(_hermite_function_flat),
        hermite_poly_table=_shaped(_hermite_poly_flat),
        gaussian_kernel_sum=gaussian_kernel_sum,
    )


try:
    numba_kernels = _build_numba_kernels()
except ImportError:
    numba_kernels = None

_want_numba = os.environ.get("TRANSPORT_APPROX_NUMBA", "1").lower() not in ("0", "false", "no", "off")

if _want_numba and numba_kernels is not None:
    BACKEND = "numba"
    _active = numba_kernels
else:
    BACKEND = "numpy"
    _active = numpy_kernels

cc_weights = _active.cc_weights
legendre_table = _active.legendre_table
hermite_function_table = _active.hermite_function_table
hermite_poly_table = _active.hermite_poly_table
gaussian_kernel_sum = _active.gaussian_kernel_sum
