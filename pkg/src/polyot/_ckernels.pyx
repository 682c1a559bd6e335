# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``.

Same algorithms, same floating-point expression order.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, ceil, fabs, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


def sinkhorn_log(double[:, ::1] C, double[::1] log_a, double[::1] log_b, double eps,
                 f0, g0, long max_iter, double tol):
    cdef Py_ssize_t n = C.shape[0], m = C.shape[1]
    cdef Py_ssize_t i, j
    cdef double[::1] f = np.array(f0, dtype=np.float64)
    cdef double[::1] g = np.array(g0, dtype=np.float64)
    cdef double[::1] f_new = np.empty(n, dtype=np.float64)
    cdef double inv = 1.0 / eps
    cdef double zmax, s, z, r, residual = INFINITY
    cdef long it = 0
    cdef bint converged = False

    while True:
        for i in range(n):
            zmax = -INFINITY
            for j in range(m):
                z = (g[j] - C[i, j]) * inv
                if z > zmax:
                    zmax = z
            s = 0.0
            for j in range(m):
                s += exp((g[j] - C[i, j]) * inv - zmax)
            f_new[i] = eps * (log_a[i] - zmax - log(s))
        if it > 0:
            residual = 0.0
            for i in range(n):
                r = exp(log_a[i]) * fabs(expm1((f[i] - f_new[i]) * inv))
                if r > residual:
                    residual = r
            if residual <= tol:
                converged = True
                break
        if it >= max_iter:
            break
        for i in range(n):
            f[i] = f_new[i]
        for j in range(m):
            zmax = -INFINITY
            for i in range(n):
                z = (f[i] - C[i, j]) * inv
                if z > zmax:
                    zmax = z
            s = 0.0
            for i in range(n):
                s += exp((f[i] - C[i, j]) * inv - zmax)
            g[j] = eps * (log_b[j] - zmax - log(s))
        it += 1

    return np.asarray(f), np.asarray(g), it, converged, residual


cdef void _sort(double* v, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t a, b
    cdef double t
    for a in range(1, k):
        t = v[a]
        b = a - 1
        while b >= 0 and v[b] > t:
            v[b + 1] = v[b]
            b -= 1
        v[b + 1] = t


def scanline_fill(xs_in, ys_in, Py_ssize_t width, Py_ssize_t height):
    cdef double[::1] xs = np.ascontiguousarray(xs_in, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(ys_in, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    out = np.zeros((height, width), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] mask = out
    cdef double* cross = <double*> malloc((n + 1) * sizeof(double))
    if cross == NULL:
        raise MemoryError()
    cdef Py_ssize_t r, e, e1, k, p, c, start, stop
    cdef double yc, x0, y0, x1, y1, ylo, yhi, xc, lo, hi
    try:
        with nogil:
            for r in range(height):
                yc = r + 0.5
                k = 0
                for e in range(n):
                    e1 = e + 1
                    if e1 == n:
                        e1 = 0
                    x0 = xs[e]
                    y0 = ys[e]
                    x1 = xs[e1]
                    y1 = ys[e1]
                    if y0 < y1:
                        ylo = y0
                        yhi = y1
                    else:
                        ylo = y1
                        yhi = y0
                    if ylo <= yc and yc < yhi:
                        xc = x0 + (yc - y0) * (x1 - x0) / (y1 - y0)
                        cross[k] = xc
                        k += 1
                if k < 2:
                    continue
                _sort(cross, k)
                p = 0
                while p + 1 < k:
                    lo = ceil(cross[p] - 0.5)
                    hi = ceil(cross[p + 1] - 0.5)
                    if lo < 0:
                        lo = 0
                    if lo > width:
                        lo = width
                    if hi < 0:
                        hi = 0
                    if hi > width:
                        hi = width
                    start = <Py_ssize_t> lo
                    stop = <Py_ssize_t> hi
                    for c in range(start, stop):
                        mask[r, c] = 1
                    p += 2
    finally:
        free(cross)
    return out
