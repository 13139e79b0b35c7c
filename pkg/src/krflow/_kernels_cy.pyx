# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise matrix kernels (hot loops of the flow integrator).

Mirrors _kernels_py exactly; the numpy module is the reference
implementation and the parity test in tests/test_kernels.py keeps the
two backends interchangeable.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef double complex cplx


def det_herm(cplx[:, :, ::1] g):
    cdef Py_ssize_t p, num = g.shape[0]
    cdef int n = g.shape[1]
    out_arr = np.empty(num, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef cplx b
    if n == 1:
        for p in range(num):
            out[p] = g[p, 0, 0].real
    else:
        for p in range(num):
            b = g[p, 0, 1]
            out[p] = g[p, 0, 0].real * g[p, 1, 1].real - (b.real * b.real + b.imag * b.imag)
    return out_arr


def det_sum_ratio(cplx[:, :, ::1] g, cplx[:, :, ::1] h):
    cdef Py_ssize_t p, num = g.shape[0]
    cdef int n = g.shape[1]
    out_arr = np.empty(num, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double a0, d0, a1, d1
    cdef cplx b0, b1
    if n == 1:
        for p in range(num):
            out[p] = (g[p, 0, 0].real + h[p, 0, 0].real) / g[p, 0, 0].real
    else:
        for p in range(num):
            a0 = g[p, 0, 0].real
            d0 = g[p, 1, 1].real
            b0 = g[p, 0, 1]
            a1 = a0 + h[p, 0, 0].real
            d1 = d0 + h[p, 1, 1].real
            b1 = b0 + h[p, 0, 1]
            out[p] = (a1 * d1 - (b1.real * b1.real + b1.imag * b1.imag)) / \
                     (a0 * d0 - (b0.real * b0.real + b0.imag * b0.imag))
    return out_arr


def inv_herm(cplx[:, :, ::1] g):
    cdef Py_ssize_t p, num = g.shape[0]
    cdef int n = g.shape[1]
    out_arr = np.empty((num, n, n), dtype=np.complex128)
    cdef cplx[:, :, ::1] out = out_arr
    cdef double det
    cdef cplx b
    if n == 1:
        for p in range(num):
            out[p, 0, 0] = 1.0 / g[p, 0, 0].real
    else:
        for p in range(num):
            b = g[p, 0, 1]
            det = g[p, 0, 0].real * g[p, 1, 1].real - (b.real * b.real + b.imag * b.imag)
            out[p, 0, 0] = g[p, 1, 1] / det
            out[p, 1, 1] = g[p, 0, 0] / det
            out[p, 0, 1] = -g[p, 0, 1] / det
            out[p, 1, 0] = -g[p, 1, 0] / det
    return out_arr


def trace_pair(cplx[:, :, ::1] a, cplx[:, :, ::1] b):
    cdef Py_ssize_t p, num = a.shape[0]
    cdef int n = a.shape[1], j, k
    out_arr = np.empty(num, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef cplx acc
    for p in range(num):
        acc = 0
        for j in range(n):
            for k in range(n):
                acc = acc + a[p, j, k] * b[p, k, j]
        out[p] = acc.real
    return out_arr


def quad_form(cplx[:, :, ::1] g, cplx[:, ::1] v):
    cdef Py_ssize_t p, num = g.shape[0]
    cdef int n = g.shape[1], j, k
    out_arr = np.empty(num, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef cplx acc
    for p in range(num):
        acc = 0
        for j in range(n):
            for k in range(n):
                acc = acc + g[p, j, k] * v[p, j].conjugate() * v[p, k]
        out[p] = acc.real
    return out_arr


def third_contract(cplx[:, :, ::1] ginv, cplx[:, :, :, ::1] t):
    # staged contraction, one raised index at a time: the per-point work is
    # O(n^4) instead of the naive O(n^6)
    cdef Py_ssize_t p, num = ginv.shape[0]
    cdef int n = ginv.shape[1], i, j, k, l, m, e
    out_arr = np.empty(num, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef cplx acc, s
    cdef cplx u[2][2][2]
    cdef cplx v[2][2][2]
    for p in range(num):
        for i in range(n):
            for l in range(n):
                for e in range(n):
                    s = 0
                    for m in range(n):
                        s = s + ginv[p, e, m] * t[p, i, l, m]
                    u[i][l][e] = s
        for i in range(n):
            for k in range(n):
                for e in range(n):
                    s = 0
                    for l in range(n):
                        s = s + ginv[p, l, k] * u[i][l][e]
                    v[i][k][e] = s
        acc = 0
        for j in range(n):
            for i in range(n):
                s = 0
                for k in range(n):
                    for e in range(n):
                        s = s + v[i][k][e] * t[p, j, k, e].conjugate()
                acc = acc + ginv[p, j, i] * s
        out[p] = acc.real
    return out_arr


def eig_range_herm(cplx[:, :, ::1] g):
    cdef Py_ssize_t p, num = g.shape[0]
    cdef int n = g.shape[1]
    out_arr = np.empty((num, 2), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double mid, rad
    cdef cplx b
    if n == 1:
        for p in range(num):
            out[p, 0] = g[p, 0, 0].real
            out[p, 1] = g[p, 0, 0].real
    else:
        for p in range(num):
            b = g[p, 0, 1]
            mid = 0.5 * (g[p, 0, 0].real + g[p, 1, 1].real)
            rad = ((0.5 * (g[p, 0, 0].real - g[p, 1, 1].real)) ** 2
                   + b.real * b.real + b.imag * b.imag) ** 0.5
            out[p, 0] = mid - rad
            out[p, 1] = mid + rad
    return out_arr
