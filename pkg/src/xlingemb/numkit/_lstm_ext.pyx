# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM recurrence. Same contract as ``_lstm_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double x) nogil:
    return 0.5 * (tanh(0.5 * x) + 1.0)


cdef void _gemm_rowmajor(int m, int n, int k, double *a, double *b,
                         double *c, double beta) nogil:
    # C[m,n] = A[m,k] @ B[k,n] + beta * C, all row-major contiguous
    cdef char tr = b'N'
    cdef double one = 1.0
    dgemm(&tr, &tr, &n, &m, &k, &one, b, &n, a, &k, &beta, c, &n)


cdef void _gemm_rowmajor_bt(int m, int n, int k, double *a, double *b,
                            double *c) nogil:
    # C[m,n] = A[m,k] @ B[n,k]^T, row-major contiguous
    cdef char tn = b'T'
    cdef char nn = b'N'
    cdef double one = 1.0
    cdef double zero = 0.0
    dgemm(&tn, &nn, &n, &m, &k, &one, b, &k, a, &k, &zero, c, &n)


def lstm_forward(xw_in, wh_in):
    cdef cnp.ndarray[double, ndim=3, mode="c"] xw = np.ascontiguousarray(xw_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef int T = xw.shape[0], B = xw.shape[1], H4 = xw.shape[2]
    cdef int H = H4 // 4
    cdef cnp.ndarray[double, ndim=3, mode="c"] hs = np.zeros((T, B, H))
    cdef cnp.ndarray[double, ndim=3, mode="c"] cs = np.zeros((T, B, H))
    cdef cnp.ndarray[double, ndim=3, mode="c"] gates = np.empty((T, B, H4))
    cdef cnp.ndarray[double, ndim=2, mode="c"] zero = np.zeros((B, H))
    cdef double *z
    cdef double *cp
    cdef double *hn
    cdef double *cn
    cdef int t, bi, j
    if T == 0 or B == 0:
        return hs, cs, gates
    with nogil:
        for t in range(T):
            z = &gates[t, 0, 0]
            memcpy(z, &xw[t, 0, 0], B * H4 * sizeof(double))
            if t > 0:
                _gemm_rowmajor(B, H4, H, &hs[t - 1, 0, 0], &wh[0, 0], z, 1.0)
                cp = &cs[t - 1, 0, 0]
            else:
                cp = &zero[0, 0]
            hn = &hs[t, 0, 0]
            cn = &cs[t, 0, 0]
            for bi in range(B):
                _activate(z + bi * H4, H)
                _cell(z + bi * H4, cp + bi * H, cn + bi * H, hn + bi * H, H)
    return hs, cs, gates


cdef inline void _activate(double *z, int H) nogil:
    cdef int j
    for j in range(2 * H):
        z[j] = 0.5 * (tanh(0.5 * z[j]) + 1.0)
    for j in range(2 * H, 3 * H):
        z[j] = tanh(z[j])
    for j in range(3 * H, 4 * H):
        z[j] = 0.5 * (tanh(0.5 * z[j]) + 1.0)


cdef inline void _cell(double *a, double *cp, double *cn, double *hn, int H) nogil:
    cdef int j
    for j in range(H):
        cn[j] = a[H + j] * cp[j] + a[j] * a[2 * H + j]
    for j in range(H):
        hn[j] = a[3 * H + j] * tanh(cn[j])


cdef inline void _cell_backward(double *a, double *c, double *cp, double *dh,
                                double *dhs, double *dc, double *tc, double *dz,
                                int H) nogil:
    cdef int j
    cdef double dhv, dcv
    for j in range(H):
        tc[j] = tanh(c[j])
    for j in range(H):
        dhv = dh[j] + dhs[j]
        dcv = dc[j] + dhv * a[3 * H + j] * (1.0 - tc[j] * tc[j])
        dz[j] = dcv * a[2 * H + j] * a[j] * (1.0 - a[j])
        dz[H + j] = dcv * cp[j] * a[H + j] * (1.0 - a[H + j])
        dz[2 * H + j] = dcv * a[j] * (1.0 - a[2 * H + j] * a[2 * H + j])
        dz[3 * H + j] = dhv * tc[j] * a[3 * H + j] * (1.0 - a[3 * H + j])
        dc[j] = dcv * a[H + j]


def lstm_backward(dhs_in, hs_in, cs_in, gates_in, wh_in):
    cdef cnp.ndarray[double, ndim=3, mode="c"] dhs = np.ascontiguousarray(dhs_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] hs = np.ascontiguousarray(hs_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] cs = np.ascontiguousarray(cs_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] gates = np.ascontiguousarray(gates_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef int T = hs.shape[0], B = hs.shape[1], H = hs.shape[2]
    cdef int H4 = 4 * H
    cdef cnp.ndarray[double, ndim=3, mode="c"] dxw = np.zeros((T, B, H4))
    cdef cnp.ndarray[double, ndim=2, mode="c"] dh = np.zeros((B, H))
    cdef cnp.ndarray[double, ndim=2, mode="c"] dc = np.zeros((B, H))
    cdef cnp.ndarray[double, ndim=2, mode="c"] zero = np.zeros((B, H))
    cdef cnp.ndarray[double, ndim=1, mode="c"] tc = np.empty(max(H, 1))
    cdef double *cp
    cdef double *dz
    cdef int t, bi
    if T == 0 or B == 0:
        return dxw, np.zeros((H, H4))
    with nogil:
        for t in range(T - 1, -1, -1):
            dz = &dxw[t, 0, 0]
            cp = &cs[t - 1, 0, 0] if t > 0 else &zero[0, 0]
            for bi in range(B):
                _cell_backward(&gates[t, bi, 0], &cs[t, bi, 0], cp + bi * H,
                               &dh[bi, 0], &dhs[t, bi, 0], &dc[bi, 0], &tc[0],
                               dz + bi * H4, H)
            # dh = dz @ wh^T : (B, 4H) x (4H, H)
            _gemm_rowmajor_bt(B, H, H4, dz, &wh[0, 0], &dh[0, 0])
    h_prev = np.concatenate([np.zeros((1, B, H)), hs[:-1]], axis=0)
    dwh = h_prev.reshape(-1, H).T @ dxw.reshape(-1, H4)
    return dxw, dwh
