# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Fused LSTM sequence forward / backward, BLAS-backed.

Mirrors the pure numpy backend: time-major (H, B, feature) float64 arrays,
fused gate layout [i | f | o | g], recurrent weight rows first.  All matrix
products go through dgemm; the per-step elementwise work runs in C loops.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void _gemm_nn(int M, int N, int K, double alpha, double* A, int lda,
                          double* B, int ldb, double beta, double* C, int ldc) noexcept nogil:
    # row-major C[M,N] = alpha * A[M,K] @ B[K,N] + beta * C
    dgemm("N", "N", &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)


cdef inline void _gemm_nt(int M, int N, int K, double alpha, double* A, int lda,
                          double* B, int ldb, double beta, double* C, int ldc) noexcept nogil:
    # row-major C[M,N] = alpha * A[M,K] @ B[N,K]^T + beta * C
    dgemm("T", "N", &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)


cdef inline void _gemm_tn(int M, int N, int K, double alpha, double* A, int lda,
                          double* B, int ldb, double beta, double* C, int ldc) noexcept nogil:
    # row-major C[M,N] = alpha * A[K,M]^T @ B[K,N] + beta * C
    dgemm("N", "T", &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)


cdef inline double _sigmoid(double z) noexcept nogil:
    return 1.0 / (1.0 + exp(-z))


def seq_forward(double[:, :, ::1] xs, double[:, ::1] w, double[::1] b,
                double[:, ::1] h0, double[:, ::1] c0):
    cdef int H = xs.shape[0]
    cdef int B = xs.shape[1]
    cdef int d = xs.shape[2]
    cdef int m4 = w.shape[1]
    cdef int m = m4 // 4
    cdef int t, bi, j

    h_seq_np = np.empty((H, B, m))
    c_seq_np = np.empty((H, B, m))
    gates_np = np.empty((H, B, m4))
    cdef double[:, :, ::1] h_seq = h_seq_np
    cdef double[:, :, ::1] c_seq = c_seq_np
    cdef double[:, :, ::1] gates = gates_np

    cdef double* wp = &w[0, 0]
    cdef double* xp = &xs[0, 0, 0]
    cdef double* gp = &gates[0, 0, 0]
    cdef double* hp
    cdef double zi, zf, zo, zg, ii, ff, oo, gg, cc, cp

    with nogil:
        # input contribution for all steps in one product
        _gemm_nn(H * B, m4, d, 1.0, xp, d, wp + m * m4, m4, 0.0, gp, m4)
        for t in range(H):
            hp = &h0[0, 0] if t == 0 else &h_seq[t - 1, 0, 0]
            _gemm_nn(B, m4, m, 1.0, hp, m, wp, m4, 1.0, &gates[t, 0, 0], m4)
            for bi in range(B):
                for j in range(m):
                    zi = gates[t, bi, j] + b[j]
                    zf = gates[t, bi, m + j] + b[m + j]
                    zo = gates[t, bi, 2 * m + j] + b[2 * m + j]
                    zg = gates[t, bi, 3 * m + j] + b[3 * m + j]
                    ii = _sigmoid(zi)
                    ff = _sigmoid(zf)
                    oo = _sigmoid(zo)
                    gg = tanh(zg)
                    cp = c0[bi, j] if t == 0 else c_seq[t - 1, bi, j]
                    cc = ff * cp + ii * gg
                    gates[t, bi, j] = ii
                    gates[t, bi, m + j] = ff
                    gates[t, bi, 2 * m + j] = oo
                    gates[t, bi, 3 * m + j] = gg
                    c_seq[t, bi, j] = cc
                    h_seq[t, bi, j] = tanh(cc) * oo
    return h_seq_np, c_seq_np, gates_np


def seq_backward(double[:, :, ::1] dh_seq, double[:, :, ::1] xs, double[:, ::1] w,
                 double[:, :, ::1] gates, double[:, :, ::1] c_seq,
                 double[:, :, ::1] h_seq, double[:, ::1] h0, double[:, ::1] c0):
    cdef int H = xs.shape[0]
    cdef int B = xs.shape[1]
    cdef int d = xs.shape[2]
    cdef int m4 = w.shape[1]
    cdef int m = m4 // 4
    cdef int t, bi, j

    dz_np = np.empty((H, B, m4))
    dxs_np = np.empty((H, B, d))
    dw_np = np.empty_like(np.asarray(w))
    db_np = np.zeros(m4)
    dh_next_np = np.zeros((B, m))
    dc_next_np = np.zeros((B, m))
    cdef double[:, :, ::1] dz = dz_np
    cdef double[:, :, ::1] dxs = dxs_np
    cdef double[:, ::1] dw = dw_np
    cdef double[::1] db = db_np
    cdef double[:, ::1] dh_next = dh_next_np
    cdef double[:, ::1] dc_next = dc_next_np

    cdef double* wp = &w[0, 0]
    cdef double ii, ff, oo, gg, cc, cp, tc, dh, dc
    cdef double di, df, do_, dg

    with nogil:
        for t in range(H - 1, -1, -1):
            for bi in range(B):
                for j in range(m):
                    ii = gates[t, bi, j]
                    ff = gates[t, bi, m + j]
                    oo = gates[t, bi, 2 * m + j]
                    gg = gates[t, bi, 3 * m + j]
                    cc = c_seq[t, bi, j]
                    cp = c0[bi, j] if t == 0 else c_seq[t - 1, bi, j]
                    tc = tanh(cc)
                    dh = dh_seq[t, bi, j] + dh_next[bi, j]
                    dc = dc_next[bi, j] + dh * oo * (1.0 - tc * tc)
                    di = dc * gg
                    df = dc * cp
                    do_ = dh * tc
                    dg = dc * ii
                    dz[t, bi, j] = di * ii * (1.0 - ii)
                    dz[t, bi, m + j] = df * ff * (1.0 - ff)
                    dz[t, bi, 2 * m + j] = do_ * oo * (1.0 - oo)
                    dz[t, bi, 3 * m + j] = dg * (1.0 - gg * gg)
                    dc_next[bi, j] = dc * ff
            # dh_next = dz[t] @ w_h^T feeds the previous step
            _gemm_nt(B, m, m4, 1.0, &dz[t, 0, 0], m4, wp, m4, 0.0, &dh_next[0, 0], m)
        # bulk gradients
        _gemm_nt(H * B, d, m4, 1.0, &dz[0, 0, 0], m4, wp + m * m4, m4, 0.0, &dxs[0, 0, 0], d)
        _gemm_tn(d, m4, H * B, 1.0, &xs[0, 0, 0], d, &dz[0, 0, 0], m4, 0.0, &dw[m, 0], m4)
        _gemm_tn(m, m4, B, 1.0, &h0[0, 0], m, &dz[0, 0, 0], m4, 0.0, &dw[0, 0], m4)
        if H > 1:
            _gemm_tn(m, m4, (H - 1) * B, 1.0, &h_seq[0, 0, 0], m,
                     &dz[1, 0, 0], m4, 1.0, &dw[0, 0], m4)
        for t in range(H):
            for bi in range(B):
                for j in range(m4):
                    db[j] += dz[t, bi, j]
    return dxs_np, dw_np, db_np, dh_next_np, dc_next_np
