# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled temporal convolution kernels; same contract as ``_fallback``.

Unfolding and folding run in C; the per-group products go straight to BLAS
``dgemm``.
"""

import numpy as np
from scipy.linalg.cython_blas cimport dgemm


cdef void _gemm(bint trans_a, bint trans_b, int M, int N, int K,
                double* A, double* B, double* C, double beta) noexcept nogil:
    # Row-major C[M, N] = op(A)[M, K] @ op(B)[K, N] + beta * C, computed as the
    # column-major product C^T = op(B)^T @ op(A)^T.
    cdef char ta = b'T' if trans_b else b'N'
    cdef char tb = b'T' if trans_a else b'N'
    cdef int ldb = K if trans_b else N
    cdef int lda = M if trans_a else K
    cdef double one = 1.0
    dgemm(&ta, &tb, &N, &M, &K, &one, B, &ldb, A, &lda, &beta, C, &N)


cdef void _unfold(const double[:, :, :, ::1] x, Py_ssize_t g, Py_ssize_t k,
                  double[:, ::1] cols) noexcept nogil:
    # cols[i * k + j, n * T + t] = x[n, g, i, t + j - pad], zero outside [0, T)
    cdef Py_ssize_t N = x.shape[0], C_in = x.shape[2], T = x.shape[3]
    cdef Py_ssize_t pad = (k - 1) // 2
    cdef Py_ssize_t n, i, j, t, src
    for i in range(C_in):
        for j in range(k):
            for n in range(N):
                for t in range(T):
                    src = t + j - pad
                    if 0 <= src < T:
                        cols[i * k + j, n * T + t] = x[n, g, i, src]
                    else:
                        cols[i * k + j, n * T + t] = 0.0


def conv1d_forward(const double[:, :, :, ::1] x,
                   const double[:, :, :, ::1] weight,
                   const double[:, ::1] bias):
    cdef Py_ssize_t N = x.shape[0], G = x.shape[1], C_in = x.shape[2], T = x.shape[3]
    cdef Py_ssize_t C_out = weight.shape[1], k = weight.shape[3]
    cdef Py_ssize_t CK = C_in * k, NT = N * T
    cdef Py_ssize_t g, o, n, t
    out_arr = np.empty((N, G, C_out, T), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, ::1] cols = np.empty((CK, NT), dtype=np.float64)
    cdef double[:, ::1] res = np.empty((C_out, NT), dtype=np.float64)
    cdef const double[:, :, ::1] w = np.asarray(weight).reshape(G, C_out, CK)
    with nogil:
        for g in range(G):
            _unfold(x, g, k, cols)
            _gemm(False, False, <int>C_out, <int>NT, <int>CK, <double*>&w[g, 0, 0], &cols[0, 0], &res[0, 0], 0.0)
            for n in range(N):
                for o in range(C_out):
                    for t in range(T):
                        out[n, g, o, t] = res[o, n * T + t] + bias[g, o]
    return out_arr


def conv1d_backward(const double[:, :, :, ::1] x,
                    const double[:, :, :, ::1] weight,
                    const double[:, :, :, ::1] grad_out):
    cdef Py_ssize_t N = x.shape[0], G = x.shape[1], C_in = x.shape[2], T = x.shape[3]
    cdef Py_ssize_t C_out = weight.shape[1], k = weight.shape[3]
    cdef Py_ssize_t CK = C_in * k, NT = N * T
    cdef Py_ssize_t pad = (k - 1) // 2
    cdef Py_ssize_t g, o, n, t, i, j, src
    cdef double acc
    gx_arr = np.zeros((N, G, C_in, T), dtype=np.float64)
    gw_arr = np.empty((G, C_out, C_in, k), dtype=np.float64)
    gb_arr = np.empty((G, C_out), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr.reshape(G, C_out, CK)
    cdef double[:, ::1] gb = gb_arr
    cdef double[:, ::1] cols = np.empty((CK, NT), dtype=np.float64)
    cdef double[:, ::1] dcols = np.empty((CK, NT), dtype=np.float64)
    cdef double[:, ::1] dres = np.empty((C_out, NT), dtype=np.float64)
    cdef const double[:, :, ::1] w = np.asarray(weight).reshape(G, C_out, CK)
    with nogil:
        for g in range(G):
            for o in range(C_out):
                acc = 0.0
                for n in range(N):
                    for t in range(T):
                        dres[o, n * T + t] = grad_out[n, g, o, t]
                        acc = acc + grad_out[n, g, o, t]
                gb[g, o] = acc
            _unfold(x, g, k, cols)
            # grad_weight[g] = dres @ cols^T ; dcols = w[g]^T @ dres
            _gemm(False, True, <int>C_out, <int>CK, <int>NT, &dres[0, 0], &cols[0, 0], &gw[g, 0, 0], 0.0)
            _gemm(True, False, <int>CK, <int>NT, <int>C_out, <double*>&w[g, 0, 0], &dres[0, 0], &dcols[0, 0], 0.0)
            for i in range(C_in):
                for j in range(k):
                    for n in range(N):
                        for t in range(T):
                            src = t + j - pad
                            if 0 <= src < T:
                                gx[n, g, i, src] += dcols[i * k + j, n * T + t]
    return gx_arr, gw_arr, gb_arr
