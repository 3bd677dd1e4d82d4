# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM sequence kernels; same contract as ``_lstm_py``.

BLAS does the recurrent matrix products; the per-row gate arithmetic lives
in ``_lstm_math.h``.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.string cimport memset
from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()


cdef extern from "_lstm_math.h" nogil:
    void dc_sigmoid_row_f(float *x, Py_ssize_t n)
    void dc_sigmoid_row_d(double *x, Py_ssize_t n)
    void dc_tanh_row_f(float *x, Py_ssize_t n)
    void dc_tanh_row_d(double *x, Py_ssize_t n)
    void dc_cell_forward_f(float *g, const float *c_prev, const float *h_prev,
                           float *c_new, float *h_new, Py_ssize_t H, int active)
    void dc_cell_forward_d(double *g, const double *c_prev, const double *h_prev,
                           double *c_new, double *h_new, Py_ssize_t H, int active)
    void dc_cell_backward_f(const float *g, const float *c_prev, const float *c_new,
                            const float *dh_ext, const float *dh_carry, float *dc,
                            float *dz, Py_ssize_t H)
    void dc_cell_backward_d(const double *g, const double *c_prev, const double *c_new,
                            const double *dh_ext, const double *dh_carry, double *dc,
                            double *dz, Py_ssize_t H)


cdef inline void _cell_forward(floating *g, floating *c_prev, floating *h_prev, floating *c_new,
                               floating *h_new, Py_ssize_t H, int active) noexcept nogil:
    if floating is float:
        dc_cell_forward_f(g, c_prev, h_prev, c_new, h_new, H, active)
    else:
        dc_cell_forward_d(g, c_prev, h_prev, c_new, h_new, H, active)


cdef inline void _cell_backward(floating *g, floating *c_prev, floating *c_new, floating *dh_ext,
                                floating *dh_carry, floating *dc, floating *dz,
                                Py_ssize_t H) noexcept nogil:
    if floating is float:
        dc_cell_backward_f(g, c_prev, c_new, dh_ext, dh_carry, dc, dz, H)
    else:
        dc_cell_backward_d(g, c_prev, c_new, dh_ext, dh_carry, dc, dz, H)


cdef void _gemm(char *ta, char *tb, int m, int n, int k, floating alpha,
                floating *a, int lda, floating *b, int ldb, floating beta,
                floating *c, int ldc) noexcept nogil:
    if floating is float:
        sgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        dgemm(ta, tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def _forward(floating[:, ::1] mask, floating[:, ::1] Wh, floating[:, :, ::1] hs,
             floating[:, :, ::1] cs, floating[:, :, ::1] gates):
    """``gates`` holds the input projections on entry and activations on exit."""
    cdef Py_ssize_t T = gates.shape[0], B = gates.shape[1], G = gates.shape[2]
    cdef Py_ssize_t H = G // 4
    cdef Py_ssize_t t, b
    cdef char *tr = b"T"
    cdef char *nt = b"N"
    if T == 0 or B == 0:
        return
    with nogil:
        for t in range(T):
            # gates[t] += hs[t] @ Wh^T, written column-major
            _gemm(tr, nt, <int>G, <int>B, <int>H, 1.0, &Wh[0, 0], <int>H,
                  &hs[t, 0, 0], <int>H, 1.0, &gates[t, 0, 0], <int>G)
            for b in range(B):
                _cell_forward(&gates[t, b, 0], &cs[t, b, 0], &hs[t, b, 0],
                              &cs[t + 1, b, 0], &hs[t + 1, b, 0], H, mask[t, b] != 0)


def _backward(floating[:, :, ::1] dhs, floating[:, ::1] mask, floating[:, ::1] Wh,
              floating[:, :, ::1] cs, floating[:, :, ::1] gates,
              floating[:, :, ::1] dz, floating[:, ::1] dh, floating[:, ::1] dc,
              floating[:, ::1] dh_rec):
    cdef Py_ssize_t T = gates.shape[0], B = gates.shape[1], G = gates.shape[2]
    cdef Py_ssize_t H = G // 4
    cdef Py_ssize_t t, b, j
    cdef char *nt = b"N"
    if T == 0 or B == 0:
        return
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                if mask[t, b] != 0:
                    _cell_backward(&gates[t, b, 0], &cs[t, b, 0], &cs[t + 1, b, 0], &dhs[t, b, 0],
                                   &dh[b, 0], &dc[b, 0], &dz[t, b, 0], H)
                else:
                    # state was copied through this step: gradients pass straight back
                    for j in range(H):
                        dh[b, j] = dh[b, j] + dhs[t, b, j]
                    memset(&dz[t, b, 0], 0, G * sizeof(floating))
            # dh_rec = dz[t] @ Wh
            _gemm(nt, nt, <int>H, <int>B, <int>G, 1.0, &Wh[0, 0], <int>H,
                  &dz[t, 0, 0], <int>G, 0.0, &dh_rec[0, 0], <int>H)
            for b in range(B):
                if mask[t, b] != 0:
                    for j in range(H):
                        dh[b, j] = dh_rec[b, j]


def _apply(floating[::1] x, bint sigmoid):
    if x.shape[0] == 0:
        return
    with nogil:
        if floating is float:
            if sigmoid:
                dc_sigmoid_row_f(&x[0], x.shape[0])
            else:
                dc_tanh_row_f(&x[0], x.shape[0])
        else:
            if sigmoid:
                dc_sigmoid_row_d(&x[0], x.shape[0])
            else:
                dc_tanh_row_d(&x[0], x.shape[0])


def tanh_array(x):
    """Elementwise tanh with the kernel's own approximation (for testing)."""
    out = np.array(x, copy=True).ravel()
    _apply(out, False)
    return out.reshape(np.shape(x))


def sigmoid_array(x):
    """Elementwise logistic with the kernel's own approximation (for testing)."""
    out = np.array(x, copy=True).ravel()
    _apply(out, True)
    return out.reshape(np.shape(x))


def lstm_forward(xproj, mask, Wh):
    T, B, G = xproj.shape
    H = G // 4
    dtype = xproj.dtype
    gates = np.array(xproj, dtype=dtype, order="C", copy=True)
    mask = np.ascontiguousarray(mask, dtype=dtype)
    Wh = np.ascontiguousarray(Wh, dtype=dtype)
    hs = np.zeros((T + 1, B, H), dtype=dtype)
    cs = np.zeros((T + 1, B, H), dtype=dtype)
    _forward(mask, Wh, hs, cs, gates)
    return hs, cs, gates


def lstm_backward(dhs, mask, Wh, hs, cs, gates):
    T, B, G = gates.shape
    H = G // 4
    dtype = gates.dtype
    dz = np.zeros((T, B, G), dtype=dtype)
    dh = np.zeros((B, H), dtype=dtype)
    dc = np.zeros((B, H), dtype=dtype)
    dh_rec = np.zeros((B, H), dtype=dtype)
    _backward(np.ascontiguousarray(dhs, dtype=dtype), np.ascontiguousarray(mask, dtype=dtype),
              np.ascontiguousarray(Wh, dtype=dtype), np.ascontiguousarray(cs),
              np.ascontiguousarray(gates), dz, dh, dc, dh_rec)
    return dz
