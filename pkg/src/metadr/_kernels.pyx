# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MLP forward/backward kernels for the fixed two-layer tanh network.

Same call signatures as metadr._kernels_py. The batched matrix products go
through BLAS (scipy's C-level bindings); bias, tanh, and the elementwise
backward algebra are fused C loops. The single-observation path is fully
fused (it is bandwidth-bound, so plain loops already run at BLAS speed).
"""

from libc.math cimport tanh

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _mm(bint ta, bint tb, const double* a, const double* b, double* c,
              int m, int n, int k, int lda, int ldb, double beta) noexcept nogil:
    # C-order C[m,n] = op(A) @ op(B) via the column-major identity
    # C^T = op(B)^T op(A)^T; lda/ldb are the row lengths of the stored arrays.
    cdef double alpha = 1.0
    cdef char fa = c'T' if ta else c'N'
    cdef char fb = c'T' if tb else c'N'
    dgemm(&fb, &fa, &n, &m, &k, &alpha,
          <double*> b, &ldb, <double*> a, &lda, &beta, c, &n)


cdef void _dense_tanh(const double[:, ::1] w, const double[::1] b,
                      const double[::1] x, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n_in = w.shape[0], n_out = w.shape[1]
    cdef Py_ssize_t k, j
    cdef double xv
    cdef const double* wrow
    cdef double* o = &out[0]
    for j in range(n_out):
        o[j] = b[j]
    for k in range(n_in):
        xv = x[k]
        wrow = &w[k, 0]
        for j in range(n_out):
            o[j] += xv * wrow[j]
    for j in range(n_out):
        o[j] = tanh(o[j])


cdef void _heads(const double[:, ::1] wa, const double[::1] ba,
                 const double[:, ::1] wv, const double[::1] bv,
                 const double[::1] h2, double[::1] mean,
                 double* value) noexcept nogil:
    cdef Py_ssize_t n_h = wa.shape[0], n_act = wa.shape[1]
    cdef Py_ssize_t j, a
    cdef double hv, v
    for a in range(n_act):
        mean[a] = ba[a]
    v = bv[0]
    for j in range(n_h):
        hv = h2[j]
        for a in range(n_act):
            mean[a] += hv * wa[j, a]
        v += hv * wv[j, 0]
    value[0] = v


def forward_one(const double[:, ::1] w1, const double[::1] b1,
                const double[:, ::1] w2, const double[::1] b2,
                const double[:, ::1] wa, const double[::1] ba,
                const double[:, ::1] wv, const double[::1] bv,
                const double[::1] x):
    """Single-observation forward pass: (action_mean, value)."""
    cdef Py_ssize_t n_h = w1.shape[1]
    mean_arr = np.empty(wa.shape[1], dtype=np.float64)
    h1_arr = np.empty(n_h, dtype=np.float64)
    h2_arr = np.empty(n_h, dtype=np.float64)
    cdef double[::1] h1 = h1_arr
    cdef double[::1] h2 = h2_arr
    cdef double[::1] mean = mean_arr
    cdef double value
    with nogil:
        _dense_tanh(w1, b1, x, h1)
        _dense_tanh(w2, b2, h1, h2)
        _heads(wa, ba, wv, bv, h2, mean, &value)
    return mean_arr, value


def forward_batch(const double[:, ::1] w1, const double[::1] b1,
                  const double[:, ::1] w2, const double[::1] b2,
                  const double[:, ::1] wa, const double[::1] ba,
                  const double[:, ::1] wv, const double[::1] bv,
                  const double[:, ::1] xs):
    """Batched forward pass returning hidden activations for backprop."""
    cdef int n_b = <int> xs.shape[0]
    cdef int n_in = <int> xs.shape[1]
    cdef int n_h = <int> w1.shape[1]
    cdef int n_act = <int> wa.shape[1]
    means_arr = np.empty((n_b, n_act), dtype=np.float64)
    values_arr = np.empty(n_b, dtype=np.float64)
    h1_arr = np.empty((n_b, n_h), dtype=np.float64)
    h2_arr = np.empty((n_b, n_h), dtype=np.float64)
    cdef double[:, ::1] means = means_arr
    cdef double[::1] values = values_arr
    cdef double[:, ::1] h1 = h1_arr
    cdef double[:, ::1] h2 = h2_arr
    cdef Py_ssize_t t
    _mm(0, 0, &xs[0, 0], &w1[0, 0], &h1[0, 0], n_b, n_h, n_in, n_in, n_h, 0.0)
    h1_arr += b1
    np.tanh(h1_arr, out=h1_arr)  # vectorized tanh beats scalar libm here
    _mm(0, 0, &h1[0, 0], &w2[0, 0], &h2[0, 0], n_b, n_h, n_h, n_h, n_h, 0.0)
    h2_arr += b2
    np.tanh(h2_arr, out=h2_arr)
    with nogil:
        for t in range(n_b):
            _heads(wa, ba, wv, bv, h2[t], means[t], &values[t])
    return means_arr, values_arr, h1_arr, h2_arr


def backward_batch(const double[:, ::1] w2, const double[:, ::1] wa,
                   const double[:, ::1] wv, const double[:, ::1] xs,
                   const double[:, ::1] h1, const double[:, ::1] h2,
                   const double[:, ::1] d_means, const double[::1] d_values):
    """Reverse-mode pass from head gradients to parameter gradients."""
    cdef int n_b = <int> xs.shape[0]
    cdef int n_in = <int> xs.shape[1]
    cdef int n_h = <int> w2.shape[0]
    cdef int n_act = <int> wa.shape[1]
    d_w1_arr = np.empty((n_in, n_h), dtype=np.float64)
    d_b1_arr = np.zeros(n_h, dtype=np.float64)
    d_w2_arr = np.empty((n_h, n_h), dtype=np.float64)
    d_b2_arr = np.zeros(n_h, dtype=np.float64)
    d_wa_arr = np.empty((n_h, n_act), dtype=np.float64)
    d_ba_arr = np.zeros(n_act, dtype=np.float64)
    d_wv_arr = np.empty((n_h, 1), dtype=np.float64)
    d_bv_arr = np.zeros(1, dtype=np.float64)
    dz2_arr = np.empty((n_b, n_h), dtype=np.float64)
    dz1_arr = np.empty((n_b, n_h), dtype=np.float64)
    cdef double[:, ::1] d_w1 = d_w1_arr
    cdef double[::1] d_b1 = d_b1_arr
    cdef double[:, ::1] d_w2 = d_w2_arr
    cdef double[::1] d_b2 = d_b2_arr
    cdef double[:, ::1] d_wa = d_wa_arr
    cdef double[::1] d_ba = d_ba_arr
    cdef double[:, ::1] d_wv = d_wv_arr
    cdef double[::1] d_bv = d_bv_arr
    cdef double[:, ::1] d_z2 = dz2_arr
    cdef double[:, ::1] d_z1 = dz1_arr
    cdef Py_ssize_t t, j, a
    cdef double acc, dv, hv
    cdef const double* dm_row
    cdef double* z_row
    with nogil:
        # head gradients and dLoss/dZ2 rows, fused per sample
        for j in range(n_h):
            d_wv[j, 0] = 0.0
        for t in range(n_b):
            dv = d_values[t]
            d_bv[0] += dv
            dm_row = &d_means[t, 0]
            for a in range(n_act):
                d_ba[a] += dm_row[a]
            z_row = &d_z2[t, 0]
            for j in range(n_h):
                hv = h2[t, j]
                acc = dv * wv[j, 0]
                for a in range(n_act):
                    acc += dm_row[a] * wa[j, a]
                d_wv[j, 0] += hv * dv
                z_row[j] = acc * (1.0 - hv * hv)
        # d_wa = h2^T @ d_means
        _mm(1, 0, &h2[0, 0], &d_means[0, 0], &d_wa[0, 0],
            n_h, n_act, n_b, n_h, n_act, 0.0)
        # d_w2 = h1^T @ d_z2; d_h1 = d_z2 @ w2^T folded into d_z1
        _mm(1, 0, &h1[0, 0], &d_z2[0, 0], &d_w2[0, 0], n_h, n_h, n_b, n_h, n_h, 0.0)
        _mm(0, 1, &d_z2[0, 0], &w2[0, 0], &d_z1[0, 0], n_b, n_h, n_h, n_h, n_h, 0.0)
        for t in range(n_b):
            z_row = &d_z1[t, 0]
            for j in range(n_h):
                hv = h1[t, j]
                z_row[j] *= (1.0 - hv * hv)
            for j in range(n_h):
                d_b2[j] += d_z2[t, j]
                d_b1[j] += z_row[j]
        # d_w1 = xs^T @ d_z1
        _mm(1, 0, &xs[0, 0], &d_z1[0, 0], &d_w1[0, 0], n_in, n_h, n_b, n_in, n_h, 0.0)
    return (d_w1_arr, d_b1_arr, d_w2_arr, d_b2_arr,
            d_wa_arr, d_ba_arr, d_wv_arr, d_bv_arr)
