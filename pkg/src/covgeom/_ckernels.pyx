# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gaussian-KDE kernels.

Per query row: one pass computes every kernel exponent and their maximum,
a second pass exponentiates relative to the maximum (a branch-free loop the
compiler can vectorize) and accumulates the density and score sums.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, M_PI
from libc.stdlib cimport malloc, free

cnp.import_array()


def kde_logpdf_score(const double[:, ::1] query, const double[:, ::1] samples,
                     const double[::1] bandwidth):
    """Return ``(logpdf, score)`` of the Gaussian KDE at each query row."""
    cdef Py_ssize_t m = query.shape[0]
    cdef Py_ssize_t n_ref = samples.shape[0]
    cdef Py_ssize_t dim = samples.shape[1]
    cdef Py_ssize_t q, k, j
    cdef double d, mx, acc, w, xq
    cdef double log_norm = 0.0

    logpdf_arr = np.empty(m, dtype=np.float64)
    score_arr = np.zeros((m, dim), dtype=np.float64)
    cdef double[::1] logpdf = logpdf_arr
    cdef double[:, ::1] score = score_arr
    # samples pre-scaled by 1/h and stored coordinate-major
    zs_arr = np.ascontiguousarray((np.asarray(samples) / np.asarray(bandwidth)).T)
    cdef const double[:, ::1] zs = zs_arr
    inv_h_arr = 1.0 / np.asarray(bandwidth)
    cdef double[::1] inv_h = inv_h_arr

    for j in range(dim):
        log_norm += log(bandwidth[j])
    log_norm += 0.5 * dim * log(2.0 * M_PI) + log(<double>n_ref)

    cdef double* e = <double*> malloc(n_ref * sizeof(double))
    cdef double* wsum = <double*> malloc(dim * sizeof(double))
    if e == NULL or wsum == NULL:
        free(e)
        free(wsum)
        raise MemoryError()
    try:
        with nogil:
            for q in range(m):
                for k in range(n_ref):
                    e[k] = 0.0
                for j in range(dim):
                    xq = query[q, j] * inv_h[j]
                    for k in range(n_ref):
                        d = zs[j, k] - xq
                        e[k] -= 0.5 * d * d
                mx = e[0]
                for k in range(1, n_ref):
                    if e[k] > mx:
                        mx = e[k]
                acc = 0.0
                for k in range(n_ref):
                    e[k] = exp(e[k] - mx)
                    acc += e[k]
                for j in range(dim):
                    xq = query[q, j] * inv_h[j]
                    w = 0.0
                    for k in range(n_ref):
                        w += e[k] * (zs[j, k] - xq)
                    wsum[j] = w
                logpdf[q] = mx + log(acc) - log_norm
                for j in range(dim):
                    score[q, j] = wsum[j] / acc * inv_h[j]
    finally:
        free(e)
        free(wsum)
    return logpdf_arr, score_arr
