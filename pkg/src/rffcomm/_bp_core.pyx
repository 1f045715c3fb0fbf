# cython: language_level=3
"""Compiled flooding sum-product kernel; same contract as ``_bp_py.decode``."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport tanh, atanh

cnp.import_array()

cdef double LLR_CLIP = 50.0
cdef double TANH_CLIP = 19.07
cdef double PROD_CLIP = 1.0 - 1e-15


cdef inline double _clip(double v, double lim) noexcept nogil:
    if v > lim:
        return lim
    if v < -lim:
        return -lim
    return v


cdef void _decode_word(const cnp.int64_t[::1] check_ptr, const cnp.int64_t[::1] edge_bit,
                       const double[::1] llr, double[::1] post, double[::1] c2v, double[::1] t,
                       double[::1] acc, int max_iter, cnp.uint8_t* conv, cnp.int64_t* iters) noexcept nogil:
    cdef Py_ssize_t n_bits = llr.shape[0]
    cdef Py_ssize_t n_checks = check_ptr.shape[0] - 1
    cdef Py_ssize_t n_edges = edge_bit.shape[0]
    cdef Py_ssize_t c, e, start, end, k
    cdef int it, parity, ok
    cdef double run, p

    for e in range(n_edges):
        c2v[e] = 0.0
    for it in range(1, max_iter + 1):
        for c in range(n_checks):
            start = check_ptr[c]
            end = check_ptr[c + 1]
            for e in range(start, end):
                t[e] = tanh(_clip(0.5 * _clip(post[edge_bit[e]] - c2v[e], LLR_CLIP), TANH_CLIP))
            # exclusive products: forward pass stores prefixes, backward pass multiplies suffixes
            run = 1.0
            for e in range(start, end):
                p = run
                run = run * t[e]
                c2v[e] = p
            run = 1.0
            for k in range(end - 1, start - 1, -1):
                p = c2v[k] * run
                run = run * t[k]
                c2v[k] = 2.0 * atanh(_clip(p, PROD_CLIP))
        for k in range(n_bits):
            acc[k] = 0.0
        for e in range(n_edges):
            acc[edge_bit[e]] += c2v[e]
        for k in range(n_bits):
            post[k] = llr[k] + acc[k]
        iters[0] = it
        ok = 1
        for c in range(n_checks):
            parity = 0
            for e in range(check_ptr[c], check_ptr[c + 1]):
                if post[edge_bit[e]] < 0:
                    parity ^= 1
            if parity:
                ok = 0
                break
        if ok:
            conv[0] = 1
            return


def decode(const cnp.int64_t[::1] check_ptr, const cnp.int64_t[::1] edge_bit,
           const double[:, ::1] llr, int max_iter):
    cdef Py_ssize_t n_words = llr.shape[0]
    cdef Py_ssize_t n_bits = llr.shape[1]
    cdef Py_ssize_t n_edges = edge_bit.shape[0]
    cdef Py_ssize_t w

    post_arr = np.array(llr, dtype=np.float64, copy=True)
    conv_arr = np.zeros(n_words, dtype=np.uint8)
    iter_arr = np.zeros(n_words, dtype=np.int64)
    # per-word scratch so words can run on separate threads
    c2v_arr = np.zeros((n_words, n_edges), dtype=np.float64)
    t_arr = np.zeros((n_words, n_edges), dtype=np.float64)
    acc_arr = np.zeros((n_words, n_bits), dtype=np.float64)
    cdef double[:, ::1] post = post_arr
    cdef cnp.uint8_t[::1] conv = conv_arr
    cdef cnp.int64_t[::1] iters = iter_arr
    cdef double[:, ::1] c2v = c2v_arr
    cdef double[:, ::1] t = t_arr
    cdef double[:, ::1] acc = acc_arr

    for w in prange(n_words, nogil=True, schedule="dynamic"):
        _decode_word(check_ptr, edge_bit, llr[w], post[w], c2v[w], t[w], acc[w], max_iter, &conv[w], &iters[w])
    return post_arr, conv_arr.astype(bool), iter_arr
