# cython: language_level=3
"""Compiled hot loops. Signatures mirror :mod:`lossqkd._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log
from libc.stdint cimport uint8_t, uint64_t, int64_t

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

cdef double PHI_MIN = 1e-12
cdef double PHI_MAX = 50.0
# clip bounds of the extrinsic product, matching phi arguments in [PHI_MIN, PHI_MAX]
cdef double T_MIN = 1.9287498479639178e-22
cdef double T_MAX = 0.999999999999


def bp_decode(const int64_t[::1] check_ptr, const int64_t[::1] edge_var,
              const int64_t[::1] var_ptr, const int64_t[::1] var_edges,
              const uint8_t[::1] syndrome, const double[::1] llr, int max_iter):
    cdef Py_ssize_t n_checks = check_ptr.shape[0] - 1
    cdef Py_ssize_t n_vars = var_ptr.shape[0] - 1
    cdef Py_ssize_t n_edges = edge_var.shape[0]
    cdef double[::1] v2c = np.empty(n_edges, dtype=np.float64)
    cdef double[::1] c2v = np.zeros(n_edges, dtype=np.float64)
    cdef double[::1] ph = np.empty(n_edges, dtype=np.float64)
    out = np.empty(n_vars, dtype=np.uint8)
    cdef uint8_t[::1] hard = out
    cdef Py_ssize_t i, e, v, k
    cdef double prod, tot, mag, t
    cdef int sgn, it, parity, ok

    with nogil:
        for v in range(n_vars):
            hard[v] = 1 if llr[v] < 0 else 0
        for e in range(n_edges):
            v2c[e] = llr[edge_var[e]]
        ok = 1
        for i in range(n_checks):
            parity = 0
            for e in range(check_ptr[i], check_ptr[i + 1]):
                parity ^= hard[edge_var[e]]
            if parity != syndrome[i]:
                ok = 0
                break
    if ok:
        return out, True, 0

    with nogil:
        for it in range(1, max_iter + 1):
            # product-domain form of the phi rule: t = exp(-phi(|v|)) = tanh(|v| / 2)
            for i in range(n_checks):
                prod = 1.0
                sgn = syndrome[i]
                for e in range(check_ptr[i], check_ptr[i + 1]):
                    mag = v2c[e]
                    if mag < 0:
                        mag = -mag
                        sgn ^= 1
                    if mag < PHI_MIN:
                        mag = PHI_MIN
                    elif mag > PHI_MAX:
                        mag = PHI_MAX
                    t = exp(-mag)
                    ph[e] = (1.0 - t) / (1.0 + t)
                    prod *= ph[e]
                for e in range(check_ptr[i], check_ptr[i + 1]):
                    t = prod / ph[e]
                    if t < T_MIN:
                        t = T_MIN
                    elif t > T_MAX:
                        t = T_MAX
                    mag = log((1.0 + t) / (1.0 - t))
                    if sgn ^ (1 if v2c[e] < 0 else 0):
                        c2v[e] = -mag
                    else:
                        c2v[e] = mag
            for v in range(n_vars):
                tot = llr[v]
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    tot += c2v[var_edges[k]]
                hard[v] = 1 if tot < 0 else 0
                for k in range(var_ptr[v], var_ptr[v + 1]):
                    e = var_edges[k]
                    v2c[e] = tot - c2v[e]
            ok = 1
            for i in range(n_checks):
                parity = 0
                for e in range(check_ptr[i], check_ptr[i + 1]):
                    parity ^= hard[edge_var[e]]
                if parity != syndrome[i]:
                    ok = 0
                    break
            if ok:
                break
    if ok:
        return out, True, it
    return out, False, max_iter


def _pack_words(bits, Py_ssize_t extra):
    packed = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little")
    n_words = (packed.size + 7) // 8 + extra
    buf = np.zeros(n_words * 8, dtype=np.uint8)
    buf[:packed.size] = packed
    return buf.view("<u8").astype(np.uint64)


def toeplitz_mul(const uint8_t[::1] c, const uint8_t[::1] x, Py_ssize_t n):
    cdef Py_ssize_t m = x.shape[0]
    if c.shape[0] != m + n - 1:
        raise ValueError("diagonal vector must have m + n - 1 entries")
    cdef uint64_t[::1] cw = _pack_words(np.asarray(c), 2)
    cdef uint64_t[::1] xw = _pack_words(np.asarray(x), 0)
    cdef Py_ssize_t n_words = xw.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    cdef uint8_t[::1] y = out
    cdef Py_ssize_t i, w, pos, q, r
    cdef uint64_t acc, word
    with nogil:
        for i in range(n):
            acc = 0
            for w in range(n_words):
                pos = n - 1 - i + 64 * w
                q = pos >> 6
                r = pos & 63
                if r == 0:
                    word = cw[q]
                else:
                    word = (cw[q] >> r) | (cw[q + 1] << (64 - r))
                acc ^= word & xw[w]
            y[i] = __builtin_popcountll(acc) & 1
    return out


def longest_ones_runs(const uint8_t[::1] bits, Py_ssize_t block_len):
    cdef Py_ssize_t n_blocks = bits.shape[0] // block_len
    out = np.zeros(n_blocks, dtype=np.int64)
    cdef int64_t[::1] res = out
    cdef Py_ssize_t b, j
    cdef int64_t cur, best
    with nogil:
        for b in range(n_blocks):
            cur = 0
            best = 0
            for j in range(b * block_len, (b + 1) * block_len):
                if bits[j]:
                    cur += 1
                    if cur > best:
                        best = cur
                else:
                    cur = 0
            res[b] = best
    return out
