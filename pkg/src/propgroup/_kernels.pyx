# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled mask kernels. Signatures mirror ``_fallback``."""

import numpy as np
from libc.string cimport memcpy
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _next_change(const unsigned char* p, Py_ssize_t i,
                                    Py_ssize_t n, bint prev) nogil:
    # index of the first byte at or after i whose truthiness differs from prev;
    # whole 8-byte words of 0 (or of 1 when prev is set) are skipped at once
    cdef unsigned long long w, same = 0x0101010101010101ULL if prev else 0
    while i + 8 <= n:
        memcpy(&w, p + i, 8)
        if w != same:
            break
        i += 8
    while i < n and (p[i] != 0) == prev:
        i += 1
    return i


def rle_runs(const unsigned char[::1] flat):
    cdef Py_ssize_t n = flat.shape[0]
    cdef Py_ssize_t i = 0, nruns = 1, start = 0
    cdef bint prev = 0
    cdef const unsigned char* p = &flat[0]
    # first pass counts runs so the output is allocated at its exact size
    while True:
        i = _next_change(p, i, n, prev)
        if i >= n:
            break
        nruns += 1
        prev = not prev
    out = np.empty(nruns, dtype=np.int64)
    cdef long long[::1] o = out
    i = 0
    nruns = 0
    prev = 0
    while True:
        i = _next_change(p, i, n, prev)
        if i >= n:
            break
        o[nruns] = i - start
        nruns += 1
        start = i
        prev = not prev
    o[nruns] = n - start
    return out


def rle_fill(const long long[::1] runs, Py_ssize_t n):
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    cdef Py_ssize_t r, j, pos = 0
    cdef unsigned char val = 0
    for r in range(runs.shape[0]):
        if val:
            for j in range(pos, pos + runs[r]):
                o[j] = 1
        pos += runs[r]
        val = 1 - val
    return out


def boundary(const unsigned char[:, ::1] m):
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1], y, x
    out = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] o = out
    for y in range(h):
        for x in range(w):
            if not m[y, x]:
                continue
            if (y == 0 or x == 0 or y == h - 1 or x == w - 1
                    or not m[y - 1, x] or not m[y + 1, x]
                    or not m[y, x - 1] or not m[y, x + 1]):
                o[y, x] = 1
    return out.astype(bool)


def count_within(const unsigned char[:, ::1] src, const unsigned char[:, ::1] dst, int tol):
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], y, x, k, yy, xx
    cdef int dy, dx
    offs = [(a, b) for a in range(-tol, tol + 1) for b in range(-tol, tol + 1)
            if a * a + b * b <= tol * tol]
    # nearest offsets first so the inner search usually exits early
    offs.sort(key=lambda t: t[0] * t[0] + t[1] * t[1])
    cdef int[:, ::1] off = np.asarray(offs, dtype=np.int32)
    cdef Py_ssize_t noff = off.shape[0]
    cdef long long count = 0
    for y in range(h):
        for x in range(w):
            if not src[y, x]:
                continue
            for k in range(noff):
                yy = y + off[k, 0]
                xx = x + off[k, 1]
                if 0 <= yy < h and 0 <= xx < w and dst[yy, xx]:
                    count += 1
                    break
    return count


def contingency(const long long[::1] a, const long long[::1] b, Py_ssize_t na, Py_ssize_t nb):
    out = np.zeros((na + 1, nb + 1), dtype=np.int64)
    cdef long long[:, ::1] o = out
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        o[a[i], b[i]] += 1
    return out
