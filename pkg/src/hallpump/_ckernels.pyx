# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled basis enumeration and fermionic monomial action."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t, int8_t, uint8_t

cnp.import_array()

NAME = "cython"


cdef extern from *:
    int popcount64 "__builtin_popcountll"(unsigned long long) nogil
    int ctz64 "__builtin_ctzll"(unsigned long long) nogil


cdef inline int64_t _find(const uint64_t[::1] states, uint64_t w) nogil:
    cdef int64_t lo = 0, hi = states.shape[0] - 1, mid
    while lo <= hi:
        mid = (lo + hi) >> 1
        if states[mid] < w:
            lo = mid + 1
        elif states[mid] > w:
            hi = mid - 1
        else:
            return mid
    return -1


def enumerate_states(int n_sites, int n_particles):
    """Gosper's successor walk over all words with n_particles bits set."""
    if n_particles < 0 or n_particles > n_sites:
        return np.zeros(0, dtype=np.uint64)
    if n_particles == 0:
        return np.zeros(1, dtype=np.uint64)
    from math import comb
    cdef int64_t dim = comb(n_sites, n_particles), k
    out = np.empty(dim, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef uint64_t v = (<uint64_t>1 << n_particles) - 1, c, r
    with nogil:
        for k in range(dim):
            o[k] = v
            c = v & (~v + 1)
            r = v + c
            v = (((r ^ v) >> 2) // c) | r
    return out


def lookup(cnp.ndarray states_arr, words):
    cdef const uint64_t[::1] states = np.ascontiguousarray(states_arr, dtype=np.uint64)
    cdef const uint64_t[::1] w = np.ascontiguousarray(words, dtype=np.uint64)
    out = np.empty(w.shape[0], dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(w.shape[0]):
            o[i] = _find(states, w[i])
    return out


def monomial_action(cnp.ndarray states_arr, sites_arr, daggers_arr, cnp.ndarray target_arr):
    cdef const uint64_t[::1] states = np.ascontiguousarray(states_arr, dtype=np.uint64)
    cdef const uint64_t[::1] target = np.ascontiguousarray(target_arr, dtype=np.uint64)
    cdef const int64_t[::1] sites = np.ascontiguousarray(sites_arr, dtype=np.int64)
    cdef const uint8_t[::1] dags = np.ascontiguousarray(daggers_arr, dtype=np.uint8)
    cdef Py_ssize_t n = states.shape[0], m = sites.shape[0], j, k, cnt = 0
    rows = np.empty(n, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    signs = np.empty(n, dtype=np.int8)
    cdef int64_t[::1] r = rows, c = cols
    cdef int8_t[::1] sg = signs
    cdef uint64_t s, bit
    cdef int par
    cdef bint dead
    cdef int64_t pos
    with nogil:
        for j in range(n):
            s = states[j]
            par = 0
            dead = False
            for k in range(m - 1, -1, -1):
                bit = (<uint64_t>1) << sites[k]
                if dags[k]:
                    if s & bit:
                        dead = True
                        break
                else:
                    if not (s & bit):
                        dead = True
                        break
                par += popcount64(s & (bit - 1))
                s ^= bit
            if dead:
                continue
            pos = _find(target, s)
            if pos < 0:
                continue
            r[cnt] = pos
            c[cnt] = j
            sg[cnt] = 1 - 2 * (par & 1)
            cnt += 1
    return rows[:cnt], cols[:cnt], signs[:cnt]


def occupations(cnp.ndarray states_arr, int n_sites):
    cdef const uint64_t[::1] states = np.ascontiguousarray(states_arr, dtype=np.uint64)
    out = np.zeros((states.shape[0], n_sites), dtype=np.uint8)
    cdef uint8_t[:, ::1] o = out
    cdef Py_ssize_t j
    cdef uint64_t s
    with nogil:
        for j in range(states.shape[0]):
            s = states[j]
            while s:
                o[j, ctz64(s)] = 1
                s &= s - 1
    return out
