# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: cyclic Jacobi eigensolver and BFS/Brandes centralities.

Must stay behaviourally identical to ``_kernels_py``; the test-suite runs
both backends against the same oracles.
"""

import numpy as np
from libc.math cimport fabs, sqrt


def jacobi_eigh(double[:, ::1] a, double tol, int max_sweeps, bint want_vectors):
    """In-place cyclic Jacobi on ``a``; returns (diag, vectors or None, sweeps)."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t p, q, k
    cdef double apq, app, aqq, theta, t, c, s, akp, akq, off, skip
    cdef int sweep = 0
    cdef double[:, ::1] v
    vec = None
    if want_vectors:
        vec = np.eye(n)
        v = vec
    skip = tol * 1e-3
    while True:
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                if fabs(a[p, q]) > off:
                    off = fabs(a[p, q])
        if off < tol or sweep >= max_sweeps:
            break
        sweep += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if fabs(apq) <= skip:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                if fabs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                a[p, q] = 0.0
                a[q, p] = 0.0
                if want_vectors:
                    for k in range(n):
                        akp = v[k, p]
                        akq = v[k, q]
                        v[k, p] = c * akp - s * akq
                        v[k, q] = s * akp + c * akq
    diag = np.empty(n)
    for k in range(n):
        diag[k] = a[k, k]
    return diag, vec, sweep


def centralities(Py_ssize_t n, long[::1] indptr, long[::1] indices):
    """Closeness (within-component), harmonic and unnormalized betweenness."""
    close_arr = np.zeros(n)
    harm_arr = np.zeros(n)
    btw_arr = np.zeros(n)
    cdef double[::1] close = close_arr
    cdef double[::1] harm = harm_arr
    cdef double[::1] btw = btw_arr
    cdef long[::1] dist = np.empty(n, dtype=np.int64)
    cdef long[::1] queue = np.empty(n, dtype=np.int64)
    cdef double[::1] sigma = np.empty(n)
    cdef double[::1] delta = np.empty(n)
    cdef Py_ssize_t s, head, tail, idx, e, i
    cdef long v, w, dv
    cdef double sumd, hs, r
    for s in range(n):
        for i in range(n):
            dist[i] = -1
            sigma[i] = 0.0
            delta[i] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        queue[0] = s
        head = 0
        tail = 1
        sumd = 0.0
        hs = 0.0
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[v]
            if dv > 0:
                sumd += dv
                hs += 1.0 / dv
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue[tail] = w
                    tail += 1
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        idx = tail - 1
        while idx > 0:
            w = queue[idx]
            for e in range(indptr[w], indptr[w + 1]):
                v = indices[e]
                if dist[v] == dist[w] - 1:
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            btw[w] += delta[w]
            idx -= 1
        harm[s] = hs
        r = tail
        if sumd > 0 and n > 1:
            close[s] = (r - 1.0) / sumd * (r - 1.0) / (n - 1.0)
    for i in range(n):
        btw[i] *= 0.5
    return close_arr, harm_arr, btw_arr
