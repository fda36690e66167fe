"""Pure-Python implementations of the kernels in ``_kernels.pyx``."""

import math

import numpy as np


def jacobi_eigh(a, tol, max_sweeps, want_vectors):
    n = a.shape[0]
    vec = np.eye(n) if want_vectors else None
    skip = tol * 1e-3
    sweep = 0
    iu = np.triu_indices(n, 1)
    while True:
        off = np.abs(a[iu]).max() if n > 1 else 0.0
        if off < tol or sweep >= max_sweeps:
            break
        sweep += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp = a[:, p].copy()
                cq = a[:, q]
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp = a[p, :].copy()
                rq = a[q, :]
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                if vec is not None:
                    vp = vec[:, p].copy()
                    vq = vec[:, q]
                    vec[:, p] = c * vp - s * vq
                    vec[:, q] = s * vp + c * vq
    return np.diag(a).copy(), vec, sweep


def centralities(n, indptr, indices):
    indptr = [int(x) for x in indptr]
    indices = [int(x) for x in indices]
    close = [0.0] * n
    harm = [0.0] * n
    btw = [0.0] * n
    for s in range(n):
        dist = [-1] * n
        sigma = [0.0] * n
        delta = [0.0] * n
        dist[s] = 0
        sigma[s] = 1.0
        queue = [s]
        head = 0
        sumd = 0
        hs = 0.0
        while head < len(queue):
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
                    queue.append(w)
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        for w in reversed(queue[1:]):
            dw = dist[w]
            for e in range(indptr[w], indptr[w + 1]):
                v = indices[e]
                if dist[v] == dw - 1:
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            btw[w] += delta[w]
        harm[s] = hs
        r = len(queue)
        if sumd > 0 and n > 1:
            close[s] = (r - 1.0) / sumd * (r - 1.0) / (n - 1.0)
    return np.array(close), np.array(harm), 0.5 * np.array(btw)
