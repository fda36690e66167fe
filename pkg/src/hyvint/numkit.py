"""Numerical kernel: special functions, seeded draws and a symmetric eigensolver.

The special functions work on scalars and numpy arrays alike and return a
python float for scalar input.
"""

import math
from statistics import NormalDist

import numpy as np

from . import kernels
from .errors import DomainError

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Bernoulli-number coefficients of the asymptotic expansions
_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360, 1 / 156)
_DIGAMMA_ASY = (-1 / 12, 1 / 120, -1 / 252, 1 / 240, -1 / 132, 691 / 32760, -1 / 12)
_TRIGAMMA_ASY = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6)


def _as_positive(x, name):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} requires x > 0")
    return arr


def _out(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def _lanczos_lgamma(x):
    # ln Gamma(x) for x >= 0.5
    z = x - 1.0
    acc = np.full_like(z, _LANCZOS[0])
    for i in range(1, 9):
        acc = acc + _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(acc)


def _stirling_lgamma(x):
    inv = 1.0 / x
    inv2 = inv * inv
    series = np.zeros_like(x)
    for c in reversed(_STIRLING):
        series = series * inv2 + c
    return (x - 0.5) * np.log(x) - x + _HALF_LOG_2PI + series * inv


def log_gamma(x):
    """Natural log of the Gamma function for x > 0."""
    arr = np.atleast_1d(_as_positive(x, "log_gamma"))
    out = np.empty_like(arr)
    big = arr >= 10.0
    out[big] = _stirling_lgamma(arr[big])
    small = arr < 0.5
    mid = ~big & ~small
    out[mid] = _lanczos_lgamma(arr[mid])
    xs = arr[small]
    out[small] = _lanczos_lgamma(xs + 1.0) - np.log(xs)
    return _out(out.reshape(np.shape(x)), x)


def _shift(arr, lo=10.0):
    """Return (shifted x >= lo, accumulated 1/x and 1/x^2 sums)."""
    x = arr.copy()
    s1 = np.zeros_like(x)
    s2 = np.zeros_like(x)
    mask = x < lo
    while np.any(mask):
        xm = x[mask]
        s1[mask] += 1.0 / xm
        s2[mask] += 1.0 / (xm * xm)
        x[mask] = xm + 1.0
        mask = x < lo
    return x, s1, s2


def digamma(x):
    """psi(x) = d/dx ln Gamma(x) for x > 0."""
    arr = np.atleast_1d(_as_positive(x, "digamma"))
    y, s1, _ = _shift(arr)
    inv2 = 1.0 / (y * y)
    series = np.zeros_like(y)
    for c in reversed(_DIGAMMA_ASY):
        series = series * inv2 + c
    out = np.log(y) - 0.5 / y + series * inv2 - s1
    return _out(out.reshape(np.shape(x)), x)


def trigamma(x):
    """psi'(x) for x > 0."""
    arr = np.atleast_1d(_as_positive(x, "trigamma"))
    y, _, s2 = _shift(arr)
    inv = 1.0 / y
    inv2 = inv * inv
    series = np.zeros_like(y)
    for c in reversed(_TRIGAMMA_ASY):
        series = series * inv2 + c
    out = inv + 0.5 * inv2 + series * inv2 * inv + s2
    return _out(out.reshape(np.shape(x)), x)


def log_expm1_exp(s):
    """log(exp(exp(s)) - 1) without overflow for s <= 700."""
    s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64))
    u = np.exp(np.minimum(s_arr, 700.0))
    out = np.empty_like(s_arr)
    lo = s_arr < -30.0
    hi = u > 30.0
    mid = ~lo & ~hi
    out[lo] = s_arr[lo] + 0.5 * u[lo]
    out[hi] = u[hi]
    out[mid] = np.log(np.expm1(u[mid]))
    return _out(out.reshape(np.shape(s)), s)


# ---------------------------------------------------------------- random draws

def rng_stream(seed, *keys):
    """Independent generator for (seed, *keys); stable across schedulings."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def sample_gaussian(rng, size=None):
    return rng.standard_normal(size)


_STD_NORMAL = NormalDist()


def _interval_mass(a, b):
    # P(a < Z < b) for standard normal, accurate in both tails
    if a > 0:
        a, b = -b, -a
    return 0.5 * (math.erfc(-b / math.sqrt(2)) - math.erfc(-a / math.sqrt(2)))


def sample_truncated_gaussian(rng, mean, lo, hi, size=None, sd=1.0):
    """Gaussian(mean, sd^2) conditioned on [lo, hi].

    ``mean`` may be an array; the output then has its shape. Rejection is used
    whenever the interval carries reasonable mass, inverse-CDF otherwise.
    """
    if not lo < hi:
        raise DomainError("truncated gaussian needs lo < hi")
    mean_arr = np.asarray(mean, dtype=np.float64)
    if size is not None:
        mean_arr = np.broadcast_to(mean_arr, size)
    shape = mean_arr.shape
    mu = mean_arr.ravel()
    a = (lo - mu) / sd
    b = (hi - mu) / sd
    mass = np.array([_interval_mass(ai, bi) for ai, bi in zip(a, b)])
    if mu.size and mass.min() < 1e-12:
        raise DomainError("truncation interval has probability mass below 1e-12")
    out = np.empty_like(mu)
    easy = mass >= 1e-3
    todo = np.flatnonzero(easy)
    while todo.size:
        z = mu[todo] + sd * rng.standard_normal(todo.size)
        ok = (z >= lo) & (z <= hi)
        out[todo[ok]] = z[ok]
        todo = todo[~ok]
    for i in np.flatnonzero(~easy):
        # inverse CDF in the tail nearer the mean
        flip = a[i] > 0
        lo_i, hi_i = (-b[i], -a[i]) if flip else (a[i], b[i])
        plo, phi = _STD_NORMAL.cdf(lo_i), _STD_NORMAL.cdf(hi_i)
        p = plo + rng.random() * (phi - plo)
        z = min(max(_STD_NORMAL.inv_cdf(min(max(p, 1e-300), 1 - 1e-16)), lo_i), hi_i)
        out[i] = mu[i] + sd * (-z if flip else z)
    out = np.clip(out, lo, hi).reshape(shape)
    if size is None and np.ndim(mean) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------- eigensolver

def sym_eigenvalues(M, tol=1e-10, max_sweeps=100, return_vectors=False, backend=None):
    """Eigenvalues (ascending) of a symmetric matrix by cyclic Jacobi rotations.

    With ``return_vectors`` the matching orthonormal eigenvectors are returned
    as columns of a second array.
    """
    A = np.array(M, dtype=np.float64, order="C", copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("sym_eigenvalues needs a square matrix")
    n = A.shape[0]
    if n and np.max(np.abs(A - A.T)) > 1e-10:
        raise DomainError("matrix is not symmetric within 1e-10")
    A = 0.5 * (A + A.T)
    if n == 0:
        empty = np.zeros(0)
        return (empty, np.zeros((0, 0))) if return_vectors else empty
    # off-diagonals are driven below tol, or below rounding level for large norms
    eff = max(tol, 8.0 * np.finfo(float).eps * np.linalg.norm(A))
    kern = kernels.get(backend)
    vals, vecs, _ = kern.jacobi_eigh(A, eff, int(max_sweeps), bool(return_vectors))
    order = np.argsort(vals, kind="stable")
    vals = np.asarray(vals)[order]
    if return_vectors:
        return vals, np.asarray(vecs)[:, order]
    return vals
