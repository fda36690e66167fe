"""Monte Carlo and brute-force oracles shared by the unit and acceptance tests."""

import itertools
from fractions import Fraction

import numpy as np
from scipy import stats
from scipy.optimize import linprog

from hyvint import vi


def random_state(rng, n, m, K, lo=-2.0, hi=2.0):
    """Shapes and rates log-uniform in [e^lo, e^hi]."""
    def d(*shp):
        return rng.uniform(lo, hi, shp)
    return vi.VariationalState(d(n), d(n), d(n, K), d(n, K), d(m), d(m), d(m, K), d(m, K))


def _g(rng, la, lb, size):
    return rng.gamma(np.exp(la), 1.0 / np.exp(lb), size=size)


def draw_pair(state, i, j, draws, rng):
    """Joint q-draws of (alpha_i, rho_j, theta_i, beta_j)."""
    K = state.K
    a = _g(rng, state.la_alpha[i], state.lb_alpha[i], draws)
    r = _g(rng, state.la_rho[j], state.lb_rho[j], draws)
    th = _g(rng, state.la_theta[i], state.lb_theta[i], (draws, K))
    be = _g(rng, state.la_beta[j], state.lb_beta[j], (draws, K))
    return a, r, th, be


def mc(samples):
    s = np.asarray(samples, dtype=np.float64)
    return float(s.mean()), float(s.std(ddof=1) / np.sqrt(s.size))


def log1mexp_neg(lam):
    lam = np.asarray(lam, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lam > 0.693, np.log1p(-np.exp(-lam)), np.log(-np.expm1(-lam)))


def mc_term_i(state, i, j, draws, rng):
    a, r, th, be = draw_pair(state, i, j, draws, rng)
    lam = a * r * np.sum(th * be, axis=1)
    return mc(log1mexp_neg(np.maximum(lam, 1e-300)))


def mc_log_intensity(state, i, j, draws, rng):
    """(E log lambda, E log sum_k theta beta) with standard errors."""
    a, r, th, be = draw_pair(state, i, j, draws, rng)
    inner = np.log(np.maximum(np.sum(th * be, axis=1), 1e-300))
    return mc(np.log(np.maximum(a, 1e-300)) + np.log(np.maximum(r, 1e-300)) + inner), mc(inner)


def mc_intensity(state, i, j, draws, rng):
    a, r, th, be = draw_pair(state, i, j, draws, rng)
    return mc(a * r * np.sum(th * be, axis=1))


def _role_draws(state, role, draws, rng):
    la = np.ravel(getattr(state, "la_" + role))
    lb = np.ravel(getattr(state, "lb_" + role))
    return rng.gamma(np.exp(la), 1.0 / np.exp(lb), size=(draws, la.size)), np.exp(la), np.exp(lb)


def mc_log_prior(state, prior, draws, rng):
    """E_q[log p(Z)] summed over all factors, via scipy Gamma log-densities."""
    tot = 0.0
    for role in vi.ROLES:
        x, _, _ = _role_draws(state, role, draws, rng)
        a0, b0 = prior.pair(role)
        tot = tot + stats.gamma.logpdf(np.maximum(x, 1e-300), a0, scale=1.0 / b0).sum(axis=1)
    return mc(tot)


def mc_entropy(state, draws, rng):
    tot = 0.0
    for role in vi.ROLES:
        x, a, b = _role_draws(state, role, draws, rng)
        tot = tot - stats.gamma.logpdf(np.maximum(x, 1e-300), a, scale=1.0 / b).sum(axis=1)
    return mc(tot)


def fd_gradient(f, x, step=1e-5):
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def transport_w1(xs, ys):
    """W1 between uniform empirical measures by solving the transport LP."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    p, q = len(xs), len(ys)
    cost = np.abs(xs[:, None] - ys[None, :]).ravel()
    A, b = [], []
    for i in range(p):
        row = np.zeros((p, q)); row[i] = 1; A.append(row.ravel()); b.append(1.0 / p)
    for j in range(q):
        col = np.zeros((p, q)); col[:, j] = 1; A.append(col.ravel()); b.append(1.0 / q)
    res = linprog(cost, A_eq=np.array(A), b_eq=np.array(b), bounds=(0, None), method="highs")
    return res.fun


def _all_shortest_paths(adj, s, t):
    """Enumerate every shortest s-t path in an undirected graph given as sets."""
    n = len(adj)
    for length in range(1, n):
        found = []
        for mid in itertools.permutations([v for v in range(n) if v not in (s, t)], length - 1):
            path = (s,) + mid + (t,)
            if all(path[k + 1] in adj[path[k]] for k in range(length)):
                found.append(path)
        if found:
            return found
    return []


def brute_betweenness(adj):
    """Unordered-pair betweenness by explicit path enumeration, as exact fractions."""
    n = len(adj)
    bc = [Fraction(0)] * n
    for s in range(n):
        for t in range(s + 1, n):
            paths = _all_shortest_paths(adj, s, t)
            for path in paths:
                for v in path[1:-1]:
                    bc[v] += Fraction(1, len(paths))
    return bc
