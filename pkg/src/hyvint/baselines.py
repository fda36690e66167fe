"""Reference generators that treat hyperedges as membership vectors.

* ``ber-diff``: bit-flip discrete diffusion with an x0-predicting network.
* ``gau-diff``: Gaussian DDPM on 2b - 1, decoded by Bernoulli sampling.
* ``nmf-diff``: nonnegative factorisation B ~ U Z^T, DDPM on the rows of Z,
  probabilistic decode through U.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffusion as dif
from .errors import DataError, DomainError, NumericalError
from .numkit import rng_stream
from .pipeline import Generated, bernoulli_edges, filter_edges

METHODS = ("ber-diff", "gau-diff", "nmf-diff")


@dataclass
class BaselineConfig:
    diffusion: dif.DiffusionConfig = field(default_factory=dif.DiffusionConfig)
    K: int = 2
    nmf_iters: int = 500
    nmf_reg: float = 0.0
    squash: str = "clamp"
    m_tilde: int = None
    min_edge_size: int = 2
    seed: int = 42


def _membership(h):
    if h.m == 0:
        raise DataError("baselines need at least one hyperedge")
    return h.dense().T  # (m, n)


# ---------------------------------------------------------------- Ber-Diff

def flip_schedule(T, beta_start=1e-4, beta_end=0.02):
    betas = np.linspace(beta_start, beta_end, T) if T > 1 else np.array([beta_start])
    check_flip_schedule(betas)
    return betas


def check_flip_schedule(betas):
    b = np.asarray(betas, dtype=np.float64)
    if b.ndim != 1 or np.any(b <= 0) or np.any(b >= 0.5):
        raise DomainError("flip probabilities must lie in (0, 1/2)")
    return b


def flip_keep(betas):
    """abar_t = prod_{s<=t} (1 - 2 beta_s), with abar_0 = 1 prepended."""
    return np.concatenate([[1.0], np.cumprod(1.0 - 2.0 * np.asarray(betas))])


def berdiff_marginal(x0, t, betas):
    """P(x_t = 1 | x_0)."""
    abar = flip_keep(check_flip_schedule(betas))[t]
    return 0.5 + (np.asarray(x0, dtype=np.float64) - 0.5) * abar


def berdiff_forward(x0, t, betas, rng):
    """Sample x_t | x_0 in closed form."""
    p = berdiff_marginal(x0, t, betas)
    return (rng.random(np.shape(p)) < p).astype(np.int8)


def berdiff_chain(x0, t, betas, rng):
    """Step-by-step flips (used to check the closed form)."""
    x = np.array(x0, dtype=np.int8)
    for s in range(t):
        flip = rng.random(x.shape) < betas[s]
        x = np.where(flip, 1 - x, x)
    return x


def bce_with_logits(logits, x):
    """Entrywise binary cross-entropy averaged over all entries."""
    l = np.asarray(logits, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, l) - x * l))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def berdiff_train(h, config, rng=None):
    """x0-predicting network trained with BCE on corrupted membership vectors."""
    X = _membership(h).astype(np.float64)
    dc = config.diffusion
    betas = flip_schedule(dc.T, dc.beta_start, dc.beta_end)
    abar = flip_keep(betas)
    rng = rng if rng is not None else rng_stream(config.seed, 21)
    dt = np.dtype(dc.dtype)
    net = dif.DenoiserNet(X.shape[1], dc.hidden_dim, dc.num_layers, dc.dropout, dc.time_dim, rng=rng, dtype=dt)
    opt = dif.AdamW(net.params, dc.lr, dc.weight_decay)
    N = X.shape[0]
    bs = max(1, min(dc.batch_size, N))
    losses = []
    for epoch in range(dc.epochs):
        perm = rng.permutation(N)
        tot = 0.0
        for start in range(0, N, bs):
            idx = perm[start:start + bs]
            x0 = X[idx]
            t = rng.integers(1, dc.T + 1, size=idx.size)
            p = 0.5 + (x0 - 0.5) * abar[t][:, None]
            xt = (rng.random(x0.shape) < p).astype(np.float64)
            logits, cache = net.forward(2.0 * xt - 1.0, t, train=True, rng=rng)
            loss = bce_with_logits(logits, x0)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite BCE at epoch {epoch}", iteration=epoch)
            grad = (_sigmoid(logits.astype(np.float64)) - x0) / x0.size
            opt.step(net.params, net.backward(cache, grad))
            tot += loss * idx.size
        losses.append(tot / N)
    return net, betas, losses


def berdiff_reverse(net, betas, count, rng, predict=None):
    """Reverse chain from Bernoulli(1/2) noise; returns x_0 samples (count, n)."""
    predict = predict or (lambda x, t: _sigmoid(np.asarray(net.predict(2.0 * x - 1.0, t), dtype=np.float64)))
    T = len(betas)
    abar = flip_keep(betas)
    n = net.dim if net is not None else None
    x = (rng.random((count, n)) < 0.5).astype(np.float64)
    for t in range(T, 0, -1):
        p0 = predict(x, np.full(count, t))
        prior1 = 0.5 + (p0 - 0.5) * abar[t - 1]  # P(x_{t-1}=1) averaged over predicted x0
        b = betas[t - 1]
        like1 = np.where(x == 1, 1.0 - b, b)  # q(x_t | x_{t-1} = 1)
        like0 = np.where(x == 0, 1.0 - b, b)
        w1 = like1 * prior1
        w0 = like0 * (1.0 - prior1)
        x = (rng.random(x.shape) < w1 / (w0 + w1)).astype(np.float64)
    return x


def berdiff_generate(h, config, trained=None):
    net, betas, _ = trained if trained is not None else berdiff_train(h, config)
    m_tilde = config.m_tilde or h.m
    X = berdiff_reverse(net, betas, m_tilde, rng_stream(config.seed, 22))
    raw = [tuple(np.flatnonzero(row).tolist()) for row in X]
    g, nf = filter_edges(h.n, raw, config.min_edge_size)
    return Generated(g, nf, np.array([len(e) for e in raw]))


# ---------------------------------------------------------------- Gau-Diff

def gaudiff_train(h, config):
    X = 2.0 * _membership(h) - 1.0
    dc = dif.DiffusionConfig(**{**config.diffusion.__dict__, "standardize": False})
    sched = dc.schedule()
    net = dif.train_denoiser(X, sched, dc, rng_stream(config.seed, 31))
    return net, sched


def gaudiff_decode(x):
    """Bernoulli probability per coordinate: clamp((x + 1) / 2, 0, 1)."""
    return np.clip((np.asarray(x, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)


def gaudiff_generate(h, config, trained=None):
    net, sched = trained if trained is not None else gaudiff_train(h, config)
    m_tilde = config.m_tilde or h.m
    X = dif.reverse_sample(net, sched, m_tilde, rng_stream(config.seed, 32))
    raw = bernoulli_edges(gaudiff_decode(X).T, config.seed, stream=33)
    g, nf = filter_edges(h.n, raw, config.min_edge_size)
    return Generated(g, nf, np.array([len(e) for e in raw]))


# ---------------------------------------------------------------- NMF-Diff

def nmf_objective(E, U, Z, reg):
    R = E - U @ Z.T
    return float(np.sum(R * R) + reg * (U.sum() + Z.sum()))


def nmf_fit(E, K, iters=500, reg=0.0, rng=None, eps=1e-12, return_trace=False):
    """Multiplicative updates for min ||E - U Z^T||_F^2 + reg (|U|_1 + |Z|_1), U, Z >= 0.

    E is (n, m). Raises NumericalError if the objective increases by more
    than 1e-9 (relative) in any sweep.
    """
    if K < 1:
        raise DomainError("K must be >= 1")
    E = np.asarray(E, dtype=np.float64)
    n, m = E.shape
    rng = rng if rng is not None else np.random.default_rng(0)
    scale = math.sqrt(max(E.mean(), eps) / K)
    U = scale * rng.random((n, K)) + eps
    Z = scale * rng.random((m, K)) + eps
    trace = [nmf_objective(E, U, Z, reg)]
    for it in range(iters):
        U *= (E @ Z) / (U @ (Z.T @ Z) + 0.5 * reg + eps)
        Z *= (E.T @ U) / (Z @ (U.T @ U) + 0.5 * reg + eps)
        obj = nmf_objective(E, U, Z, reg)
        if obj > trace[-1] + 1e-9 * max(1.0, trace[-1]):
            raise NumericalError(f"NMF objective increased at sweep {it}", iteration=it)
        trace.append(obj)
    return (U, Z, trace) if return_trace else (U, Z)


def nmf_decode(U, z, squash="clamp"):
    """Membership probabilities (n, count) for latent rows z (count, K)."""
    s = np.asarray(U) @ np.atleast_2d(z).T
    if squash == "clamp":
        return np.clip(s, 0.0, 1.0)
    if squash == "logistic":
        return _sigmoid(s)
    raise DomainError(f"unknown squash {squash!r}")


def nmfdiff_train(h, config):
    E = _membership(h).T
    U, Z = nmf_fit(E, config.K, config.nmf_iters, config.nmf_reg, rng_stream(config.seed, 41))
    sched = config.diffusion.schedule()
    net = dif.train_denoiser(Z, sched, config.diffusion, rng_stream(config.seed, 42))
    return U, net, sched


def nmfdiff_generate(h, config, trained=None):
    U, net, sched = trained if trained is not None else nmfdiff_train(h, config)
    m_tilde = config.m_tilde or h.m
    Zs = dif.reverse_sample(net, sched, m_tilde, rng_stream(config.seed, 43))
    raw = bernoulli_edges(nmf_decode(U, Zs, config.squash), config.seed, stream=44)
    g, nf = filter_edges(h.n, raw, config.min_edge_size)
    return Generated(g, nf, np.array([len(e) for e in raw]))


def run_baseline(method, h, config):
    if method == "ber-diff":
        return berdiff_generate(h, config)
    if method == "gau-diff":
        return gaudiff_generate(h, config)
    if method == "nmf-diff":
        return nmfdiff_generate(h, config)
    raise DomainError(f"unknown baseline {method!r}")
