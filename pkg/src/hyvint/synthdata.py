"""Synthetic hypergraphs from truncated-Gaussian-mixture embeddings.

Two links are available: ``poisson`` (p = 1 - exp(-alpha rho theta.beta)) and
``sigmoid`` (p = logistic(theta.beta + alpha), no edge activity).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .hypercore import IncidenceStructure
from .numkit import rng_stream, sample_truncated_gaussian

RHO_RANGES = {"unit": (0.0, 1.0), "shifted": (1.0, 2.0)}
LINKS = ("poisson", "sigmoid")

# stream ids under the dataset seed
_NODE_STREAM = 11
_EDGE_STREAM = 12
_REF_STREAM = 13


@dataclass(frozen=True)
class SynthConfig:
    K: int = 2
    n: int = 200
    m: int = 200
    rho_range: str = "unit"
    link: str = "poisson"
    seed: int = 42

    def __post_init__(self):
        if self.K < 1 or self.n < 1 or self.m < 1:
            raise DomainError("K, n and m must be >= 1")
        if self.rho_range not in RHO_RANGES:
            raise DomainError(f"rho_range must be one of {sorted(RHO_RANGES)}")
        if self.link not in LINKS:
            raise DomainError(f"link must be one of {LINKS}")


def _mixture_draw(K, count, sign, rng):
    """count draws from the K-component mixture with means (1 +/- e_k)/sqrt(K)."""
    comp = rng.integers(K, size=count)
    means = np.full((count, K), 1.0 / math.sqrt(K))
    means[np.arange(count), comp] += sign / math.sqrt(K)
    vals = sample_truncated_gaussian(rng, means, 0.0, 2.0 / math.sqrt(K))
    return vals, comp


def sample_node_embeddings(cfg, rng, return_components=False):
    vals, comp = _mixture_draw(cfg.K, cfg.n, +1.0, rng)
    return (vals, comp) if return_components else vals


def sample_edge_embeddings(cfg, rng, count=None, return_components=False):
    vals, comp = _mixture_draw(cfg.K, cfg.m if count is None else count, -1.0, rng)
    return (vals, comp) if return_components else vals


def _edge_draw(cfg, alpha, theta, rng):
    """One hyperedge: (beta, rho, probabilities, membership)."""
    beta = sample_edge_embeddings(cfg, rng, count=1)[0]
    lo, hi = RHO_RANGES[cfg.rho_range]
    rho = rng.uniform(lo, hi)
    if cfg.link == "poisson":
        lam = alpha * rho * (theta @ beta)
        p = -np.expm1(-lam)
    else:
        p = 1.0 / (1.0 + np.exp(-(theta @ beta + alpha)))
    b = rng.random(alpha.size) < p
    return beta, rho, p, b


def sample_nodes(cfg, alpha_override=None):
    rng = rng_stream(cfg.seed, _NODE_STREAM)
    theta = sample_node_embeddings(cfg, rng)
    alpha = rng.uniform(0.0, 1.0, cfg.n)
    if alpha_override is not None:
        alpha = np.broadcast_to(np.asarray(alpha_override, dtype=np.float64), (cfg.n,)).copy()
    return alpha, theta


def _edges(cfg, alpha, theta, count, stream):
    betas = np.empty((count, cfg.K))
    rhos = np.empty(count)
    probs = np.empty((cfg.n, count))
    edges = []
    for j in range(count):
        rng = rng_stream(cfg.seed, stream, j)
        betas[j], rhos[j], probs[:, j], b = _edge_draw(cfg, alpha, theta, rng)
        edges.append(tuple(np.flatnonzero(b).tolist()))
    return betas, rhos, probs, IncidenceStructure(cfg.n, tuple(edges))


def generate_synthetic(cfg, alpha_override=None):
    """Sample (hypergraph, ground truth).

    Node parameters come from one stream; every hyperedge j from its own
    stream keyed by (seed, j). ``alpha_override`` replaces the node activities
    (test hook). The truth dict holds alpha, theta, rho, beta and the
    incidence probabilities ``prob`` (n x m).
    """
    alpha, theta = sample_nodes(cfg, alpha_override)
    beta, rho, prob, h = _edges(cfg, alpha, theta, cfg.m, _EDGE_STREAM)
    truth = {"alpha": alpha, "theta": theta, "rho": rho, "beta": beta, "prob": prob}
    return h, truth


def sample_reference(cfg, count=5000, alpha_override=None):
    """Monte Carlo reference hypergraph: same node parameters as
    :func:`generate_synthetic`, ``count`` fresh i.i.d. hyperedges."""
    alpha, theta = sample_nodes(cfg, alpha_override)
    _, _, _, h = _edges(cfg, alpha, theta, count, _REF_STREAM)
    return h


def write_truth(truth, path):
    """Plain table ``role index k value`` (k = -1 for scalar parameters)."""
    with open(path, "w") as fh:
        fh.write("role\tindex\tk\tvalue\n")
        for role in ("alpha", "theta", "rho", "beta"):
            arr = np.asarray(truth[role])
            if arr.ndim == 1:
                for i, v in enumerate(arr):
                    fh.write(f"{role}\t{i}\t-1\t{float(v)!r}\n")
            else:
                for i in range(arr.shape[0]):
                    for k in range(arr.shape[1]):
                        fh.write(f"{role}\t{i}\t{k}\t{float(arr[i, k])!r}\n")
