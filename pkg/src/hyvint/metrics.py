"""Evaluation metrics between a reference and a generated hypergraph."""

from dataclasses import dataclass, field, fields

import numpy as np

from . import kernels
from .errors import DataError
from .hypercore import IncidenceStructure, adjacency_csr, clique_expansion, degrees, sizes
from .numkit import rng_stream, sym_eigenvalues

CSV_COLUMNS = (
    "dataset", "method", "K", "n", "m", "seed", "rmse_mean", "rmse_cov", "l_deg", "l_size",
    "l_spec", "l_cent_c", "l_cent_h", "l_cent_b", "uhr", "nhr", "pjd", "filtered_edges", "runtime_s",
)


def _gram(h, chunk=4096):
    G = np.zeros((h.n, h.n))
    for start in range(0, h.m, chunk):
        Bs = IncidenceStructure(h.n, h.edges[start:start + chunk]).dense()
        G += Bs @ Bs.T
    return G


def empirical_mean_cov(h):
    """Mean membership vector and (biased) covariance over hyperedges."""
    if h.m == 0:
        raise DataError("empirical mean/cov need at least one hyperedge")
    mu = degrees(h) / h.m
    return mu, _gram(h) / h.m - np.outer(mu, mu)


def rmse_pair(ref, gen):
    if ref.n != gen.n:
        raise DataError(f"node counts differ: {ref.n} vs {gen.n}")
    mu_r, cov_r = empirical_mean_cov(ref)
    mu_g, cov_g = empirical_mean_cov(gen)
    n = ref.n
    return (float(np.linalg.norm(mu_r - mu_g) / np.sqrt(n)),
            float(np.linalg.norm(cov_r - cov_g, "fro") / n))


def w1_empirical(xs, ys):
    """Exact Wasserstein-1 distance between two 1-D empirical measures."""
    x = np.sort(np.asarray(xs, dtype=np.float64).ravel())
    y = np.sort(np.asarray(ys, dtype=np.float64).ravel())
    if x.size == 0 or y.size == 0:
        raise DataError("w1_empirical needs two nonempty samples")
    pts = np.union1d(x, y)
    if pts.size < 2:
        return 0.0
    fx = np.searchsorted(x, pts[:-1], side="right") / x.size
    fy = np.searchsorted(y, pts[:-1], side="right") / y.size
    return float(np.sum(np.abs(fx - fy) * np.diff(pts)))


def normalized_laplacian(W):
    """I - D^-1/2 W D^-1/2; rows/columns of isolated nodes are all zero."""
    W = np.asarray(W, dtype=np.float64)
    deg = W.sum(axis=1)
    live = deg > 0
    inv = np.zeros_like(deg)
    inv[live] = 1.0 / np.sqrt(deg[live])
    L = -(inv[:, None] * W * inv[None, :])
    L[np.diag_indices_from(L)] = live.astype(np.float64)
    return L


def laplacian_spectrum(h, backend=None):
    return sym_eigenvalues(normalized_laplacian(clique_expansion(h)), backend=backend)


def centralities(h, backend=None):
    """(closeness, harmonic, betweenness) on the binary projection."""
    W = clique_expansion(h)
    indptr, indices = adjacency_csr(W > 0)
    return kernels.get(backend).centralities(h.n, indptr, indices)


def structural_losses(ref, gen, backend=None):
    """W1 losses over degrees, sizes, spectrum and the three centralities."""
    if ref.n != gen.n:
        raise DataError(f"node counts differ: {ref.n} vs {gen.n}")
    # an empty edge list has no size distribution; treat it as a single 0
    s_ref = sizes(ref) if ref.m else np.zeros(1)
    s_gen = sizes(gen) if gen.m else np.zeros(1)
    out = [
        w1_empirical(degrees(ref), degrees(gen)),
        w1_empirical(s_ref, s_gen),
        w1_empirical(laplacian_spectrum(ref, backend), laplacian_spectrum(gen, backend)),
    ]
    for a, b in zip(centralities(ref, backend), centralities(gen, backend)):
        out.append(w1_empirical(a, b))
    return tuple(out)


def _pair_jaccard_distance(edges, n, pairs=None):
    if pairs is None:
        B = IncidenceStructure(n, tuple(edges)).dense()
        inter = B.T @ B
        sz = np.diag(inter).copy()
        union = sz[:, None] + sz[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            jac = np.where(union > 0, inter / np.where(union > 0, union, 1), 1.0)
        iu = np.triu_indices(len(edges), 1)
        return float(np.mean(1.0 - jac[iu]))
    sets = [frozenset(e) for e in edges]
    tot = 0.0
    for a, b in pairs:
        u = len(sets[a] | sets[b])
        tot += 1.0 - (len(sets[a] & sets[b]) / u if u else 1.0)
    return tot / len(pairs)


def novelty_diversity(ref, gen, seed=0, exact_limit=2000, n_pairs=50000):
    """(uhr, nhr, pjd, flags).

    ``flags`` lists conditions under which a value is a placeholder (0) or an
    estimate: ``pjd_undefined``, ``nhr_undefined``, ``pjd_subsampled``.
    """
    flags = []
    mt = gen.m
    uniq = set(gen.edges)
    uhr = len(uniq) / mt if mt else 0.0
    if uniq:
        nhr = len(uniq - set(ref.edges)) / len(uniq)
    else:
        nhr = 0.0
        flags.append("nhr_undefined")
    if mt < 2:
        pjd = 0.0
        flags.append("pjd_undefined")
    elif mt <= exact_limit:
        pjd = _pair_jaccard_distance(gen.edges, gen.n)
    else:
        rng = rng_stream(seed, 99)
        a = rng.integers(mt, size=n_pairs)
        b = rng.integers(mt - 1, size=n_pairs)
        b = b + (b >= a)  # distinct pair, uniform over ordered pairs
        pjd = _pair_jaccard_distance(gen.edges, gen.n, list(zip(a.tolist(), b.tolist())))
        flags.append("pjd_subsampled")
    return uhr, nhr, pjd, flags


@dataclass
class MetricsReport:
    rmse_mean: float = 0.0
    rmse_cov: float = 0.0
    l_deg: float = 0.0
    l_size: float = 0.0
    l_spec: float = 0.0
    l_cent_closeness: float = 0.0
    l_cent_harmonic: float = 0.0
    l_cent_betweenness: float = 0.0
    uhr: float = 0.0
    nhr: float = 0.0
    pjd: float = 0.0
    flags: list = field(default_factory=list)

    def values(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "flags"}

    def to_text(self):
        lines = [f"{k}={v!r}" for k, v in self.values().items()]
        lines.append("flags=" + ",".join(self.flags))
        return "\n".join(lines) + "\n"

    def csv_row(self, dataset, method, K, n, m, seed, filtered_edges=0, runtime_s=0.0):
        v = self.values()
        row = [dataset, method, K, n, m, seed, v["rmse_mean"], v["rmse_cov"], v["l_deg"], v["l_size"],
               v["l_spec"], v["l_cent_closeness"], v["l_cent_harmonic"], v["l_cent_betweenness"],
               v["uhr"], v["nhr"], v["pjd"], filtered_edges, runtime_s]
        return [repr(float(x)) if isinstance(x, (float, np.floating)) else str(x) for x in row]


def evaluate(ref, gen, seed=0, rmse_ref=None, backend=None):
    """Full report. ``rmse_ref`` optionally replaces ``ref`` for the RMSE pair
    (e.g. a Monte Carlo reference in synthetic studies)."""
    rep = MetricsReport()
    if gen.m == 0:
        rep.flags.append("empty_generation")
        rep.rmse_mean = rep.rmse_cov = float("nan")
    else:
        rep.rmse_mean, rep.rmse_cov = rmse_pair(rmse_ref if rmse_ref is not None else ref, gen)
    (rep.l_deg, rep.l_size, rep.l_spec, rep.l_cent_closeness,
     rep.l_cent_harmonic, rep.l_cent_betweenness) = structural_losses(ref, gen, backend)
    rep.uhr, rep.nhr, rep.pjd, fl = novelty_diversity(ref, gen, seed)
    rep.flags.extend(fl)
    return rep
