"""Hypergraph container, file formats and graph projections."""

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DataError, ParseError

HEADER_PREFIX = "# hyvint-edges"


@dataclass(frozen=True)
class IncidenceStructure:
    """n nodes and an ordered tuple of hyperedges (strictly sorted node tuples).

    ``labels`` optionally maps dense index -> original node id from the source
    file. Duplicate hyperedges are kept.
    """

    n: int
    edges: tuple
    labels: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.n < 0:
            raise DataError("node count must be nonnegative")
        norm = []
        for j, e in enumerate(self.edges):
            t = tuple(int(v) for v in e)
            if any(b <= a for a, b in zip(t, t[1:])):
                raise DataError(f"edge {j} is not strictly increasing: {t}")
            if t and (t[0] < 0 or t[-1] >= self.n):
                raise DataError(f"edge {j} has node ids outside [0, {self.n})")
            norm.append(t)
        object.__setattr__(self, "edges", tuple(norm))

    @classmethod
    def from_sets(cls, n, edges, labels=None):
        """Build from arbitrary iterables of node ids (sorted and deduplicated)."""
        return cls(n, tuple(tuple(sorted(set(int(v) for v in e))) for e in edges), labels)

    @classmethod
    def from_dense(cls, B):
        B = np.asarray(B)
        return cls(B.shape[0], tuple(tuple(np.flatnonzero(B[:, j]).tolist()) for j in range(B.shape[1])))

    @property
    def m(self):
        return len(self.edges)

    @cached_property
    def nnz(self):
        return sum(len(e) for e in self.edges)

    @cached_property
    def coo(self):
        """(node index, edge index) arrays of all positive incidences."""
        rows = np.fromiter((v for e in self.edges for v in e), dtype=np.int64, count=self.nnz)
        cols = np.repeat(np.arange(self.m, dtype=np.int64), [len(e) for e in self.edges])
        return rows, cols

    def dense(self, dtype=np.float64):
        B = np.zeros((self.n, self.m), dtype=dtype)
        rows, cols = self.coo
        B[rows, cols] = 1
        return B

    def __len__(self):
        return self.m


def degrees(h):
    """Number of hyperedges containing each node."""
    rows, _ = h.coo
    return np.bincount(rows, minlength=h.n).astype(np.int64)


def sizes(h):
    """Number of nodes in each hyperedge."""
    return np.array([len(e) for e in h.edges], dtype=np.int64)


def clique_expansion(h, chunk=4096):
    """Weighted adjacency B B^T with the diagonal zeroed (dense n x n)."""
    W = np.zeros((h.n, h.n))
    for start in range(0, h.m, chunk):
        sub = IncidenceStructure(h.n, h.edges[start:start + chunk])
        Bs = sub.dense()
        W += Bs @ Bs.T
    np.fill_diagonal(W, 0.0)
    return W


def binary_projection(h):
    """Boolean adjacency of the simple graph where i~k iff they share an edge."""
    return clique_expansion(h) > 0


def adjacency_csr(adj):
    """(indptr, indices) of a boolean adjacency matrix, int64."""
    adj = np.asarray(adj, dtype=bool)
    counts = adj.sum(axis=1)
    indptr = np.zeros(adj.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.nonzero(adj)[1].astype(np.int64)
    return indptr, indices


def dedup(h):
    """Drop repeated hyperedges, keeping first occurrences in order."""
    seen = set()
    keep = []
    for e in h.edges:
        if e not in seen:
            seen.add(e)
            keep.append(e)
    return IncidenceStructure(h.n, tuple(keep), h.labels)


# ---------------------------------------------------------------- file formats

def _parse_ints(tokens, path, lineno):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        bad = next(t for t in tokens if not t.lstrip("+-").isdigit())
        raise ParseError(f"invalid integer token {bad!r}", path, lineno) from None


class _Remap:
    def __init__(self):
        self.index = {}
        self.labels = []

    def __call__(self, v):
        k = self.index.get(v)
        if k is None:
            k = self.index[v] = len(self.labels)
            self.labels.append(v)
        return k


def _read_edge_lines(path):
    with open(path) as fh:
        lines = fh.readlines()
    dense_n = None
    if lines and lines[0].startswith(HEADER_PREFIX):
        for tok in lines[0].split()[2:]:
            key, _, val = tok.partition("=")
            if key == "n":
                dense_n = int(val)
    remap = _Remap()
    raw = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            if dense_n is not None and s == "#empty":
                raw.append([])
            continue
        ids = _parse_ints(s.split(), path, lineno)
        if dense_n is None:
            ids = [remap(v) for v in ids]
        elif any(v < 0 or v >= dense_n for v in ids):
            raise ParseError(f"node id outside [0, {dense_n})", path, lineno)
        raw.append(ids)
    if dense_n is not None:
        return IncidenceStructure.from_sets(dense_n, raw)
    return IncidenceStructure.from_sets(len(remap.labels), raw, tuple(remap.labels))


def _benson_paths(path):
    base = str(path)
    for suffix in ("-nverts.txt", "-simplices.txt"):
        if base.endswith(suffix):
            base = base[: -len(suffix)]
    return base + "-nverts.txt", base + "-simplices.txt"


def _read_benson(path):
    nv_path, sx_path = _benson_paths(path)
    for p in (nv_path, sx_path):
        if not os.path.exists(p):
            raise DataError(f"missing file {p}")

    def ints(p):
        out = []
        with open(p) as fh:
            for lineno, line in enumerate(fh, 1):
                out.extend(_parse_ints(line.split(), p, lineno))
        return out

    nverts = ints(nv_path)
    flat = ints(sx_path)
    if any(k < 0 for k in nverts) or sum(nverts) != len(flat):
        raise DataError(f"nverts total {sum(nverts)} does not match {len(flat)} simplex entries")
    remap = _Remap()
    raw = []
    pos = 0
    for k in nverts:
        raw.append([remap(v) for v in flat[pos:pos + k]])
        pos += k
    return IncidenceStructure.from_sets(len(remap.labels), raw, tuple(remap.labels))


def load_hypergraph(path, format="edge-lines"):
    """Read a hypergraph file; node ids are remapped by first appearance.

    ``edge-lines``: one hyperedge per line, whitespace-separated ids. Files
    written by :func:`write_edge_lines` carry a header with the node count and
    are read back without remapping (so isolated nodes and empty edges survive).
    ``benson-pair``: ``<prefix>-nverts.txt`` and ``<prefix>-simplices.txt``;
    ``path`` may be the prefix or either file.
    """
    if format == "edge-lines":
        if not os.path.exists(path):
            raise DataError(f"missing file {path}")
        return _read_edge_lines(path)
    if format == "benson-pair":
        return _read_benson(path)
    raise DataError(f"unknown hypergraph format {format!r}")


def write_edge_lines(h, path):
    with open(path, "w") as fh:
        fh.write(f"{HEADER_PREFIX} n={h.n} m={h.m}\n")
        for e in h.edges:
            fh.write((" ".join(map(str, e)) if e else "#empty") + "\n")


def write_node_map(h, path):
    """Dense index -> original id table (identity when no labels are known)."""
    labels = h.labels if h.labels is not None else range(h.n)
    with open(path, "w") as fh:
        fh.write("index\toriginal_id\n")
        for i, lab in enumerate(labels):
            fh.write(f"{i}\t{lab}\n")
