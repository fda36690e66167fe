"""Decode sampled latents into hyperedges and run the three-stage generator end to end."""

import json
import os
from dataclasses import dataclass, asdict, field

import numpy as np

from . import diffusion as dif
from . import vi
from .errors import DataError, DomainError, HyvintError, StageError
from .hypercore import IncidenceStructure, write_edge_lines
from .numkit import rng_stream

_SAMPLE_STREAM = 2
_BERNOULLI_STREAM = 3
_TRAIN_STREAM = 4


@dataclass(frozen=True)
class GenerationSpec:
    m_tilde: int = None  # None: as many edges as observed
    min_edge_size: int = 2
    seed: int = 42

    def __post_init__(self):
        if self.m_tilde is not None and self.m_tilde < 1:
            raise DomainError("m_tilde must be >= 1")
        if self.min_edge_size < 0:
            raise DomainError("min_edge_size must be >= 0")


@dataclass
class Generated:
    structure: IncidenceStructure
    filtered: int
    raw_sizes: np.ndarray = field(repr=False, default=None)

    @property
    def filtered_fraction(self):
        total = self.structure.m + self.filtered
        return self.filtered / total if total else 0.0


def decode_latents(zs, K):
    """Latent rows -> (rho means (m,), beta means (m, K)).

    Log-parameters are clamped to [-12, 12] before exponentiation.
    """
    Z = np.atleast_2d(np.asarray(zs, dtype=np.float64))
    if Z.shape[1] != 2 * K + 2:
        raise DataError(f"latent vectors must have length {2 * K + 2}, got {Z.shape[1]}")
    if not np.all(np.isfinite(Z)):
        raise DataError("latent vectors contain non-finite entries")
    Z = np.clip(Z, -vi.LOG_CLAMP, vi.LOG_CLAMP)
    rho = np.exp(Z[:, 0] - Z[:, 1])
    beta = np.exp(Z[:, 2::2] - Z[:, 3::2])
    return rho, beta


def decode_shapes_rates(zs, K):
    """Latent rows -> dict of clamped shapes and rates for rho and beta."""
    Z = np.clip(np.atleast_2d(np.asarray(zs, dtype=np.float64)), -vi.LOG_CLAMP, vi.LOG_CLAMP)
    if Z.shape[1] != 2 * K + 2:
        raise DataError(f"latent vectors must have length {2 * K + 2}, got {Z.shape[1]}")
    e = np.exp(Z)
    return {"a_rho": e[:, 0], "b_rho": e[:, 1], "a_beta": e[:, 2::2], "b_beta": e[:, 3::2]}


def intensity(alpha_hat, theta_hat, rho_star, beta_star):
    """alpha * rho * theta.beta; broadcasts to an (n, m) matrix for vector inputs."""
    a = np.asarray(alpha_hat, dtype=np.float64)
    th = np.asarray(theta_hat, dtype=np.float64)
    r = np.asarray(rho_star, dtype=np.float64)
    be = np.asarray(beta_star, dtype=np.float64)
    if a.ndim == 0 and r.ndim == 0:
        return float(a * r * np.dot(th, be))
    return np.multiply.outer(a, r) * (np.atleast_2d(th) @ np.atleast_2d(be).T)


def incidence_probability(lam):
    """1 - exp(-lambda), computed as -expm1(-lambda)."""
    arr = np.asarray(lam, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("intensity must be nonnegative")
    p = -np.expm1(-arr)
    return float(p) if arr.ndim == 0 else p


def bernoulli_edges(prob, seed, stream=_BERNOULLI_STREAM):
    """Column j of ``prob`` (n x m) drawn with its own stream keyed by (seed, j)."""
    n, m = prob.shape
    out = []
    for j in range(m):
        u = rng_stream(seed, stream, j).random(n)
        out.append(tuple(np.flatnonzero(u < prob[:, j]).tolist()))
    return out


def filter_edges(n, edges, min_edge_size):
    keep = tuple(e for e in edges if len(e) >= min_edge_size)
    return IncidenceStructure(n, keep), len(edges) - len(keep)


def generate_from_latents(alpha_hat, theta_hat, zs, gen_spec):
    K = np.shape(theta_hat)[1]
    rho, beta = decode_latents(zs, K)
    prob = incidence_probability(intensity(alpha_hat, theta_hat, rho, beta))
    raw = bernoulli_edges(np.atleast_2d(prob).reshape(len(alpha_hat), -1), gen_spec.seed)
    h, nf = filter_edges(len(alpha_hat), raw, gen_spec.min_edge_size)
    return Generated(h, nf, np.array([len(e) for e in raw]))


def generate(state, net, schedule, gen_spec):
    """Sample edge latents from the diffusion model and decode them into hyperedges."""
    m_tilde = gen_spec.m_tilde if gen_spec.m_tilde is not None else state.m
    zs = dif.reverse_sample(net, schedule, m_tilde, rng_stream(gen_spec.seed, _SAMPLE_STREAM))
    means = state.means()
    return generate_from_latents(means["alpha"], means["theta"], zs, gen_spec)


# ---------------------------------------------------------------- orchestration

ARTIFACTS = ("vi_state", "latents", "denoiser", "generated", "manifest")


def _artifact_paths(outdir, tag="hyvint"):
    return {
        "vi_state": os.path.join(outdir, f"{tag}.vi.tsv"),
        "latents": os.path.join(outdir, f"{tag}.latents.tsv"),
        "denoiser": os.path.join(outdir, f"{tag}.denoiser.bin"),
        "generated": os.path.join(outdir, f"{tag}.generated.txt"),
        "manifest": os.path.join(outdir, f"{tag}.manifest.txt"),
    }


def save_latents(zs, path):
    np.savetxt(path, np.asarray(zs), delimiter="\t", fmt="%.17g")


def load_latents(path):
    return np.atleast_2d(np.loadtxt(path, delimiter="\t", ndmin=2))


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except HyvintError as exc:
        raise StageError(name, exc) from exc


def run_hyvint(h, prior, fit_config, diff_config, gen_spec, outdir, resume=False, tag="hyvint"):
    """Fit q(Z), train the latent denoiser, generate; persists every stage.

    With ``resume`` any stage whose checkpoint already exists is loaded
    instead of recomputed. Returns (Generated, artifact paths).
    """
    if h.m == 0:
        raise DataError("cannot run on a hypergraph without hyperedges")
    os.makedirs(outdir, exist_ok=True)
    paths = _artifact_paths(outdir, tag)

    if resume and os.path.exists(paths["vi_state"]):
        state, _, _ = _stage("vi", vi.load_state, paths["vi_state"])
    else:
        state = _stage("vi", vi.fit_variational, h, prior, fit_config)
        vi.save_state(state, paths["vi_state"], fit_config.seed, prior)
    zs = vi.export_latents(state)
    save_latents(zs, paths["latents"])

    if resume and os.path.exists(paths["denoiser"]):
        net, schedule = _stage("diffusion", dif.load_net, paths["denoiser"])
    else:
        schedule = diff_config.schedule()
        rng = rng_stream(gen_spec.seed, _TRAIN_STREAM)
        net = _stage("diffusion", dif.train_denoiser, zs, schedule, diff_config, rng)
        dif.save_net(net, schedule, paths["denoiser"])

    gen = _stage("generate", generate, state, net, schedule, gen_spec)
    write_edge_lines(gen.structure, paths["generated"])
    write_manifest(paths["manifest"], {
        "method": "hyvint-taylor" if fit_config.estimator == "taylor" else "hyvint",
        "fit": asdict(fit_config), "prior": asdict(prior), "diffusion": asdict(diff_config),
        "generation": asdict(gen_spec), "filtered_edges": gen.filtered,
        "artifacts": {k: v for k, v in paths.items() if k != "manifest"},
    })
    return gen, paths


def write_manifest(path, record):
    """One ``key=value`` per line; nested dicts are JSON encoded."""
    with open(path, "w") as fh:
        for key, val in record.items():
            if isinstance(val, (dict, list, tuple)):
                val = json.dumps(val, sort_keys=True)
            fh.write(f"{key}={val}\n")


def read_manifest(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            try:
                out[key] = json.loads(val)
            except ValueError:
                out[key] = val
    return out
