"""Experiment jobs shared by the command line and the benchmark sweep."""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import baselines, diffusion as dif, pipeline, vi
from .errors import DomainError
from .hypercore import write_edge_lines
from .metrics import CSV_COLUMNS, evaluate
from .synthdata import SynthConfig, generate_synthetic, sample_reference

METHODS = ("hyvint", "hyvint-taylor") + baselines.METHODS

PRESETS = {
    "paper-k2-small": dict(K=[2], n=[200], m=[200], rho=["unit"], link=["poisson"],
                           methods=["hyvint"], seeds=[42, 43, 44, 45, 46]),
    "paper-k2-sigmoid": dict(K=[2], n=[200], m=[200], rho=["unit"], link=["sigmoid"],
                             methods=["hyvint"], seeds=[42, 43, 44, 45, 46]),
    "baselines-small": dict(K=[2], n=[100], m=[100], rho=["unit"], link=["poisson"],
                            methods=list(baselines.METHODS), seeds=[42]),
}


@dataclass
class MethodSettings:
    """Everything a generator needs besides the data."""

    K: int = 2
    seed: int = 42
    prior: float = 0.1
    vi_lr: float = 1e-2
    vi_iters: int = 3000
    vi_tol: float = 1e-9
    diffusion: dif.DiffusionConfig = field(default_factory=dif.DiffusionConfig)
    m_tilde: int = None
    min_edge_size: int = 2
    nmf_iters: int = 500
    nmf_reg: float = 0.0
    squash: str = "clamp"

    def fit_config(self, method):
        return vi.FitConfig(K=self.K, max_iters=self.vi_iters, learning_rate=self.vi_lr,
                            tolerance=self.vi_tol, seed=self.seed,
                            estimator="taylor" if method == "hyvint-taylor" else "lower_bound")

    def baseline_config(self):
        return baselines.BaselineConfig(self.diffusion, self.K, self.nmf_iters, self.nmf_reg,
                                        self.squash, self.m_tilde, self.min_edge_size, self.seed)

    def generation(self):
        return pipeline.GenerationSpec(self.m_tilde, self.min_edge_size, self.seed)


def run_method(method, h, settings, outdir, resume=False):
    """Train ``method`` on ``h`` and generate; returns pipeline.Generated.

    The generated hypergraph is written to ``<outdir>/<method>.generated.txt``.
    """
    os.makedirs(outdir, exist_ok=True)
    if method in ("hyvint", "hyvint-taylor"):
        gen, _ = pipeline.run_hyvint(h, vi.PriorSpec.uniform(settings.prior), settings.fit_config(method),
                                     settings.diffusion, settings.generation(), outdir, resume=resume, tag=method)
        return gen
    if method in baselines.METHODS:
        gen = baselines.run_baseline(method, h, settings.baseline_config())
        write_edge_lines(gen.structure, os.path.join(outdir, f"{method}.generated.txt"))
        return gen
    raise DomainError(f"unknown method {method!r}")


@dataclass
class SyntheticJob:
    method: str
    K: int
    n: int
    m: int
    rho: str
    link: str
    seed: int
    settings: MethodSettings
    outdir: str
    reference_edges: int = 5000

    @property
    def dataset(self):
        return f"synth-K{self.K}-n{self.n}-m{self.m}-{self.rho}-{self.link}"

    @property
    def key(self):
        return (self.dataset, self.method, self.seed)


def run_synthetic_job(job):
    """Sample data, fit and generate, evaluate. Returns (csv row list, report)."""
    t0 = time.perf_counter()
    cfg = SynthConfig(job.K, job.n, job.m, job.rho, job.link, job.seed)
    h, _ = generate_synthetic(cfg)
    ref = sample_reference(cfg, job.reference_edges)
    gen = run_method(job.method, h, job.settings, job.outdir)
    rep = evaluate(h, gen.structure, seed=job.seed, rmse_ref=ref)
    with open(os.path.join(job.outdir, f"{job.method}.report.txt"), "w") as fh:
        fh.write(rep.to_text())
    row = rep.csv_row(job.dataset, job.method, job.K, job.n, job.m, job.seed,
                      gen.filtered, round(time.perf_counter() - t0, 3))
    return row, rep


def _safe_job(job):
    try:
        row, _ = run_synthetic_job(job)
        return job.key, row, None
    except Exception as exc:  # recorded per job
        return job.key, None, f"{type(exc).__name__}: {exc}"


def run_jobs(jobs, workers=1):
    """Run jobs (optionally in a process pool); results sorted by job key."""
    if workers <= 1:
        out = [_safe_job(j) for j in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_safe_job, jobs))
    return sorted(out, key=lambda r: r[0])


# ---------------------------------------------------------------- aggregation

AGG_METRICS = CSV_COLUMNS[6:18]  # rmse_mean .. filtered_edges


def aggregate(rows):
    """Mean and sample std per (dataset, method) over seeds; rows are CSV lists."""
    groups = {}
    for row in rows:
        rec = dict(zip(CSV_COLUMNS, row))
        groups.setdefault((rec["dataset"], rec["method"], rec["K"], rec["n"], rec["m"]), []).append(rec)
    out = []
    for key in sorted(groups):
        recs = groups[key]
        stats = {}
        for col in AGG_METRICS:
            vals = np.array([float(r[col]) for r in recs])
            stats[col] = (float(np.mean(vals)), float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0)
        out.append((key, len(recs), stats))
    return out


def format_table(agg):
    """Fixed-width text table, one row per (dataset, method), mean +/- std cells."""
    cols = ["rmse_mean", "rmse_cov", "l_deg", "l_size", "l_spec", "l_cent_c", "l_cent_h", "l_cent_b"]
    head = f"{'dataset':<36} {'method':<14} {'seeds':>5} " + " ".join(f"{c:>19}" for c in cols)
    lines = [head, "-" * len(head)]
    for (dataset, method, *_), count, stats in agg:
        cells = " ".join(f"{stats[c][0]:>9.4f}+-{stats[c][1]:<8.4f}" for c in cols)
        lines.append(f"{dataset:<36} {method:<14} {count:>5} {cells}")
    return "\n".join(lines) + "\n"


def plot_rows(agg, metric):
    """(method, x, y, err) with x = node count of the cell."""
    return [(key[1], key[3], stats[metric][0], stats[metric][1]) for key, _, stats in agg]

