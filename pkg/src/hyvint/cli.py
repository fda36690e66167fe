"""Command line: synth, fit, generate, eval, bench, replay.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import os
import subprocess
import sys
import time

from . import harness, hypercore, pipeline, vi
from . import diffusion as dif
from .errors import DataError, DomainError, HyvintError, NumericalError, StageError
from .metrics import CSV_COLUMNS, evaluate
from .synthdata import RHO_RANGES, LINKS, SynthConfig, generate_synthetic, sample_reference, write_truth

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- flags

def _diffusion_flags(p):
    d = dif.DiffusionConfig()
    g = p.add_argument_group("diffusion")
    g.add_argument("--epochs", type=int, default=d.epochs)
    g.add_argument("--batch_size", type=int, default=d.batch_size)
    g.add_argument("--lr", type=float, default=d.lr)
    g.add_argument("--weight_decay", type=float, default=d.weight_decay)
    g.add_argument("--hidden_dim", type=int, default=d.hidden_dim)
    g.add_argument("--num_layers", type=int, default=d.num_layers)
    g.add_argument("--dropout", type=float, default=d.dropout)
    g.add_argument("--T", type=int, default=d.T)
    g.add_argument("--beta_start", type=float, default=d.beta_start)
    g.add_argument("--beta_end", type=float, default=d.beta_end)
    g.add_argument("--ema_decay", type=float, default=d.ema_decay)


def _fit_flags(p):
    s = harness.MethodSettings()
    g = p.add_argument_group("variational fit")
    g.add_argument("--prior", type=float, default=s.prior, help="value of all eight Gamma hyperparameters")
    g.add_argument("--vi_lr", type=float, default=s.vi_lr)
    g.add_argument("--vi_iters", type=int, default=s.vi_iters)
    g.add_argument("--vi_tol", type=float, default=s.vi_tol)


def _gen_flags(p):
    g = p.add_argument_group("generation")
    g.add_argument("--m_tilde", type=int, default=None, help="edges to generate (default: observed m)")
    g.add_argument("--min_edge_size", type=int, default=2)
    g.add_argument("--nmf_iters", type=int, default=500)
    g.add_argument("--nmf_reg", type=float, default=0.0)
    g.add_argument("--squash", choices=["clamp", "logistic"], default="clamp")


def _input_flags(p):
    p.add_argument("--input", required=True, help="hypergraph file (or benson prefix)")
    p.add_argument("--format", choices=["edge-lines", "benson-pair"], default="edge-lines")
    p.add_argument("--dedup", action="store_true", help="drop repeated hyperedges before training")


def build_parser():
    top = Parser(prog="hyvint", description=__doc__.splitlines()[0])
    top.add_argument("--config", help="key=value file; command-line flags override it")
    sub = top.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("synth", help="sample a synthetic hypergraph")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--rho", choices=sorted(RHO_RANGES), default="unit")
    p.add_argument("--link", choices=LINKS, default="poisson")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--reference_edges", type=int, default=5000,
                   help="fresh hyperedges in the Monte Carlo reference (0 to skip)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit the variational posterior (stage 1)")
    _input_flags(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--method", choices=["hyvint", "hyvint-taylor"], default="hyvint")
    _fit_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="train a generator and sample a hypergraph")
    _input_flags(p)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--method", choices=harness.METHODS, default="hyvint")
    p.add_argument("--resume", action="store_true", help="reuse checkpoints found in --out")
    _fit_flags(p)
    _diffusion_flags(p)
    _gen_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="compare a generated hypergraph with a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--rmse_reference", help="hypergraph used for the RMSE pair instead of --reference")
    p.add_argument("--format", choices=["edge-lines", "benson-pair"], default="edge-lines")
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--method", default="hyvint")
    p.add_argument("--K", type=int, default=0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--filtered_edges", type=int, default=0)
    p.add_argument("--csv", help="append one row to this CSV")
    p.add_argument("--report", help="write the key=value report here")
    p.add_argument("--out", help="directory for report.txt and manifest.txt")

    p = sub.add_parser("bench", help="multi-seed sweep with aggregation")
    p.add_argument("--grid", help="key=value grid file (K, n, m, rho, link, methods, seeds as comma lists)")
    p.add_argument("--preset", choices=sorted(harness.PRESETS))
    p.add_argument("--seeds", help="comma list overriding the grid seeds")
    p.add_argument("--methods", help="comma list overriding the grid methods")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--reference_edges", type=int, default=5000)
    _fit_flags(p)
    _diffusion_flags(p)
    _gen_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="write outputs here instead of the recorded --out")
    return top


def read_config(path):
    """Flat key=value file, '#' comments, later keys win."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = val
    return out


def parse_args(argv):
    parser = build_parser()
    pre = Parser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        values = read_config(known.config)
        sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        command = next((tok for tok in rest if tok in sub_action.choices), None)
        if command is not None:
            # file values become defaults of the chosen subcommand; explicit flags still win
            sp = sub_action.choices[command]
            conv = {}
            for act in sp._actions:
                if act.dest not in values:
                    continue
                raw = values[act.dest]
                if act.type is not None:
                    raw = act.type(raw)
                elif act.const is True:
                    raw = raw.lower() in ("1", "true", "yes")
                if act.choices is not None and raw not in act.choices:
                    raise UsageError(f"config value {act.dest}={raw} not in {list(act.choices)}")
                conv[act.dest] = raw
                act.required = False
            sp.set_defaults(**conv)
    return parser.parse_args(argv)


def git_describe():
    try:
        here = os.path.dirname(os.path.abspath(__file__))
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_run_manifest(path, argv, args, extra=None):
    record = {"argv": list(argv), "command": args.command,
              "config": {k: v for k, v in sorted(vars(args).items())},
              "git": git_describe(), "seed": getattr(args, "seed", None)}
    record.update(extra or {})
    pipeline.write_manifest(path, record)


def _settings(args):
    dc = dif.DiffusionConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, weight_decay=args.weight_decay,
        hidden_dim=args.hidden_dim, num_layers=args.num_layers, dropout=args.dropout, T=args.T,
        beta_start=args.beta_start, beta_end=args.beta_end, ema_decay=args.ema_decay)
    return harness.MethodSettings(
        K=getattr(args, "K", 2), seed=getattr(args, "seed", 42), prior=args.prior, vi_lr=args.vi_lr,
        vi_iters=args.vi_iters, vi_tol=args.vi_tol, diffusion=dc, m_tilde=args.m_tilde,
        min_edge_size=args.min_edge_size, nmf_iters=args.nmf_iters, nmf_reg=args.nmf_reg, squash=args.squash)


def _load_input(args):
    h = hypercore.load_hypergraph(args.input, args.format)
    if args.dedup:
        h = hypercore.dedup(h)
    return h


# ---------------------------------------------------------------- commands

def cmd_synth(args, argv):
    os.makedirs(args.out, exist_ok=True)
    cfg = SynthConfig(args.K, args.n, args.m, args.rho, args.link, args.seed)
    h, truth = generate_synthetic(cfg)
    hypercore.write_edge_lines(h, os.path.join(args.out, "data.txt"))
    write_truth(truth, os.path.join(args.out, "truth.tsv"))
    if args.reference_edges > 0:
        ref = sample_reference(cfg, args.reference_edges)
        hypercore.write_edge_lines(ref, os.path.join(args.out, "reference.txt"))
    write_run_manifest(os.path.join(args.out, "manifest.txt"), argv, args,
                       {"density": h.nnz / (h.n * h.m)})
    print(f"wrote {h.m} hyperedges on {h.n} nodes to {args.out}")


def cmd_fit(args, argv):
    os.makedirs(args.out, exist_ok=True)
    h = _load_input(args)
    s = harness.MethodSettings(K=args.K, seed=args.seed, prior=args.prior, vi_lr=args.vi_lr,
                               vi_iters=args.vi_iters, vi_tol=args.vi_tol)
    prior = vi.PriorSpec.uniform(args.prior)
    res = pipeline._stage("vi", vi.fit_variational, h, prior, s.fit_config(args.method), return_result=True)
    tag = args.method
    vi.save_state(res.state, os.path.join(args.out, f"{tag}.vi.tsv"), args.seed, prior)
    pipeline.save_latents(vi.export_latents(res.state), os.path.join(args.out, f"{tag}.latents.tsv"))
    hypercore.write_node_map(h, os.path.join(args.out, "node_map.tsv"))
    write_run_manifest(os.path.join(args.out, "manifest.txt"), argv, args,
                       {"elbo_initial": res.trace[0], "elbo_final": max(res.trace), "iterations": res.iterations})
    print(f"ELBO {res.trace[0]:.6g} -> {max(res.trace):.6g} after {res.iterations} iterations")


def cmd_generate(args, argv):
    h = _load_input(args)
    s = _settings(args)
    gen = harness.run_method(args.method, h, s, args.out, resume=args.resume)
    hypercore.write_node_map(h, os.path.join(args.out, "node_map.tsv"))
    write_run_manifest(os.path.join(args.out, "manifest.txt"), argv, args,
                       {"filtered_edges": gen.filtered, "generated_edges": gen.structure.m})
    print(f"generated {gen.structure.m} hyperedges ({gen.filtered} filtered)")


def cmd_eval(args, argv):
    t0 = time.perf_counter()
    ref = hypercore.load_hypergraph(args.reference, args.format)
    gen = hypercore.load_hypergraph(args.generated)
    if ref.n != gen.n:
        raise DataError(f"node counts differ: reference {ref.n}, generated {gen.n}")
    rref = hypercore.load_hypergraph(args.rmse_reference) if args.rmse_reference else None
    rep = evaluate(ref, gen, seed=args.seed, rmse_ref=rref)
    text = rep.to_text()
    report = args.report
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        report = report or os.path.join(args.out, "report.txt")
    if report:
        with open(report, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    if args.csv:
        row = rep.csv_row(args.dataset, args.method, args.K, ref.n, ref.m, args.seed,
                          args.filtered_edges, round(time.perf_counter() - t0, 3))
        new = not os.path.exists(args.csv)
        with open(args.csv, "a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(CSV_COLUMNS)
            w.writerow(row)
    # the manifest goes wherever the outputs went
    where = args.out or os.path.dirname(os.path.abspath(report or args.csv or ""))
    if args.out or report or args.csv:
        write_run_manifest(os.path.join(where, "manifest.txt" if args.out else "eval.manifest.txt"),
                           argv, args, {"flags": rep.flags})


def _grid(args):
    if args.preset:
        grid = {k: list(v) for k, v in harness.PRESETS[args.preset].items()}
    elif args.grid:
        raw = read_config(args.grid)
        grid = {}
        for key, conv in (("K", int), ("n", int), ("m", int), ("rho", str), ("link", str),
                          ("methods", str), ("seeds", int)):
            if key not in raw:
                raise DataError(f"grid file lacks {key}")
            grid[key] = [conv(v.strip()) for v in raw[key].split(",") if v.strip()]
    else:
        raise UsageError("bench needs --grid or --preset")
    if args.seeds:
        grid["seeds"] = [int(v) for v in args.seeds.split(",")]
    if args.methods:
        grid["methods"] = args.methods.split(",")
    for m in grid["methods"]:
        if m not in harness.METHODS:
            raise UsageError(f"unknown method {m!r}")
    return grid


def cmd_bench(args, argv):
    grid = _grid(args)
    base = _settings(args)
    jobs = []
    for K in grid["K"]:
        for n in grid["n"]:
            for m in grid["m"]:
                for rho in grid["rho"]:
                    for link in grid["link"]:
                        for method in grid["methods"]:
                            for seed in grid["seeds"]:
                                s = harness.MethodSettings(**{**base.__dict__, "K": K, "seed": seed})
                                job = harness.SyntheticJob(method, K, n, m, rho, link, seed, s, "", args.reference_edges)
                                job.outdir = os.path.join(args.out, "jobs", f"{job.dataset}", method, f"seed{seed}")
                                jobs.append(job)
    os.makedirs(args.out, exist_ok=True)
    results = harness.run_jobs(jobs, args.workers)
    rows = [r for _, r, err in results if r is not None]
    failures = [(k, err) for k, r, err in results if err is not None]
    with open(os.path.join(args.out, "results.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        w.writerows(rows)
    agg = harness.aggregate(rows)
    with open(os.path.join(args.out, "aggregate.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "method", "K", "n", "m", "seeds"]
                   + [f"{c}_{s}" for c in harness.AGG_METRICS for s in ("mean", "std")])
        for key, count, stats in agg:
            w.writerow(list(key) + [count] + [repr(v) for c in harness.AGG_METRICS for v in stats[c]])
    with open(os.path.join(args.out, "table.txt"), "w") as fh:
        fh.write(harness.format_table(agg))
    for metric in harness.AGG_METRICS:
        with open(os.path.join(args.out, f"plot_{metric}.tsv"), "w") as fh:
            fh.write("method\tx\ty\terr\n")
            for method, x, y, err in harness.plot_rows(agg, metric):
                fh.write(f"{method}\t{x}\t{y!r}\t{err!r}\n")
    with open(os.path.join(args.out, "failures.txt"), "w") as fh:
        for key, err in failures:
            fh.write(f"{'/'.join(map(str, key))}\t{err}\n")
    write_run_manifest(os.path.join(args.out, "manifest.txt"), argv, args,
                       {"jobs": len(jobs), "failed": len(failures), "seeds": grid["seeds"]})
    if failures:
        print(f"warning: {len(failures)} of {len(jobs)} jobs failed (see failures.txt)", file=sys.stderr)
    sys.stdout.write(harness.format_table(agg))


def cmd_replay(args, argv):
    rec = pipeline.read_manifest(args.manifest)
    old = list(rec["argv"])
    if args.out:
        if "--out" in old:
            old[old.index("--out") + 1] = args.out
        else:
            old += ["--out", args.out]
    return run(old)


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "generate": cmd_generate,
            "eval": cmd_eval, "bench": cmd_bench, "replay": cmd_replay}


def _exit_code(exc):
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, NumericalError):
        return EXIT_NUMERIC
    if isinstance(exc, DomainError):
        return EXIT_USAGE
    return EXIT_DATA


def run(argv):
    args = parse_args(argv)
    return COMMANDS[args.command](args, argv) or EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (HyvintError, OSError) as exc:
        print(f"hyvint: error: {exc}", file=sys.stderr)
        return _exit_code(exc) if isinstance(exc, HyvintError) else EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
