"""The ten acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import contextlib
import filecmp
import itertools
import math
import os
import time

import numpy as np
import pytest

from hyvint import baselines as bl, cli, diffusion as dif, harness, metrics as mt, vi
from hyvint.hypercore import IncidenceStructure
from hyvint.numkit import rng_stream, sym_eigenvalues
from hyvint.synthdata import SynthConfig, generate_synthetic

from _oracles import (brute_betweenness, fd_gradient, mc_entropy, mc_intensity, mc_log_intensity,
                      mc_log_prior, mc_term_i, random_state, transport_w1)

RESULTS = []
MC_DRAWS = 100_000


@contextlib.contextmanager
def criterion(num, title):
    rec = {"detail": ""}
    try:
        yield rec
    except BaseException:
        RESULTS.append((num, title, False, rec["detail"]))
        raise
    RESULTS.append((num, title, True, rec["detail"]))


def test_01_bound_validity():
    with criterion(1, "term-(i) and log-intensity lower bounds below Monte Carlo") as rec:
        t0 = time.process_time()
        rng = np.random.default_rng(101)
        bad_t = bad_s = 0
        for k in range(200):
            K = (1, 2, 4)[k % 3]
            s = random_state(rng, 1, 1, K)
            mean, se = mc_term_i(s, 0, 0, MC_DRAWS, rng)
            bad_t += vi.term_i_lower_bound(s, 0, 0) > mean + 3 * se
            (ml, sel), _ = mc_log_intensity(s, 0, 0, MC_DRAWS, rng)
            bad_s += vi.s_lower_bound(s, 0, 0) > ml + 3 * sel
        cpu = time.process_time() - t0
        rec["detail"] = f"violations T={bad_t}/200 S={bad_s}/200, {cpu:.0f}s cpu"
        assert bad_t == 0 and bad_s == 0
        assert cpu <= 120


def test_02_closed_forms():
    with criterion(2, "closed-form expectations match Monte Carlo") as rec:
        rng = np.random.default_rng(202)
        h = IncidenceStructure(1, ((0,),))
        misses = {"intensity": 0, "log_prior": 0, "entropy": 0}
        prior = vi.PriorSpec()
        for _ in range(50):
            s = random_state(rng, 1, 1, 2)
            mean, se = mc_intensity(s, 0, 0, MC_DRAWS, rng)
            misses["intensity"] += abs(vi.expected_intensity(s, 0, 0) - mean) > 3 * se
            _, _, t3, t4 = vi.elbo_terms(s, h, prior)
            mean, se = mc_log_prior(s, prior, MC_DRAWS, rng)
            misses["log_prior"] += abs(t3 - mean) > 3 * se
            mean, se = mc_entropy(s, MC_DRAWS, rng)
            misses["entropy"] += abs(-t4 - mean) > 3 * se
        rec["detail"] = ", ".join(f"{k} misses {v}/50" for k, v in misses.items())
        assert not any(misses.values())


def test_03_gradients():
    with criterion(3, "analytic gradients match central differences") as rec:
        rng = np.random.default_rng(303)
        prior = vi.PriorSpec()
        worst = 0.0
        for estimator in ("lower_bound", "taylor"):
            for _ in range(10):
                h = IncidenceStructure.from_dense(rng.random((4, 4)) < 0.5)
                s = random_state(rng, 4, 4, 2, -1, 1)
                g = vi.elbo_gradient(s, h, prior, estimator).flat()
                fd = fd_gradient(lambda x: vi.elbo(s.with_flat(x), h, prior, estimator), s.flat())
                worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3))))
        net = dif.DenoiserNet(4, hidden_dim=8, num_layers=1, dropout=0.0, time_dim=4, rng=rng, dtype=np.float64)
        z, t, R = rng.normal(size=(6, 4)), rng.integers(1, 50, 6), rng.normal(size=(6, 4))
        out, cache = net.forward(z, t)
        grads = net.backward(cache, R)
        worst_net = 0.0
        for p, g in zip(net.params, grads):
            def f(v, p=p):
                old = p.copy()
                p[...] = v.reshape(p.shape)
                val = float(np.sum(net.forward(z, t)[0] * R))
                p[...] = old
                return val
            fd = fd_gradient(f, p.ravel().copy(), 1e-6).reshape(p.shape)
            worst_net = max(worst_net, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3))))
        rec["detail"] = f"max rel err ELBO {worst:.1e}, net {worst_net:.1e}"
        assert worst <= 1e-4 and worst_net <= 1e-4


def test_04_diffusion_recovery():
    with criterion(4, "denoiser recovers a two-component mixture") as rec:
        t0 = time.process_time()
        cfg = dif.DiffusionConfig(epochs=300)
        lines = []
        ok = 0
        for seed in (0, 1, 2):
            rng = rng_stream(seed, 0)
            lab = rng.random(1000) < 0.5
            X = np.where(lab[:, None], 2.0, -2.0) + 0.5 * rng.standard_normal((1000, 2))
            net = dif.train_denoiser(X, cfg.schedule(), cfg, rng_stream(seed, 1))
            S = dif.reverse_sample(net, cfg.schedule(), 500, rng_stream(seed, 2))
            pos = S.sum(axis=1) > 0
            err = max(np.max(np.abs(S[pos].mean(axis=0) - 2.0)), np.max(np.abs(S[~pos].mean(axis=0) + 2.0)))
            werr = abs(pos.mean() - 0.5)
            ok += err <= 0.15 and werr <= 0.1
            lines.append(f"seed{seed}: mean err {err:.3f} weight err {werr:.3f}")
        cpu = time.process_time() - t0
        rec["detail"] = f"{ok}/3 seeds; " + "; ".join(lines) + f"; {cpu:.0f}s cpu"
        assert ok == 3
        assert cpu <= 300


def test_05_metric_oracles(backend):
    with criterion(5, f"metric oracles ({backend} kernels)") as rec:
        rng = np.random.default_rng(505)
        w1_err = 0.0
        for _ in range(200):
            xs = np.round(rng.normal(size=rng.integers(1, 7)), int(rng.integers(0, 3)))
            ys = np.round(rng.normal(size=rng.integers(1, 7)), int(rng.integers(0, 3)))
            w1_err = max(w1_err, abs(mt.w1_empirical(xs, ys) - transport_w1(xs, ys)))
        btw_err = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 8))
            pairs = [p for p in itertools.combinations(range(n), 2) if rng.random() < rng.uniform(0.2, 0.8)]
            adj = [set() for _ in range(n)]
            for a, b in pairs:
                adj[a].add(b)
                adj[b].add(a)
            _, _, btw = mt.centralities(IncidenceStructure(n, tuple(pairs)), backend)
            exact = np.array([float(x) for x in brute_betweenness(adj)])
            btw_err = max(btw_err, float(np.max(np.abs(btw - exact) / np.spacing(np.maximum(exact, 1.0)))))
        lo, hi, root_err = np.inf, -np.inf, 0.0
        for _ in range(50):
            h = IncidenceStructure.from_dense(rng.random((10, 6)) < 0.25)
            ev = mt.laplacian_spectrum(h, backend)
            lo, hi = min(lo, ev.min()), max(hi, ev.max())
            W = np.triu(rng.random((3, 3)) * (rng.random((3, 3)) < 0.8), 1)
            L = mt.normalized_laplacian(W + W.T)
            c2 = -np.trace(L)
            c1 = sum(L[i, i] * L[j, j] - L[i, j] ** 2 for i, j in ((0, 1), (0, 2), (1, 2)))
            c0 = -np.linalg.det(L)
            roots = np.sort(np.roots([1.0, c2, c1, c0]).real)
            root_err = max(root_err, float(np.max(np.abs(sym_eigenvalues(L, backend=backend) - roots))))
        rec["detail"] = (f"W1 err {w1_err:.1e}, betweenness {btw_err:.0f} ulp, spectrum [{lo:.2e}, {hi:.6f}], "
                         f"cubic roots err {root_err:.1e}")
        assert w1_err <= 1e-9
        assert btw_err <= 4  # float accumulation against exact rationals
        assert lo >= -1e-8 and hi <= 2 + 1e-8
        assert root_err <= 1e-8


def _preset_runs(tmp_path_factory, link):
    out = tmp_path_factory.mktemp(f"preset-{link}")
    reps, cpu = [], 0.0
    for seed in (42, 43, 44, 45, 46):
        t0 = time.process_time()
        job = harness.SyntheticJob("hyvint", 2, 200, 200, "unit", link, seed,
                                   harness.MethodSettings(K=2, seed=seed), str(out / f"seed{seed}"))
        _, rep = harness.run_synthetic_job(job)
        cpu += time.process_time() - t0
        reps.append(rep)
    return reps, cpu


@pytest.fixture(scope="module")
def poisson_runs(tmp_path_factory):
    return _preset_runs(tmp_path_factory, "poisson")


def test_06_preset_reproduction(poisson_runs):
    with criterion(6, "preset K=2 n=m=200 unit range, 5 seeds") as rec:
        reps, cpu = poisson_runs
        rm = np.array([r.rmse_mean for r in reps])
        rc = np.array([r.rmse_cov for r in reps])
        rec["detail"] = (f"RMSE_mean {rm.mean():.4f} +- {rm.std(ddof=1):.4f}, "
                         f"RMSE_cov {rc.mean():.4f} +- {rc.std(ddof=1):.4f}, {cpu:.0f}s cpu")
        assert rm.mean() <= 0.08 and rc.mean() <= 0.03
        assert cpu <= 900


def test_07_sigmoid_parity(poisson_runs, tmp_path_factory):
    with criterion(7, "sigmoid-link RMSE_mean within 50% of the Poisson run") as rec:
        sig, _ = _preset_runs(tmp_path_factory, "sigmoid")
        a = np.mean([r.rmse_mean for r in poisson_runs[0]])
        b = np.mean([r.rmse_mean for r in sig])
        rec["detail"] = f"poisson {a:.4f}, sigmoid {b:.4f}, relative gap {abs(b - a) / a:.2f}"
        assert abs(b - a) <= 0.5 * a


def test_08_density_ordering():
    with criterion(8, "shifted activity range gives denser hypergraphs") as rec:
        wins, dens = 0, []
        for seed in (42, 43, 44, 45, 46):
            u, _ = generate_synthetic(SynthConfig(2, 200, 200, "unit", "poisson", seed))
            s, _ = generate_synthetic(SynthConfig(2, 200, 200, "shifted", "poisson", seed))
            wins += s.nnz > u.nnz
            dens.append(f"{u.nnz / 4e4:.3f}<{s.nnz / 4e4:.3f}")
        rec["detail"] = f"{wins}/5 seeds ({', '.join(dens)})"
        assert wins == 5


def _tree_files(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in files:
            if "manifest" in f:
                continue  # manifests record paths and worker counts
            out[os.path.relpath(os.path.join(dirpath, f), root)] = os.path.join(dirpath, f)
    return out


def _same_outputs(a, b):
    fa, fb = _tree_files(a), _tree_files(b)
    if sorted(fa) != sorted(fb):
        return [f"file sets differ: {sorted(set(fa) ^ set(fb))}"]
    bad = []
    for rel in sorted(fa):
        if rel.endswith("results.csv"):
            # runtime_s is wall-clock; every other column must agree bitwise
            ra = [line.rsplit(",", 1)[0] for line in open(fa[rel]).read().splitlines()]
            rb = [line.rsplit(",", 1)[0] for line in open(fb[rel]).read().splitlines()]
            if ra != rb:
                bad.append(rel)
        elif not filecmp.cmp(fa[rel], fb[rel], shallow=False):
            bad.append(rel)
    return bad


def test_09_determinism(tmp_path):
    with criterion(9, "manifest replay is bitwise identical, workers 1 vs 4") as rec:
        fast = ["--epochs", "20", "--T", "50", "--hidden_dim", "32", "--num_layers", "2",
                "--vi_iters", "100", "--nmf_iters", "50"]
        d = str(tmp_path / "synth")
        runs = {
            "synth": ["synth", "--K", "2", "--n", "30", "--m", "25", "--reference_edges", "200", "--out", d],
            "fit": ["fit", "--input", f"{d}/data.txt", "--K", "2", "--vi_iters", "100", "--out", str(tmp_path / "fit")],
        }
        for method in harness.METHODS:
            runs[f"generate-{method}"] = ["generate", "--input", f"{d}/data.txt", "--K", "2", "--method", method,
                                          *fast, "--out", str(tmp_path / f"gen-{method}")]
        runs["eval"] = ["eval", "--reference", f"{d}/data.txt", "--generated",
                        str(tmp_path / "gen-hyvint" / "hyvint.generated.txt"),
                        "--rmse_reference", f"{d}/reference.txt", "--out", str(tmp_path / "eval")]
        grid = tmp_path / "grid.cfg"
        grid.write_text("K=2\nn=24\nm=20\nrho=unit,shifted\nlink=poisson\nmethods=hyvint,ber-diff\nseeds=42,43\n")
        runs["bench"] = ["bench", "--grid", str(grid), "--workers", "1", "--reference_edges", "100", *fast,
                         "--out", str(tmp_path / "bench")]
        failures = []
        for name, argv in runs.items():
            assert cli.main(argv) == 0, name
            out = argv[argv.index("--out") + 1]
            again = out + "-replay"
            assert cli.main(["replay", "--manifest", os.path.join(out, "manifest.txt"), "--out", again]) == 0
            failures += [f"{name}:{f}" for f in _same_outputs(out, again)]
        wide = runs["bench"][:]
        wide[wide.index("--workers") + 1] = "4"
        wide[wide.index("--out") + 1] = str(tmp_path / "bench-w4")
        assert cli.main(wide) == 0
        failures += [f"bench-w4:{f}" for f in _same_outputs(str(tmp_path / "bench"), str(tmp_path / "bench-w4"))]
        rec["detail"] = f"{len(runs) + 1} comparisons, mismatches: {failures or 'none'}"
        assert not failures


def test_10_baselines(tmp_path):
    with criterion(10, "baselines run end to end; bit-flip marginal matches the chain") as rec:
        preset = harness.PRESETS["baselines-small"]
        details = []
        for method in preset["methods"]:
            job = harness.SyntheticJob(method, 2, 100, 100, "unit", "poisson", 42,
                                       harness.MethodSettings(K=2, seed=42), str(tmp_path / method))
            row, rep = harness.run_synthetic_job(job)
            vals = rep.values()
            assert all(math.isfinite(v) and v >= 0 for v in vals.values()), (method, vals)
            assert 0 <= rep.uhr <= 1 and 0 <= rep.nhr <= 1 and 0 <= rep.pjd <= 1
            assert len(row) == len(mt.CSV_COLUMNS)
            details.append(f"{method} l_deg {rep.l_deg:.3f}")
        rng = np.random.default_rng(1010)
        worst = 0.0
        for _ in range(5):
            T = int(rng.integers(2, 40))
            betas = rng.uniform(0.001, 0.1, T)
            x0 = rng.integers(0, 2, 10)
            freq = np.mean([bl.berdiff_chain(x0, T, betas, rng) for _ in range(10_000)], axis=0)
            p = bl.berdiff_marginal(x0, T, betas)
            worst = max(worst, float(np.max(np.abs(freq - p) / np.sqrt(p * (1 - p) / 10_000))))
        details.append(f"marginal worst {worst:.2f} SE")
        rec["detail"] = ", ".join(details)
        assert worst <= 3
