"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--sizes 50,100,200] [--repeat 3]
"""

import argparse
import time

import numpy as np

from hyvint import kernels
from hyvint.hypercore import IncidenceStructure, adjacency_csr, clique_expansion
from hyvint.metrics import normalized_laplacian


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="50,100,200")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    names = sorted(kernels.BACKENDS)
    if "compiled" not in names:
        print("compiled kernels unavailable; timing the python backend only")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<12} {'n':>5} " + " ".join(f"{b + ' (s)':>14}" for b in names) + f" {'speedup':>9}")
    for n in (int(v) for v in args.sizes.split(",")):
        h = IncidenceStructure.from_dense(rng.random((n, n)) < 2.0 / n)
        W = clique_expansion(h)
        L = normalized_laplacian(W)
        indptr, indices = adjacency_csr(W > 0)
        cases = {
            "jacobi": lambda k: k.jacobi_eigh(L.copy(), 1e-10, 100, False),
            "centrality": lambda k: k.centralities(n, indptr, indices),
        }
        for label, fn in cases.items():
            times, outs = [], []
            for b in names:
                t, out = best_of(lambda: fn(kernels.BACKENDS[b]), args.repeat)
                times.append(t)
                outs.append(out)
            if len(outs) == 2:
                a, b = outs
                if label == "jacobi":
                    assert np.allclose(np.sort(a[0]), np.sort(b[0]), atol=1e-9)
                else:
                    assert all(np.allclose(x, y, atol=1e-9) for x, y in zip(a, b))
            speed = f"{times[-1] / times[0]:>8.1f}x" if len(times) == 2 else ""
            print(f"{label:<12} {n:>5} " + " ".join(f"{t:>14.4f}" for t in times) + f" {speed:>9}")


if __name__ == "__main__":
    main()
