"""Compare the compiled and numpy ADMM kernels on the prox and a full fit.

Usage: python3 benchmarks/bench_admm.py [--nodes 30 60 100] [--repeat 5]
"""
import argparse
import time

import numpy as np

from sparsegc.prox import admm_solve, available_backends
from sparsegc.simulation import SimDesign, generate_population
from sparsegc.solver import fit
from sparsegc.types import PenaltyParams, SolverConfig


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def bench_prox(N, repeat):
    rng = np.random.default_rng(0)
    Z = rng.normal(scale=0.1, size=(N, N))
    Z = (Z + Z.T) / 2
    np.fill_diagonal(Z, 0)
    pen, cfg = PenaltyParams(0.01, 0.5), SolverConfig(max_admm_iter=100_000)
    row = {}
    for backend in available_backends():
        sec, (out, state) = best_of(
            lambda: admm_solve(Z, 1.0, pen, cfg, 1e-9, backend=backend), repeat
        )
        row[backend] = (sec, state.iteration, out)
    return row


def bench_fit(N, repeat):
    design = SimDesign.equal_communities(N, 6, seed=1)
    data, _ = generate_population(design)
    pen = PenaltyParams(0.05, 0.5)
    row = {}
    for backend in available_backends():
        sec, (model, diag) = best_of(lambda: fit(data, pen, backend=backend), repeat)
        row[backend] = (sec, diag.outer_iterations, model.coefficients)
    return row


def report(title, rows):
    backends = available_backends()
    print(f"\n{title}")
    print(f"{'N':>5} " + " ".join(f"{b + ' [s]':>14}" for b in backends) + f"{'speedup':>10}{'max |diff|':>12}")
    for N, row in rows:
        secs = [row[b][0] for b in backends]
        speed = row["python"][0] / row["cython"][0] if "cython" in row else float("nan")
        diff = (
            float(np.max(np.abs(row[backends[0]][2] - row[backends[-1]][2]))) if len(backends) > 1 else 0.0
        )
        print(f"{N:>5} " + " ".join(f"{s:>14.4f}" for s in secs) + f"{speed:>10.1f}{diff:>12.1e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, nargs="+", default=[30, 60, 100])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print("backends:", ", ".join(available_backends()))
    report("prox (one cold ADMM solve, tol 1e-9)", [(N, bench_prox(N, args.repeat)) for N in args.nodes])
    report("fit (lambda=0.05, rho=0.5, n=100)", [(N, bench_fit(N, args.repeat)) for N in args.nodes if N % 6 == 0])


if __name__ == "__main__":
    main()
