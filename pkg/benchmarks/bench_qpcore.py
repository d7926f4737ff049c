"""Time the compiled and pure-Python active-set kernels on SVM duals.

    python benchmarks/bench_qpcore.py --sizes 50,200,800 --repeats 3

Both kernels solve the same problems; the table reports the best wall time
of each and the largest relative objective difference between them.
"""
import argparse
import sys
import time

import numpy as np

from sctsvm import qpsolve


def svm_dual(n: int, m: int, C: float, seed: int) -> qpsolve.QpProblem:
    rng = np.random.default_rng(seed)
    half = n // 2
    X = np.vstack([rng.normal(0.0, 1.0, (half, m)), rng.normal(1.0, 1.0, (n - half, m))])
    y = np.concatenate([np.ones(half), -np.ones(n - half)])
    Z = y[:, None] * X
    return qpsolve.QpProblem(Z @ Z.T, -np.ones(n), A_eq=y[None, :], b_eq=[0.0],
                             lower=np.zeros(n), upper=np.full(n, C))


def best_time(problem, backend: str, repeats: int):
    best, sol = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        sol = qpsolve.solve_qp(problem, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, sol


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="50,200,800")
    ap.add_argument("--features", type=int, default=6)
    ap.add_argument("--C", type=float, default=10.0)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if qpsolve.BACKEND != "cython":
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    print(f"{'n':>6} {'python s':>10} {'cython s':>10} {'speedup':>8} {'iters':>7} {'rel diff':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        p = svm_dual(n, args.features, args.C, args.seed + n)
        t_py, s_py = best_time(p, "python", args.repeats)
        t_cy, s_cy = best_time(p, "cython", args.repeats)
        rel = abs(s_py.objective - s_cy.objective) / (1.0 + abs(s_py.objective))
        print(f"{n:>6} {t_py:>10.4f} {t_cy:>10.4f} {t_py / t_cy:>8.1f} {s_cy.iterations:>7} {rel:>10.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
