"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--sizes 50x50x750,30x30x270]

Times the structured apply/adjoint, the ALS design builders, and a short ALS
solve for each backend on the same operator, and checks that both backends
return the same numbers.
"""
import argparse
import time

import numpy as np

from ptsense import kernels
from ptsense.matrix_model import gen_low_rank_slrp
from ptsense.operators import gen_piecewise_toeplitz
from ptsense.solvers import SolverConfig, als_solve

NAMES = ("toeplitz_apply", "toeplitz_adjoint", "toeplitz_expand", "toeplitz_block_matvecs")


def use_backend(name):
    mod = kernels.available_backends()[name]
    for fn in NAMES:
        setattr(kernels, fn, getattr(mod, fn))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_size(n1, n2, M, repeat):
    op = gen_piecewise_toeplitz(M, n1, n2, seed=0)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n1, n2))
    y = rng.standard_normal(M)
    L, R = rng.standard_normal((n1, 3)), rng.standard_normal((n2, 3))
    truth = gen_low_rank_slrp(n1, n2, 2, seed=1)
    y_true = op.apply(truth.entries)
    cases = {
        "apply": lambda: op.apply(X),
        "adjoint": lambda: op.adjoint(y),
        "left_design": lambda: op.left_design(R),
        "right_design": lambda: op.right_design(L),
        "als(r=2, 20 it)": lambda: als_solve(op, y_true, SolverConfig(rank=2, max_iters=20)).X_hat,
    }
    rows = {}
    outputs = {}
    for backend in sorted(kernels.available_backends()):
        use_backend(backend)
        for label, fn in cases.items():
            reps = max(1, repeat // 10) if label.startswith("als") else repeat
            t, out = best_of(fn, reps)
            rows.setdefault(label, {})[backend] = t
            outputs.setdefault(label, {})[backend] = out
    return rows, outputs


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--sizes", default="30x30x270,50x50x750,100x100x3000")
    args = p.parse_args()
    original = kernels.BACKEND
    backends = sorted(kernels.available_backends())
    if len(backends) < 2:
        print("compiled backend not built; only timing the numpy kernels")
    print(f"default backend: {original}")
    for size in args.sizes.split(","):
        n1, n2, M = (int(v) for v in size.split("x"))
        rows, outputs = bench_size(n1, n2, M, args.repeat)
        print(f"\nn1={n1} n2={n2} M={M}")
        print(f"  {'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + "     speedup  max|diff|")
        for label, times in rows.items():
            line = f"  {label:<18}" + "".join(f"{times[b] * 1e3:>10.3f}ms" for b in backends)
            if len(backends) == 2:
                outs = outputs[label]
                diff = float(np.max(np.abs(outs["cython"] - outs["python"])))
                line += f"  {times['python'] / times['cython']:>9.2f}x  {diff:.1e}"
            print(line)
    use_backend(original)


if __name__ == "__main__":
    main()
