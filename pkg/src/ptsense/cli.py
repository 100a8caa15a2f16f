"""Command line entry point: ``ptsense {sweep,probe,analyze}``."""
import argparse
import os
import sys

from . import harness
from .coherence import build_theta, concentration_study, gram_report, uniqueness_probe
from .errors import ParameterError
from .kernels import BACKEND
from .matrix_model import gen_low_rank_slrp
from .operators import DEFAULT_C0, gen_operator

EXIT_CONFIG = 2
EXIT_IO = 3

# flag dest -> config key
_SWEEP_OVERRIDES = {
    "n1": "n1", "n2": "n2", "rho": "rho", "ranks": "ranks", "trials": "trials",
    "operators": "operators", "solvers": "solvers", "seed": "base_seed", "c0": "c0",
    "success_threshold": "success_threshold", "record_timing": "record_timing",
    "max_iters": "solver.max_iters", "tol": "solver.tol", "tau": "solver.tau",
    "step": "solver.step", "als_reg": "solver.als_reg",
}


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="run an error-vs-rank Monte Carlo sweep")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", default="results.csv", help="records CSV path")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--quiet", action="store_true", help="no progress on stderr")
    p.add_argument("--seed", type=int)
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--ranks", help="comma list, a..b ranges allowed")
    p.add_argument("--trials", type=int)
    p.add_argument("--operators", help="comma list of operator kinds")
    p.add_argument("--solvers", help="comma list: svt,als")
    p.add_argument("--c0", type=float)
    p.add_argument("--success-threshold", type=float)
    p.add_argument("--record-timing", action="store_const", const="true")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--als-reg", type=float)
    p.set_defaults(func=cmd_sweep)


def _add_probe(sub):
    p = sub.add_parser("probe", help="uniqueness and coherence reports")
    p.add_argument("--n1", type=int, default=4)
    p.add_argument("--n2", type=int, default=4)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--M", type=int, default=32)
    p.add_argument("--c0", type=float, default=DEFAULT_C0)
    p.add_argument("--operator", default="piecewise_toeplitz")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", default="exact_enumeration",
                   choices=["exact_enumeration", "sampled_probe"])
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--concentration", action="store_true",
                   help="also run the Gram-entry concentration study")
    p.add_argument("--M-grid", default="64,256,1024")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--thresholds", default="1.0,0.5,0.5,0.5", help="t0,t1,t2,t3")
    p.add_argument("--out", help="CSV path for the concentration table")
    p.set_defaults(func=cmd_probe)


def _add_analyze(sub):
    p = sub.add_parser("analyze", help="recompute aggregates and plot script from a CSV")
    p.add_argument("csv", help="records CSV written by sweep")
    p.add_argument("--success-threshold", type=float, default=1e-3)
    p.add_argument("--out", help="write records and derived files under this path instead")
    p.set_defaults(func=cmd_analyze)


def build_parser():
    parser = argparse.ArgumentParser(prog="ptsense", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_sweep(sub)
    _add_probe(sub)
    _add_analyze(sub)
    return parser


def cmd_sweep(args):
    overrides = {}
    for dest, key in _SWEEP_OVERRIDES.items():
        value = getattr(args, dest)
        if value is not None:
            overrides[key] = value
    if args.config:
        cfg = harness.load_config(args.config, overrides)
    else:
        cfg = harness.build_config(overrides)
    if not args.quiet:
        print(
            f"sweep {cfg.n1}x{cfg.n2} rho={cfg.rho} M={cfg.M} ranks={list(cfg.ranks)} "
            f"trials={cfg.trials} kernels={BACKEND}",
            file=sys.stderr,
        )
    result = harness.run_sweep(cfg, threads=args.threads, progress=not args.quiet)
    harness.write_csv(result, args.out)
    agg = harness.agg_path(args.out)
    harness.emit_plot_script(result, f"{args.out}.gp", os.path.basename(agg))
    with open(f"{args.out}.config", "w", encoding="utf-8") as fh:
        fh.write(harness.format_config(cfg))
    if not args.quiet:
        print(f"wrote {args.out}, {agg}, {args.out}.gp", file=sys.stderr)
    return 0


def cmd_probe(args):
    op = gen_operator(args.operator, args.M, args.n1, args.n2, c0=args.c0, seed=args.seed)
    rep = uniqueness_probe(op, args.n1, args.n2, args.r, mode=args.mode,
                           budget=args.budget, seed=args.seed)
    print(f"uniqueness: {rep.summary()}")
    X = gen_low_rank_slrp(args.n1, args.n2, args.r, args.seed)
    gram = gram_report(build_theta(op, X.decomposition))
    print("coherence of Theta[diamond]:")
    print(gram.summary())
    if args.concentration:
        grid = [int(v) for v in args.M_grid.split(",")]
        ts = [float(v) for v in args.thresholds.split(",")]
        conc = concentration_study(grid, args.n1, args.n2, args.r, args.trials, ts,
                                   seed=args.seed, c0=args.c0)
        print(conc.summary())
        viol = conc.monotone_violations()
        print(f"monotonicity violations (3 SE): {viol if viol else 'none'}")
        if args.out:
            conc.write_csv(args.out)
    return 0


def cmd_analyze(args):
    records = harness.read_csv(args.csv)
    aggs = harness.compute_aggregates(records, args.success_threshold)
    result = harness.SweepResult(None, records, aggs)
    out = args.out or args.csv
    if out != args.csv:
        harness.write_csv(result, out)
    else:
        harness.write_aggregates(aggs, harness.agg_path(out))
    harness.emit_plot_script(result, f"{out}.gp", os.path.basename(harness.agg_path(out)))
    for a in aggs:
        print(f"{a.operator:>20} {a.solver:>4} r={a.rank:<3} n={a.n:<4} "
              f"mean={a.mean_rel_error:.3e} success={a.success_rate:.3f}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
