"""Monte Carlo error-vs-rank experiments.

A sweep runs every (operator, solver, rank, trial) combination of an
:class:`ExperimentConfig`. Each trial is a pure function of the config and its
coordinates: its seed is ``derive_seed(base_seed, rank, operator, solver,
trial)`` and the matrix and operator draw from sub-seeds of it, so serial and
threaded runs produce identical records.

Config files are flat ``key = value`` text; ``#`` starts a comment and lists
are comma separated (``ranks`` also accepts ``a..b``). Solver overrides use a
``solver.`` prefix, e.g. ``solver.max_iters = 300``.
"""
import csv
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .errors import ParameterError
from .matrix_model import gen_low_rank_slrp
from .operators import ALL_KINDS, DEFAULT_C0, gen_operator
from .seeding import derive_seed
from .solvers import SolverConfig, UnderdeterminedWarning, solve, with_rank

SOLVER_KINDS = ("svt", "als")
CSV_FIELDS = (
    "operator", "solver", "rank", "trial", "seed",
    "rel_error", "iterations", "converged", "wall_time_s",
)
AGG_FIELDS = (
    "operator", "solver", "rank", "n", "mean_rel_error", "std_rel_error",
    "sem_rel_error", "success_rate", "success_threshold",
)


@dataclass(frozen=True)
class ExperimentConfig:
    n1: int = 50
    n2: int = 50
    rho: float = 0.3
    ranks: tuple = tuple(range(1, 11))
    trials: int = 200
    operators: tuple = ALL_KINDS
    solvers: tuple = SOLVER_KINDS
    base_seed: int = 0
    c0: float = DEFAULT_C0
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    success_threshold: float = 1e-3
    record_timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        object.__setattr__(self, "operators", tuple(self.operators))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        if min(self.n1, self.n2) < 1:
            raise ParameterError("n1, n2 must be positive")
        if not 0 < self.rho <= 1:
            raise ParameterError(f"rho must lie in (0, 1], got {self.rho}")
        if not self.ranks or any(not 1 <= r <= min(self.n1, self.n2) for r in self.ranks):
            raise ParameterError(f"ranks must lie in [1, {min(self.n1, self.n2)}]")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        for k in self.operators:
            if k not in ALL_KINDS:
                raise ParameterError(f"unknown operator {k!r}")
        for s in self.solvers:
            if s not in SOLVER_KINDS:
                raise ParameterError(f"unknown solver {s!r}")

    @property
    def M(self):
        return max(1, int(math.floor(self.rho * self.n1 * self.n2 + 0.5)))


_LIST_KEYS = {"ranks", "operators", "solvers"}
_SOLVER_FIELDS = {f.name: f for f in fields(SolverConfig)}


def _parse_ranks(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"not a boolean: {text!r}")


def _coerce(key, value):
    if key == "ranks":
        return _parse_ranks(value) if isinstance(value, str) else tuple(value)
    if key in _LIST_KEYS:
        if isinstance(value, str):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        return tuple(value)
    if key in ("n1", "n2", "trials", "base_seed"):
        return int(value)
    if key in ("rho", "c0", "success_threshold"):
        return float(value)
    if key == "record_timing":
        return _parse_bool(value)
    raise ParameterError(f"unknown config key {key!r}")


def _coerce_solver(key, value):
    if key not in _SOLVER_FIELDS:
        raise ParameterError(f"unknown solver key {key!r}")
    if value is None or (isinstance(value, str) and value.strip().lower() == "none"):
        return None
    if key in ("max_iters", "rank"):
        return int(value)
    return float(value)


def parse_config_text(text):
    """Parse ``key = value`` lines into a flat dict of raw strings."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(values, base=None):
    """Return ``base`` (default config) updated with a dict of overrides."""
    base = base or ExperimentConfig()
    top, solver = {}, {}
    for key, value in values.items():
        if key == "seed":
            key = "base_seed"
        if key.startswith("solver."):
            name = key[len("solver."):]
            solver[name] = _coerce_solver(name, value)
        else:
            top[key] = _coerce(key, value)
    if solver:
        top["solver_config"] = replace(base.solver_config, **solver)
    return replace(base, **top)


def load_config(path, overrides=None):
    with open(path, encoding="utf-8") as fh:
        values = parse_config_text(fh.read())
    values.update(overrides or {})
    return build_config(values)


def format_config(cfg):
    """Inverse of :func:`load_config`."""
    lines = []
    for key, value in asdict(cfg).items():
        if key == "solver_config":
            for sk, sv in value.items():
                lines.append(f"solver.{sk} = {'none' if sv is None else sv}")
        elif isinstance(value, (tuple, list)):
            lines.append(f"{key} = {','.join(str(v) for v in value)}")
        elif isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TrialRecord:
    operator: str
    solver: str
    rank: int
    trial: int
    seed: int
    rel_error: float
    iterations: int
    converged: bool
    wall_time_s: float = 0.0


@dataclass(frozen=True)
class Aggregate:
    operator: str
    solver: str
    rank: int
    n: int
    mean_rel_error: float
    std_rel_error: float
    sem_rel_error: float
    success_rate: float
    success_threshold: float


@dataclass
class SweepResult:
    config: ExperimentConfig | None
    records: list
    aggregates: list

    def aggregate(self, operator, solver, rank):
        for a in self.aggregates:
            if (a.operator, a.solver, a.rank) == (operator, solver, rank):
                return a
        raise KeyError((operator, solver, rank))


def trial_seed(cfg, rank, op_kind, solver_kind, trial_index):
    return derive_seed(cfg.base_seed, rank, op_kind, solver_kind, trial_index)


def run_trial(cfg, rank, op_kind, solver_kind, trial_index):
    """Generate, measure and recover one matrix; never raises on solver trouble."""
    seed = trial_seed(cfg, rank, op_kind, solver_kind, trial_index)
    start = time.perf_counter()
    X = gen_low_rank_slrp(cfg.n1, cfg.n2, rank, derive_seed(seed, "matrix")).entries
    op = gen_operator(op_kind, cfg.M, cfg.n1, cfg.n2, c0=cfg.c0, seed=derive_seed(seed, "operator"))
    y = op.apply(X)
    try:
        res = solve(solver_kind, op, y, with_rank(cfg.solver_config, rank), X_true=X)
        err, iters, conv = res.relative_error, res.iterations, res.converged
    except (np.linalg.LinAlgError, FloatingPointError, ValueError):
        err, iters, conv = math.inf, 0, False
    wall = time.perf_counter() - start if cfg.record_timing else 0.0
    return TrialRecord(op_kind, solver_kind, rank, trial_index, seed, float(err), int(iters), bool(conv), wall)


def compute_aggregates(records, success_threshold):
    """Per (operator, solver, rank) mean/std/SEM of the error and success rate."""
    groups = {}
    for rec in records:
        groups.setdefault((rec.operator, rec.solver, rec.rank), []).append(rec.rel_error)
    out = []
    for (op_kind, solver, rank), errs in groups.items():
        e = np.array(errs, dtype=np.float64)
        n = e.size
        std = float(e.std(ddof=1)) if n > 1 else 0.0
        out.append(Aggregate(
            op_kind, solver, rank, n, float(e.mean()), std, std / math.sqrt(n),
            float(np.mean(e < success_threshold)), float(success_threshold),
        ))
    return out


def _tasks(cfg):
    for op_kind in cfg.operators:
        for solver in cfg.solvers:
            for rank in cfg.ranks:
                for t in range(cfg.trials):
                    yield rank, op_kind, solver, t


def run_sweep(cfg, threads=1, progress=True):
    """Run the full cross product; records come back in canonical order."""
    tasks = list(_tasks(cfg))
    total = len(tasks)
    step = max(1, total // 20)
    records = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnderdeterminedWarning)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                it = pool.map(lambda t: run_trial(cfg, *t), tasks)
                for i, rec in enumerate(it, 1):
                    records.append(rec)
                    _report(progress, i, total, step, rec)
        else:
            for i, t in enumerate(tasks, 1):
                records.append(run_trial(cfg, *t))
                _report(progress, i, total, step, records[-1])
    return SweepResult(cfg, records, compute_aggregates(records, cfg.success_threshold))


def _report(progress, i, total, step, rec):
    if progress and (i % step == 0 or i == total):
        print(
            f"[{i}/{total}] {rec.operator} {rec.solver} r={rec.rank} trial={rec.trial} "
            f"err={rec.rel_error:.3g}",
            file=sys.stderr,
        )


# --- CSV persistence -----------------------------------------------------


def _fmt_float(x):
    return repr(float(x))


def _record_row(rec):
    return [
        rec.operator, rec.solver, str(rec.rank), str(rec.trial), str(rec.seed),
        _fmt_float(rec.rel_error), str(rec.iterations),
        "true" if rec.converged else "false", _fmt_float(rec.wall_time_s),
    ]


def write_csv(result, path):
    """Write records to ``path`` and aggregates to ``<path>.agg.csv``."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for rec in result.records:
                w.writerow(_record_row(rec))
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    write_aggregates(result.aggregates, agg_path(path))


def write_aggregates(aggregates, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(AGG_FIELDS)
            for a in aggregates:
                w.writerow([
                    a.operator, a.solver, a.rank, a.n, _fmt_float(a.mean_rel_error),
                    _fmt_float(a.std_rel_error), _fmt_float(a.sem_rel_error),
                    _fmt_float(a.success_rate), _fmt_float(a.success_threshold),
                ])
    except OSError as exc:
        raise OSError(f"cannot write aggregates to {path}: {exc}") from exc


def agg_path(path):
    return f"{path}.agg.csv"


def read_csv(path):
    """Parse a records CSV written by :func:`write_csv`."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ParameterError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            records.append(TrialRecord(
                row["operator"], row["solver"], int(row["rank"]), int(row["trial"]),
                int(row["seed"]), float(row["rel_error"]), int(row["iterations"]),
                row["converged"] == "true", float(row["wall_time_s"]),
            ))
    return records


def write_matrix_csv(X, path):
    """One CSV line per matrix row, floats in shortest round-trip form."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for row in X:
            fh.write(",".join(_fmt_float(v) for v in row) + "\n")


def read_matrix_csv(path):
    with open(path, encoding="utf-8") as fh:
        rows = [[float(v) for v in ln.split(",")] for ln in fh.read().splitlines() if ln]
    return np.array(rows, dtype=np.float64)


# --- plot script ---------------------------------------------------------


def emit_plot_script(result, path, data_file=None):
    """Write a gnuplot script: mean error vs rank, one panel per solver.

    ``data_file`` is the aggregate CSV, referenced by its name as given so the
    script stays relocatable alongside it. By default a script ``out.csv.gp``
    reads ``out.csv.agg.csv`` from its own directory.
    """
    if data_file is None:
        base = os.path.basename(str(path))
        data_file = agg_path(base[:-3] if base.endswith(".gp") else base)
    if not result.aggregates:
        raise ParameterError("no aggregates to plot")
    solvers = list(dict.fromkeys(a.solver for a in result.aggregates))
    operators = list(dict.fromkeys(a.operator for a in result.aggregates))
    titles = {"svt": "nuclear norm (SVT)", "als": "alternating least squares"}
    image = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0] + ".png"
    lines = [
        "# mean relative error vs rank",
        'set datafile separator ","',
        f"set terminal pngcairo size {480 * len(solvers)},400",
        f'set output "{image}"',
        "set logscale y",
        'set xlabel "rank r"',
        'set ylabel "mean relative error"',
        "set key top left",
        f"set multiplot layout 1,{len(solvers)}",
    ]
    for solver in solvers:
        series = []
        for op_kind in operators:
            if not any(a.solver == solver and a.operator == op_kind for a in result.aggregates):
                continue
            series.append(
                f'"{data_file}" every ::1 using 3:(strcol(1) eq "{op_kind}" && '
                f'strcol(2) eq "{solver}" ? $5 : 1/0) with linespoints title "{op_kind}"'
            )
        lines.append(f'set title "{titles.get(solver, solver)}"')
        lines.append("plot " + ", \\\n     ".join(series))
    lines.append("unset multiplot")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write plot script to {path}: {exc}") from exc
