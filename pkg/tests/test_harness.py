import math
import os

import numpy as np
import pytest

from ptsense import harness
from ptsense.cli import main
from ptsense.errors import ParameterError
from ptsense.harness import (
    ExperimentConfig,
    SweepResult,
    TrialRecord,
    build_config,
    compute_aggregates,
    emit_plot_script,
    format_config,
    parse_config_text,
    read_csv,
    run_sweep,
    run_trial,
    write_csv,
)
from ptsense.solvers import SolverConfig


def tiny(**kw):
    base = dict(n1=5, n2=5, rho=0.6, ranks=(1, 2), trials=2, operators=("gaussian", "piecewise_toeplitz"),
                solvers=("als",), base_seed=11, solver_config=SolverConfig(max_iters=50))
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_text_parsing():
    text = """
    # comment line
    n1 = 20
    n2 = 20   # trailing comment
    rho = 0.3
    ranks = 1,2,4
    operators = gaussian, piecewise_toeplitz
    seed = 9
    solver.max_iters = 300
    solver.tau = none
    """
    cfg = build_config(parse_config_text(text))
    assert (cfg.n1, cfg.n2, cfg.rho, cfg.ranks) == (20, 20, 0.3, (1, 2, 4))
    assert cfg.operators == ("gaussian", "piecewise_toeplitz")
    assert cfg.base_seed == 9 and cfg.M == 120
    assert cfg.solver_config.max_iters == 300 and cfg.solver_config.tau is None


def test_rank_ranges():
    assert build_config({"ranks": "1..4,7"}).ranks == (1, 2, 3, 4, 7)


def test_format_config_round_trip():
    cfg = tiny(rho=0.123456789, c0=2.5, success_threshold=1e-4,
               solver_config=SolverConfig(max_iters=7, tol=1e-9, tau=0.5))
    assert build_config(parse_config_text(format_config(cfg))) == cfg


@pytest.mark.parametrize("bad", [
    {"n1": "0"}, {"rho": "1.5"}, {"ranks": "0"}, {"ranks": "1,60"}, {"trials": "0"},
    {"operators": "fourier"}, {"solvers": "cvx"}, {"colour": "red"}, {"solver.momentum": "1"},
])
def test_bad_config_values(bad):
    with pytest.raises(ParameterError):
        build_config(bad)


def test_bad_config_line():
    with pytest.raises(ParameterError):
        parse_config_text("n1 20\n")


def test_default_config_is_fifty_by_fifty():
    cfg = ExperimentConfig()
    assert (cfg.n1, cfg.n2, cfg.M, cfg.trials) == (50, 50, 750, 200)
    assert cfg.ranks == tuple(range(1, 11))


def test_full_sampling_trial():
    cfg = ExperimentConfig(n1=4, n2=4, rho=1.0, ranks=(4,), trials=1, operators=("gaussian",),
                           solvers=("als",))
    rec = run_trial(cfg, 4, "gaussian", "als", 0)
    assert rec.rel_error < 1e-6


def test_one_by_one_trial():
    cfg = ExperimentConfig(n1=1, n2=1, rho=1.0, ranks=(1,), trials=5, operators=("gaussian",),
                           solvers=("als",))
    for t in range(5):
        assert run_trial(cfg, 1, "gaussian", "als", t).rel_error < 1e-6


def test_trial_is_deterministic():
    cfg = tiny()
    assert run_trial(cfg, 2, "piecewise_toeplitz", "als", 1) == run_trial(cfg, 2, "piecewise_toeplitz", "als", 1)
    assert run_trial(cfg, 2, "gaussian", "als", 0).seed != run_trial(cfg, 2, "gaussian", "als", 1).seed


def test_single_record_sweep():
    cfg = tiny(ranks=(1,), trials=1, operators=("gaussian",))
    res = run_sweep(cfg, progress=False)
    assert len(res.records) == 1 and len(res.aggregates) == 1
    assert res.records[0].wall_time_s == 0.0


def test_progress_goes_to_stderr(capsys):
    run_sweep(tiny(ranks=(1,), trials=1, operators=("gaussian",)), progress=True)
    out, err = capsys.readouterr()
    assert out == "" and "[1/1]" in err


def test_csv_round_trip(tmp_path):
    res = run_sweep(tiny(), progress=False)
    path = tmp_path / "out.csv"
    write_csv(res, path)
    assert read_csv(path) == res.records
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(harness.CSV_FIELDS)
    assert len(lines) == len(res.records) + 1
    assert os.path.exists(harness.agg_path(path))


def test_empty_and_three_record_files(tmp_path):
    p = tmp_path / "empty.csv"
    write_csv(SweepResult(None, [], []), p)
    assert p.read_text() == ",".join(harness.CSV_FIELDS) + "\n"
    recs = [TrialRecord("gaussian", "als", 1, t, t, 0.5 * t, 3, t == 0) for t in range(3)]
    p3 = tmp_path / "three.csv"
    write_csv(SweepResult(None, recs, compute_aggregates(recs, 1e-3)), p3)
    assert len(p3.read_text().splitlines()) == 4
    assert read_csv(p3) == recs


def test_read_rejects_wrong_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ParameterError):
        read_csv(p)


def test_aggregates_recompute_from_records(tmp_path):
    res = run_sweep(tiny(trials=3), progress=False)
    write_csv(res, tmp_path / "r.csv")
    again = compute_aggregates(read_csv(tmp_path / "r.csv"), res.config.success_threshold)
    assert len(again) == len(res.aggregates)
    for a, b in zip(res.aggregates, again):
        errs = [r.rel_error for r in res.records if (r.operator, r.solver, r.rank) == (a.operator, a.solver, a.rank)]
        assert abs(a.mean_rel_error - np.mean(errs)) <= 1e-12
        assert abs(a.std_rel_error - np.std(errs, ddof=1)) <= 1e-12
        assert abs(a.mean_rel_error - b.mean_rel_error) <= 1e-12
        assert abs(a.std_rel_error - b.std_rel_error) <= 1e-12
        assert a.success_rate == b.success_rate


def test_plot_script_single_series(tmp_path):
    recs = [TrialRecord("gaussian", "als", r, 0, 0, 0.1 * r, 1, False) for r in (1, 2)]
    res = SweepResult(None, recs, compute_aggregates(recs, 1e-3))
    path = tmp_path / "fig.csv.gp"
    emit_plot_script(res, path)
    text = path.read_text()
    assert text.count("with linespoints") == 1
    assert '"fig.csv.agg.csv"' in text
    assert str(tmp_path) not in text and "/" not in text.replace("1/0", "")


def test_plot_script_one_panel_per_solver(tmp_path):
    recs = [TrialRecord(op, s, 1, 0, 0, 0.1, 1, False)
            for op in ("gaussian", "piecewise_toeplitz") for s in ("svt", "als")]
    res = SweepResult(None, recs, compute_aggregates(recs, 1e-3))
    path = tmp_path / "p.gp"
    emit_plot_script(res, path, "p.agg.csv")
    text = path.read_text()
    assert "multiplot layout 1,2" in text
    assert sum(ln.startswith("plot ") for ln in text.splitlines()) == 2 and text.count("with linespoints") == 4


def test_plot_script_needs_aggregates(tmp_path):
    with pytest.raises(ParameterError):
        emit_plot_script(SweepResult(None, [], []), tmp_path / "x.gp")


def test_threads_do_not_change_bytes(tmp_path):
    cfg = tiny(trials=3)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(run_sweep(cfg, threads=1, progress=False), a)
    write_csv(run_sweep(cfg, threads=3, progress=False), b)
    assert a.read_bytes() == b.read_bytes()
    assert open(harness.agg_path(a), "rb").read() == open(harness.agg_path(b), "rb").read()


def test_failed_trial_is_recorded(monkeypatch):
    def boom(*a, **k):
        raise np.linalg.LinAlgError("no")

    monkeypatch.setattr(harness, "solve", boom)
    rec = run_trial(tiny(), 1, "gaussian", "als", 0)
    assert rec.rel_error == math.inf and not rec.converged


# --- CLI --------------------------------------------------------------------


def test_cli_sweep_and_analyze(tmp_path, capsys):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("n1 = 4\nn2 = 4\nrho = 0.75\nranks = 1\ntrials = 2\n"
                        "operators = gaussian\nsolvers = als\n")
    out = tmp_path / "res.csv"
    assert main(["sweep", "--config", str(cfg_file), "--out", str(out), "--quiet",
                 "--trials", "3", "--seed", "5"]) == 0
    assert len(read_csv(out)) == 3
    assert all(r.rank == 1 for r in read_csv(out))
    snap = harness.load_config(f"{out}.config")
    assert snap.trials == 3 and snap.base_seed == 5
    assert os.path.exists(f"{out}.gp")
    assert main(["analyze", str(out)]) == 0
    assert "gaussian" in capsys.readouterr().out


def test_cli_probe(capsys):
    assert main(["probe", "--n1", "4", "--n2", "4", "--r", "1", "--M", "32"]) == 0
    text = capsys.readouterr().out
    assert "certified=True" in text and "eps=" in text


def test_cli_probe_concentration(tmp_path, capsys):
    out = tmp_path / "conc.csv"
    assert main(["probe", "--n1", "4", "--n2", "4", "--r", "2", "--M", "32", "--concentration",
                 "--M-grid", "16,32", "--trials", "10", "--out", str(out)]) == 0
    assert out.read_text().startswith("case,offset,M,threshold")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["sweep", "--n1", "0", "--quiet", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == 3
    assert main(["analyze", str(tmp_path / "missing.csv")]) == 3
    assert main(["probe", "--n1", "2", "--n2", "30", "--r", "5", "--M", "400", "--budget", "10"]) == 2
