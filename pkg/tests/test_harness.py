import csv
import math

import pytest

from distbai import cli
from distbai.env import RandomSource, make_problem
from distbai.harness import (
    ConfigError,
    ExperimentConfig,
    RegretTrace,
    RunStats,
    SuiteConfig,
    average_traces,
    central_bits,
    config_from_mapping,
    empirical_speedup,
    make_runner,
    parse_kv,
    run_experiment,
    run_suite,
    run_trial,
    simulate,
    suite_from_mapping,
    summary_path,
    write_csv,
)


class FixedArms:
    """Plays a fixed arm sequence, cycling."""

    def __init__(self, arms):
        self.arms = arms
        self.i = 0

    def step(self, rng):
        k = self.arms[self.i % len(self.arms)]
        self.i += 1
        return k


class Recording:
    def __init__(self, runner):
        self.runner = runner
        self.chosen = []

    def step(self, rng):
        k = self.runner.step(rng)
        self.chosen.append(k)
        return k


def test_oracle_policy_has_zero_regret():
    arms = make_problem("problem1")
    trace = simulate(FixedArms([arms.best_arm]), arms, 5000, 100, None)
    assert trace.values == [0.0] * 50
    assert trace.steps[-1] == 5000


def test_three_event_regret():
    arms = make_problem("problem1")
    trace = simulate(FixedArms([0, 1, 0]), arms, 3, 1, None)
    assert trace.steps == [1, 2, 3]
    assert trace.values == pytest.approx([0.0, 0.2, 0.2], abs=1e-12)


def test_partial_last_checkpoint():
    arms = make_problem("problem2")
    trace = simulate(FixedArms([1]), arms, 25, 10, None)
    assert trace.steps == [10, 20, 25]


@pytest.mark.parametrize("algo", ["dme", "edme", "me_local", "me_central", "ucb_central"])
def test_trace_equals_pseudo_regret_formula(algo):
    cfg = ExperimentConfig(algo=algo, n=8, horizon=20_000, stride=500, trials=1, m=2)
    arms = make_problem(cfg.problem)
    runner = Recording(make_runner(cfg))
    trace = simulate(runner, arms, cfg.horizon, cfg.stride, RandomSource(3))
    for step, value in zip(trace.steps, trace.values):
        expected = step * arms.best_mean - math.fsum(arms.means[k] for k in runner.chosen[:step])
        assert abs(value - expected) <= 1e-6
    assert all(a <= b for a, b in zip(trace.values, trace.values[1:]))


def test_run_trial_is_deterministic():
    cfg = ExperimentConfig(algo="dme", n=4, horizon=30_000, trials=1)
    a = run_trial(cfg, 12, 0)
    b = run_trial(cfg, 12, 0)
    assert a == b
    assert run_trial(cfg, 12, 1)[0] != a[0]


def test_me_central_equals_me_local_with_one_player():
    central = ExperimentConfig(algo="me_central", n=16, horizon=60_000, stride=100)
    local = ExperimentConfig(algo="me_local", n=1, horizon=60_000, stride=100)
    for seed in range(3):
        assert run_trial(central, seed)[0] == run_trial(local, seed)[0]


def test_baseline_bits():
    cfg = ExperimentConfig(n=4, horizon=1000, trials=1)
    assert run_trial(cfg.replace(algo="me_local"), 0)[1].total_bits == 0
    for algo in ("me_central", "ucb_central"):
        assert run_trial(cfg.replace(algo=algo), 0)[1].total_bits == 64 * 1000 * 4
    assert central_bits(10**6, 10)["bits_up"] + central_bits(10**6, 10)["bits_down"] == 256_000_000


def test_average_traces():
    t = RegretTrace([1, 2, 3], [0.0, 2.0, 4.0])
    assert average_traces([t]).values == t.values
    assert average_traces([t, RegretTrace([1, 2, 3], [0.0, 0.0, 0.0])]).values == [0.0, 1.0, 2.0]
    same = RegretTrace([1, 2], [0.1, 0.7])
    avg = average_traces([same] * 7)
    assert all(abs(a - b) <= 1e-12 for a, b in zip(avg.values, same.values))
    with pytest.raises(ValueError):
        average_traces([t, RegretTrace([1, 2], [0.0, 0.0])])


def _stats(stop):
    return RunStats(stop, [0], {"bits_up": 0, "bits_down": 0}, False)


def test_empirical_speedup():
    assert empirical_speedup(_stats(500), _stats(500)) == 1.0
    assert empirical_speedup(_stats(10_000), _stats(80_000)) == 8.0
    assert empirical_speedup(_stats(None), _stats(80_000)) is None
    assert empirical_speedup(_stats(10), _stats(None)) is None


def test_write_csv_formats(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv(RegretTrace(), None, path)
    assert path.read_text() == "step,mean_regret\n"
    assert not summary_path(path).exists()


def test_run_experiment_writes_consistent_files(tmp_path):
    out = tmp_path / "dme.csv"
    cfg = ExperimentConfig(algo="dme", population="pareto8020", n=16, pop_n_gamma=2,
                           horizon=40_000, trials=3, out=str(out))
    trace, summary = run_experiment(cfg)
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["step", "mean_regret"]
    assert len(rows) == 1 + len(trace)
    srows = list(csv.DictReader(open(summary_path(out))))
    assert len(srows) == 1
    row = srows[0]
    assert int(row["bits_up"]) + int(row["bits_down"]) == int(row["total_bits"])
    assert row["algorithm"] == "dme" and row["N"] == "16" and row["N_gamma_or_M"] == "2"
    first = out.read_bytes(), summary_path(out).read_bytes()
    run_experiment(cfg)
    assert (out.read_bytes(), summary_path(out).read_bytes()) == first


def test_parallel_trials_match_serial():
    cfg = ExperimentConfig(algo="dme", n=4, horizon=5000, trials=3)
    serial = run_experiment(cfg)
    parallel = run_experiment(cfg.replace(workers=2))
    assert serial == parallel


@pytest.mark.parametrize("changes", [
    dict(horizon=0), dict(trials=0), dict(eps=1.0), dict(eps=0.0), dict(delta=0.0),
    dict(delta=1.5), dict(problem="x"), dict(algo="lucb"), dict(population="zipf"),
    dict(n_gamma=65), dict(population="pareto8020", n=1), dict(stride=0),
])
def test_config_validation(changes):
    with pytest.raises(ConfigError):
        ExperimentConfig(**changes)


def test_parse_config_file():
    text = """
    # experiment
    problem = problem2
    n = 32     # players
    eps = 0.25
    n-gamma = 8
    out = results/run.csv
    """
    cfg = config_from_mapping(parse_kv(text))
    assert (cfg.problem, cfg.n, cfg.eps, cfg.n_gamma, cfg.out) == ("problem2", 32, 0.25, 8, "results/run.csv")
    with pytest.raises(ConfigError):
        parse_kv("just words")
    with pytest.raises(ConfigError):
        config_from_mapping({"colour": "red"})
    with pytest.raises(ConfigError):
        config_from_mapping({"n": "many"})


def test_suite_single_value_single_algo(tmp_path):
    suite = SuiteConfig(ExperimentConfig(horizon=2000, trials=1), "n", (16,), ("dme",),
                        "fig2a", str(tmp_path))
    paths = run_suite(suite)
    assert [p.name for p in paths] == ["fig2a_dme.csv"]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["fig2a_dme.csv"]
    rows = list(csv.reader(open(paths[0])))
    assert rows[0][0] == "n" and rows[1][0] == "16" and len(rows) == 2


def test_suite_n_gamma_sweep(tmp_path):
    suite = suite_from_mapping({
        "sweep": "n_gamma", "values": "2, 4", "algos": "dme,me_local", "figure": "fig6",
        "out_dir": str(tmp_path), "population": "pareto8020", "n": "16",
        "horizon": "3000", "trials": "1",
    })
    paths = run_suite(suite)
    assert [p.name for p in paths] == ["fig6_dme.csv", "fig6_me_local.csv"]
    rows = list(csv.DictReader(open(paths[0])))
    assert [r["N_gamma_or_M"] for r in rows] == ["2", "4"]


def test_suite_n_grid_default():
    suite = suite_from_mapping({"sweep": "n", "algos": "dme"})
    assert suite.values == (1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024)


def test_suite_validation():
    with pytest.raises(ConfigError):
        suite_from_mapping({"sweep": "eps", "values": "1", "algos": "dme"})
    with pytest.raises(ConfigError):
        suite_from_mapping({"sweep": "n", "values": "1", "algos": "bogus"})
    with pytest.raises(ConfigError):
        suite_from_mapping({"sweep": "m", "algos": "dme"})


class TestCli:
    def test_run_with_flags(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        code = cli.main(["run", "--algo", "me_local", "--n", "4", "--horizon", "2000",
                         "--trials", "2", "--out", str(out)])
        assert code == 0
        assert out.exists() and summary_path(out).exists()
        assert "algorithm,N" in capsys.readouterr().out

    def test_flags_override_config_file(self, tmp_path):
        conf = tmp_path / "exp.conf"
        out = tmp_path / "x.csv"
        conf.write_text(f"algo = dme\nn = 4\nhorizon = 1000\ntrials = 1\nout = {out}\n")
        assert cli.main(["run", "--config", str(conf), "--algo", "ucb_central"]) == 0
        row = list(csv.DictReader(open(summary_path(out))))[0]
        assert row["algorithm"] == "ucb_central"

    def test_invalid_config_exits_nonzero(self, tmp_path, capsys):
        assert cli.main(["run", "--eps", "1.5"]) != 0
        assert "error" in capsys.readouterr().err
        conf = tmp_path / "bad.conf"
        conf.write_text("horizon = -3\n")
        assert cli.main(["run", "--config", str(conf)]) != 0

    def test_suite(self, tmp_path):
        code = cli.main(["suite", "--sweep", "n", "--values", "2,4", "--algos", "dme",
                         "--horizon", "1000", "--trials", "1", "--figure", "f",
                         "--out-dir", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "f_dme.csv").exists()
