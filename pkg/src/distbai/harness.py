"""Seeded experiment runner: regret traces, run statistics and CSV output."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .bandit_core import LocalMedianElimination, UcbState, ucb_select, ucb_update
from .edme import EdmeConfig, EdmeWorld
from .env import (
    POPULATIONS,
    PROBLEMS,
    ArmSet,
    PlayerPopulation,
    RandomSource,
    draw_player,
    epsilon_optimal_set,
    make_population,
    make_problem,
)
from .protocol import DmeWorld, ProtocolParams, code_width

log = logging.getLogger(__name__)

ALGORITHMS = ("dme", "edme", "me_local", "me_central", "ucb_central")
# bits per decision charged to the centralized baselines: 64 * T * ceil(log2 K)
CENTRAL_BITS_FACTOR = 64


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "problem1"
    population: str = "uniform"
    n: int = 64
    n_gamma: int | None = None
    m: int = 1
    algo: str = "dme"
    eps: float = 0.5
    delta: float = 0.05
    horizon: int = 1_000_000
    trials: int = 100
    seed: int = 0
    out: str | None = None
    stride: int = 1000
    pop_n_gamma: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.population not in POPULATIONS:
            raise ConfigError(f"population must be one of {POPULATIONS}, got {self.population!r}")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.n < 1:
            raise ConfigError("n must be a positive integer")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")
        if self.m < 1:
            raise ConfigError("m must be at least 1")
        if not 0 <= self.eps < 1:
            raise ConfigError(f"eps must lie in [0, 1), got {self.eps}")
        if self.eps == 0 and self.algo != "ucb_central":
            raise ConfigError("elimination algorithms need eps > 0")
        if not 0 < self.delta <= 1:
            raise ConfigError(f"delta must lie in (0, 1], got {self.delta}")
        try:
            self.make_population()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_gamma is not None and not 1 <= self.n_gamma <= self.n:
            raise ConfigError(f"n_gamma must lie in [1, n], got {self.n_gamma}")

    def make_population(self) -> PlayerPopulation:
        return make_population(self.population, self.n, self.pop_n_gamma)

    def make_arms(self) -> ArmSet:
        return make_problem(self.problem)

    @property
    def algo_n_gamma(self) -> int:
        """N_gamma given to the protocol; defaults to the population's active-group size."""
        if self.n_gamma is not None:
            return self.n_gamma
        return self.make_population().N_gamma

    @property
    def n_gamma_or_m(self) -> int:
        return self.m if self.algo == "edme" else self.algo_n_gamma

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RegretTrace:
    steps: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    stride: int = 1

    def __len__(self):
        return len(self.steps)

    @property
    def final(self) -> float:
        return self.values[-1] if self.values else 0.0


@dataclass
class RunStats:
    stop_time: int | None
    pulls_per_player: list[int]
    bits: dict
    failed: bool
    horizon: int = 0

    @property
    def stopped(self) -> bool:
        return self.stop_time is not None

    @property
    def total_bits(self) -> int:
        return self.bits["bits_up"] + self.bits["bits_down"]


def _no_bits(K: int) -> dict:
    return {"upward_msgs": 0, "downward_msgs": 0, "bits_up": 0, "bits_down": 0,
            "width": code_width(K)}


def central_bits(T: int, K: int) -> dict:
    w = code_width(K)
    msgs = CENTRAL_BITS_FACTOR * T
    return {"upward_msgs": msgs, "downward_msgs": 0, "bits_up": msgs * w, "bits_down": 0,
            "width": w}


# Runners: step(rng) plays one event and returns the arm pulled.

class _WorldRunner:
    def __init__(self, world, eps: float):
        self.world = world
        self.eps = eps

    def step(self, rng: RandomSource) -> int:
        return self.world.step(rng).arm

    def stats(self, T: int) -> RunStats:
        w = self.world
        failed = False
        if w.stop_time is not None:
            good = epsilon_optimal_set(w.arms, self.eps)
            failed = any(not out <= good for out in w.outputs())
        return RunStats(w.stop_time, w.pulls[1:], w.ledger.snapshot(), failed, T)


class _LocalRunner:
    def __init__(self, arms: ArmSet, pop: PlayerPopulation, eps: float, delta: float):
        self.arms = arms
        self.pop = pop
        self.eps = eps
        self.learners = [None] + [
            LocalMedianElimination(arms.K, eps, delta, player_id=n) for n in range(1, pop.N + 1)
        ]
        self.pulls = [0] * (pop.N + 1)
        self.t = 0
        self.remaining = pop.N
        self.stop_time = None

    def step(self, rng: RandomSource) -> int:
        self.t += 1
        n = draw_player(self.pop, rng.player_u())
        me = self.learners[n]
        k = me.select()
        y = 1 if rng.reward_u() < self.arms.means[k] else 0
        self.pulls[n] += 1
        if not me.done:
            me.step(k, y)
            if me.done:
                self.remaining -= 1
                if self.remaining == 0:
                    self.stop_time = self.t
        return k

    def stats(self, T: int) -> RunStats:
        good = epsilon_optimal_set(self.arms, self.eps)
        failed = any(me.done and me.survivor not in good for me in self.learners[1:])
        return RunStats(self.stop_time, self.pulls[1:], _no_bits(self.arms.K), failed, T)


class _CentralMeRunner:
    def __init__(self, arms: ArmSet, pop: PlayerPopulation, eps: float, delta: float):
        self.arms = arms
        self.pop = pop
        self.eps = eps
        self.me = LocalMedianElimination(arms.K, eps, delta)
        self.pulls = [0] * (pop.N + 1)
        self.t = 0
        self.stop_time = None

    def step(self, rng: RandomSource) -> int:
        self.t += 1
        n = draw_player(self.pop, rng.player_u())
        me = self.me
        k = me.select()
        y = 1 if rng.reward_u() < self.arms.means[k] else 0
        self.pulls[n] += 1
        if not me.done:
            me.step(k, y)
            if me.done:
                self.stop_time = self.t
        return k

    def stats(self, T: int) -> RunStats:
        failed = self.me.done and self.me.survivor not in epsilon_optimal_set(self.arms, self.eps)
        return RunStats(self.stop_time, self.pulls[1:], central_bits(T, self.arms.K), failed, T)


class _CentralUcbRunner:
    def __init__(self, arms: ArmSet, pop: PlayerPopulation):
        self.arms = arms
        self.pop = pop
        self.ucb = UcbState(arms.K)
        self.pulls = [0] * (pop.N + 1)

    def step(self, rng: RandomSource) -> int:
        n = draw_player(self.pop, rng.player_u())
        k = ucb_select(self.ucb)
        y = 1 if rng.reward_u() < self.arms.means[k] else 0
        ucb_update(self.ucb, k, y)
        self.pulls[n] += 1
        return k

    def stats(self, T: int) -> RunStats:
        return RunStats(None, self.pulls[1:], central_bits(T, self.arms.K), False, T)


def make_runner(cfg: ExperimentConfig):
    arms = cfg.make_arms()
    pop = cfg.make_population()
    if cfg.algo == "dme":
        params = ProtocolParams(cfg.eps, cfg.delta, cfg.n, cfg.algo_n_gamma, arms.K)
        return _WorldRunner(DmeWorld(params, arms, pop), cfg.eps)
    if cfg.algo == "edme":
        ecfg = EdmeConfig(cfg.eps, cfg.delta, cfg.n, arms.K, M=cfg.m)
        return _WorldRunner(EdmeWorld(ecfg, arms, pop), cfg.eps)
    if cfg.algo == "me_local":
        return _LocalRunner(arms, pop, cfg.eps, cfg.delta)
    if cfg.algo == "me_central":
        return _CentralMeRunner(arms, pop, cfg.eps, cfg.delta)
    return _CentralUcbRunner(arms, pop)


def simulate(runner, arms: ArmSet, horizon: int, stride: int, rng: RandomSource) -> RegretTrace:
    """Drive ``runner`` for ``horizon`` events, recording cumulative pseudo-regret."""
    gaps = arms.gaps()
    counts = [0] * arms.K
    trace = RegretTrace(stride=stride)
    step = runner.step
    t = 0
    while t < horizon:
        stop = min(t + stride, horizon)
        for _ in range(stop - t):
            counts[step(rng)] += 1
        t = stop
        trace.steps.append(t)
        trace.values.append(math.fsum(c * g for c, g in zip(counts, gaps)))
    return trace


def run_trial(cfg: ExperimentConfig, seed: int, trial: int = 0) -> tuple[RegretTrace, RunStats]:
    runner = make_runner(cfg)
    rng = RandomSource(seed, trial)
    trace = simulate(runner, cfg.make_arms(), cfg.horizon, cfg.stride, rng)
    return trace, runner.stats(cfg.horizon)


def _trial_job(args):
    cfg, trial = args
    return run_trial(cfg, cfg.seed, trial)


def run_trials(cfg: ExperimentConfig) -> tuple[list[RegretTrace], list[RunStats]]:
    jobs = [(cfg, i) for i in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    return [r[0] for r in results], [r[1] for r in results]


def average_traces(traces: list[RegretTrace]) -> RegretTrace:
    if not traces:
        return RegretTrace()
    steps = traces[0].steps
    if any(tr.steps != steps for tr in traces):
        raise ValueError("traces have different checkpoints")
    n = len(traces)
    values = [math.fsum(col) / n for col in zip(*(tr.values for tr in traces))]
    return RegretTrace(list(steps), values, traces[0].stride)


def empirical_speedup(dist_stats: RunStats, local_stats: RunStats) -> float | None:
    """Stop time of the local baseline over stop time of the distributed run."""
    if not dist_stats.stopped or not local_stats.stopped or dist_stats.stop_time == 0:
        return None
    return local_stats.stop_time / dist_stats.stop_time


@dataclass
class Summary:
    algorithm: str
    N: int
    N_gamma_or_M: int
    bits_up: float
    bits_down: float
    upward_msgs: float
    downward_msgs: float
    stop_time: float | None
    failed_fraction: float
    stopped_fraction: float
    final_regret: float
    trials: int

    FIELDS = ("algorithm", "N", "N_gamma_or_M", "bits_up", "bits_down", "upward_msgs",
              "downward_msgs", "stop_time", "failed_fraction", "total_bits",
              "stopped_fraction", "final_regret", "trials")

    @property
    def total_bits(self) -> float:
        return self.bits_up + self.bits_down

    def row(self) -> list[str]:
        return [_fmt(getattr(self, f)) for f in self.FIELDS]


def _mean(xs):
    xs = list(xs)
    if not xs:
        return None
    total = sum(xs)
    if isinstance(total, int) and total % len(xs) == 0:
        return total // len(xs)
    return total / len(xs)


def summarize(cfg: ExperimentConfig, stats: list[RunStats], mean_trace: RegretTrace) -> Summary:
    stopped = [s.stop_time for s in stats if s.stopped]
    return Summary(
        algorithm=cfg.algo,
        N=cfg.n,
        N_gamma_or_M=cfg.n_gamma_or_m,
        bits_up=_mean(s.bits["bits_up"] for s in stats),
        bits_down=_mean(s.bits["bits_down"] for s in stats),
        upward_msgs=_mean(s.bits["upward_msgs"] for s in stats),
        downward_msgs=_mean(s.bits["downward_msgs"] for s in stats),
        stop_time=_mean(stopped),
        failed_fraction=sum(s.failed for s in stats) / len(stats),
        stopped_fraction=len(stopped) / len(stats),
        final_regret=mean_trace.final,
        trials=len(stats),
    )


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def summary_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_summary{path.suffix or '.csv'}")


def write_csv(trace: RegretTrace, summary: Summary | None, path: str | Path) -> Path:
    """Write the trace (step, mean_regret) to ``path`` and the summary beside it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean_regret"])
        for step, value in zip(trace.steps, trace.values):
            w.writerow([step, _fmt(float(value))])
    if summary is not None:
        with open(summary_path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(Summary.FIELDS)
            w.writerow(summary.row())
    return path


def run_experiment(cfg: ExperimentConfig) -> tuple[RegretTrace, Summary]:
    log.info("running %s on %s/%s N=%d for %d trials", cfg.algo, cfg.problem,
             cfg.population, cfg.n, cfg.trials)
    traces, stats = run_trials(cfg)
    mean_trace = average_traces(traces)
    summary = summarize(cfg, stats, mean_trace)
    if cfg.out:
        write_csv(mean_trace, summary, cfg.out)
    return mean_trace, summary


SWEEPABLE = {"n": int, "n_gamma": int, "m": int, "horizon": int}


@dataclass(frozen=True)
class SuiteConfig:
    base: ExperimentConfig
    sweep: str
    values: tuple[int, ...]
    algos: tuple[str, ...]
    figure: str = "figure"
    out_dir: str = "results"

    def __post_init__(self):
        if self.sweep not in SWEEPABLE:
            raise ConfigError(f"sweep must be one of {tuple(SWEEPABLE)}, got {self.sweep!r}")
        if not self.values:
            raise ConfigError("a suite needs at least one sweep value")
        bad = [a for a in self.algos if a not in ALGORITHMS]
        if bad or not self.algos:
            raise ConfigError(f"unknown algorithms {bad}; expected some of {ALGORITHMS}")


# player counts swept when a suite over n names no values
DEFAULT_N_GRID = " ".join(str(2 ** i) for i in range(11))

SWEEP_FIELDS = ("value", "N", "N_gamma_or_M", "final_regret", "bits_up", "bits_down",
                "total_bits", "stop_time", "stopped_fraction", "failed_fraction")


def run_suite(suite: SuiteConfig) -> list[Path]:
    """One CSV per algorithm, one row per sweep value."""
    out_dir = Path(suite.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for algo in suite.algos:
        rows = []
        for value in suite.values:
            cfg = suite.base.replace(algo=algo, out=None, **{suite.sweep: value})
            _, s = run_experiment(cfg)
            rows.append([_fmt(value), _fmt(s.N), _fmt(s.N_gamma_or_M), _fmt(s.final_regret),
                         _fmt(s.bits_up), _fmt(s.bits_down), _fmt(s.total_bits),
                         _fmt(s.stop_time), _fmt(s.stopped_fraction), _fmt(s.failed_fraction)])
        path = out_dir / f"{suite.figure}_{algo}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow((suite.sweep,) + SWEEP_FIELDS[1:])
            w.writerows(rows)
        paths.append(path)
    return paths


# config files: one `key = value` per line, '#' starts a comment

_CONFIG_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    kind = _CONFIG_TYPES[key]
    if value == "" or value.lower() == "none":
        if "None" in str(kind):
            return None
        raise ConfigError(f"{key} needs a value")
    try:
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def config_from_mapping(values: dict) -> ExperimentConfig:
    unknown = set(values) - set(_CONFIG_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})


def suite_from_mapping(values: dict) -> SuiteConfig:
    values = dict(values)
    try:
        sweep = values.pop("sweep")
        raw_algos = values.pop("algos")
        raw_values = values.pop("values") if sweep != "n" else values.pop("values", DEFAULT_N_GRID)
    except KeyError as exc:
        raise ConfigError(f"suite config is missing {exc.args[0]!r}") from None
    figure = values.pop("figure", "figure")
    out_dir = values.pop("out_dir", "results")
    try:
        sweep_values = tuple(int(v) for v in str(raw_values).replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad sweep values: {raw_values!r}") from exc
    algos = tuple(a for a in str(raw_algos).replace(",", " ").split())
    base = config_from_mapping(values)
    return SuiteConfig(base, sweep, sweep_values, algos, figure, out_dir)
