"""Extended Distributed Median Elimination.

M copies of the distributed protocol run side by side with spread values of
N_gamma. Each player keeps one playable set K_n shared by all copies and one
candidate set per copy. By default a drawn player pulls one arm and feeds the
reward to every copy; ``literal=True`` makes each copy pull for itself.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .bandit_core import (
    PlayerState,
    close_epoch,
    epoch_ready,
    next_action,
    refill_candidates,
    round_robin,
    update_estimate,
)
from .env import ArmSet, PlayerPopulation, RandomSource, draw_player
from .protocol import (
    EventRecord,
    MessageLedger,
    ProtocolViolation,
    WorldStopped,
    code_width,
    exploit_action,
)


def spread_n_gamma(N: int, M: int) -> list[int]:
    """ceil(N*i/M) for i = 1..M, duplicates collapsed."""
    if M < 1:
        raise ValueError("M must be at least 1")
    return sorted({-(-N * i // M) for i in range(1, M + 1)})


@dataclass(frozen=True)
class EdmeConfig:
    eps: float
    delta: float
    N: int
    K: int
    M: int = 1
    n_gammas: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0 <= self.eps < 1:
            raise ValueError(f"eps must lie in [0, 1), got {self.eps}")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.n_gammas is None:
            object.__setattr__(self, "n_gammas", tuple(spread_n_gamma(self.N, self.M)))
        else:
            gammas = tuple(sorted(set(self.n_gammas)))
            if not gammas or any(not 1 <= g <= self.N for g in gammas):
                raise ValueError(f"every N_gamma must lie in [1, N], got {self.n_gammas}")
            object.__setattr__(self, "n_gammas", gammas)

    @property
    def instances(self) -> int:
        return len(self.n_gammas)

    @property
    def etas(self) -> list[float]:
        # the nominal M enters the failure split, even if some N_gamma collapsed
        log_base = math.log(self.delta / self.M)
        return [math.exp((2.0 / g) * log_base) for g in self.n_gammas]


class EdmePlayer:
    def __init__(self, player_id: int, cfg: EdmeConfig):
        self.player_id = player_id
        self.K_n = list(range(cfg.K))
        self.cursor = 0
        self.layers = []
        for eta in cfg.etas:
            layer = PlayerState.fresh(player_id, cfg.K, cfg.eps, eta)
            layer.K_n = self.K_n  # shared playable set
            self.layers.append(layer)


class EdmeWorld:
    def __init__(
        self,
        cfg: EdmeConfig,
        arms: ArmSet,
        population: PlayerPopulation,
        literal: bool = False,
    ):
        if arms.K != cfg.K or population.N != cfg.N:
            raise ValueError("config, arms and population disagree on K or N")
        self.cfg = cfg
        self.arms = arms
        self.population = population
        self.literal = literal
        N, K, M = cfg.N, cfg.K, cfg.instances
        self.players = [None] + [EdmePlayer(n, cfg) for n in range(1, N + 1)]
        self.lam = [[[0] * K for _ in range(N + 1)] for _ in range(M)]
        self.eliminated: list[int] = []
        self.pending = [deque() for _ in range(N + 1)]
        self.ledger = MessageLedger(code_width(K))
        self.t = 0
        self.stop_time: int | None = None
        self.winner: int | None = None
        self.pulls = [0] * (N + 1)
        self.extra_pulls: list[EventRecord] = []
        self.wish_log: list[tuple[int, int, int, int, int]] = []  # (t, player, instance, epoch, arm)
        self._singletons = [0] * M

    @property
    def phase(self) -> str:
        return "stopped" if self.stop_time is not None else "exploring"

    def _votes(self, i: int, k: int) -> int:
        lam = self.lam[i]
        return sum(lam[n][k] for n in range(1, self.cfg.N + 1))

    def _broadcast(self, k: int) -> None:
        if k in self.eliminated or len(self.eliminated) >= self.cfg.K - 1:
            return
        self.eliminated.append(k)
        for n in range(1, self.cfg.N + 1):
            self.pending[n].append(k)
        self.ledger.downward_msgs += self.cfg.N

    def submit_wish(self, i: int, n: int, k: int) -> None:
        row = self.lam[i][n]
        if row[k]:
            raise ProtocolViolation(f"player {n} already wished arm {k} in instance {i}")
        row[k] = 1
        self.ledger.upward_msgs += 1
        if 2 * self._votes(i, k) >= self.cfg.n_gammas[i]:
            self._broadcast(k)

    def _deliver(self, p: EdmePlayer) -> None:
        queue = self.pending[p.player_id]
        while queue:
            k = queue.popleft()
            if len(p.K_n) <= 1:
                continue
            if k in p.K_n:
                p.K_n.remove(k)
            for layer in p.layers:
                layer.K_nl.discard(k)
                refill_candidates(layer)

    def _learn(self, n: int, i: int, layer: PlayerState, k: int, y: int) -> None:
        update_estimate(layer, k, y)
        if layer.t[k] >= layer.threshold and epoch_ready(layer):
            epoch = layer.l
            for a in close_epoch(layer):
                self.wish_log.append((self.t, n, i, epoch, a))
                self.submit_wish(i, n, a)

    def event(self, rng: RandomSource) -> EventRecord:
        if self.stop_time is not None:
            raise WorldStopped("the protocol has stopped; use exploit_event")
        self.t += 1
        n = draw_player(self.population, rng.player_u())
        p = self.players[n]
        before = [len(layer.K_nl) == 1 for layer in p.layers]
        if self.pending[n]:
            self._deliver(p)
        means = self.arms.means
        self.extra_pulls = []
        if self.literal:
            record = None
            for i, layer in enumerate(p.layers):
                k = next_action(layer)
                y = 1 if rng.reward_u() < means[k] else 0
                self.pulls[n] += 1
                self._learn(n, i, layer, k, y)
                rec = EventRecord(self.t, n, k, y, means[k])
                if record is None:
                    record = rec
                else:
                    self.extra_pulls.append(rec)
        else:
            k = _shared_next(p)
            y = 1 if rng.reward_u() < means[k] else 0
            self.pulls[n] += 1
            for i, layer in enumerate(p.layers):
                self._learn(n, i, layer, k, y)
            record = EventRecord(self.t, n, k, y, means[k])
        N = self.cfg.N
        for i, layer in enumerate(p.layers):
            self._singletons[i] += (len(layer.K_nl) == 1) - before[i]
            if self.winner is None and self._singletons[i] == N:
                self.winner = i
        if self.winner is not None:
            self.stop_time = self.t
        return record

    def exploit_event(self, rng: RandomSource) -> EventRecord:
        if self.stop_time is None:
            raise WorldStopped("exploit_event before the protocol stopped")
        self.t += 1
        n = draw_player(self.population, rng.player_u())
        k = exploit_action(self.players[n].layers[self.winner])
        mean = self.arms.means[k]
        y = 1 if rng.reward_u() < mean else 0
        self.pulls[n] += 1
        self.extra_pulls = []
        return EventRecord(self.t, n, k, y, mean)

    def step(self, rng: RandomSource) -> EventRecord:
        if self.stop_time is None:
            return self.event(rng)
        return self.exploit_event(rng)

    def outputs(self) -> list[set[int]]:
        """Candidate sets of the winning instance, or of the last one before the stop."""
        i = self.winner if self.winner is not None else self.cfg.instances - 1
        return [set(p.layers[i].K_nl) for p in self.players[1:]]


def _shared_next(p: EdmePlayer) -> int:
    k = round_robin(p.K_n, p.cursor)
    p.cursor = k + 1
    return k


def spawn_instances(
    cfg: EdmeConfig, arms: ArmSet, population: PlayerPopulation, literal: bool = False
) -> EdmeWorld:
    return EdmeWorld(cfg, arms, population, literal=literal)


def edme_event(world: EdmeWorld, rng: RandomSource) -> EventRecord:
    return world.event(rng)


def edme_stopped(world: EdmeWorld) -> bool:
    N = world.cfg.N
    return any(
        all(len(world.players[n].layers[i].K_nl) == 1 for n in range(1, N + 1))
        for i in range(world.cfg.instances)
    )
