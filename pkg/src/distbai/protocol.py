"""Distributed Median Elimination: synchronization server, message ledger and world.

Players run Median Elimination without the right to eliminate locally. A wish
to eliminate arm k travels upward as a fixed-width binary code; once wishes
from half of the most active players accumulate, the server broadcasts k to
every player. Broadcasts are charged on the ledger immediately and applied to
a player lazily, the next time it is drawn.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .bandit_core import (
    PlayerState,
    close_epoch,
    epoch_ready,
    next_action,
    refill_candidates,
    update_estimate,
)
from .env import ArmSet, PlayerPopulation, RandomSource, draw_player


class ProtocolViolation(RuntimeError):
    """A message that the protocol forbids, e.g. a duplicate wish."""


class WorldStopped(RuntimeError):
    """Raised when an exploration event is requested after the stopping rule fired."""


def code_width(K: int) -> int:
    """ceil(log2 K) bits, computed exactly on integers."""
    return max(1, (K - 1).bit_length())


def encode_action_index(k: int, K: int) -> str:
    if not 0 <= k < K:
        raise ValueError(f"arm index {k} outside [0, {K})")
    return format(k, f"0{code_width(K)}b")


@dataclass(frozen=True)
class ProtocolParams:
    eps: float
    delta: float
    N: int
    N_gamma: int
    K: int

    def __post_init__(self):
        if not 0 <= self.eps < 1:
            raise ValueError(f"eps must lie in [0, 1), got {self.eps}")
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if not 1 <= self.N_gamma <= self.N:
            raise ValueError(f"N_gamma must lie in [1, N], got {self.N_gamma}")
        if self.K < 2:
            raise ValueError("K must be at least 2")

    @property
    def eta(self) -> float:
        """Per-player failure budget delta ** (2 / N_gamma)."""
        return math.exp((2.0 / self.N_gamma) * math.log(self.delta))


@dataclass
class MessageLedger:
    width: int
    upward_msgs: int = 0
    downward_msgs: int = 0

    @property
    def bits_up(self) -> int:
        return self.upward_msgs * self.width

    @property
    def bits_down(self) -> int:
        return self.downward_msgs * self.width

    def snapshot(self) -> dict:
        return {
            "upward_msgs": self.upward_msgs,
            "downward_msgs": self.downward_msgs,
            "bits_up": self.bits_up,
            "bits_down": self.bits_down,
            "width": self.width,
        }


def total_bits(ledger: MessageLedger) -> int:
    return ledger.bits_up + ledger.bits_down


@dataclass
class ServerState:
    N: int
    K: int
    lam: list[list[int]] = field(default_factory=list)
    eliminated: list[int] = field(default_factory=list)
    pending: list[deque] = field(default_factory=list)
    # arms whose broadcast has been applied to each player's K_n
    applied: list[set] = field(default_factory=list)

    def __post_init__(self):
        # index 0 unused: player ids are 1-based
        if not self.lam:
            self.lam = [[0] * self.K for _ in range(self.N + 1)]
        if not self.pending:
            self.pending = [deque() for _ in range(self.N + 1)]
        if not self.applied:
            self.applied = [set() for _ in range(self.N + 1)]

    def votes(self, k: int) -> int:
        return sum(self.lam[n][k] for n in range(1, self.N + 1))

    def candidates_left(self, n: int) -> int:
        """|K^n_l| as the server sees it, from votes and applied broadcasts."""
        lam = self.lam[n]
        removed = {k for k in range(self.K) if lam[k]} | self.applied[n]
        return max(1, self.K - len(removed))


def broadcast(server: ServerState, ledger: MessageLedger, k: int) -> bool:
    """Globally eliminate k once; never eliminate the last arm standing."""
    if k in server.eliminated or len(server.eliminated) >= server.K - 1:
        return False
    server.eliminated.append(k)
    for n in range(1, server.N + 1):
        server.pending[n].append(k)
    ledger.downward_msgs += server.N
    return True


def submit_wish(
    server: ServerState, ledger: MessageLedger, n: int, k: int, params: ProtocolParams
) -> int | None:
    """Record player n's wish to eliminate k; return k if it triggered a broadcast."""
    row = server.lam[n]
    if row[k]:
        raise ProtocolViolation(f"player {n} already wished to eliminate arm {k}")
    row[k] = 1
    ledger.upward_msgs += 1
    if 2 * server.votes(k) >= params.N_gamma and broadcast(server, ledger, k):
        return k
    return None


def apply_downward(s: PlayerState, k: int) -> bool:
    """Remove a globally eliminated arm unless it is the player's last one."""
    if len(s.K_n) <= 1:
        return False
    if k in s.K_n:
        s.K_n.remove(k)
    s.K_nl.discard(k)
    refill_candidates(s)
    return True


def exploit_action(s: PlayerState) -> int:
    if len(s.K_nl) != 1:
        raise WorldStopped(f"player {s.player_id} has not converged (|K_nl| = {len(s.K_nl)})")
    return next(iter(s.K_nl))


class EventRecord(NamedTuple):
    t: int
    player: int
    arm: int
    reward: int
    mean: float


class DmeWorld:
    def __init__(self, params: ProtocolParams, arms: ArmSet, population: PlayerPopulation):
        if arms.K != params.K or population.N != params.N:
            raise ValueError("params, arms and population disagree on K or N")
        self.params = params
        self.arms = arms
        self.population = population
        eta = params.eta
        self.players = [None] + [
            PlayerState.fresh(n, params.K, params.eps, eta) for n in range(1, params.N + 1)
        ]
        self.server = ServerState(params.N, params.K)
        self.ledger = MessageLedger(code_width(params.K))
        self.t = 0
        self.stop_time: int | None = None
        self.pulls = [0] * (params.N + 1)
        self.wish_log: list[tuple[int, int, int, int]] = []  # (t, player, epoch, arm)
        self._singletons = sum(1 for s in self.players[1:] if len(s.K_nl) == 1)

    @property
    def phase(self) -> str:
        return "stopped" if self.stop_time is not None else "exploring"

    def _deliver(self, n: int) -> None:
        queue = self.server.pending[n]
        s = self.players[n]
        applied = self.server.applied[n]
        while queue:
            k = queue.popleft()
            # the server mirrors the |K^n| > 1 guard from its own deliveries
            if self.params.K - len(applied) > 1:
                applied.add(k)
            apply_downward(s, k)

    def event(self, rng: RandomSource) -> EventRecord:
        if self.stop_time is not None:
            raise WorldStopped("the protocol has stopped; use exploit_event")
        self.t += 1
        n = draw_player(self.population, rng.player_u())
        s = self.players[n]
        was_single = len(s.K_nl) == 1
        if self.server.pending[n]:
            self._deliver(n)
        k = next_action(s)
        mean = self.arms.means[k]
        y = 1 if rng.reward_u() < mean else 0
        update_estimate(s, k, y)
        self.pulls[n] += 1
        if s.t[k] >= s.threshold and epoch_ready(s):
            epoch = s.l
            for a in close_epoch(s):
                self.wish_log.append((self.t, n, epoch, a))
                submit_wish(self.server, self.ledger, n, a, self.params)
        self._singletons += (len(s.K_nl) == 1) - was_single
        if self._singletons == self.params.N:
            self.stop_time = self.t
        return EventRecord(self.t, n, k, y, mean)

    def exploit_event(self, rng: RandomSource) -> EventRecord:
        """After the stop, each drawn player plays its output arm."""
        if self.stop_time is None:
            raise WorldStopped("exploit_event before the protocol stopped")
        self.t += 1
        n = draw_player(self.population, rng.player_u())
        k = exploit_action(self.players[n])
        mean = self.arms.means[k]
        y = 1 if rng.reward_u() < mean else 0
        self.pulls[n] += 1
        return EventRecord(self.t, n, k, y, mean)

    def step(self, rng: RandomSource) -> EventRecord:
        if self.stop_time is None:
            return self.event(rng)
        return self.exploit_event(rng)

    def outputs(self) -> list[set[int]]:
        """Each player's remaining candidate set K_nl."""
        return [set(s.K_nl) for s in self.players[1:]]


def dme_event(world: DmeWorld, rng: RandomSource) -> EventRecord:
    return world.event(rng)


def stopped(world: DmeWorld) -> bool:
    return all(len(s.K_nl) == 1 for s in world.players[1:])


def server_stopped(world: DmeWorld) -> bool:
    return all(world.server.candidates_left(n) == 1 for n in range(1, world.params.N + 1))
