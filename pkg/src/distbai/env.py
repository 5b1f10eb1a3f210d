"""Reward environments, player populations and seeded random streams."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PROBLEMS = ("problem1", "problem2")
POPULATIONS = ("uniform", "pareto8020")


@dataclass(frozen=True)
class ArmSet:
    """K Bernoulli arms, 0-based, shared by every player."""

    means: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if len(self.means) < 2:
            raise ValueError("an ArmSet needs at least two arms")
        if any(not 0.0 <= m <= 1.0 for m in self.means):
            raise ValueError(f"arm means must lie in [0, 1], got {self.means}")

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def best_arm(self) -> int:
        # list.index returns the lowest index on ties
        return self.means.index(max(self.means))

    @property
    def best_mean(self) -> float:
        return max(self.means)

    def gaps(self) -> list[float]:
        best = self.best_mean
        return [best - m for m in self.means]


def make_problem(problem_id: str) -> ArmSet:
    if problem_id == "problem1":
        return ArmSet((0.7, 0.5, 0.3) + (0.1,) * 7)
    if problem_id == "problem2":
        return ArmSet((0.3, 0.2) + (0.1,) * 8)
    raise ValueError(f"unknown problem {problem_id!r}; expected one of {PROBLEMS}")


@dataclass(frozen=True)
class PlayerPopulation:
    """N players drawn i.i.d. from P(n).

    ``N_gamma`` is the size of the most active group. For ``pareto8020`` the
    first ``N_gamma`` players share 80% of the events and the rest share 20%.
    """

    N: int
    kind: str = "uniform"
    N_gamma: int | None = None
    probabilities: tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.kind == "uniform":
            if self.N_gamma is None:
                object.__setattr__(self, "N_gamma", self.N)
            elif self.N_gamma != self.N:
                raise ValueError("a uniform population has N_gamma = N")
            probs = (1.0 / self.N,) * self.N
        elif self.kind == "pareto8020":
            if self.N_gamma is None:
                object.__setattr__(self, "N_gamma", math.ceil(0.2 * self.N))
            if not 0 < self.N_gamma < self.N:
                raise ValueError(
                    f"pareto8020 needs 0 < N_gamma < N, got N={self.N}, N_gamma={self.N_gamma}"
                )
            rest = self.N - self.N_gamma
            probs = (0.8 / self.N_gamma,) * self.N_gamma + (0.2 / rest,) * rest
        else:
            raise ValueError(f"unknown population {self.kind!r}; expected one of {POPULATIONS}")
        object.__setattr__(self, "probabilities", probs)


def make_population(kind: str, N: int, N_gamma: int | None = None) -> PlayerPopulation:
    return PlayerPopulation(N=N, kind=kind, N_gamma=N_gamma)


def draw_player(pop: PlayerPopulation, u: float) -> int:
    """Map u in [0, 1) to a 1-based player id by inverse CDF."""
    if pop.kind == "uniform":
        return min(int(u * pop.N), pop.N - 1) + 1
    g = pop.N_gamma
    if u < 0.8:
        return min(int((u / 0.8) * g), g - 1) + 1
    rest = pop.N - g
    return g + min(int(((u - 0.8) / 0.2) * rest), rest - 1) + 1


def sample_reward(arms: ArmSet, k: int, u: float) -> int:
    assert 0 <= k < arms.K, f"arm {k} out of range"
    return 1 if u < arms.means[k] else 0


def epsilon_optimal_set(arms: ArmSet, eps: float) -> set[int]:
    best = arms.best_mean
    return {k for k, m in enumerate(arms.means) if m >= best - eps}


class RandomSource:
    """Independent, reproducible uniform streams for one trial.

    Each purpose ("players", "rewards") gets its own child of a
    ``SeedSequence`` so the player sequence does not depend on how many
    rewards were consumed and vice versa.
    """

    PURPOSES = ("players", "rewards")
    BLOCK = 8192

    def __init__(self, seed: int, trial: int = 0):
        self.seed = seed
        self.trial = trial
        root = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, trial])
        children = root.spawn(len(self.PURPOSES))
        self._gens = [np.random.Generator(np.random.PCG64(c)) for c in children]
        self._buf = [[], []]
        self._pos = [0, 0]

    def _next(self, i: int) -> float:
        pos = self._pos[i]
        buf = self._buf[i]
        if pos == len(buf):
            buf = self._buf[i] = self._gens[i].random(self.BLOCK).tolist()
            pos = 0
        self._pos[i] = pos + 1
        return buf[pos]

    def player_u(self) -> float:
        return self._next(0)

    def reward_u(self) -> float:
        return self._next(1)
