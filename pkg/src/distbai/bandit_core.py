"""Per-player Median Elimination machinery and the local baselines.

``PlayerState`` carries one player's elimination state. In the distributed
protocol a player only *wishes* to eliminate arms (``K_nl`` shrinks) while the
playable set ``K_n`` shrinks on server broadcasts. ``LocalMedianElimination``
is the classic single-learner algorithm, and ``UcbState`` is UCB1.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field


def pull_threshold(eps_l: float, eta_l: float, K: int) -> int:
    """Pulls per arm needed to close an epoch: ceil(4/eps_l^2 * ln(3K/eta_l))."""
    if not eps_l > 0:
        raise ValueError(f"eps_l must be positive, got {eps_l}")
    if not 0 < eta_l < 3 * K:
        raise ValueError(f"eta_l must lie in (0, 3K), got {eta_l}")
    return math.ceil((4.0 / (eps_l * eps_l)) * math.log(3 * K / eta_l))


def elimination_median(values) -> float:
    """Upper median: the ceil((m+1)/2)-th smallest of m values."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("median of an empty list")
    return ordered[(len(ordered) + 2) // 2 - 1]


@dataclass
class PlayerState:
    player_id: int
    K: int
    eps_l: float
    eta_l: float
    l: int = 1
    K_n: list[int] = field(default_factory=list)
    K_nl: set[int] = field(default_factory=set)
    t: list[int] = field(default_factory=list)
    mu_hat: list[float] = field(default_factory=list)
    cursor: int = 0
    threshold: int = 0

    def __post_init__(self):
        if not self.K_n:
            self.K_n = list(range(self.K))
        if not self.K_nl:
            self.K_nl = set(self.K_n)
        if not self.t:
            self.t = [0] * self.K
        if not self.mu_hat:
            self.mu_hat = [0.0] * self.K
        self.threshold = pull_threshold(self.eps_l, self.eta_l, self.K)

    @classmethod
    def fresh(cls, player_id: int, K: int, eps: float, eta: float) -> "PlayerState":
        """Initial state with eps_1 = eps/4 and eta_1 = eta/2."""
        return cls(player_id=player_id, K=K, eps_l=eps / 4, eta_l=eta / 2)


def round_robin(K_n: list[int], cursor: int) -> int:
    """First arm of the sorted K_n at or after ``cursor``, wrapping around."""
    i = bisect.bisect_left(K_n, cursor)
    return K_n[i] if i < len(K_n) else K_n[0]


def next_action(s: PlayerState) -> int:
    # the cursor is an arm index, so arms removed mid-cycle are skipped
    k = round_robin(s.K_n, s.cursor)
    s.cursor = k + 1
    return k


def update_estimate(s: PlayerState, k: int, y: float) -> None:
    n = s.t[k] + 1
    s.t[k] = n
    # with n == 1 the stale mean gets weight zero
    s.mu_hat[k] = y / n + (n - 1) / n * s.mu_hat[k]


def epoch_ready(s: PlayerState) -> bool:
    thr = s.threshold
    t = s.t
    return all(t[k] >= thr for k in s.K_n)


def close_epoch(s: PlayerState) -> list[int]:
    """Close the current epoch and return the arms the player wishes to eliminate.

    Wished arms leave K_nl, counts are reset for the pre-removal K_nl, and the
    schedule advances (eps * 3/4, eta / 2).
    """
    snapshot = sorted(s.K_nl)
    m = elimination_median([s.mu_hat[k] for k in snapshot])
    wished = [k for k in snapshot if s.mu_hat[k] < m]
    for k in wished:
        s.K_nl.discard(k)
    for k in snapshot:
        s.t[k] = 0
    s.eps_l = 0.75 * s.eps_l
    s.eta_l = s.eta_l / 2
    s.l += 1
    s.threshold = pull_threshold(s.eps_l, s.eta_l, s.K)
    return wished


def refill_candidates(s: PlayerState) -> None:
    """Keep K_nl non-empty: fall back to the empirically best arm of K_n."""
    if not s.K_nl:
        best = max(s.K_n, key=lambda k: (s.mu_hat[k], -k))
        s.K_nl.add(best)


class LocalMedianElimination:
    """Median Elimination on a single learner, with local elimination rights.

    Once one candidate remains, it commits to that arm forever.
    """

    def __init__(self, K: int, eps: float, eta: float, player_id: int = 1):
        self.state = PlayerState.fresh(player_id, K, eps, eta)
        self.survivor: int | None = self.state.K_n[0] if K == 1 else None
        self.history: list[tuple[int, int]] = []  # (epoch, wished arm)

    @property
    def done(self) -> bool:
        return self.survivor is not None

    def select(self) -> int:
        if self.survivor is not None:
            return self.survivor
        return next_action(self.state)

    def step(self, k: int, y: float) -> None:
        """Feed the reward of the arm returned by ``select``."""
        if self.survivor is not None:
            return
        s = self.state
        update_estimate(s, k, y)
        if s.t[k] < s.threshold or not epoch_ready(s):
            return
        epoch = s.l
        wished = close_epoch(s)
        if wished:
            s.K_n = [a for a in s.K_n if a not in wished]
            self.history.extend((epoch, a) for a in wished)
        if len(s.K_nl) == 1:
            self.survivor = next(iter(s.K_nl))


def local_me_step(me: LocalMedianElimination, k: int, y: float) -> LocalMedianElimination:
    me.step(k, y)
    return me


@dataclass
class UcbState:
    K: int
    counts: list[int] = field(default_factory=list)
    means: list[float] = field(default_factory=list)
    t: int = 0

    def __post_init__(self):
        if not self.counts:
            self.counts = [0] * self.K
        if not self.means:
            self.means = [0.0] * self.K


def ucb_select(u: UcbState) -> int:
    for k, c in enumerate(u.counts):
        if c == 0:
            return k
    log_t = math.log(u.t)
    best_k, best_v = 0, -math.inf
    for k in range(u.K):
        v = u.means[k] + math.sqrt(2.0 * log_t / u.counts[k])
        if v > best_v:
            best_k, best_v = k, v
    return best_k


def ucb_update(u: UcbState, k: int, y: float) -> UcbState:
    u.t += 1
    n = u.counts[k] + 1
    u.counts[k] = n
    u.means[k] += (y - u.means[k]) / n
    return u
