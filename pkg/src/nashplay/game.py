"""Tabular two-player zero-sum episodic Markov games.

Steps are zero-based in code: step ``h`` runs over ``0..H-1`` and value
tables carry an extra all-zero row at index ``H``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .rng import cumulative, draw_index

SIMPLEX_TOL = 1e-12

MAX = "max"
MIN = "min"


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """Episodic game MG(H, S, A, B, P, r) with a fixed initial state.

    ``P[h, s, a, b]`` is a distribution over next states and ``r[h, s, a, b]``
    the deterministic reward in [0, 1].  Arrays are stored read-only.
    """

    H: int
    S: int
    A: int
    B: int
    P: np.ndarray
    r: np.ndarray
    s1: int = 0

    def __post_init__(self):
        object.__setattr__(self, "P", _frozen(self.P))
        object.__setattr__(self, "r", _frozen(self.r))
        if self.P.shape != (self.H, self.S, self.A, self.B, self.S):
            raise ValueError(f"transition tensor has shape {self.P.shape}, "
                             f"expected {(self.H, self.S, self.A, self.B, self.S)}")
        if self.r.shape != (self.H, self.S, self.A, self.B):
            raise ValueError(f"reward tensor has shape {self.r.shape}, "
                             f"expected {(self.H, self.S, self.A, self.B)}")

    def n_actions(self, side: str) -> int:
        return self.A if side == MAX else self.B

    @property
    def P_cum(self) -> np.ndarray:
        cached = self.__dict__.get("_P_cum")
        if cached is None:
            cached = cumulative(self.P)
            object.__setattr__(self, "_P_cum", cached)
        return cached

    def step(self, h: int, s: int, a: int, b: int, u: float) -> tuple[float, int]:
        """Reward and next state for one transition driven by uniform ``u``."""
        return float(self.r[h, s, a, b]), draw_index(self.P_cum[h, s, a, b], u)


def validate_game(g: MarkovGame) -> list[str]:
    """Return every invariant violation of ``g`` (empty list when valid)."""
    errors = []
    if g.H < 1 or g.S < 1 or g.A < 1 or g.B < 1:
        errors.append(f"dimensions must be positive, got H={g.H} S={g.S} A={g.A} B={g.B}")
        return errors
    if not 0 <= g.s1 < g.S:
        errors.append(f"initial state {g.s1} outside [0, {g.S})")
    if not np.all(np.isfinite(g.P)):
        errors.append("transition tensor has non-finite entries")
    for idx in np.argwhere(np.any(g.P < 0, axis=-1)):
        errors.append(f"negative transition probability at (h,s,a,b)={tuple(int(i) for i in idx)}")
    sums = g.P.sum(axis=-1)
    for idx in np.argwhere(np.abs(sums - 1.0) > SIMPLEX_TOL):
        h, s, a, b = (int(i) for i in idx)
        errors.append(f"transition row (h,s,a,b)=({h},{s},{a},{b}) sums to {float(sums[h, s, a, b])!r}")
    for idx in np.argwhere(~((g.r >= 0) & (g.r <= 1))):
        h, s, a, b = (int(i) for i in idx)
        errors.append(f"reward out of [0,1] at (h,s,a,b)=({h},{s},{a},{b}): {float(g.r[h, s, a, b])!r}")
    return errors


def _check_simplex_rows(p: np.ndarray, what: str) -> None:
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise ValueError(f"{what} rows must be probability vectors")


@dataclass(frozen=True, eq=False)
class MarkovJointPolicy:
    """Correlated Markov policy: ``pi[h, s, a, b]``."""

    pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", _frozen(self.pi))
        if self.pi.ndim != 4:
            raise ValueError("joint policy must have shape (H, S, A, B)")
        H, S, A, B = self.pi.shape
        _check_simplex_rows(self.pi.reshape(H, S, A * B), "joint policy")

    @classmethod
    def uniform(cls, g: MarkovGame) -> "MarkovJointPolicy":
        return cls(np.full((g.H, g.S, g.A, g.B), 1.0 / (g.A * g.B)))

    def marginals(self) -> tuple["MarkovPolicy", "MarkovPolicy"]:
        return MarkovPolicy(MAX, self.pi.sum(axis=3)), MarkovPolicy(MIN, self.pi.sum(axis=2))


@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    """One player's Markov policy: ``p[h, s, action]``."""

    side: str
    p: np.ndarray

    def __post_init__(self):
        if self.side not in (MAX, MIN):
            raise ValueError(f"side must be 'max' or 'min', got {self.side!r}")
        object.__setattr__(self, "p", _frozen(self.p))
        if self.p.ndim != 3:
            raise ValueError("Markov policy must have shape (H, S, n_actions)")
        _check_simplex_rows(self.p, "Markov policy")

    @classmethod
    def uniform(cls, g: MarkovGame, side: str) -> "MarkovPolicy":
        n = g.n_actions(side)
        return cls(side, np.full((g.H, g.S, n), 1.0 / n))

    @classmethod
    def deterministic(cls, side: str, actions: np.ndarray, n_actions: int) -> "MarkovPolicy":
        """Policy playing ``actions[h, s]`` with probability one."""
        actions = np.asarray(actions, dtype=int)
        p = np.zeros(actions.shape + (n_actions,))
        np.put_along_axis(p, actions[..., None], 1.0, axis=-1)
        return cls(side, p)


@dataclass(frozen=True)
class Trajectory:
    """One episode: ``states`` has length H+1 (the last entry is s_{H+1})."""

    states: tuple[int, ...]
    a: tuple[int, ...]
    b: tuple[int, ...]
    rewards: tuple[float, ...]
    terminal: bool = True

    @property
    def ret(self) -> float:
        return float(sum(self.rewards))

    def history(self, h: int) -> list[tuple[int, int, int]]:
        """The (s, a, b) prefix observed before step ``h``."""
        return [(self.states[i], self.a[i], self.b[i]) for i in range(h)]


class Actor(Protocol):
    """A possibly history-dependent policy for one player.

    ``reset`` is called at the start of every episode; ``act`` receives the
    current step, state and the list of (s, a, b) triples seen so far.
    """

    def reset(self, rng: np.random.Generator) -> None: ...

    def act(self, h: int, s: int, history: Sequence[tuple[int, int, int]]) -> int: ...


class MarkovActor:
    """Executes a MarkovPolicy."""

    def __init__(self, policy: MarkovPolicy):
        self.policy = policy
        self._cum = cumulative(policy.p)
        self._rng = None

    def reset(self, rng: np.random.Generator) -> None:
        self._rng = rng

    def act(self, h, s, history) -> int:
        return draw_index(self._cum[h, s], self._rng.random())


def _as_actors(policy) -> tuple[Actor, Actor] | None:
    if isinstance(policy, MarkovJointPolicy):
        return None
    first, second = policy
    if isinstance(first, MarkovPolicy):
        first = MarkovActor(first)
    if isinstance(second, MarkovPolicy):
        second = MarkovActor(second)
    return first, second


def sample_episode(g: MarkovGame, policy, rng: np.random.Generator) -> Trajectory:
    """Simulate one episode.

    ``policy`` is a MarkovJointPolicy, or a pair of (MarkovPolicy | Actor)
    for the max and min players.  Draw order per step is: joint action (or max
    then min action), then the transition.
    """
    actors = _as_actors(policy)
    if actors is None:
        joint_cum = cumulative(policy.pi.reshape(g.H, g.S, g.A * g.B))
    else:
        for actor in actors:
            actor.reset(rng)
    states, a_seq, b_seq, rewards = [g.s1], [], [], []
    history: list[tuple[int, int, int]] = []
    s = g.s1
    for h in range(g.H):
        if actors is None:
            ab = draw_index(joint_cum[h, s], rng.random())
            a, b = divmod(ab, g.B)
        else:
            a = actors[0].act(h, s, history)
            b = actors[1].act(h, s, history)
        rew, s_next = g.step(h, s, a, b, rng.random())
        history.append((s, a, b))
        a_seq.append(a)
        b_seq.append(b)
        rewards.append(rew)
        states.append(s_next)
        s = s_next
    return Trajectory(tuple(states), tuple(a_seq), tuple(b_seq), tuple(rewards))


def make_random_game(H: int, S: int, A: int, B: int, rng: np.random.Generator) -> MarkovGame:
    """Dirichlet(1, ..., 1) transitions and Uniform[0, 1] rewards, s1 = 0."""
    if min(H, S, A, B) < 1:
        raise ValueError("dimensions must be positive")
    P = rng.dirichlet(np.ones(S), size=(H, S, A, B))
    # renormalise so every row sums to one to the last bit the simplex check sees
    P /= P.sum(axis=-1, keepdims=True)
    r = rng.random((H, S, A, B))
    return MarkovGame(H, S, A, B, P, r, 0)


# ---------------------------------------------------------------------------
# parity hard instance
# ---------------------------------------------------------------------------

def parity_state(level: int, bit: int, H: int) -> int:
    """Index of state ``level_bit`` (level 1..H); level 1 only has bit 0."""
    if level == 1:
        if bit != 0:
            raise ValueError("level 1 only has state 1_0")
        return 0
    if not 2 <= level <= H:
        raise ValueError(f"level {level} outside 1..{H}")
    return 1 + 2 * (level - 2) + bit


def parity_terminal(H: int) -> int:
    return 2 * H - 1


def parity_next_bit(bit: int, a: int, b: int) -> int:
    """Next state bit from the reference transition table."""
    if bit == 0:
        return 1 if (a == 1 and b == 1) else 0
    return 0 if (a == 0 and b == 1) else 1


def make_parity_game(n: int) -> MarkovGame:
    """Deterministic 2H-state instance with H = n + 1.

    States are laid out as [1_0, 2_0, 2_1, ..., H_0, H_1, terminal].  Level-i
    states move to level i+1 using the table; level-H states and the terminal
    state move to the terminal state.  Only step H pays, and the payment
    depends only on the min player's action.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    H = n + 1
    S = 2 * H
    bot = parity_terminal(H)
    P = np.zeros((H, S, 2, 2, S))
    r = np.zeros((H, S, 2, 2))
    levels = [(1, 0)] + [(i, bit) for i in range(2, H + 1) for bit in (0, 1)]
    for h in range(H):
        for level, bit in levels:
            s = parity_state(level, bit, H)
            for a in (0, 1):
                for b in (0, 1):
                    if level < H:
                        nxt = parity_state(level + 1, parity_next_bit(bit, a, b), H)
                    else:
                        nxt = bot
                    P[h, s, a, b, nxt] = 1.0
        P[h, bot, :, :, bot] = 1.0
    top = H - 1
    r[top, parity_state(H, 0, H), :, 0] = 1.0
    r[top, parity_state(H, 1, H), :, 1] = 1.0
    return MarkovGame(H, S, 2, 2, P, r, 0)


class ParityOpponent:
    """Min player encoding a noisy parity example.

    At reset it draws x uniform on {0,1}^n and y = parity of x on ``T``,
    flipped with probability ``alpha``.  It plays x_h at steps 1..n and y at
    step H.
    """

    def __init__(self, n: int, T: Sequence[int], alpha: float):
        if not 0 <= alpha < 0.5:
            raise ValueError("noise rate must lie in [0, 1/2)")
        T = sorted(set(int(i) for i in T))
        if any(not 1 <= i <= n for i in T):
            raise ValueError(f"T must be a subset of 1..{n}")
        self.n, self.T, self.alpha = n, tuple(T), float(alpha)
        self.x = np.zeros(n, dtype=int)
        self.y = 0

    def reset(self, rng: np.random.Generator) -> None:
        self.x = rng.integers(0, 2, size=self.n)
        parity = int(sum(self.x[i - 1] for i in self.T) % 2)
        flip = int(rng.random() < self.alpha)
        self.y = parity ^ flip

    def act(self, h: int, s: int, history) -> int:
        return int(self.x[h]) if h < self.n else self.y


def make_parity_opponent(n: int, T: Sequence[int], alpha: float) -> ParityOpponent:
    return ParityOpponent(n, T, alpha)


class ParityTracker:
    """Max policy that knows ``T`` and reads the opponent's past bits.

    Under this kernel an opponent move b_1 overwrites the state bit
    with the max player's action and b_0 keeps it, so the final bit equals the
    max action at the last step where the opponent played b_1.  Playing
    "parity of the bits seen so far on T, assuming the current bit is 1"
    therefore leaves the final bit equal to the parity of x on T.
    """

    def __init__(self, n: int, T: Sequence[int]):
        self.n = n
        self.T = frozenset(int(i) for i in T)

    def reset(self, rng: np.random.Generator) -> None:
        pass

    def act(self, h: int, s: int, history) -> int:
        if h >= self.n:
            return 0
        seen = sum(b for i, (_, _, b) in enumerate(history) if (i + 1) in self.T) % 2
        return seen ^ int((h + 1) in self.T)


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def game_to_dict(g: MarkovGame) -> dict:
    return {
        "h": g.H, "s": g.S, "a": g.A, "b": g.B, "s1": g.s1,
        "transitions": [float(x) for x in g.P.ravel()],
        "rewards": [float(x) for x in g.r.ravel()],
    }


def game_from_dict(d: dict) -> MarkovGame:
    H, S, A, B = int(d["h"]), int(d["s"]), int(d["a"]), int(d["b"])
    P = np.asarray(d["transitions"], dtype=float).reshape(H, S, A, B, S)
    r = np.asarray(d["rewards"], dtype=float).reshape(H, S, A, B)
    return MarkovGame(H, S, A, B, P, r, int(d.get("s1", 0)))


def save_game(g: MarkovGame, path: str | Path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(g)))


def load_game(path: str | Path) -> MarkovGame:
    return game_from_dict(json.loads(Path(path).read_text()))
