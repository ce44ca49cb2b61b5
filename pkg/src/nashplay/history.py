"""Per-episode learner records and replay of past learner state.

A learner touches only the H states it visits in an episode, so logging the
new policy row at each visited ``(h, s_h)`` (plus the trajectory) is enough to
rebuild every quantity the certified policies need: the policy at the start
of any episode ``k``, the visit counts ``N_h^k`` and the visit-episode lists.

Episodes are zero-based: ``policy_rows(..)[k]`` is the policy in force at the
start of episode ``k`` and ``count_*_at(k, ...)`` counts visits in episodes
``0..k-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import MAX, MIN, MarkovGame, MarkovJointPolicy, MarkovPolicy
from .schedules import Hyperparams

NASH_Q = "nash_q"
NASH_V = "nash_v"


def _group(keys: np.ndarray, episodes: np.ndarray) -> dict[int, np.ndarray]:
    order = np.argsort(keys, kind="stable")
    keys, episodes = keys[order], episodes[order]
    bounds = np.flatnonzero(np.diff(keys)) + 1
    groups = {}
    for chunk_keys, chunk_eps in zip(np.split(keys, bounds), np.split(episodes, bounds)):
        if chunk_keys.size:
            groups[int(chunk_keys[0])] = chunk_eps
    return groups


@dataclass(eq=False)
class LearnerHistory:
    """Everything a Nash Q/V learning run did, episode by episode."""

    algorithm: str
    game: MarkovGame
    hp: Hyperparams
    states: np.ndarray        # (K, H+1)
    a: np.ndarray             # (K, H)
    b: np.ndarray             # (K, H)
    rewards: np.ndarray       # (K, H)
    next_up: np.ndarray       # (K, H) upper value of s_{h+1} used in the update
    next_low: np.ndarray      # (K, H)
    vup1: np.ndarray          # (K,) upper value of s_1 at the start of episode k
    vlow1: np.ndarray         # (K,)
    rows_max: np.ndarray      # (K, H, A) max-player row at s_h after episode k's update
    rows_min: np.ndarray      # (K, H, B)
    rows_joint: np.ndarray | None = None   # (K, H, A*B), Nash Q only
    final: dict = field(default_factory=dict)
    clip_events: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def K(self) -> int:
        return int(self.states.shape[0])

    @property
    def gaps(self) -> np.ndarray:
        return self.vup1 - self.vlow1

    def _cell_index(self) -> dict[int, np.ndarray]:
        idx = self._cache.get("cells")
        if idx is None:
            g = self.game
            K, H = self.a.shape
            hs = np.broadcast_to(np.arange(H), (K, H))
            keys = ((hs * g.S + self.states[:, :H]) * g.A + self.a) * g.B + self.b
            eps = np.broadcast_to(np.arange(K)[:, None], (K, H))
            idx = _group(keys.ravel(), eps.ravel())
            self._cache["cells"] = idx
        return idx

    def _state_index(self) -> dict[int, np.ndarray]:
        idx = self._cache.get("states")
        if idx is None:
            K, H = self.a.shape
            hs = np.broadcast_to(np.arange(H), (K, H))
            keys = hs * self.game.S + self.states[:, :H]
            eps = np.broadcast_to(np.arange(K)[:, None], (K, H))
            idx = _group(keys.ravel(), eps.ravel())
            self._cache["states"] = idx
        return idx

    _EMPTY = np.zeros(0, dtype=np.int64)

    def cell_visits(self, h: int, s: int, a: int, b: int) -> np.ndarray:
        """Sorted episodes in which (s, a, b) was played at step h."""
        g = self.game
        return self._cell_index().get(((h * g.S + s) * g.A + a) * g.B + b, self._EMPTY)

    def state_visits(self, h: int, s: int) -> np.ndarray:
        return self._state_index().get(h * self.game.S + s, self._EMPTY)

    def count_cell_at(self, k: int, h: int, s: int, a: int, b: int) -> int:
        return int(np.searchsorted(self.cell_visits(h, s, a, b), k, side="left"))

    def count_state_at(self, k: int, h: int, s: int) -> int:
        return int(np.searchsorted(self.state_visits(h, s), k, side="left"))

    def policy_rows(self, side: str, h: int, s: int) -> np.ndarray:
        """(K, n_actions) array: the side's row at (h, s) at the start of each episode."""
        key = ("rows", side, h, s)
        out = self._cache.get(key)
        if out is None:
            rows = {MAX: self.rows_max, MIN: self.rows_min, "joint": self.rows_joint}[side]
            n = rows.shape[-1]
            visits = self.state_visits(h, s)
            last = np.searchsorted(visits, np.arange(self.K), side="left") - 1
            out = np.full((self.K, n), 1.0 / n)
            seen = last >= 0
            out[seen] = rows[visits[last[seen]], h]
            out.setflags(write=False)
            self._cache[key] = out
        return out

    def markov_policy_at(self, k: int, side: str) -> MarkovPolicy:
        g = self.game
        n = g.n_actions(side)
        p = np.empty((g.H, g.S, n))
        for h in range(g.H):
            for s in range(g.S):
                p[h, s] = self.policy_rows(side, h, s)[k]
        return MarkovPolicy(side, p)

    def joint_policy_at(self, k: int) -> MarkovJointPolicy:
        if self.rows_joint is None:
            raise ValueError("joint policies are only recorded by Nash Q-learning")
        g = self.game
        pi = np.empty((g.H, g.S, g.A * g.B))
        for h in range(g.H):
            for s in range(g.S):
                pi[h, s] = self.policy_rows("joint", h, s)[k]
        return MarkovJointPolicy(pi.reshape(g.H, g.S, g.A, g.B))

    def counts_at(self, k: int) -> np.ndarray:
        """N_h^k over (h, s, a, b) for Nash Q or (h, s) for Nash V."""
        g = self.game
        if self.algorithm == NASH_Q:
            N = np.zeros((g.H, g.S, g.A, g.B), dtype=np.int64)
            for key, eps in self._cell_index().items():
                N.flat[key] = np.searchsorted(eps, k, side="left")
        else:
            N = np.zeros((g.H, g.S), dtype=np.int64)
            for key, eps in self._state_index().items():
                N.flat[key] = np.searchsorted(eps, k, side="left")
        return N

    def visited(self, k: int) -> list[tuple[int, int, int, int]]:
        return [(h, int(self.states[k, h]), int(self.a[k, h]), int(self.b[k, h]))
                for h in range(self.game.H)]
