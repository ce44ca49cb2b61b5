"""Certified (nested-mixture) policies extracted from a learner history.

The policy picks an episode index ``k`` uniformly at the start and plays the
learner's policy from the start of episode ``k``.  The index is resampled at
every step from the visit-episode list of the current cell with the
``alpha_t^i`` weights:

* Nash Q: after the joint action at step h, from the list of (s_h, a_h, b_h);
* Nash V: on entering s_h, from the list of s_h, before acting.

If the cell had no visits before episode ``k`` the index is kept.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .game import MAX, MIN
from .history import NASH_Q, LearnerHistory
from .rng import cumulative, draw_index
from .schedules import alpha_weights


class SupportOverflowError(RuntimeError):
    """The exact policy tree would exceed the requested number of nodes."""


@lru_cache(maxsize=8192)
def _alpha_cum(t: int, H: int) -> np.ndarray:
    return cumulative(alpha_weights(t, H)[1])


class CertifiedExecutor:
    """Stateful episode actor for one player's certified policy."""

    def __init__(self, hist: LearnerHistory, side: str):
        if side not in (MAX, MIN):
            raise ValueError(f"side must be 'max' or 'min', got {side!r}")
        self.hist = hist
        self.side = side
        self.resample_after_action = hist.algorithm == NASH_Q
        self.k = 0
        self._rng = None
        self._cum_rows: dict[tuple[int, int], np.ndarray] = {}

    def reset(self, rng: np.random.Generator) -> None:
        self._rng = rng
        self.k = int(rng.integers(self.hist.K))

    def _resample(self, visits: np.ndarray) -> None:
        t = int(np.searchsorted(visits, self.k, side="left"))
        if t == 0:
            return
        m = draw_index(_alpha_cum(t, self.hist.game.H), self._rng.random())
        self.k = int(visits[m])

    def act(self, h: int, s: int, history) -> int:
        hist = self.hist
        if self.resample_after_action:
            if h > 0:
                sp, ap, bp = history[-1]
                self._resample(hist.cell_visits(h - 1, sp, ap, bp))
        else:
            self._resample(hist.state_visits(h, s))
        cum = self._cum_rows.get((h, s))
        if cum is None:
            cum = cumulative(hist.policy_rows(self.side, h, s))
            self._cum_rows[(h, s)] = cum
        return draw_index(cum[self.k], self._rng.random())


def resample_distribution(dist: np.ndarray, visits: np.ndarray, H: int) -> np.ndarray:
    """Push an index distribution through one alpha-weighted resampling step."""
    if visits.size == 0:
        return dist.copy()
    K = dist.shape[0]
    t_of_k = np.searchsorted(visits, np.arange(K), side="left")
    mass = np.bincount(t_of_k, weights=dist, minlength=visits.size + 1)
    out = np.where(t_of_k == 0, dist, 0.0)
    for t in np.flatnonzero(mass[1:] > 0) + 1:
        out[visits[:t]] += mass[t] * alpha_weights(int(t), H)[1]
    return out


@dataclass(eq=False)
class TreeNode:
    h: int
    s: int
    dist: np.ndarray            # law of the index used to act at this node
    probs: np.ndarray           # law of the certified side's action
    children: dict = field(default_factory=dict)   # (a, b, s_next) -> TreeNode


class PolicyTree:
    """Exact history tree of a certified policy.

    Nodes are keyed by (step, state, index law), so histories that induce the
    same posterior over the index share one node.  Children are indexed by
    the joint action ``(a, b)`` (max action first) and the next state.
    """

    def __init__(self, hist: LearnerHistory, side: str, max_support: int):
        self.hist = hist
        self.side = side
        self.max_support = max_support
        self._nodes: dict[tuple, TreeNode] = {}
        self.root: TreeNode | None = None

    @classmethod
    def build(cls, hist: LearnerHistory, side: str, max_support: int = 100_000) -> "PolicyTree":
        if side not in (MAX, MIN):
            raise ValueError(f"side must be 'max' or 'min', got {side!r}")
        tree = cls(hist, side, max_support)
        K = hist.K
        tree.root = tree._node(0, hist.game.s1, np.full(K, 1.0 / K))
        return tree

    @property
    def n_nodes(self) -> int:
        return len(self._nodes)

    def _node(self, h: int, s: int, carried: np.ndarray) -> TreeNode:
        key = (h, s, np.round(carried, 12).tobytes())
        node = self._nodes.get(key)
        if node is not None:
            return node
        if len(self._nodes) >= self.max_support:
            raise SupportOverflowError(
                f"certified policy tree exceeds {self.max_support} nodes; "
                "use Monte Carlo exploitability instead")
        hist, g = self.hist, self.hist.game
        is_q = hist.algorithm == NASH_Q
        dist = carried if is_q else resample_distribution(carried, hist.state_visits(h, s), g.H)
        rows = hist.policy_rows(self.side, h, s)
        probs = dist @ rows
        node = TreeNode(h, s, dist, probs)
        self._nodes[key] = node
        if h + 1 == g.H:
            return node
        n_other = g.B if self.side == MAX else g.A
        for own in np.flatnonzero(probs > 0):
            post = dist * rows[:, own]
            post /= post.sum()
            for other in range(n_other):
                a, b = (int(own), other) if self.side == MAX else (other, int(own))
                nxt = resample_distribution(post, hist.cell_visits(h, s, a, b), g.H) if is_q else post
                for s_next in np.flatnonzero(g.P[h, s, a, b] > 0):
                    node.children[(a, b, int(s_next))] = self._node(h + 1, int(s_next), nxt)
        return node

    def node_at(self, history, s: int) -> TreeNode:
        """Node reached after the (s, a, b) triples in ``history`` and current state ``s``."""
        node = self.root
        for i, (_, a, b) in enumerate(history):
            nxt_s = history[i + 1][0] if i + 1 < len(history) else s
            node = node.children[(a, b, nxt_s)]
        return node

    def action_probs(self, history, s: int) -> np.ndarray:
        return self.node_at(history, s).probs
