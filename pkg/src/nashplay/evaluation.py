"""Ground-truth oracles: Nash values, best responses and exploitability."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certified import PolicyTree, TreeNode
from .game import MAX, MIN, MarkovActor, MarkovGame, MarkovPolicy, sample_episode
from .matrix_games import solve_zero_sum


@dataclass(frozen=True)
class ValueTable:
    V: np.ndarray                  # (H+1, S), V[H] = 0
    Q: np.ndarray | None = None    # (H, S, A, B)

    def bellman_residual(self, g: MarkovGame) -> float:
        """max |Q - (r + P V_{h+1})| over all cells."""
        if self.Q is None:
            return 0.0
        target = g.r + np.einsum("hsabt,ht->hsab", g.P, self.V[1:])
        return float(np.abs(self.Q - target).max())


def _backup(g: MarkovGame, V_next: np.ndarray, h: int) -> np.ndarray:
    return g.r[h] + g.P[h] @ V_next


def nash_value_oracle(g: MarkovGame) -> ValueTable:
    """Backward induction with a zero-sum matrix game at every (h, s)."""
    V = np.zeros((g.H + 1, g.S))
    Q = np.zeros((g.H, g.S, g.A, g.B))
    for h in reversed(range(g.H)):
        Q[h] = _backup(g, V[h + 1], h)
        for s in range(g.S):
            V[h, s] = solve_zero_sum(Q[h, s])[2]
    return ValueTable(V, Q)


def best_response_to_markov(g: MarkovGame, pol: MarkovPolicy) -> tuple[MarkovPolicy, ValueTable]:
    """Deterministic best response of the opponent of ``pol``; ties go to the lowest action."""
    responder = MIN if pol.side == MAX else MAX
    n = g.n_actions(responder)
    V = np.zeros((g.H + 1, g.S))
    Q = np.zeros((g.H, g.S, g.A, g.B))
    choice = np.zeros((g.H, g.S), dtype=np.int64)
    for h in reversed(range(g.H)):
        Q[h] = _backup(g, V[h + 1], h)
        if pol.side == MAX:
            vals = np.einsum("sa,sab->sb", pol.p[h], Q[h])
            choice[h] = vals.argmin(axis=1)
        else:
            vals = np.einsum("sb,sab->sa", pol.p[h], Q[h])
            choice[h] = vals.argmax(axis=1)
        V[h] = vals[np.arange(g.S), choice[h]]
    return MarkovPolicy.deterministic(responder, choice, n), ValueTable(V, Q)


def fixed_pair_value(g: MarkovGame, mu: MarkovPolicy, nu: MarkovPolicy) -> ValueTable:
    V = np.zeros((g.H + 1, g.S))
    Q = np.zeros((g.H, g.S, g.A, g.B))
    for h in reversed(range(g.H)):
        Q[h] = _backup(g, V[h + 1], h)
        V[h] = np.einsum("sa,sab,sb->s", mu.p[h], Q[h], nu.p[h])
    return ValueTable(V, Q)


class TreeResponse:
    """Pure history-dependent best response to a certified policy tree."""

    def __init__(self, tree: PolicyTree, choice: dict[int, int]):
        self.tree = tree
        self.choice = choice
        self._node: TreeNode | None = None

    def reset(self, rng: np.random.Generator) -> None:
        self._node = self.tree.root

    def act(self, h: int, s: int, history) -> int:
        if h > 0:
            _, a, b = history[-1]
            self._node = self._node.children[(a, b, s)]
        return self.choice[id(self._node)]


def _respond(g: MarkovGame, tree: PolicyTree) -> tuple[float, TreeResponse]:
    """Value of the best response to ``tree`` and the response itself."""
    responder_max = tree.side == MIN
    n_resp = g.A if responder_max else g.B
    values: dict[int, float] = {}
    choice: dict[int, int] = {}

    def value(node: TreeNode) -> float:
        key = id(node)
        if key in values:
            return values[key]
        h, s = node.h, node.s
        last = h + 1 == g.H
        best, best_x = None, 0
        for x in range(n_resp):
            total = 0.0
            for y in np.flatnonzero(node.probs > 0):
                a, b = (x, int(y)) if responder_max else (int(y), x)
                q = g.r[h, s, a, b]
                if not last:
                    for s_next in np.flatnonzero(g.P[h, s, a, b] > 0):
                        q += g.P[h, s, a, b, s_next] * value(node.children[(a, b, int(s_next))])
                total += node.probs[y] * q
            if best is None or (total > best if responder_max else total < best):
                best, best_x = total, x
        values[key] = best
        choice[key] = best_x
        return best

    v = value(tree.root)
    return v, TreeResponse(tree, choice)


@dataclass
class Exploitability:
    gap: float                 # V^{dagger, nu_hat} - V^{mu_hat, dagger} at s1
    max_vs_nu: float           # best max response against the certified min policy
    mu_vs_min: float           # certified max policy against its best min response
    response_max: TreeResponse
    response_min: TreeResponse
    nodes: tuple[int, int]


def exploitability_exact(g: MarkovGame, tree_mu: PolicyTree, tree_nu: PolicyTree) -> Exploitability:
    if tree_mu.side != MAX or tree_nu.side != MIN:
        raise ValueError("expected a max-side tree and a min-side tree")
    up, resp_max = _respond(g, tree_nu)
    low, resp_min = _respond(g, tree_mu)
    return Exploitability(up - low, up, low, resp_max, resp_min, (tree_mu.n_nodes, tree_nu.n_nodes))


def tree_pair_value(g: MarkovGame, tree_mu: PolicyTree, tree_nu: PolicyTree) -> float:
    """Exact value of two certified policies played against each other."""
    def value(nm: TreeNode, nn: TreeNode) -> float:
        h, s = nm.h, nm.s
        total = 0.0
        for a in np.flatnonzero(nm.probs > 0):
            for b in np.flatnonzero(nn.probs > 0):
                q = g.r[h, s, a, b]
                if h + 1 < g.H:
                    for s_next in np.flatnonzero(g.P[h, s, a, b] > 0):
                        key = (int(a), int(b), int(s_next))
                        q += g.P[h, s, a, b, s_next] * value(nm.children[key], nn.children[key])
                total += nm.probs[a] * nn.probs[b] * q
        return total
    return value(tree_mu.root, tree_nu.root)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int


def mc_value(g: MarkovGame, actor_max, actor_min, n_episodes: int, rng: np.random.Generator) -> McEstimate:
    returns = np.empty(n_episodes)
    for i in range(n_episodes):
        returns[i] = sample_episode(g, (actor_max, actor_min), rng).ret
    sd = float(returns.std(ddof=1)) if n_episodes > 1 else 0.0
    return McEstimate(float(returns.mean()), sd / math.sqrt(n_episodes), n_episodes)


def exploitability_mc(g: MarkovGame, exec_mu, exec_nu, responses, n_episodes: int,
                      rng: np.random.Generator) -> tuple[McEstimate, McEstimate, float, float]:
    """Monte Carlo exploitability against fixed responses ``(max_response, min_response)``.

    Any fixed response can only do worse than the best one, so the returned
    difference is a lower bound on the true exploitability (up to noise).
    Returns both value estimates, their difference and its standard error.
    """
    resp_max, resp_min = responses
    resp_max = MarkovActor(resp_max) if isinstance(resp_max, MarkovPolicy) else resp_max
    resp_min = MarkovActor(resp_min) if isinstance(resp_min, MarkovPolicy) else resp_min
    up = mc_value(g, resp_max, exec_nu, n_episodes, rng)
    low = mc_value(g, exec_mu, resp_min, n_episodes, rng)
    return up, low, up.mean - low.mean, math.hypot(up.stderr, low.stderr)
