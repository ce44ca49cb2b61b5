"""Optimistic Nash Q-learning with CCE policies."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .certified import CertifiedExecutor, PolicyTree
from .game import MarkovGame
from .history import NASH_Q, LearnerHistory
from .matrix_games import _cce_kernel
from .schedules import Hyperparams, alpha, beta_q
from .simplex import OPTIMAL, LPError


class InvariantError(AssertionError):
    """A learner invariant that holds by construction was violated."""


def streaming_update(value: float, t: int, H: int, target: float) -> float:
    """One incremental step ``(1 - alpha_t) value + alpha_t target``."""
    a = alpha(t, H)
    return (1.0 - a) * value + a * target


def upper_q_cap(hp: Hyperparams) -> float:
    """Finite sanity bound on Qup: H steps of reward 1 plus a summed bonus each."""
    return hp.H * (1.0 + 2.0 * hp.c * math.sqrt(hp.H ** 3 * hp.iota))


@njit(cache=True)
def _episodes(P_cum, r, s1, K, alphas, betas, u):
    """Numba episode loop; ``u[k, h]`` holds the (action, transition) uniforms."""
    H, S, A, B = r.shape
    Hf = float(H)
    Qup = np.full((H, S, A, B), Hf)
    Qlow = np.zeros((H, S, A, B))
    N = np.zeros((H, S, A, B), dtype=np.int64)
    Vup = np.zeros((H + 1, S))
    Vup[:H] = Hf
    Vlow = np.zeros((H + 1, S))
    joint_cum = np.empty((H, S, A * B))
    for h in range(H):
        for s in range(S):
            for j in range(A * B):
                joint_cum[h, s, j] = (j + 1) / (A * B)
            joint_cum[h, s, A * B - 1] = 1.0

    states = np.zeros((K, H + 1), dtype=np.int64)
    a_log = np.zeros((K, H), dtype=np.int64)
    b_log = np.zeros((K, H), dtype=np.int64)
    rew_log = np.zeros((K, H))
    next_up = np.zeros((K, H))
    next_low = np.zeros((K, H))
    vup1 = np.zeros(K)
    vlow1 = np.zeros(K)
    rows = np.zeros((K, H, A * B))
    # error code, episode, step, state: 0 ok, 1 Qup < Qlow, 2 CCE failure
    err = np.zeros(4, dtype=np.int64)

    for k in range(K):
        vup1[k] = Vup[0, s1]
        vlow1[k] = Vlow[0, s1]
        s = s1
        states[k, 0] = s
        for h in range(H):
            ab = min(np.searchsorted(joint_cum[h, s], u[k, h, 0], side="right"), A * B - 1)
            a = ab // B
            b = ab - a * B
            rew = r[h, s, a, b]
            s_next = min(np.searchsorted(P_cum[h, s, a, b], u[k, h, 1], side="right"), S - 1)

            t = N[h, s, a, b] + 1
            N[h, s, a, b] = t
            al = alphas[t - 1]
            be = betas[t - 1]
            vu = Vup[h + 1, s_next]
            vl = Vlow[h + 1, s_next]
            qu = (1.0 - al) * Qup[h, s, a, b] + al * (rew + vu + be)
            ql = (1.0 - al) * Qlow[h, s, a, b] + al * (rew + vl - be)
            if qu < ql:
                err[0], err[1], err[2], err[3] = 1, k, h, s
                return err, Qup, Qlow, N, Vup, Vlow, states, a_log, b_log, rew_log, next_up, next_low, vup1, vlow1, rows
            Qup[h, s, a, b] = qu
            Qlow[h, s, a, b] = ql

            status, pi = _cce_kernel(Qup[h, s], Qlow[h, s])
            if status != OPTIMAL:
                err[0], err[1], err[2], err[3] = 2, k, h, s
                return err, Qup, Qlow, N, Vup, Vlow, states, a_log, b_log, rew_log, next_up, next_low, vup1, vlow1, rows
            vu_new = 0.0
            vl_new = 0.0
            acc = 0.0
            for i in range(A):
                for j in range(B):
                    p = pi[i, j]
                    vu_new += p * Qup[h, s, i, j]
                    vl_new += p * Qlow[h, s, i, j]
                    acc += p
                    joint_cum[h, s, i * B + j] = acc
                    rows[k, h, i * B + j] = p
            joint_cum[h, s, A * B - 1] = 1.0
            Vup[h, s] = vu_new
            Vlow[h, s] = vl_new

            a_log[k, h] = a
            b_log[k, h] = b
            rew_log[k, h] = rew
            next_up[k, h] = vu
            next_low[k, h] = vl
            states[k, h + 1] = s_next
            s = s_next
    return err, Qup, Qlow, N, Vup, Vlow, states, a_log, b_log, rew_log, next_up, next_low, vup1, vlow1, rows


def run_nash_q(g: MarkovGame, hp: Hyperparams, K: int, rng: np.random.Generator) -> LearnerHistory:
    """Run K self-play episodes and return the full learner history.

    Per step the generator supplies one uniform for the joint action and one
    for the transition, in that order.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    H = g.H
    alphas = np.array([alpha(t, H) for t in range(1, K + 1)])
    betas = np.array([beta_q(t, hp) for t in range(1, K + 1)])
    u = rng.random((K, H, 2))
    (err, Qup, Qlow, N, Vup, Vlow, states, a_log, b_log, rew_log,
     next_up, next_low, vup1, vlow1, rows_joint) = _episodes(
        g.P_cum, np.ascontiguousarray(g.r), g.s1, K, alphas, betas, u)
    code, k, h, s = (int(x) for x in err)
    if code == 1:
        raise InvariantError(f"Qup < Qlow at episode {k}, step {h}, state {s}")
    if code == 2:
        raise LPError(f"CCE failed at episode {k}, step {h}, state {s}: "
                      f"Qup={Qup[h, s].tolist()!r} Qlow={Qlow[h, s].tolist()!r}")
    if not np.all(Qup <= upper_q_cap(hp)):
        raise InvariantError("Qup exceeded its sanity bound")
    rows = rows_joint.reshape(K, H, g.A, g.B)
    return LearnerHistory(
        algorithm=NASH_Q, game=g, hp=hp, states=states, a=a_log, b=b_log,
        rewards=rew_log, next_up=next_up, next_low=next_low, vup1=vup1, vlow1=vlow1,
        rows_max=rows.sum(axis=3), rows_min=rows.sum(axis=2), rows_joint=rows_joint,
        final={"Qup": Qup, "Qlow": Qlow, "Vup": Vup, "Vlow": Vlow, "N": N},
    )


def certified_policy_q(hist: LearnerHistory, side: str) -> CertifiedExecutor:
    """Executor of the certified (nested mixture) policy of one player."""
    return CertifiedExecutor(hist, side)


def certified_policy_tree_q(hist: LearnerHistory, side: str, max_support: int = 100_000) -> PolicyTree:
    """Exact action laws of the certified policy at every reachable history."""
    return PolicyTree.build(hist, side, max_support)
