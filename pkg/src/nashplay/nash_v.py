"""Optimistic Nash V-learning, both players trained jointly by self-play.

Each player runs an adversarial-bandit FTRL learner at every (h, s) and
keeps an optimistic value for it.  The min player minimises the loss
``r + Vlow_{h+1}(s')``; the max player minimises the nonnegative loss
``(H - h + 1) - r - Vup_{h+1}(s')`` (one-based step) so both estimators share
the same form.  Values are clipped to [0, H - h + 1].
"""
from __future__ import annotations

import numpy as np

from .bandit import exp_weights
from .certified import CertifiedExecutor, PolicyTree
from .game import MarkovGame
from .history import NASH_V, LearnerHistory
from .rng import cumulative, draw_index
from .schedules import MAX, MIN, Hyperparams, alpha, beta_v, eta_v


def run_nash_v(g: MarkovGame, hp: Hyperparams, K: int, rng: np.random.Generator) -> LearnerHistory:
    if K < 1:
        raise ValueError("K must be at least 1")
    H, S, A, B = g.H, g.S, g.A, g.B
    caps = [float(H - h) for h in range(H)] + [0.0]
    Vup = np.array([[caps[h]] * S for h in range(H + 1)])
    Vlow = np.zeros((H + 1, S))
    Lup = np.zeros((H, S, A))
    Llow = np.zeros((H, S, B))
    N = np.zeros((H, S), dtype=np.int64)
    mu = np.full((H, S, A), 1.0 / A)
    nu = np.full((H, S, B), 1.0 / B)
    mu_cum, nu_cum = cumulative(mu), cumulative(nu)

    sched = [(alpha(t, H), beta_v(t, MAX, hp), beta_v(t, MIN, hp),
              eta_v(t, MAX, hp), eta_v(t, MIN, hp)) for t in range(1, K + 1)]

    states = np.zeros((K, H + 1), dtype=np.int64)
    a_log = np.zeros((K, H), dtype=np.int64)
    b_log = np.zeros((K, H), dtype=np.int64)
    rew_log = np.zeros((K, H))
    next_up = np.zeros((K, H))
    next_low = np.zeros((K, H))
    vup1 = np.zeros(K)
    vlow1 = np.zeros(K)
    rows_max = np.zeros((K, H, A))
    rows_min = np.zeros((K, H, B))
    clips = {MAX: 0, MIN: 0}

    P_cum, r, s1 = g.P_cum, g.r, g.s1
    for k in range(K):
        vup1[k] = Vup[0, s1]
        vlow1[k] = Vlow[0, s1]
        s = s1
        states[k, 0] = s
        for h in range(H):
            a = draw_index(mu_cum[h, s], rng.random())
            b = draw_index(nu_cum[h, s], rng.random())
            rew = r[h, s, a, b]
            s_next = draw_index(P_cum[h, s, a, b], rng.random())

            t = N[h, s] + 1
            N[h, s] = t
            al, bu, bl, eu, el = sched[t - 1]
            vu, vl = Vup[h + 1, s_next], Vlow[h + 1, s_next]
            cap = caps[h]

            raw = (1.0 - al) * Vup[h, s] + al * (rew + vu + bu)
            if raw > cap:
                clips[MAX] += 1
                raw = cap
            Vup[h, s] = raw
            raw = (1.0 - al) * Vlow[h, s] + al * (rew + vl - bl)
            if raw < 0.0:
                clips[MIN] += 1
                raw = 0.0
            Vlow[h, s] = raw

            Lup[h, s] *= 1.0 - al
            Lup[h, s, a] += al * (cap - rew - vu) / (mu[h, s, a] + eu)
            Llow[h, s] *= 1.0 - al
            Llow[h, s, b] += al * (rew + vl) / (nu[h, s, b] + el)
            mu[h, s] = exp_weights(Lup[h, s], eu / al)
            nu[h, s] = exp_weights(Llow[h, s], el / al)
            mu_cum[h, s] = cumulative(mu[h, s])
            nu_cum[h, s] = cumulative(nu[h, s])

            a_log[k, h], b_log[k, h], rew_log[k, h] = a, b, rew
            next_up[k, h], next_low[k, h] = vu, vl
            rows_max[k, h] = mu[h, s]
            rows_min[k, h] = nu[h, s]
            states[k, h + 1] = s_next
            s = s_next

    return LearnerHistory(
        algorithm=NASH_V, game=g, hp=hp, states=states, a=a_log, b=b_log,
        rewards=rew_log, next_up=next_up, next_low=next_low, vup1=vup1, vlow1=vlow1,
        rows_max=rows_max, rows_min=rows_min,
        final={"Vup": Vup, "Vlow": Vlow, "Lup": Lup, "Llow": Llow, "N": N},
        clip_events=clips,
    )


def certified_policy_v(hist: LearnerHistory, side: str) -> CertifiedExecutor:
    """Executor of the certified policy; the index is resampled on entering each state."""
    return CertifiedExecutor(hist, side)


def certified_policy_tree_v(hist: LearnerHistory, side: str, max_support: int = 100_000) -> PolicyTree:
    return PolicyTree.build(hist, side, max_support)
