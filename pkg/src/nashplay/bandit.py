"""FTRL for weighted regret with changing step size and implicit exploration.

The learner keeps ``S_t(a) = sum_{i<t} w_i * lhat_i(a)`` and plays
``theta_t(a) ∝ exp(-(eta_t / w_t) * S_t(a))`` with
``eta_t = gamma_t = sqrt(log A / (A t))``.  The loss estimate
``lhat_t(a) = l_t(a) 1{a_t = a} / (theta_t(a) + gamma_t)`` deliberately
underestimates the true loss.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .schedules import ftrl_rate


def exp_weights(losses: np.ndarray, scale: float) -> np.ndarray:
    """Softmax of ``-scale * losses`` with max-subtraction (overflow safe)."""
    z = -scale * np.asarray(losses, dtype=float)
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


@dataclass
class FtrlState:
    A: int
    weights: np.ndarray
    t: int = 1
    cum: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if self.cum is None:
            self.cum = np.zeros(self.A)

    @property
    def rate(self) -> float:
        return ftrl_rate(self.t, self.A)

    def weight(self) -> float:
        return float(self.weights[self.t - 1])


def ftrl_policy(state: FtrlState, weight: float | None = None) -> np.ndarray:
    w_t = state.weight() if weight is None else weight
    if w_t <= 0:
        raise ValueError("current weight must be positive")
    return exp_weights(state.cum, state.rate / w_t)


def loss_estimate(theta: np.ndarray, arm: int, loss: float, gamma: float) -> np.ndarray:
    est = np.zeros(theta.shape[0])
    est[arm] = loss / (theta[arm] + gamma)
    return est


def ftrl_observe(state: FtrlState, arm: int, loss: float, weight: float | None = None) -> np.ndarray:
    """Fold the round-t observation into ``state``; returns the loss estimate."""
    if not 0 <= arm < state.A:
        raise ValueError(f"arm {arm} outside 0..{state.A - 1}")
    if not 0.0 <= loss <= 1.0:
        raise ValueError(f"loss {loss} outside [0, 1]")
    w_t = state.weight() if weight is None else weight
    theta = ftrl_policy(state, w_t)
    est = loss_estimate(theta, arm, loss, state.rate)
    state.cum = state.cum + w_t * est
    state.t += 1
    return est


@dataclass
class BanditRun:
    thetas: np.ndarray        # (K, A)
    arms: np.ndarray          # (K,)
    mean_losses: np.ndarray   # (K, A)
    weights: np.ndarray
    regret: float             # weighted pseudo-regret against the best fixed arm

    @property
    def best_arm(self) -> int:
        return int(np.argmin(self.weights @ self.mean_losses))


LossOracle = Callable[[int, np.random.Generator], tuple[np.ndarray, np.ndarray]]


def run_weighted_bandit(loss_oracle: LossOracle, weights, rng: np.random.Generator, A: int) -> BanditRun:
    """Play len(weights) rounds.

    ``loss_oracle(t, rng)`` returns ``(mean_loss, realised_loss)`` for round t
    (one-based); only the realised loss of the pulled arm is revealed.
    """
    weights = np.asarray(weights, dtype=float)
    K = weights.shape[0]
    state = FtrlState(A, weights)
    thetas = np.zeros((K, A))
    arms = np.zeros(K, dtype=np.int64)
    means = np.zeros((K, A))
    for i in range(K):
        theta = ftrl_policy(state)
        arm = min(int(np.searchsorted(np.cumsum(theta), rng.random(), side="right")), A - 1)
        mean, realised = loss_oracle(i + 1, rng)
        ftrl_observe(state, arm, float(realised[arm]))
        thetas[i], arms[i], means[i] = theta, arm, mean
    played = np.einsum("i,ia,ia->", weights, thetas, means)
    regret = float(played - (weights @ means).min())
    return BanditRun(thetas, arms, means, weights, regret)


def regret_bound(weights, A: int, iota: float) -> float:
    """High-probability weighted regret bound evaluated at t = len(weights)."""
    w = np.asarray(weights, dtype=float)
    t = w.shape[0]
    i = np.arange(1, t + 1)
    w_max = float(w.max())
    return (2.0 * w_max * math.sqrt(A * t * iota)
            + 1.5 * math.sqrt(A * iota) * float((w / np.sqrt(i)).sum())
            + 0.5 * w_max * iota
            + math.sqrt(2.0 * iota * float((w ** 2).sum())))


def bandit_iota(A: int, K: int, p: float) -> float:
    return math.log(A * K / p)


def stochastic_adversary(means) -> LossOracle:
    """Bernoulli losses with fixed means."""
    means = np.asarray(means, dtype=float)

    def oracle(t, rng):
        return means, (rng.random(means.shape[0]) < means).astype(float)
    return oracle


def alternating_adversary(A: int) -> LossOracle:
    """Deterministic 0/1 losses that swap every round: l_t(a) = (t + a) mod 2."""
    def oracle(t, rng):
        loss = ((t + np.arange(A)) % 2).astype(float)
        return loss, loss
    return oracle
