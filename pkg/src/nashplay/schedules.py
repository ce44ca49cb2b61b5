"""Learning-rate, bonus and FTRL step-size schedules.

``t`` is always a one-based visit count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .game import MAX, MIN


@dataclass(frozen=True)
class Hyperparams:
    """Constants shared by the learners.

    ``iota`` defaults to ``log(S*A*B*T/p)`` with ``T = K*H`` total steps;
    either can be overridden explicitly.
    """

    H: int
    S: int
    A: int
    B: int
    K: int
    c: float = 2.0
    p: float = 0.01
    T: int | None = None
    iota: float | None = None

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("bonus constant c must be nonnegative")
        if not 0 < self.p <= 1:
            raise ValueError("failure probability p must lie in (0, 1]")
        if self.K < 1 or self.H < 1:
            raise ValueError("K and H must be positive")
        if self.T is None:
            object.__setattr__(self, "T", self.K * self.H)
        if self.iota is None:
            object.__setattr__(self, "iota", math.log(self.S * self.A * self.B * self.T / self.p))
        if not self.iota > 0:
            raise ValueError(f"iota must be positive, got {self.iota}")

    @classmethod
    def for_game(cls, g, K: int, **kw) -> "Hyperparams":
        return cls(H=g.H, S=g.S, A=g.A, B=g.B, K=K, **kw)

    def to_dict(self) -> dict:
        return {"H": self.H, "S": self.S, "A": self.A, "B": self.B, "K": self.K,
                "c": self.c, "p": self.p, "T": self.T, "iota": self.iota}

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**{k: d[k] for k in ("H", "S", "A", "B", "K", "c", "p", "T", "iota") if k in d})

    def with_(self, **kw) -> "Hyperparams":
        return replace(self, **kw)


def _check_t(t: int) -> None:
    if t < 1:
        raise ValueError(f"visit count must be >= 1, got {t}")


def alpha(t: int, H: int) -> float:
    _check_t(t)
    return (H + 1) / (H + t)


@lru_cache(maxsize=4096)
def _alpha_weights(t: int, H: int) -> tuple[float, np.ndarray]:
    w = np.empty(t)
    alpha0 = 1.0
    for j in range(1, t + 1):
        a_j = alpha(j, H)
        w[: j - 1] *= 1.0 - a_j
        w[j - 1] = a_j
        alpha0 *= 1.0 - a_j
    w.setflags(write=False)
    return alpha0, w


def alpha_weights(t: int, H: int) -> tuple[float, np.ndarray]:
    """``(alpha_t^0, [alpha_t^1, ..., alpha_t^t])`` built by the product recursion."""
    _check_t(t)
    return _alpha_weights(t, H)


def alpha_weight_table(t_max: int, H: int) -> list[np.ndarray]:
    """Weights for every t in 1..t_max, built incrementally in O(t_max^2)."""
    out = []
    w = np.zeros(0)
    for t in range(1, t_max + 1):
        a_t = alpha(t, H)
        w = np.append(w * (1.0 - a_t), a_t)
        out.append(w)
    return out


def beta_q(t: int, hp: Hyperparams) -> float:
    _check_t(t)
    return hp.c * math.sqrt(hp.H ** 3 * hp.iota / t)


def _n_side(side: str, hp: Hyperparams) -> int:
    if side == MAX:
        return hp.A
    if side == MIN:
        return hp.B
    raise ValueError(f"side must be 'max' or 'min', got {side!r}")


def beta_v(t: int, side: str, hp: Hyperparams) -> float:
    _check_t(t)
    return hp.c * math.sqrt(_n_side(side, hp) * hp.H ** 4 * hp.iota / t)


def ftrl_rate(t: int, n_actions: int) -> float:
    """sqrt(log n / (n t)); zero for a single action."""
    _check_t(t)
    return math.sqrt(math.log(n_actions) / (n_actions * t))


def eta_v(t: int, side: str, hp: Hyperparams) -> float:
    return ftrl_rate(t, _n_side(side, hp))
