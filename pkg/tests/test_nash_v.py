import numpy as np
import pytest

from conftest import one_state_game
from nashplay.bandit import exp_weights
from nashplay.game import MarkovGame
from nashplay.nash_v import run_nash_v
from nashplay.rng import make_rng
from nashplay.schedules import MAX, MIN, Hyperparams, alpha, alpha_weights, beta_v, eta_v


def _hp(g, K, c=2.0):
    return Hyperparams(H=g.H, S=g.S, A=g.A, B=g.B, K=K, c=c)


class _Replay:
    """Generator stand-in that serves a fixed uniform stream, permuting each step's
    (max, min) pair so a player-swapped game sees the same actions."""

    def __init__(self, u, swap):
        self.u = list(u)
        if swap:
            for i in range(0, len(self.u), 3):
                self.u[i], self.u[i + 1] = self.u[i + 1], self.u[i]
        self.i = 0

    def random(self):
        x = self.u[self.i]
        self.i += 1
        return x


def _mirror(g):
    P = np.swapaxes(g.P, 2, 3)
    r = 1.0 - np.swapaxes(g.r, 2, 3)
    return MarkovGame(g.H, g.S, g.B, g.A, P, r, g.s1)


def test_initial_values(small_game):
    hist = run_nash_v(small_game, _hp(small_game, 1), 1, make_rng(0))
    assert hist.vup1[0] == small_game.H and hist.vlow1[0] == 0.0


def test_first_visit_lower_value(small_game):
    g = small_game
    hp = _hp(g, 1)
    hist = run_nash_v(g, hp, 1, make_rng(4))
    h = g.H - 1
    s = int(hist.states[0, h])
    expect = max(0.0, hist.rewards[0, h] - beta_v(1, MIN, hp))
    assert hist.final["Vlow"][h, s] == pytest.approx(expect)
    assert hist.final["Vup"][h, s] == pytest.approx(min(1.0, hist.rewards[0, h] + beta_v(1, MAX, hp)))


def test_closed_form_when_no_clipping():
    rng = np.random.default_rng(8)
    g = one_state_game(1, 3, 2, 0.1 + 0.8 * rng.random((3, 2)))
    K = 400
    hp = _hp(g, K, c=1e-3)
    hist = run_nash_v(g, hp, K, make_rng(8))
    assert hist.clip_events == {MAX: 0, MIN: 0}
    _, w = alpha_weights(K, 1)
    bu = np.array([beta_v(t, MAX, hp) for t in range(1, K + 1)])
    bl = np.array([beta_v(t, MIN, hp) for t in range(1, K + 1)])
    rew = hist.rewards[:, 0]
    assert hist.final["Vup"][0, 0] == pytest.approx(w @ (rew + bu), abs=1e-10)
    assert hist.final["Vlow"][0, 0] == pytest.approx(w @ (rew - bl), abs=1e-10)


def test_ftrl_state_reproduced_from_the_log():
    g = one_state_game(1, 2, 3, [[0.2, 0.9, 0.4], [0.6, 0.1, 0.8]])
    K = 200
    hp = _hp(g, K)
    hist = run_nash_v(g, hp, K, make_rng(6))
    L_up, L_low = np.zeros(2), np.zeros(3)
    mu, nu = np.full(2, 0.5), np.full(3, 1 / 3)
    for k in range(K):
        t = k + 1
        al = alpha(t, 1)
        eu, el = eta_v(t, MAX, hp), eta_v(t, MIN, hp)
        a, b, rew = hist.a[k, 0], hist.b[k, 0], hist.rewards[k, 0]
        L_up *= 1 - al
        L_up[a] += al * (1.0 - rew) / (mu[a] + eu)
        L_low *= 1 - al
        L_low[b] += al * rew / (nu[b] + el)
        mu, nu = exp_weights(L_up, eu / al), exp_weights(L_low, el / al)
        assert np.allclose(hist.rows_max[k, 0], mu, atol=1e-12)
        assert np.allclose(hist.rows_min[k, 0], nu, atol=1e-12)
    assert np.allclose(hist.final["Lup"][0, 0], L_up)
    assert np.allclose(hist.final["Llow"][0, 0], L_low)


def test_rows_stay_on_the_simplex(small_game):
    hist = run_nash_v(small_game, _hp(small_game, 200), 200, make_rng(1))
    for rows in (hist.rows_max, hist.rows_min):
        assert np.all(rows >= 0)
        assert np.allclose(rows.sum(axis=-1), 1.0)
    assert np.all(hist.gaps >= -1e-12)


@pytest.mark.parametrize("c", [2.0, 0.05])
def test_player_swap_symmetry(small_game, c):
    g, K = small_game, 150
    u = np.random.default_rng(3).random(K * g.H * 3)
    hp = _hp(g, K, c)
    base = run_nash_v(g, hp, K, _Replay(u, swap=False))
    mirror = run_nash_v(_mirror(g), hp.with_(A=g.B, B=g.A), K, _Replay(u, swap=True))
    assert np.array_equal(base.a, mirror.b) and np.array_equal(base.b, mirror.a)
    assert np.allclose(base.vup1, g.H - mirror.vlow1, atol=1e-9)
    assert np.allclose(base.vlow1, g.H - mirror.vup1, atol=1e-9)
    assert np.allclose(base.rows_max, mirror.rows_min, atol=1e-9)
    assert base.clip_events[MAX] == mirror.clip_events[MIN]


def test_deterministic_given_seed(tiny_game):
    h1 = run_nash_v(tiny_game, _hp(tiny_game, 60), 60, make_rng(2))
    h2 = run_nash_v(tiny_game, _hp(tiny_game, 60), 60, make_rng(2))
    assert np.array_equal(h1.rows_max, h2.rows_max) and np.array_equal(h1.vup1, h2.vup1)
