import dataclasses
import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import one_state_game
from nashplay.certified import CertifiedExecutor, PolicyTree
from nashplay.evaluation import (best_response_to_markov, exploitability_exact, exploitability_mc,
                                 fixed_pair_value, mc_value, nash_value_oracle, tree_pair_value)
from nashplay.game import MAX, MIN, MarkovActor, MarkovPolicy, make_parity_game, make_random_game
from nashplay.nash_q import run_nash_q
from nashplay.nash_v import run_nash_v
from nashplay.rng import make_rng
from nashplay.schedules import Hyperparams


def _scipy_value(M):
    """max_x min_y x^T M y via linprog."""
    A, B = M.shape
    c = np.zeros(A + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-M.T, np.ones((B, 1))])
    A_eq = np.hstack([np.ones((1, A)), np.zeros((1, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(B), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * A + [(None, None)], method="highs")
    assert res.status == 0
    return -res.fun


def _fictitious_play_value(M, n=20_000):
    A, B = M.shape
    ca, cb = np.zeros(A), np.zeros(B)
    ca[0] = cb[0] = 1
    for _ in range(n):
        ca[np.argmax(M @ cb)] += 1
        cb[np.argmin(ca @ M)] += 1
    return float(ca @ M @ cb) / (ca.sum() * cb.sum())


def _train(name, g, K, seed):
    run = run_nash_q if name == "nash_q" else run_nash_v
    return run(g, Hyperparams(H=g.H, S=g.S, A=g.A, B=g.B, K=K), K, make_rng(seed))


def _trees(hist, max_support=100_000):
    return PolicyTree.build(hist, MAX, max_support), PolicyTree.build(hist, MIN, max_support)


def test_single_step_value_is_matrix_value():
    rng = np.random.default_rng(1)
    for _ in range(10):
        M = rng.random((3, 4))
        g = one_state_game(1, 3, 4, M)
        assert nash_value_oracle(g).V[0, 0] == pytest.approx(_scipy_value(M), abs=1e-9)


def test_fictitious_play_agrees_coarsely():
    M = np.random.default_rng(5).random((3, 3))
    assert nash_value_oracle(one_state_game(1, 3, 3, M)).V[0, 0] == pytest.approx(
        _fictitious_play_value(M), abs=0.02)


def test_backward_induction_against_scipy(small_game):
    g = small_game
    table = nash_value_oracle(g)
    V = np.zeros((g.H + 1, g.S))
    for h in reversed(range(g.H)):
        Q = g.r[h] + g.P[h] @ V[h + 1]
        V[h] = [_scipy_value(Q[s]) for s in range(g.S)]
    assert np.allclose(table.V, V, atol=1e-8)
    assert table.bellman_residual(g) <= 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_parity_game_value_is_zero(n):
    assert nash_value_oracle(make_parity_game(n)).V[0, 0] == 0.0


@pytest.mark.parametrize("side", [MAX, MIN])
def test_best_response_beats_every_deterministic_policy(tiny_game, side):
    g = tiny_game
    rng = np.random.default_rng(2)
    n_own = g.n_actions(side)
    pol = MarkovPolicy(side, rng.dirichlet(np.ones(n_own), size=(g.H, g.S)))
    br, table = best_response_to_markov(g, pol)
    other = MIN if side == MAX else MAX
    n = g.n_actions(other)
    values = []
    for choice in itertools.product(range(n), repeat=g.H * g.S):
        resp = MarkovPolicy.deterministic(other, np.array(choice).reshape(g.H, g.S), n)
        pair = (pol, resp) if side == MAX else (resp, pol)
        values.append(fixed_pair_value(g, *pair).V[0, g.s1])
    best = min(values) if side == MAX else max(values)
    assert table.V[0, g.s1] == pytest.approx(best, abs=1e-12)
    pair = (pol, br) if side == MAX else (br, pol)
    assert fixed_pair_value(g, *pair).V[0, g.s1] == pytest.approx(best, abs=1e-12)


def test_best_responses_sandwich_the_nash_value(small_game):
    g = small_game
    v = nash_value_oracle(g).V[0, g.s1]
    rng = np.random.default_rng(3)
    for _ in range(10):
        mu = MarkovPolicy(MAX, rng.dirichlet(np.ones(g.A), size=(g.H, g.S)))
        nu = MarkovPolicy(MIN, rng.dirichlet(np.ones(g.B), size=(g.H, g.S)))
        low = best_response_to_markov(g, mu)[1].V[0, g.s1]
        up = best_response_to_markov(g, nu)[1].V[0, g.s1]
        assert low <= v + 1e-12 <= up + 2e-12


def test_fixed_pair_value_matches_monte_carlo(small_game):
    g = small_game
    mu, nu = MarkovPolicy.uniform(g, MAX), MarkovPolicy.uniform(g, MIN)
    exact = fixed_pair_value(g, mu, nu).V[0, g.s1]
    est = mc_value(g, MarkovActor(mu), MarkovActor(nu), 20_000, make_rng(4))
    assert abs(est.mean - exact) <= 4 * est.stderr


def test_single_action_game_has_zero_gap():
    g = make_random_game(3, 2, 1, 1, make_rng(7))
    hist = _train("nash_q", g, 20, 0)
    assert exploitability_exact(g, *_trees(hist)).gap == pytest.approx(0.0, abs=1e-12)


def test_uniform_pennies_policies_are_unexploitable():
    g = one_state_game(1, 2, 2, [[1.0, 0.0], [0.0, 1.0]])
    hist = _train("nash_v", g, 10, 0)
    hist = dataclasses.replace(hist, rows_max=np.full_like(hist.rows_max, 0.5),
                               rows_min=np.full_like(hist.rows_min, 0.5), _cache={})
    res = exploitability_exact(g, *_trees(hist))
    assert abs(res.gap) <= 1e-10
    assert res.max_vs_nu == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["nash_q", "nash_v"])
def test_exact_gap_brackets_the_nash_value(small_game, name):
    g = small_game
    v = nash_value_oracle(g).V[0, g.s1]
    for seed in range(3):
        res = exploitability_exact(g, *_trees(_train(name, g, 30, seed)))
        assert res.gap >= -1e-12
        assert res.mu_vs_min <= v + 1e-9 <= res.max_vs_nu + 2e-9


@pytest.mark.parametrize("name", ["nash_q", "nash_v"])
def test_monte_carlo_agrees_with_exact(tiny_game, name):
    g = tiny_game
    hist = _train(name, g, 15, 3)
    tree_mu, tree_nu = _trees(hist)
    res = exploitability_exact(g, tree_mu, tree_nu)
    up, low, diff, se = exploitability_mc(
        g, CertifiedExecutor(hist, MAX), CertifiedExecutor(hist, MIN),
        (res.response_max, res.response_min), 20_000, make_rng(8))
    assert abs(up.mean - res.max_vs_nu) <= 4 * up.stderr
    assert abs(low.mean - res.mu_vs_min) <= 4 * low.stderr
    assert abs(diff - res.gap) <= 4 * se


def test_tree_pair_value_matches_monte_carlo(tiny_game):
    g = tiny_game
    hist = _train("nash_q", g, 15, 5)
    exact = tree_pair_value(g, *_trees(hist))
    est = mc_value(g, CertifiedExecutor(hist, MAX), CertifiedExecutor(hist, MIN), 20_000, make_rng(6))
    assert abs(est.mean - exact) <= 4 * est.stderr


def test_sides_checked(tiny_game):
    tree_mu, tree_nu = _trees(_train("nash_v", tiny_game, 3, 0))
    with pytest.raises(ValueError):
        exploitability_exact(tiny_game, tree_nu, tree_mu)
