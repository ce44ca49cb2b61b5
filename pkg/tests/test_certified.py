from fractions import Fraction

import numpy as np
import pytest

from nashplay.certified import (CertifiedExecutor, PolicyTree, SupportOverflowError,
                                resample_distribution)
from nashplay.game import MAX, MIN, MarkovActor, MarkovPolicy, sample_episode
from nashplay.nash_q import run_nash_q
from nashplay.nash_v import run_nash_v
from nashplay.rng import make_rng
from nashplay.schedules import Hyperparams

RUNNERS = {"nash_q": run_nash_q, "nash_v": run_nash_v}


def _weights(t, H):
    """alpha_t^i, i = 1..t, from the product definition in exact arithmetic."""
    al = [Fraction(H + 1, H + j) for j in range(1, t + 1)]
    out = []
    for i in range(1, t + 1):
        w = al[i - 1]
        for j in range(i + 1, t + 1):
            w *= 1 - al[j - 1]
        out.append(float(w))
    return out


def _resample_brute(dist, visits, H):
    out = np.zeros_like(dist)
    for k, p in enumerate(dist):
        t = sum(1 for v in visits if v < k)
        if t == 0:
            out[k] += p
        else:
            for i, w in enumerate(_weights(t, H)):
                out[visits[i]] += p * w
    return out


def _history(name, g, K, seed):
    return RUNNERS[name](g, Hyperparams(H=g.H, S=g.S, A=g.A, B=g.B, K=K), K, make_rng(seed))


def test_resample_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(20):
        K = int(rng.integers(1, 15))
        visits = np.sort(rng.choice(K, size=int(rng.integers(0, K + 1)), replace=False))
        dist = rng.dirichlet(np.ones(K))
        got = resample_distribution(dist, visits, 3)
        assert np.allclose(got, _resample_brute(dist, list(visits), 3), atol=1e-14)
        assert got.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("name", ["nash_q", "nash_v"])
def test_single_episode_plays_the_initial_policy(tiny_game, name):
    hist = _history(name, tiny_game, 1, 0)
    tree = PolicyTree.build(hist, MAX)
    assert np.allclose(tree.root.probs, 0.5)
    for child in tree.root.children.values():
        assert np.allclose(child.probs, 0.5)


@pytest.mark.parametrize("name", ["nash_q", "nash_v"])
@pytest.mark.parametrize("side", [MAX, MIN])
def test_tree_laws_match_brute_force(tiny_game, name, side):
    g = tiny_game
    hist = _history(name, g, 7, 4)
    tree = PolicyTree.build(hist, side)
    K = hist.K
    uniform = np.full(K, 1 / K)
    rows0 = hist.policy_rows(side, 0, g.s1)
    root_dist = uniform if name == "nash_q" else _resample_brute(uniform, list(hist.state_visits(0, g.s1)), g.H)
    assert np.allclose(tree.root.probs, root_dist @ rows0, atol=1e-12)
    for (a, b, s2), child in tree.root.children.items():
        own = a if side == MAX else b
        post = root_dist * rows0[:, own]
        post /= post.sum()
        if name == "nash_q":
            dist = _resample_brute(post, list(hist.cell_visits(0, g.s1, a, b)), g.H)
        else:
            dist = _resample_brute(post, list(hist.state_visits(1, s2)), g.H)
        assert np.allclose(child.probs, dist @ hist.policy_rows(side, 1, s2), atol=1e-12)


@pytest.mark.parametrize("name", ["nash_q", "nash_v"])
def test_executor_matches_tree(tiny_game, name):
    g = tiny_game
    hist = _history(name, g, 12, 7)
    tree = PolicyTree.build(hist, MAX)
    opponent = MarkovActor(MarkovPolicy.uniform(g, MIN))
    rng = make_rng(99)
    n = 40_000
    counts = {}
    for _ in range(n):
        ep = sample_episode(g, (CertifiedExecutor(hist, MAX), opponent), rng)
        key = (ep.a[0], ep.b[0], ep.states[1])
        c = counts.setdefault(key, np.zeros(2))
        c[ep.a[1]] += 1
    root = np.zeros(2)
    for (a, _, _), c in counts.items():
        root[a] += c.sum()
    p = tree.root.probs
    assert np.all(np.abs(root / n - p) <= 4 * np.sqrt(p * (1 - p) / n) + 1e-12)
    for key, c in counts.items():
        m = c.sum()
        if m < 500:
            continue
        q = tree.root.children[key].probs
        assert np.all(np.abs(c / m - q) <= 4 * np.sqrt(q * (1 - q) / m) + 1e-12)


def test_node_lookup_follows_history(tiny_game):
    hist = _history("nash_q", tiny_game, 5, 1)
    tree = PolicyTree.build(hist, MIN)
    (a, b, s2), child = next(iter(tree.root.children.items()))
    assert tree.node_at([(tiny_game.s1, a, b)], s2) is child
    assert np.array_equal(tree.action_probs([], tiny_game.s1), tree.root.probs)


def test_support_overflow(small_game):
    hist = _history("nash_q", small_game, 50, 2)
    with pytest.raises(SupportOverflowError):
        PolicyTree.build(hist, MAX, max_support=3)


def test_bad_side_rejected(tiny_game):
    hist = _history("nash_v", tiny_game, 2, 0)
    with pytest.raises(ValueError):
        CertifiedExecutor(hist, "both")
    with pytest.raises(ValueError):
        PolicyTree.build(hist, "both")
