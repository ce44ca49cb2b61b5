"""Acceptance checks with their stated tolerances.

Every ``criterion_N`` returns a :class:`Result`; ``smoke=True`` shrinks the
workload so the whole suite finishes in well under a minute.  The full sizes
are the reference ones.
"""
from __future__ import annotations

import filecmp
import itertools
import json
import math
import tempfile
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import harness, schedules
from .bandit import alternating_adversary, bandit_iota, regret_bound, run_weighted_bandit, stochastic_adversary
from .certified import CertifiedExecutor, PolicyTree
from .evaluation import best_response_to_markov, exploitability_exact, fixed_pair_value, nash_value_oracle
from .game import (MAX, MIN, MarkovPolicy, ParityOpponent, ParityTracker, make_parity_game,
                   make_random_game, parity_state, parity_terminal, sample_episode)
from .history import NASH_Q, NASH_V
from .matrix_games import cce_marginals, cce_violation, compute_cce, exploitability, solve_zero_sum
from .nash_q import run_nash_q
from .nash_v import run_nash_v
from .rng import expand_seeds, make_rng
from .schedules import Hyperparams


@dataclass
class Result:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0
    budget: float = math.inf

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = json.dumps(self.detail, sort_keys=True, default=_jsonable)
        return f"criterion {self.number:2d} {status} {self.name} ({self.seconds:.1f}s) {extra}"


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _timed(number: int, name: str, budget: float):
    def wrap(fn):
        def run(*args, **kw):
            t0 = time.perf_counter()
            passed, detail = fn(*args, **kw)
            secs = time.perf_counter() - t0
            if secs > budget:
                detail = {**detail, "over_time_budget_s": budget}
            return Result(number, name, bool(passed) and secs <= budget, detail, secs, budget)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# ---------------------------------------------------------------------------
# 1. schedule identities
# ---------------------------------------------------------------------------

def _tail_sums(H: int, i_max: int, t_max: int) -> np.ndarray:
    """sum_{t=i}^{t_max} alpha_t^i for i = 1..i_max, via running products."""
    one_minus = 1.0 - np.array([schedules.alpha(t, H) for t in range(1, t_max + 1)])
    out = np.empty(i_max)
    for i in range(1, i_max + 1):
        # alpha_t^i = alpha_i * prod_{j=i+1}^{t} (1 - alpha_j)
        out[i - 1] = schedules.alpha(i, H) * (1.0 + np.cumprod(one_minus[i:]).sum())
    return out


@_timed(1, "schedule identities", 5.0)
def criterion_1(smoke: bool = False, horizons=(1, 2, 5), t_max: int = 2000, tail_t: int = 100_000):
    schedules._alpha_weights.cache_clear()
    if smoke:
        t_max, tail_t = 300, 10_000
    worst = {"sum": 0.0, "sqrt_lo": 0.0, "sqrt_hi": 0.0, "max_w": 0.0, "sq_w": 0.0}
    tail_err = {}
    for H in horizons:
        table = schedules.alpha_weight_table(t_max, H)
        if t_max >= 50 and not np.array_equal(table[49], schedules.alpha_weights(50, H)[1]):
            raise AssertionError("incremental and direct alpha weights disagree")
        a0 = 1.0
        for t, w in enumerate(table, 1):
            a0 *= 1.0 - schedules.alpha(t, H)
            i = np.arange(1, t + 1)
            s = float((w / np.sqrt(i)).sum())
            worst["sum"] = max(worst["sum"], abs(w.sum() + a0 - 1.0))
            worst["sqrt_lo"] = max(worst["sqrt_lo"], 1 / math.sqrt(t) - s)
            worst["sqrt_hi"] = max(worst["sqrt_hi"], s - 2 / math.sqrt(t))
            worst["max_w"] = max(worst["max_w"], float(w.max()) - 2 * H / t)
            worst["sq_w"] = max(worst["sq_w"], float((w ** 2).sum()) - 2 * H / t)
        tail_err[H] = float(np.abs(_tail_sums(H, 10, tail_t) - (1 + 1 / H)).max())
    ok = (worst["sum"] <= 1e-12 and worst["sqrt_lo"] <= 1e-12 and worst["sqrt_hi"] <= 1e-12
          and worst["max_w"] <= 1e-12 and worst["sq_w"] <= 1e-12)
    tail_ok = all(err <= 1e-6 for err in tail_err.values())
    detail = {"worst_excess": worst, "tail_error_by_H": tail_err, "tail_truncation": tail_t,
              "finite_t_checks": ok, "tail_checks": tail_ok}
    return ok and tail_ok, detail


# ---------------------------------------------------------------------------
# 2. CCE correctness
# ---------------------------------------------------------------------------

@_timed(2, "CCE correctness", 5.0)
def criterion_2(smoke: bool = False, n_pairs: int = 200):
    rng = make_rng(2)
    worst_dev, worst_nash = -math.inf, 0.0
    for _ in range(n_pairs):
        A, B = (int(x) for x in rng.integers(1, 6, size=2))
        scale = float(rng.uniform(0.5, 5.0))
        Qup = rng.random((A, B)) * scale
        Qlow = Qup - rng.random((A, B)) * scale
        worst_dev = max(worst_dev, cce_violation(compute_cce(Qup, Qlow), Qup, Qlow))
        mu, nu = cce_marginals(compute_cce(Qup, Qup))
        worst_nash = max(worst_nash, exploitability(Qup, mu, nu))
    return worst_dev <= 1e-8 and worst_nash <= 1e-8, {
        "pairs": n_pairs, "max_violation": worst_dev, "max_marginal_exploitability": worst_nash}


# ---------------------------------------------------------------------------
# 3. oracle equivalence
# ---------------------------------------------------------------------------

def exact_value_2xn(M) -> Fraction:
    """Exact value of a 2 x n game by enumerating supports of the row mix."""
    M = [[Fraction(int(x)) for x in row] for row in M]
    n = len(M[0])
    cands = {Fraction(0), Fraction(1)}
    for j, k in itertools.combinations(range(n), 2):
        # p M0j + (1-p) M1j = p M0k + (1-p) M1k
        den = (M[0][j] - M[1][j]) - (M[0][k] - M[1][k])
        if den != 0:
            p = (M[1][k] - M[1][j]) / den
            if 0 <= p <= 1:
                cands.add(p)
    return max(min(p * M[0][j] + (1 - p) * M[1][j] for j in range(n)) for p in cands)


def _enumerate_min_response(g, mu) -> float:
    best = math.inf
    for bits in itertools.product(range(g.B), repeat=g.H * g.S):
        acts = np.array(bits).reshape(g.H, g.S)
        nu = MarkovPolicy.deterministic(MIN, acts, g.B)
        best = min(best, float(fixed_pair_value(g, mu, nu).V[0, g.s1]))
    return best


@_timed(3, "oracle equivalence", 30.0)
def criterion_3(smoke: bool = False, n_games: int = 50, n_policies: int = 10):
    if smoke:
        n_games, n_policies = 5, 4
    rng = make_rng(3)
    worst_br = 0.0
    for _ in range(n_games):
        g = make_random_game(3, 2, 2, 2, rng)
        for _ in range(n_policies):
            mu = MarkovPolicy(MAX, rng.dirichlet(np.ones(g.A), size=(g.H, g.S)))
            _, table = best_response_to_markov(g, mu)
            worst_br = max(worst_br, abs(float(table.V[0, g.s1]) - _enumerate_min_response(g, mu)))
    worst_zs, count = 0.0, 0
    for n_cols in (2, 3):
        for entries in itertools.product(range(4), repeat=2 * n_cols):
            M = np.array(entries, dtype=float).reshape(2, n_cols)
            worst_zs = max(worst_zs, abs(solve_zero_sum(M)[2] - float(exact_value_2xn(M))))
            count += 1
    return worst_br <= 1e-10 and worst_zs <= 1e-10, {
        "games": n_games, "policies_per_game": n_policies, "max_br_error": worst_br,
        "matrices": count, "max_value_error": worst_zs}


# ---------------------------------------------------------------------------
# 4. update closed form
# ---------------------------------------------------------------------------

def closed_form_q(targets: np.ndarray, betas: np.ndarray, H: int, init: float, sign: float) -> float:
    t = targets.shape[0]
    a0, w = schedules.alpha_weights(t, H)
    return a0 * init + float((w * (targets + sign * betas)).sum())


def _learner_closed_form_error(seed: int) -> float:
    """Final Q of a short Nash Q run vs the weighted sum over its logged visits."""
    g = make_random_game(2, 2, 2, 2, make_rng(seed))
    K = 300
    hp = Hyperparams.for_game(g, K)
    hist = run_nash_q(g, hp, K, make_rng(seed + 1))
    worst = 0.0
    for h, s, a, b in itertools.product(range(g.H), range(g.S), range(g.A), range(g.B)):
        eps = hist.cell_visits(h, s, a, b)
        if eps.size == 0:
            continue
        betas = np.array([schedules.beta_q(i, hp) for i in range(1, eps.size + 1)])
        base = hist.rewards[eps, h]
        up = closed_form_q(base + hist.next_up[eps, h], betas, g.H, g.H, 1.0)
        low = closed_form_q(base + hist.next_low[eps, h], betas, g.H, 0.0, -1.0)
        worst = max(worst, abs(up - hist.final["Qup"][h, s, a, b]),
                    abs(low - hist.final["Qlow"][h, s, a, b]))
    return worst


@_timed(4, "update closed form", 5.0)
def criterion_4(smoke: bool = False, n_sequences: int = 100):
    rng = make_rng(4)
    worst = 0.0
    for _ in range(n_sequences):
        H = int(rng.integers(1, 6))
        n = int(rng.integers(1, 200))
        targets = rng.random(n) * (H + 1)
        hp = Hyperparams(H=H, S=2, A=2, B=2, K=1000, c=float(rng.uniform(0.5, 4)))
        betas = np.array([schedules.beta_q(t, hp) for t in range(1, n + 1)])
        up, low = float(H), 0.0
        for t in range(1, n + 1):
            al = schedules.alpha(t, H)
            up = (1 - al) * up + al * (targets[t - 1] + betas[t - 1])
            low = (1 - al) * low + al * (targets[t - 1] - betas[t - 1])
        worst = max(worst, abs(up - closed_form_q(targets, betas, H, H, 1.0)),
                    abs(low - closed_form_q(targets, betas, H, 0.0, -1.0)))
    learner = max(_learner_closed_form_error(s) for s in range(3))
    return worst <= 1e-9 and learner <= 1e-9, {
        "sequences": n_sequences, "max_error": worst, "learner_max_error": learner}


# ---------------------------------------------------------------------------
# 5 and 6. value sandwich and gap decay
# ---------------------------------------------------------------------------

_RUN_CACHE: dict = {}


def learner_runs(smoke: bool = False) -> dict:
    """Nash Q and Nash V on the (S=3, A=B=2, H=3) game, c=2, p=0.01."""
    key = bool(smoke)
    if key not in _RUN_CACHE:
        K, n_seeds = (2000, 4) if smoke else (20_000, 20)
        g = make_random_game(3, 3, 2, 2, make_rng(0))
        v_star = float(nash_value_oracle(g).V[0, g.s1])
        hp = Hyperparams.for_game(g, K, c=2.0, p=0.01)
        runs = {}
        for name, learner in ((NASH_Q, run_nash_q), (NASH_V, run_nash_v)):
            vup, vlow = [], []
            for seed in expand_seeds(5, n_seeds):
                hist = learner(g, hp, K, make_rng(seed))
                vup.append(hist.vup1)
                vlow.append(hist.vlow1)
            runs[name] = (np.stack(vup), np.stack(vlow))
        _RUN_CACHE[key] = {"K": K, "seeds": n_seeds, "V_star": v_star, "runs": runs}
    return _RUN_CACHE[key]


@_timed(5, "value sandwich", 180.0)
def criterion_5(smoke: bool = False):
    data = learner_runs(smoke)
    v = data["V_star"]
    fractions = {name: float(np.mean((up >= v) & (v >= low))) for name, (up, low) in data["runs"].items()}
    return all(f >= 0.99 for f in fractions.values()), {
        "K": data["K"], "seeds": data["seeds"], "V_star": v, "fraction_sandwiched": fractions}


@_timed(6, "gap decay", 180.0)
def criterion_6(smoke: bool = False):
    data = learner_runs(smoke)
    detail, ok = {}, True
    for name, (up, low) in data["runs"].items():
        gaps = up - low
        ratio = harness.gap_ratio(gaps)
        fit = harness.fit_slope(gaps.mean(axis=0))
        slope = None if fit is None else fit["slope"]
        passed = (ratio is not None and 0.35 <= ratio <= 0.75
                  and slope is not None and -0.65 <= slope <= -0.35)
        detail[name] = {"ratio": ratio, "slope": slope, "passed": passed,
                        "final_mean_gap": float(gaps[:, -1].mean())}
        ok = ok and passed
    return ok, detail


# ---------------------------------------------------------------------------
# 7. certified-policy soundness
# ---------------------------------------------------------------------------

def frequency_check(hist, n_episodes: int, rng, min_count: int = 30) -> dict:
    """Executor action frequencies at every tree node vs the exact tree laws."""
    g = hist.game
    trees = {MAX: PolicyTree.build(hist, MAX), MIN: PolicyTree.build(hist, MIN)}
    execs = {MAX: CertifiedExecutor(hist, MAX), MIN: CertifiedExecutor(hist, MIN)}
    counts = {side: {} for side in trees}
    nodes = {side: {} for side in trees}
    for _ in range(n_episodes):
        for ex in execs.values():
            ex.reset(rng)
        cur = {side: tree.root for side, tree in trees.items()}
        history: list = []
        s = g.s1
        for h in range(g.H):
            a = execs[MAX].act(h, s, history)
            b = execs[MIN].act(h, s, history)
            for side, act in ((MAX, a), (MIN, b)):
                key = id(cur[side])
                nodes[side][key] = cur[side]
                row = counts[side].setdefault(key, np.zeros(cur[side].probs.shape[0], dtype=np.int64))
                row[act] += 1
            _, s_next = g.step(h, s, a, b, rng.random())
            history.append((s, a, b))
            if h + 1 < g.H:
                for side in cur:
                    cur[side] = cur[side].children[(a, b, s_next)]
            s = s_next
    worst_z, cells = 0.0, 0
    for side in trees:
        for key, row in counts[side].items():
            n = int(row.sum())
            if n < min_count:
                continue
            p = nodes[side][key].probs
            for x in range(p.shape[0]):
                sd = math.sqrt(n * p[x] * (1 - p[x]))
                if sd == 0.0:
                    z = 0.0 if row[x] == round(n * p[x]) else math.inf
                else:
                    z = abs(row[x] - n * p[x]) / sd
                worst_z = max(worst_z, z)
                cells += 1
    return {"episodes": n_episodes, "cells": cells, "max_z": worst_z, "passed": bool(worst_z <= 3.0)}


@_timed(7, "certified-policy soundness", 120.0)
def criterion_7(smoke: bool = False, n_seeds: int = 10, K: int = 200, rollouts: int = 1_000_000):
    if smoke:
        n_seeds, rollouts = 3, 50_000
    detail, ok = {}, True
    for name, learner in ((NASH_Q, run_nash_q), (NASH_V, run_nash_v)):
        expl, gaps, last = [], [], None
        for i, seed in enumerate(expand_seeds(7, n_seeds)):
            g = make_random_game(2, 2, 2, 2, make_rng(1000 + i))
            hist = learner(g, Hyperparams.for_game(g, K), K, make_rng(seed))
            e = exploitability_exact(g, PolicyTree.build(hist, MAX), PolicyTree.build(hist, MIN))
            expl.append(e.gap)
            gaps.append(float(hist.gaps.mean()))
            last = hist
        mean_e, mean_g = float(np.mean(expl)), float(np.mean(gaps))
        passed = bool(mean_e <= mean_g + 0.02 and min(expl) >= -1e-12)
        detail[name] = {"mean_exploitability": mean_e, "mean_gap": mean_g,
                        "min_exploitability": float(min(expl)), "passed": passed}
        ok = ok and passed
        if name == NASH_Q:
            freq = frequency_check(last, rollouts, make_rng(77))
            detail["frequencies_nash_q"] = freq
            ok = ok and freq["passed"]
    return ok, detail


# ---------------------------------------------------------------------------
# 8. weighted bandit regret
# ---------------------------------------------------------------------------

@_timed(8, "weighted bandit regret", 60.0)
def criterion_8(smoke: bool = False, trials: int = 100, K: int = 2000, p: float = 0.05):
    if smoke:
        trials, K = 10, 500
    detail, ok = {}, True
    for A in (2, 5):
        for adv, kind in (("stochastic", "alpha"), ("alternating", "uniform")):
            w = harness.bandit_weights(kind, K)
            oracle = (stochastic_adversary(np.linspace(0.2, 0.8, A)) if adv == "stochastic"
                      else alternating_adversary(A))
            bound = regret_bound(w, A, bandit_iota(A, K, p))
            regrets = np.array([run_weighted_bandit(oracle, w, make_rng(s), A).regret
                                for s in expand_seeds(8 + A, trials)])
            frac = float(np.mean(regrets <= bound))
            detail[f"{adv}_A{A}"] = {"weights": kind, "bound": bound, "mean_regret": float(regrets.mean()),
                                     "fraction_below": frac}
            ok = ok and frac >= 0.95
    return ok, detail


# ---------------------------------------------------------------------------
# 9. parity instance
# ---------------------------------------------------------------------------

def parity_table_oracle(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Transition and reward tensors written out by hand from the reference tables."""
    H = n + 1
    S = 2 * H
    idx = {("1", 0): 0}
    for i in range(2, H + 1):
        idx[(str(i), 0)] = 1 + 2 * (i - 2)
        idx[(str(i), 1)] = 2 + 2 * (i - 2)
    bot = S - 1
    # next bit, by (current bit, a, b)
    table = {(0, 1, 1): 1, (0, 0, 0): 0, (0, 0, 1): 0, (0, 1, 0): 0,
             (1, 0, 0): 1, (1, 1, 0): 1, (1, 1, 1): 1, (1, 0, 1): 0}
    P = np.zeros((H, S, 2, 2, S))
    r = np.zeros((H, S, 2, 2))
    for h in range(H):
        P[h, bot, :, :, bot] = 1
        for (lvl, bit), s in idx.items():
            i = int(lvl)
            for a in (0, 1):
                for b in (0, 1):
                    nxt = bot if i == H else idx[(str(i + 1), table[(bit, a, b)])]
                    P[h, s, a, b, nxt] = 1
    r[H - 1, idx[(str(H), 0)], :, 0] = 1
    r[H - 1, idx[(str(H), 1)], :, 1] = 1
    return P, r


@_timed(9, "parity instance", 30.0)
def criterion_9(smoke: bool = False, n_max: int = 6, episodes: int = 100_000):
    if smoke:
        episodes = 20_000
    table_ok, v_star = True, {}
    for n in range(1, n_max + 1):
        g = make_parity_game(n)
        P, r = parity_table_oracle(n)
        table_ok = table_ok and np.array_equal(g.P, P) and np.array_equal(g.r, r)
        table_ok = table_ok and parity_state(1, 0, g.H) == 0 and parity_terminal(g.H) == g.S - 1
        v_star[n] = float(nash_value_oracle(g).V[0, g.s1])
    rng = make_rng(9)
    noiseless, noisy = {}, {}
    for n, T in ((3, (1, 3)), (4, (2,)), (6, (1, 2, 5, 6))):
        g = make_parity_game(n)
        tracker = ParityTracker(n, T)
        noiseless[n] = min(sample_episode(g, (tracker, ParityOpponent(n, T, 0.0)), rng).ret
                           for _ in range(2000))
        opp = ParityOpponent(n, T, 0.2)
        noisy[n] = float(np.mean([sample_episode(g, (tracker, opp), rng).ret for _ in range(episodes // 3)]))
    ok = (table_ok and all(abs(v) <= 1e-12 for v in v_star.values())
          and all(v == 1.0 for v in noiseless.values())
          and all(abs(v - 0.8) <= 0.01 for v in noisy.values()))
    return ok, {"tables_match": table_ok, "V_star": v_star, "noiseless_min_return": noiseless,
                "noisy_mean_return_alpha_0.2": noisy}


# ---------------------------------------------------------------------------
# 10. determinism
# ---------------------------------------------------------------------------

def _tree_equal(a: Path, b: Path) -> bool:
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if files_a != files_b:
        return False
    return all(filecmp.cmp(a / f, b / f, shallow=False) for f in files_a)


@_timed(10, "determinism", math.inf)
def criterion_10(smoke: bool = False):
    detail = {}
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for algo in (NASH_Q, NASH_V):
            config = harness.load_config(overrides=[
                f"algorithm={algo}", "K=300", "seeds.n=2", "game.H=2", "game.S=2",
                "evaluate.exact=true", "evaluate.mc_episodes=500"])
            one, two = tmp / f"{algo}_1", tmp / f"{algo}_2"
            harness.train(config, one)
            harness.train(config, two)
            same_train = _tree_equal(one, two)
            before = {p: p.read_bytes() for p in one.rglob("*") if p.is_file()}
            harness.evaluate_run(one, exact=True, mc_episodes=500)
            idempotent = all(p.read_bytes() == data for p, data in before.items())
            detail[algo] = {"identical_runs": same_train, "evaluate_idempotent": idempotent}
            ok = ok and same_train and idempotent
    return ok, detail


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def run_all(smoke: bool = False, only=None, echo=print) -> list[Result]:
    results = []
    for number, fn in enumerate(CRITERIA, 1):
        if only and number not in only:
            continue
        res = fn(smoke=smoke)
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results
