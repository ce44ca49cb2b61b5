"""Batch experiment driver: configs, seeded runs, traces and reports."""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import snapshot
from .bandit import (alternating_adversary, bandit_iota, regret_bound, run_weighted_bandit,
                     stochastic_adversary)
from .certified import CertifiedExecutor, PolicyTree, SupportOverflowError
from .evaluation import (best_response_to_markov, exploitability_exact, exploitability_mc,
                         nash_value_oracle)
from .game import (MAX, MIN, MarkovGame, game_from_dict, load_game, make_parity_game,
                   make_random_game, validate_game)
from .history import NASH_Q, NASH_V, LearnerHistory
from .nash_q import run_nash_q
from .nash_v import run_nash_v
from .rng import RNG_NAME, RNG_VERSION, expand_seeds, make_rng
from .schedules import Hyperparams, alpha_weights

DEFAULT_CONFIG: dict = {
    "game": {"generator": "random", "H": 3, "S": 3, "A": 2, "B": 2, "seed": 0},
    "algorithm": NASH_Q,
    "K": 1000,
    "hp": {"c": 2.0, "p": 0.01, "T": None, "iota": None},
    "seeds": {"base": 0, "n": 1, "list": None},
    "evaluate": {"oracle": True, "exact": False, "mc_episodes": 0, "max_support": 100_000},
    "gap_csv": True,
    "bandit": {"A": 2, "K": 2000, "trials": 100, "adversary": "stochastic",
               "means": None, "weights": "alpha", "p": 0.05, "seed": 0},
}

LEARNERS = {NASH_Q: run_nash_q, NASH_V: run_nash_v}
THREADS_ENV = "NASHPLAY_THREADS"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as JSON when possible."""
    config = copy.deepcopy(config)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = config
        for key in keys[:-1]:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[keys[-1]] = _parse_value(raw)
    return config


def load_config(path: str | Path | None = None, overrides=()) -> dict:
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    config = apply_overrides(_merge(DEFAULT_CONFIG, user), overrides)
    validate_config(config)
    return config


def validate_config(config: dict) -> None:
    if config["algorithm"] not in LEARNERS:
        raise ConfigError(f"algorithm must be one of {sorted(LEARNERS)}")
    if not isinstance(config["K"], int) or config["K"] < 1:
        raise ConfigError("K must be a positive integer")
    if not seed_list(config):
        raise ConfigError("seed list is empty")
    cfg = config["game"]
    if not isinstance(cfg, dict) or not ({"generator", "file", "inline"} & set(cfg)):
        raise ConfigError("game needs one of 'generator', 'file' or 'inline'")


def seed_list(config: dict) -> list[int]:
    seeds = config["seeds"]
    if seeds.get("list"):
        return [int(s) for s in seeds["list"]]
    n = int(seeds.get("n", 1))
    return expand_seeds(int(seeds.get("base", 0)), n) if n > 0 else []


def config_hash(config: dict) -> str:
    return hashlib.sha256(snapshot.canonical_json(config)).hexdigest()[:16]


def build_game(cfg: dict) -> MarkovGame:
    if "inline" in cfg:
        g = game_from_dict(cfg["inline"])
    elif "file" in cfg:
        g = load_game(cfg["file"])
    elif cfg["generator"] == "random":
        g = make_random_game(int(cfg["H"]), int(cfg["S"]), int(cfg["A"]), int(cfg["B"]),
                             make_rng(int(cfg.get("seed", 0))))
    elif cfg["generator"] == "parity":
        g = make_parity_game(int(cfg["n"]))
    else:
        raise ConfigError(f"unknown game generator {cfg['generator']!r}")
    errors = validate_game(g)
    if errors:
        raise ConfigError("invalid game: " + "; ".join(errors[:5]))
    return g


def hyperparams(config: dict, g: MarkovGame) -> Hyperparams:
    kw = {k: v for k, v in config["hp"].items() if v is not None}
    return Hyperparams.for_game(g, config["K"], **kw)


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    return max(1, threads)


# ---------------------------------------------------------------------------
# gap statistics
# ---------------------------------------------------------------------------

def running_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing means; entry i averages x[i - window + 1 .. i]."""
    cs = np.concatenate(([0.0], np.cumsum(x)))
    return (cs[window:] - cs[:-window]) / window


def fit_slope(mean_gaps: np.ndarray) -> dict | None:
    """Log-log slope of the smoothed gap over the tail k >= K/10."""
    K = mean_gaps.shape[0]
    window = max(1, K // 100)
    smooth = running_mean(mean_gaps, window)
    ks = np.arange(window, K + 1)
    keep = ks >= max(K // 10, 1)
    if keep.sum() < 2 or np.any(smooth[keep] <= 0):
        return None
    slope, _ = np.polyfit(np.log(ks[keep]), np.log(smooth[keep]), 1)
    return {"slope": float(slope), "fit_k_min": int(ks[keep][0]), "fit_k_max": K, "window": window}


def gap_ratio(gaps: np.ndarray) -> float | None:
    """Mean over seeds of the average gap over K episodes, divided by the same over K/4."""
    K = gaps.shape[1]
    if K < 4:
        return None
    return float(gaps.mean(axis=1).mean() / gaps[:, :K // 4].mean(axis=1).mean())


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _write_lines(path: Path, records) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def trace_records(hist: LearnerHistory, header: dict):
    yield header
    H = hist.game.H
    for k in range(hist.K):
        yield {"type": "episode", "k": k + 1, "Vup1": float(hist.vup1[k]), "Vlow1": float(hist.vlow1[k]),
               "visited": [[h, int(hist.states[k, h]), int(hist.a[k, h]), int(hist.b[k, h])]
                           for h in range(H)]}


def run_seed(config: dict, seed: int, out: str | None) -> dict:
    """Train one seed; writes its trace and snapshot when ``out`` is given."""
    g = build_game(config["game"])
    hp = hyperparams(config, g)
    hist = LEARNERS[config["algorithm"]](g, hp, config["K"], make_rng(seed))
    chash = config_hash(config)
    meta = {"seed": seed, "config_hash": chash, "version": __version__}
    if out is not None:
        d = Path(out) / f"seed_{seed}"
        d.mkdir(parents=True, exist_ok=True)
        header = {"type": "header", "version": __version__, "config_hash": chash, "seed": seed,
                  "algorithm": hist.algorithm, "rng": RNG_NAME, "rng_version": RNG_VERSION,
                  "snapshot_format": snapshot.FORMAT_VERSION}
        _write_lines(d / "trace.jsonl", trace_records(hist, header))
        snapshot.save(hist, d / "snapshot.bin", meta)
    return {"seed": seed, "vup1": hist.vup1, "vlow1": hist.vlow1,
            "clip_events": dict(hist.clip_events)}


def _map(fn, args_list, threads: int):
    if threads > 1 and len(args_list) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, *zip(*args_list)))
    return [fn(*args) for args in args_list]


def train(config: dict, out: str | Path | None, threads: int | None = None) -> dict:
    validate_config(config)
    seeds = seed_list(config)
    out_s = None if out is None else str(out)
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
    results = _map(run_seed, [(config, s, out_s) for s in seeds], resolve_threads(threads))
    gaps = np.stack([r["vup1"] - r["vlow1"] for r in results])
    g = build_game(config["game"])
    summary = {
        "version": __version__, "config_hash": config_hash(config), "config": config,
        "rng": {"name": RNG_NAME, "version": RNG_VERSION},
        "seeds": [{"seed": r["seed"], "dir": f"seed_{r['seed']}", "avg_gap": float(gap.mean()),
                   "final_gap": float(gap[-1]), "clip_events": r["clip_events"]}
                  for r, gap in zip(results, gaps)],
        "mean_avg_gap": float(gaps.mean(axis=1).mean()),
        "gap_ratio_K_vs_K4": gap_ratio(gaps),
        "slope_fit": fit_slope(gaps.mean(axis=0)),
    }
    if config["evaluate"].get("oracle"):
        v_star = float(nash_value_oracle(g).V[0, g.s1])
        vup = np.stack([r["vup1"] for r in results])
        vlow = np.stack([r["vlow1"] for r in results])
        summary["V_star"] = v_star
        summary["sandwich_fraction"] = float(np.mean((vup >= v_star) & (v_star >= vlow)))
    if out is not None:
        out = Path(out)
        if config.get("gap_csv", True):
            write_gap_csv(out / "gap.csv", gaps)
        write_json(out / "summary.json", summary)
        ev = config["evaluate"]
        if ev.get("exact") or ev.get("mc_episodes"):
            summary = evaluate_run(out, exact=bool(ev.get("exact")),
                                   mc_episodes=int(ev.get("mc_episodes") or 0),
                                   max_support=int(ev.get("max_support", 100_000)),
                                   threads=threads)
    return summary


def write_gap_csv(path: Path, gaps: np.ndarray) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "mean_gap", "min_gap", "max_gap"])
    for k, (m, lo, hi) in enumerate(zip(gaps.mean(axis=0), gaps.min(axis=0), gaps.max(axis=0)), 1):
        w.writerow([k, repr(float(m)), repr(float(lo)), repr(float(hi))])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_history(hist: LearnerHistory, seed: int, exact: bool = True, mc_episodes: int = 0,
                     max_support: int = 100_000) -> dict:
    g = hist.game
    report: dict = {"V_star": float(nash_value_oracle(g).V[0, g.s1])}
    responses = None
    if exact:
        try:
            tm = PolicyTree.build(hist, MAX, max_support)
            tn = PolicyTree.build(hist, MIN, max_support)
        except SupportOverflowError as exc:
            report["exact"] = {"error": str(exc), "suggestion": "rerun with --mc N"}
        else:
            e = exploitability_exact(g, tm, tn)
            report["exact"] = {"exploitability": e.gap, "max_vs_nu_hat": e.max_vs_nu,
                               "mu_hat_vs_min": e.mu_vs_min, "tree_nodes": list(e.nodes)}
            responses = (e.response_max, e.response_min)
    if mc_episodes > 0:
        if responses is None:
            # best responses to the last Markov iterate stand in for the exact ones
            responses = (best_response_to_markov(g, hist.markov_policy_at(hist.K - 1, MIN))[0],
                         best_response_to_markov(g, hist.markov_policy_at(hist.K - 1, MAX))[0])
        rng = make_rng(np.random.SeedSequence([seed, 0x5EED]))
        up, low, diff, se = exploitability_mc(g, CertifiedExecutor(hist, MAX), CertifiedExecutor(hist, MIN),
                                              responses, mc_episodes, rng)
        report["mc"] = {"episodes": mc_episodes, "lower_bound": diff, "stderr": se,
                        "max_vs_nu_hat": up.mean, "mu_hat_vs_min": low.mean}
    return report


def _evaluate_seed(seed_dir: str, exact: bool, mc_episodes: int, max_support: int) -> dict:
    d = Path(seed_dir)
    hist, meta = snapshot.load(d / "snapshot.bin")
    report = evaluate_history(hist, int(meta["seed"]), exact, mc_episodes, max_support)
    trace = d / "trace.jsonl"
    lines = [ln for ln in trace.read_text(encoding="utf-8").splitlines()
             if json.loads(ln).get("type") != "evaluation"]
    lines.append(json.dumps({"type": "evaluation", **report}, sort_keys=True, separators=(",", ":")))
    trace.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report


def evaluate_run(run_dir: str | Path, exact: bool = True, mc_episodes: int = 0,
                 max_support: int = 100_000, threads: int | None = None) -> dict:
    """(Re)compute evaluation for every seed of a run; replaces earlier evaluations."""
    run_dir = Path(run_dir)
    summary = json.loads((run_dir / "summary.json").read_text())
    args = [(str(run_dir / s["dir"]), exact, mc_episodes, max_support) for s in summary["seeds"]]
    reports = _map(_evaluate_seed, args, resolve_threads(threads))
    for entry, rep in zip(summary["seeds"], reports):
        entry["evaluation"] = rep
    vals = [r["exact"]["exploitability"] for r in reports if "exploitability" in r.get("exact", {})]
    summary["mean_exploitability"] = float(np.mean(vals)) if vals else None
    write_json(run_dir / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# oracle and bandit benchmark
# ---------------------------------------------------------------------------

def oracle_report(config: dict) -> dict:
    g = build_game(config["game"])
    table = nash_value_oracle(g)
    return {"V_star": float(table.V[0, g.s1]), "V": table.V.tolist(),
            "bellman_residual": table.bellman_residual(g)}


def bandit_weights(kind: str, K: int) -> np.ndarray:
    if kind == "alpha":
        return alpha_weights(K, 1)[1]
    if kind == "uniform":
        return np.ones(K)
    raise ConfigError(f"unknown bandit weights {kind!r}")


def bandit_bench(cfg: dict) -> dict:
    A, K, trials = int(cfg["A"]), int(cfg["K"]), int(cfg["trials"])
    w = bandit_weights(cfg["weights"], K)
    if cfg["adversary"] == "stochastic":
        means = cfg.get("means") or np.linspace(0.2, 0.8, A).tolist()
        oracle = stochastic_adversary(means)
    elif cfg["adversary"] == "alternating":
        oracle = alternating_adversary(A)
    else:
        raise ConfigError(f"unknown adversary {cfg['adversary']!r}")
    iota = bandit_iota(A, K, float(cfg["p"]))
    bound = regret_bound(w, A, iota)
    regrets = [run_weighted_bandit(oracle, w, make_rng(s), A).regret
               for s in expand_seeds(int(cfg.get("seed", 0)), trials)]
    below = float(np.mean(np.asarray(regrets) <= bound))
    return {"A": A, "K": K, "trials": trials, "adversary": cfg["adversary"], "weights": cfg["weights"],
            "iota": iota, "bound": bound, "mean_regret": float(np.mean(regrets)),
            "max_regret": float(np.max(regrets)), "below_bound_fraction": below}

