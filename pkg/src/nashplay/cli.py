"""Command line entry point: ``nashplay {train,evaluate,oracle,bandit-bench,selftest}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, acceptance, harness
from .harness import ConfigError


def _seed_overrides(args) -> list[str]:
    extra = []
    if getattr(args, "seeds", None) is not None:
        extra += [f"seeds.n={args.seeds}", "seeds.list=null"]
    if getattr(args, "seed_list", None):
        seeds = [int(x) for x in args.seed_list.split(",") if x.strip()]
        extra.append("seeds.list=" + json.dumps(seeds))
    return extra


def _config(args) -> dict:
    return harness.load_config(args.config, list(args.set or []) + _seed_overrides(args))


def _emit(obj, out: str | None, name: str) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_train(args) -> int:
    config = _config(args)
    out = args.out or "runs/latest"
    summary = harness.train(config, out, args.threads)
    print(json.dumps({"out": out, "config_hash": summary["config_hash"],
                      "mean_avg_gap": summary["mean_avg_gap"],
                      "gap_ratio_K_vs_K4": summary["gap_ratio_K_vs_K4"],
                      "slope_fit": summary["slope_fit"],
                      "V_star": summary.get("V_star")}, sort_keys=True, indent=2))
    return 0


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir)
    if not (run_dir / "summary.json").is_file():
        raise ConfigError(f"{run_dir} has no summary.json; point evaluate at a train output directory")
    summary = harness.evaluate_run(run_dir, exact=not args.no_exact, mc_episodes=args.mc,
                                   max_support=args.max_support, threads=args.threads)
    rows = [{"seed": s["seed"], **s["evaluation"]} for s in summary["seeds"]]
    for row in rows:
        err = row.get("exact", {}).get("error")
        if err:
            print(f"seed {row['seed']}: exact evaluation skipped: {err}; try --mc N", file=sys.stderr)
    print(json.dumps({"mean_exploitability": summary["mean_exploitability"], "seeds": rows},
                     sort_keys=True, indent=2))
    return 0


def cmd_oracle(args) -> int:
    config = _config(args)
    if args.game:
        config["game"] = {"file": args.game}
    _emit(harness.oracle_report(config), args.out, "oracle.json")
    return 0


def cmd_bandit(args) -> int:
    config = _config(args)
    _emit(harness.bandit_bench(config["bandit"]), args.out, "bandit.json")
    return 0


def cmd_selftest(args) -> int:
    only = {int(x) for x in args.only.split(",")} if args.only else None
    results = acceptance.run_all(smoke=args.smoke, only=only)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        payload = [{"criterion": r.number, "name": r.name, "passed": r.passed,
                    "seconds": round(r.seconds, 3), "detail": r.detail} for r in results]
        (Path(args.out) / "selftest.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2, default=acceptance._jsonable) + "\n")
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {failed}" if failed else ""))
    return 1 if failed else 0


def _common(p: argparse.ArgumentParser, seeds: bool = False) -> None:
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field by dotted path (repeatable)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker processes (default ${harness.THREADS_ENV} or 1)")
    if seeds:
        grp = p.add_mutually_exclusive_group()
        grp.add_argument("--seeds", type=int, help="number of seeds expanded from seeds.base")
        grp.add_argument("--seed-list", help="explicit comma-separated seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nashplay", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run Nash Q/V learning for every seed")
    _common(p, seeds=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="oracle values and exploitability of a trained run")
    p.add_argument("run_dir")
    p.add_argument("--no-exact", action="store_true", help="skip the exact policy-tree evaluation")
    p.add_argument("--mc", type=int, default=0, metavar="N", help="Monte Carlo episodes per value")
    p.add_argument("--max-support", type=int, default=100_000)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="Nash value of a game by backward induction")
    _common(p)
    p.add_argument("--game", help="game JSON file (overrides the config's game)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bandit-bench", help="weighted FTRL regret against the evaluated bound")
    _common(p)
    p.set_defaults(func=cmd_bandit)

    p = sub.add_parser("selftest", help="run the acceptance criteria")
    p.add_argument("--smoke", action="store_true", help="reduced sizes, under a minute")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("--out", help="write selftest.json here")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"nashplay: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
