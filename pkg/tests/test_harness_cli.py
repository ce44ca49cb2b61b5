import json
from pathlib import Path

import numpy as np
import pytest

from nashplay import cli, harness, snapshot
from nashplay.game import game_to_dict, make_random_game
from nashplay.nash_q import run_nash_q
from nashplay.rng import make_rng
from nashplay.schedules import Hyperparams

SMALL = ["K=40", "seeds.n=2", "game.H=2", "game.S=2"]


def _tree(d: Path) -> dict[str, bytes]:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_overrides_parse_json_and_nest():
    cfg = harness.apply_overrides(harness.DEFAULT_CONFIG, ["hp.c=0.5", "algorithm=nash_v",
                                                           "seeds.list=[3,4]", "new.deep.key=true"])
    assert cfg["hp"]["c"] == 0.5 and cfg["algorithm"] == "nash_v"
    assert harness.seed_list(cfg) == [3, 4]
    assert cfg["new"]["deep"]["key"] is True
    assert harness.DEFAULT_CONFIG["hp"]["c"] == 2.0
    with pytest.raises(harness.ConfigError):
        harness.apply_overrides({}, ["no-equals-sign"])


def test_config_validation():
    with pytest.raises(harness.ConfigError):
        harness.load_config(None, ["algorithm=nash_z"])
    with pytest.raises(harness.ConfigError):
        harness.load_config(None, ["K=0"])
    with pytest.raises(harness.ConfigError):
        harness.load_config("/nonexistent/config.json")


def test_config_hash_is_stable_and_sensitive():
    a = harness.load_config(None, SMALL)
    b = harness.load_config(None, list(reversed(SMALL)))
    assert harness.config_hash(a) == harness.config_hash(b)
    assert harness.config_hash(a) != harness.config_hash(harness.apply_overrides(a, ["hp.c=1.0"]))


def test_inline_and_file_games_agree(tmp_path):
    g = make_random_game(2, 2, 2, 3, make_rng(1))
    path = tmp_path / "g.json"
    path.write_text(json.dumps(game_to_dict(g)))
    v_file = harness.oracle_report({"game": {"file": str(path)}})["V_star"]
    v_inline = harness.oracle_report({"game": {"inline": game_to_dict(g)}})["V_star"]
    assert v_file == v_inline
    with pytest.raises(harness.ConfigError):
        harness.build_game({"generator": "maze"})


@pytest.mark.parametrize("algorithm", ["nash_q", "nash_v"])
def test_training_is_byte_deterministic(tmp_path, algorithm):
    cfg = harness.load_config(None, SMALL + [f"algorithm={algorithm}"])
    harness.train(cfg, tmp_path / "a", threads=1)
    harness.train(cfg, tmp_path / "b", threads=1)
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_worker_count_does_not_change_outputs(tmp_path):
    cfg = harness.load_config(None, SMALL)
    harness.train(cfg, tmp_path / "one", threads=1)
    harness.train(cfg, tmp_path / "two", threads=2)
    assert _tree(tmp_path / "one") == _tree(tmp_path / "two")


def test_outputs_and_evaluation_idempotency(tmp_path):
    cfg = harness.load_config(None, SMALL)
    summary = harness.train(cfg, tmp_path, threads=1)
    assert 0.0 <= summary["sandwich_fraction"] <= 1.0
    rows = (tmp_path / "gap.csv").read_text().splitlines()
    assert rows[0] == "k,mean_gap,min_gap,max_gap" and len(rows) == 41
    seed_dir = tmp_path / summary["seeds"][0]["dir"]
    lines = [json.loads(x) for x in (seed_dir / "trace.jsonl").read_text().splitlines()]
    assert lines[0]["type"] == "header" and len(lines) == 41
    harness.evaluate_run(tmp_path, mc_episodes=200)
    first = _tree(tmp_path)
    again = harness.evaluate_run(tmp_path, mc_episodes=200)
    assert _tree(tmp_path) == first
    assert again["mean_exploitability"] >= -1e-12
    types = [json.loads(x)["type"] for x in (seed_dir / "trace.jsonl").read_text().splitlines()]
    assert types.count("evaluation") == 1


def test_tree_overflow_is_reported_with_a_suggestion(tmp_path):
    harness.train(harness.load_config(None, SMALL), tmp_path, threads=1)
    summary = harness.evaluate_run(tmp_path, max_support=2)
    exact = summary["seeds"][0]["evaluation"]["exact"]
    assert "exceeds" in exact["error"] and "--mc" in exact["suggestion"]
    assert summary["mean_exploitability"] is None


def test_slope_fit_recovers_a_power_law():
    k = np.arange(1, 20_001, dtype=float)
    fit = harness.fit_slope(3.0 * k ** -0.5)
    assert fit["slope"] == pytest.approx(-0.5, abs=0.02)
    assert fit["window"] == 200 and fit["fit_k_min"] == 2000
    assert harness.gap_ratio(np.ones((2, 10))) == 1.0
    assert harness.fit_slope(np.zeros(100)) is None


def test_snapshot_round_trip_and_corruption(small_game):
    hp = Hyperparams(H=3, S=3, A=2, B=2, K=30)
    hist = run_nash_q(small_game, hp, 30, make_rng(0))
    blob = snapshot.dumps(hist, {"seed": 1})
    back, meta = snapshot.loads(blob)
    assert meta == {"seed": 1} and back.hp == hp
    for name in ("states", "a", "b", "rewards", "vup1", "rows_joint"):
        assert np.array_equal(getattr(back, name), getattr(hist, name))
    assert np.array_equal(back.final["Qup"], hist.final["Qup"])
    assert snapshot.dumps(back, {"seed": 1}) == blob
    with pytest.raises(snapshot.SnapshotError):
        snapshot.loads(b"BADMAG" + blob[6:])
    with pytest.raises(snapshot.SnapshotError):
        snapshot.loads(blob[:-8])


def test_bandit_bench_report():
    rep = harness.bandit_bench({**harness.DEFAULT_CONFIG["bandit"], "K": 200, "trials": 5})
    assert rep["mean_regret"] <= rep["bound"]
    with pytest.raises(harness.ConfigError):
        harness.bandit_weights("cubic", 10)


def test_cli_train_evaluate_oracle(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["train", "--out", str(out), "--seed-list", "5,6"] + sum(
        (["--set", s] for s in ["K=30", "game.H=2"]), [])) == 0
    assert [s["seed"] for s in json.loads((out / "summary.json").read_text())["seeds"]] == [5, 6]
    assert cli.main(["evaluate", str(out)]) == 0
    capsys.readouterr()
    assert cli.main(["oracle", "--set", "game.generator=\"parity\"", "--set", "game.n=3"]) == 0
    assert json.loads(capsys.readouterr().out)["V_star"] == 0.0


def test_cli_errors_exit_with_status_two(tmp_path, capsys):
    assert cli.main(["train", "--set", "K=-3", "--out", str(tmp_path)]) == 2
    assert cli.main(["evaluate", str(tmp_path / "missing")]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        cli.main(["train", "--seeds", "2", "--seed-list", "1"])


def test_cli_selftest_single_criterion(tmp_path, capsys):
    assert cli.main(["selftest", "--smoke", "--only", "2", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "selftest.json").read_text())
    assert [r["criterion"] for r in report] == [2] and report[0]["passed"] is True
    assert "1/1 criteria passed" in capsys.readouterr().out
