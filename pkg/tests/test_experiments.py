import json

import pytest

from decqlearn.cli import main
from decqlearn.exact_solver import equilibrium_set
from decqlearn.experiments import (
    ExperimentConfig,
    analyze_game,
    build_benchmark_game,
    resolve_game,
    run_experiment,
)
from decqlearn.game_model import save_game, validate_game


class TestBenchmarkGame:
    def test_valid(self):
        assert validate_game(build_benchmark_game()) == []

    def test_kernel_numbers(self):
        game = build_benchmark_game()
        # state s0 ignores the joint action; s1 leaves faster on a mismatch
        for ja in range(4):
            assert game.kernel[0, ja, 0] == 0.5
        assert game.kernel[1, game.joint_index((0, 0)), 0] == 0.25
        assert game.kernel[1, game.joint_index((0, 1)), 0] == 0.9
        assert game.costs[0][0, game.joint_index((1, 1))] == 0.0
        assert game.costs[1][1, game.joint_index((1, 0))] == 11.0

    def test_equilibrium_count(self):
        assert len(equilibrium_set(build_benchmark_game(), 1e-9)) == 4


class TestExperimentConfig:
    def test_round_trip(self):
        config = ExperimentConfig(
            trials=7, horizon=2000, record_times=(0, 1000), master_seed=5, rho=(0.05, 0.1)
        )
        again = ExperimentConfig.from_json_dict(config.to_json_dict())
        assert again == config

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(min_phase=0)
        with pytest.raises(ValueError):
            ExperimentConfig(trials=0)
        with pytest.raises(ValueError):
            ExperimentConfig(horizon=100, record_times=(100,))

    def test_agent_configs_broadcast(self):
        game = build_benchmark_game()
        configs = ExperimentConfig(rho=0.07).agent_configs(game)
        assert [c.rho for c in configs] == [0.07, 0.07]
        configs = ExperimentConfig(rho=(0.07, 0.2)).agent_configs(game)
        assert [c.rho for c in configs] == [0.07, 0.2]
        with pytest.raises(ValueError):
            ExperimentConfig(rho=(0.07,)).agent_configs(game)


class TestRunExperiment:
    def test_single_trial_flags(self, tmp_path):
        config = ExperimentConfig(
            trials=1, horizon=10, record_times=(0, 5, 9), min_phase=11, ratio=1
        )
        result = run_experiment(config, out_dir=tmp_path)
        lines = (tmp_path / "frequencies.csv").read_text().splitlines()
        assert lines[0] == "time,frequency,trials"
        assert len(lines) == 4
        for line in lines[1:]:
            _, freq, trials = line.split(",")
            assert freq in ("0.0", "1.0")
            assert trials == "1"
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["config"] == config.to_json_dict()
        assert summary["num_equilibria"] == 4
        assert result.frequencies.keys() == {0, 5, 9}

    def test_identical_seeds_identical_outputs(self, tmp_path):
        config = ExperimentConfig(trials=4, horizon=3000, record_times=(0, 1500), min_phase=500)
        run_experiment(config, out_dir=tmp_path / "a")
        run_experiment(config, out_dir=tmp_path / "b")
        assert (tmp_path / "a/frequencies.csv").read_bytes() == (
            tmp_path / "b/frequencies.csv"
        ).read_bytes()
        assert (tmp_path / "a/summary.json").read_bytes() == (
            tmp_path / "b/summary.json"
        ).read_bytes()

    def test_worker_count_does_not_change_outputs(self, tmp_path):
        base = dict(trials=4, horizon=3000, record_times=(0, 1500), min_phase=500)
        serial = ExperimentConfig(workers=1, **base)
        parallel = ExperimentConfig(workers=2, **base)
        run_experiment(serial, out_dir=tmp_path / "serial")
        run_experiment(parallel, out_dir=tmp_path / "parallel")
        assert (tmp_path / "serial/frequencies.csv").read_bytes() == (
            tmp_path / "parallel/frequencies.csv"
        ).read_bytes()
        serial_summary = json.loads((tmp_path / "serial/summary.json").read_text())
        parallel_summary = json.loads((tmp_path / "parallel/summary.json").read_text())
        assert serial_summary["frequencies"] == parallel_summary["frequencies"]

    def test_unreachable_game_warns(self, tmp_path):
        import numpy as np

        from decqlearn.game_model import StochasticGame, save_game

        kernel = np.zeros((2, 2, 2))
        kernel[:, :, 0] = 1.0  # s0 absorbs
        game = StochasticGame(
            states=("s0", "s1"),
            action_sets=(("a0", "a1"),),
            costs=(np.zeros((2, 2)),),
            discounts=(0.5,),
            kernel=kernel,
            initial_dist=np.array([1.0, 0.0]),
        )
        path = tmp_path / "absorbing.json"
        save_game(game, path)
        config = ExperimentConfig(
            game=str(path), trials=1, horizon=20, record_times=(0,), min_phase=21,
        )
        with pytest.warns(UserWarning, match="strongly connected"):
            run_experiment(config)

    def test_unknown_config_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown experiment config"):
            ExperimentConfig.from_json_dict({"trials": 2, "horizons": 10})

    def test_invalid_game_rejected(self, tmp_path):
        game_path = tmp_path / "bad.json"
        game = build_benchmark_game()
        data = json.loads(json.dumps({
            "players": ["p0", "p1"],
            "states": list(game.states),
            "actions": [list(a) for a in game.action_sets],
            "discounts": [1.5, 0.8],
            "costs": [c.tolist() for c in game.costs],
            "kernel": game.kernel.tolist(),
            "initial_dist": game.initial_dist.tolist(),
        }))
        game_path.write_text(json.dumps(data))
        with pytest.raises(ValueError, match="discount"):
            run_experiment(ExperimentConfig(game=str(game_path), trials=1, horizon=10, record_times=(0,), min_phase=11))


class TestAnalyzeGame:
    def test_benchmark_report(self):
        report = analyze_game(
            "benchmark",
            rhos=(0.05, 0.05),
            deltas=(0.5, 0.5),
            lambdas=(0.2, 0.2),
            eps=0.1,
            ratio=3,
        )
        assert report["violations"] == []
        assert report["num_equilibria"] == 4
        assert report["weakly_acyclic"] is True
        assert report["path_bound_L"] == 2
        assert report["delta_bar"] == pytest.approx(2.0, abs=1e-8)
        assert report["reachable"] is True
        assert report["perturbation"]["gap"] > 0.0
        assert report["perturbation"]["bound"] == pytest.approx(0.125)
        diag = report["update_diagnostics"]
        # (R+1) L = 8 per player, two players
        assert diag["p_min"] == pytest.approx(0.2**16, rel=1e-9)
        assert 0.0 < diag["theta"] < 1.0
        assert diag["xi"] > 0.0

    def test_pennies_report(self, pennies_game):
        report = analyze_game(pennies_game)
        assert report["num_equilibria"] == 0
        assert report["weakly_acyclic"] is False
        assert report["path_bound_L"] is None

    def test_single_player_mdp_as_game(self, rng):
        from oracles import random_game

        game = random_game(rng, num_players=1, beta=0.5)
        report = analyze_game(game)
        assert report["weakly_acyclic"] is True
        assert report["num_equilibria"] >= 1

    def test_invalid_game_short_circuits(self, benchmark_game):
        from decqlearn.game_model import StochasticGame

        bad = StochasticGame(
            states=benchmark_game.states,
            action_sets=benchmark_game.action_sets,
            costs=benchmark_game.costs,
            discounts=(1.0, 0.8),
            kernel=benchmark_game.kernel,
            initial_dist=benchmark_game.initial_dist,
        )
        report = analyze_game(bad)
        assert report["violations"]
        assert "equilibria" not in report


class TestCli:
    def test_analyze_benchmark(self, capsys):
        code = main(["analyze", "benchmark", "--rho", "0.05", "--delta", "0.5"])
        out = capsys.readouterr().out
        assert code == 0
        report = json.loads(out)
        assert report["num_equilibria"] == 4
        assert report["weakly_acyclic"] is True

    def test_analyze_game_file(self, tmp_path, capsys, pennies_game):
        path = tmp_path / "pennies.json"
        save_game(pennies_game, path)
        code = main(["analyze", str(path), "--out", str(tmp_path / "report.json")])
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["weakly_acyclic"] is False
        assert report["num_equilibria"] == 0

    def test_analyze_missing_file(self, capsys):
        code = main(["analyze", "nowhere/missing.json"])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_simulate_with_config_file(self, tmp_path, capsys):
        config = ExperimentConfig(trials=2, horizon=1200, record_times=(0, 600), min_phase=300)
        cfg_path = tmp_path / "exp.json"
        cfg_path.write_text(json.dumps(config.to_json_dict()))
        code = main(
            [
                "simulate",
                "benchmark",
                "--config",
                str(cfg_path),
                "--out-dir",
                str(tmp_path / "out"),
                "--seed",
                "9",
            ]
        )
        assert code == 0
        assert (tmp_path / "out/frequencies.csv").exists()
        summary = json.loads((tmp_path / "out/summary.json").read_text())
        assert summary["config"]["master_seed"] == 9

    def test_reproduce_benchmark_small(self, tmp_path, capsys):
        code = main(
            [
                "reproduce-benchmark",
                "--trials",
                "2",
                "--horizon",
                "1500",
                "--seed",
                "1",
                "--out-dir",
                str(tmp_path),
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "frequency" in out
        assert (tmp_path / "frequencies.csv").exists()


def test_resolve_game_passthrough(benchmark_game):
    assert resolve_game(benchmark_game) is benchmark_game
