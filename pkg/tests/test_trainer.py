"""
训练循环、评估协议与产物测试
"""
import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from config import RunConfig
from core.env import make_env
from core.exceptions import InsufficientDataError
from core.learner import QTable
from core.models import EvalRecord, Goal, TaskSpec
from core.trainer import (
    CMAETrainer,
    QLearningTrainer,
    Trainer,
    absolute_metric,
    evaluate_policies,
    final_metric,
    make_trainer,
    run_training,
    steps_to_success,
)

from .conftest import make_transition


def record(step, successes, returns=None):
    returns = returns if returns is not None else [float(s) for s in successes]
    return EvalRecord(env_step=step, success_rate=sum(successes) / len(successes),
                      mean_return=float(np.mean(returns)), episode_returns=list(returns),
                      episode_successes=list(successes))


def fixed_policy(a1, a2):
    tables = [QTable(2, 0.1, 0.95), QTable(2, 0.1, 0.95)]
    tables[0].values[(0,)] = [1.0 if a == a1 else 0.0 for a in range(2)]
    tables[1].values[(0,)] = [1.0 if a == a2 else 0.0 for a in range(2)]
    return tables


class TestFinalMetric:
    """最后 10 次评估 × 10 回合"""

    def test_all_successes(self):
        records = [record(i, [True] * 10) for i in range(10)]
        assert final_metric(records, metric="success") == 1.0

    def test_alternating(self):
        records = [record(i, [i % 2 == 0] * 10) for i in range(12)]
        assert final_metric(records, metric="success") == 0.5

    def test_flat_mean_over_last_hundred_episodes(self, rng):
        records = [record(i, [True] * 10, returns=list(rng.normal(size=10))) for i in range(25)]
        flat = [r for rec in records[-10:] for r in rec.episode_returns]
        assert len(flat) == 100
        assert final_metric(records) == pytest.approx(np.mean(flat))

    def test_too_few_records(self):
        with pytest.raises(InsufficientDataError):
            final_metric([record(0, [True])] * 9)

    def test_steps_to_success(self):
        records = [record(100, [False, False]), record(200, [True, False]), record(300, [True, True])]
        assert steps_to_success(records, 0.5) == 200
        assert steps_to_success(records, 1.0) == 300
        assert steps_to_success(records[:1], 0.1) is None


class TestAbsoluteMetric:
    """快照中最好的 100 回合平均"""

    def test_single_snapshot(self, rng):
        env = make_env(TaskSpec.create("matrix_game", actions=2))
        policy = fixed_policy(0, 0)
        expected = evaluate_policies(env, policy, 100, rng).mean_return
        assert absolute_metric([policy], env) == expected == 1.0

    def test_dominant_snapshot_wins(self):
        env = make_env(TaskSpec.create("matrix_game", actions=2))
        assert absolute_metric([fixed_policy(0, 1), fixed_policy(1, 1)], env) == 1.0
        assert absolute_metric([fixed_policy(0, 1)], env) == 0.0

    def test_max_over_exhaustive_policies(self):
        payoff = np.array([[0.2, 0.7], [0.4, 0.1]])
        env = make_env(TaskSpec.create("matrix_game", actions=2), payoff_table=payoff)
        snapshots = [fixed_policy(a1, a2) for a1 in range(2) for a2 in range(2)]
        assert absolute_metric(snapshots, env, episodes=5) == pytest.approx(payoff.max())

    def test_no_snapshots(self):
        env = make_env(TaskSpec.create("matrix_game", actions=2))
        with pytest.raises(InsufficientDataError):
            absolute_metric([], env)


class TestTrainingRun:
    """步数、产物与可复现性"""

    def test_step_accounting_and_metrics(self, tiny_config, tmp_path):
        artifacts = run_training(tiny_config(), 0, tmp_path / "run")
        assert artifacts.env_steps == 400
        with artifacts.metrics_path.open(encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["env_step", "success_rate", "mean_return"]
        assert [int(r[0]) for r in rows[1:]] == list(range(40, 401, 40))
        assert len(artifacts.records) == 10
        assert artifacts.final_metric is not None
        assert artifacts.absolute_metric is not None
        summary = json.loads((tmp_path / "run" / "summary.json").read_text(encoding="utf-8"))
        assert summary["env_steps"] == 400
        assert summary["evaluations"] == 10
        assert set(summary["steps_to_success"]) == {"0.1", "0.5", "0.8"}

    def test_budget_below_one_episode(self, tiny_config, tmp_path):
        config = tiny_config(total_env_steps=10, eval_interval=None)
        artifacts = run_training(config, 0, tmp_path / "run")
        assert artifacts.records == []
        assert artifacts.env_steps == 10
        assert artifacts.final_metric is None
        assert artifacts.absolute_metric is None
        assert artifacts.snapshot_paths == []
        assert artifacts.metrics_path.read_bytes() == b"env_step,success_rate,mean_return\r\n"
        assert (tmp_path / "run" / "summary.json").exists()

    def test_zero_budget(self, tiny_config, tmp_path):
        artifacts = run_training(tiny_config(total_env_steps=0), 0, tmp_path / "run")
        assert artifacts.env_steps == 0 and artifacts.records == []

    @pytest.mark.parametrize("algo", ["cmae", "qlearn", "qlearn-bonus"])
    def test_identical_seed_gives_identical_logs(self, algo, tiny_config, tmp_path):
        config = tiny_config(algo=algo)
        first = run_training(config, 3, tmp_path / "a")
        second = run_training(config, 3, tmp_path / "b")
        assert first.metrics_path.read_bytes() == second.metrics_path.read_bytes()
        for a, b in zip(first.visit_paths, second.visit_paths):
            assert a.read_bytes() == b.read_bytes()

    def test_replay_never_exceeds_capacity(self, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(replay_capacity=50), 0, tmp_path / "run")
        trainer.run()
        assert len(trainer.replay) == 50
        assert trainer.steps == 400

    def test_snapshot_retention(self, tiny_config, tmp_path):
        artifacts = run_training(tiny_config(snapshot_keep=3), 0, tmp_path / "run")
        on_disk = sorted((tmp_path / "run" / "snapshots").glob("*.npz"))
        assert 3 <= len(on_disk) <= 4
        assert sorted(artifacts.snapshot_paths) == on_disk

    def test_zero_bonus_baseline_matches_vanilla(self, tiny_config, tmp_path):
        vanilla = run_training(tiny_config(algo="qlearn"), 1, tmp_path / "q")
        bonus = run_training(tiny_config(algo="qlearn-bonus", bonus_beta=0.0), 1, tmp_path / "qb")
        assert vanilla.metrics_path.read_bytes() == bonus.metrics_path.read_bytes()

    def test_trainer_selection(self, tiny_config, tmp_path):
        assert isinstance(make_trainer(tiny_config(), 0, tmp_path), CMAETrainer)
        baseline = make_trainer(tiny_config(algo="qlearn-bonus", bonus_beta=10.0), 0, tmp_path)
        assert isinstance(baseline, QLearningTrainer) and baseline.beta == 10.0
        assert make_trainer(tiny_config(algo="qlearn"), 0, tmp_path).beta == 0.0

    def test_trainer_is_abstract(self, tiny_config, tmp_path):
        with pytest.raises(TypeError):
            Trainer(tiny_config(), 0, tmp_path)

    def test_rewarded_episode_is_swept_backwards(self, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(algo="qlearn"), 0, tmp_path)
        episode = [make_transition((x, 0, 0, 0, 7, 7), (x + 1, 0, 0, 0, 7, 7), action=(3, 4), step=x)
                   for x in range(4)]
        episode[-1] = replace(episode[-1], reward=1.0, done=True)
        trainer.sweep_target(episode)
        assert all(trainer.target[0].value(t.state, 3) > 0.0 for t in episode)
        assert all(trainer.target[1].value(t.state, 4) > 0.0 for t in episode)


class TestCMAETrainer:

    def test_tree_grows_and_exports(self, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(), 0, tmp_path / "run")
        artifacts = trainer.run()
        assert len(trainer.tree) > 6
        assert trainer.tree.is_well_formed()
        assert trainer.goal is not None
        names = {p.name for p in artifacts.visit_paths}
        assert {"full_state.tsv", "space_0.tsv", "space_5.tsv"} <= names
        assert len(list((tmp_path / "run" / "tree").glob("step_*.tsv"))) == 10
        summary = json.loads((tmp_path / "run" / "summary.json").read_text(encoding="utf-8"))
        assert summary["tree_nodes"] == len(trainer.tree)
        assert summary["goals_reached"] == trainer.goals_reached

    def test_goal_path_starts_at_episode_start(self, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(), 0, tmp_path / "run")
        trainer.run()
        path = trainer.goal.path
        assert path[0].step_index == 0
        assert path[0].state == trainer.env.initial_state()
        assert path[-1].state == trainer.goal.full_state

    @pytest.mark.parametrize("reset", [True, False])
    def test_exploration_tables_reset_on_new_goal(self, reset, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(reset_exploration=reset, eval_interval=10_000), 0, tmp_path)
        trainer.run_episode()
        before = trainer.exploration
        assert len(before[0]) > 0
        trainer.run_episode()
        assert trainer.goal is not None
        assert (trainer.exploration is not before) == reset

    def test_exploration_noise_starts_at_goal(self, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(residual_epsilon=1.0, alpha_decay_steps=10**9), 0, tmp_path)
        state = (3, 3, 11, 3, 7, 7)
        for table in trainer.exploration:
            table.values[state] = [0.0, 0.0, 0.0, 1.0, 0.0]
        trainer.goal = Goal(full_state=(0, 0, 0, 0, 0, 0), k=(0,), key=(0,))
        trainer.on_episode_start()
        assert trainer.behaviour is trainer.exploration
        assert all(trainer.act(state) == (3, 3) for _ in range(50))
        trainer.goal = None
        trainer.on_episode_start()
        assert len({trainer.act(state) for _ in range(50)}) > 1

    def test_behaviour_fixed_within_episode(self, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(alpha_start=0.5, alpha_decay_steps=10**9), 0, tmp_path)
        picks = set()
        for _ in range(40):
            trainer.on_episode_start()
            chosen = trainer.behaviour
            trainer.act((3, 3, 11, 3, 7, 7))
            assert trainer.behaviour is chosen
            picks.add(id(chosen))
        assert picks == {id(trainer.exploration), id(trainer.target)}

    def test_per_step_mixture_mode_runs(self, tiny_config, tmp_path):
        artifacts = run_training(tiny_config(mixture_per_episode=False), 0, tmp_path / "run")
        assert artifacts.env_steps == 400

    def test_counters_track_every_step(self, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(), 0, tmp_path / "run")
        trainer.run()
        assert all(node.counter.total == 400 for k, node in trainer.tree.nodes.items() if len(k) == 1)
        assert trainer.visits.total == 400

    def test_hash_counting_mode(self, tiny_config, tmp_path):
        trainer = make_trainer(tiny_config(hash_counting=True, bin_width=2.0), 0, tmp_path / "run")
        trainer.run()
        keys = trainer.tree.node((0,)).counter.table
        assert keys and all(isinstance(k, int) for k in keys)

    @pytest.mark.parametrize("task", ["pass", "secret_room", "island"])
    def test_other_tasks_run(self, task, tiny_config, tmp_path):
        artifacts = run_training(tiny_config(task=task, total_env_steps=200, eval_interval=100),
                                 0, tmp_path / task)
        assert artifacts.env_steps == 200
        assert len(artifacts.records) == 2

    def test_matrix_game(self, tiny_config, tmp_path):
        config = tiny_config(task="matrix_game", matrix_actions=3, total_env_steps=300,
                             eval_interval=30, selection_period=5, expansion_period=10)
        artifacts = run_training(config, 0, tmp_path / "matrix")
        assert artifacts.env_steps == 300
        assert len(artifacts.records) == 10
        assert all(0.0 <= r.success_rate <= 1.0 for r in artifacts.records)


@pytest.mark.slow
class TestReproduction:
    """3M 步的完整复现，用 pytest -m slow 运行"""

    @pytest.mark.parametrize("task", ["pass", "secret_room", "push_box"])
    def test_cmae_solves_sparse_tasks(self, task, tmp_path):
        config = RunConfig(task=task)
        rates = [final_metric(run_training(config, seed, tmp_path / f"seed_{seed}").records, metric="success")
                 for seed in config.seeds]
        assert sum(rate >= 0.9 for rate in rates) >= 4

    @pytest.mark.parametrize("algo", ["qlearn", "qlearn-bonus"])
    @pytest.mark.parametrize("task", ["pass", "secret_room", "push_box"])
    def test_baselines_fail_sparse_tasks(self, task, algo, tmp_path):
        config = RunConfig(task=task, algo=algo, snapshot_keep=0)
        for seed in config.seeds:
            records = run_training(config, seed, tmp_path / f"seed_{seed}").records
            assert final_metric(records, metric="success") <= 0.05

    @pytest.mark.parametrize("task,tolerance", [("pass", 0.15), ("secret_room", 0.15), ("push_box", 0.25)])
    def test_cmae_dense_return_near_best_baseline(self, task, tolerance, tmp_path):
        def mean_final_return(algo):
            config = RunConfig(task=task, reward_mode="dense", algo=algo, snapshot_keep=0)
            returns = [final_metric(run_training(config, seed, tmp_path / algo / f"seed_{seed}").records)
                       for seed in config.seeds]
            return float(np.mean(returns))

        best = max(mean_final_return("qlearn"), mean_final_return("qlearn-bonus"))
        assert mean_final_return("cmae") >= best - tolerance * abs(best)
