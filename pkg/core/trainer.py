"""
训练循环、评估协议与指标

一个 Trainer 对应一个种子的一次完整训练，线程内独占全部可变状态。
"""
import csv
import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from config import RunConfig
from logging_setup import add_run_sink, get_logger, log_performance, remove_run_sink
from .counting import HashDiscretizer, VisitCounter
from .env import MultiAgentEnv, make_env
from .exceptions import InsufficientDataError
from .explore import GoalMatch, goal_matches, select_space_and_goal, train_exploration
from .learner import (
    LinearSchedule,
    QTable,
    act_epsilon_greedy,
    act_mixture,
    behaviour_tables,
    count_bonus_reward,
    load_policies,
    make_tables,
    mixture_schedule,
    q_update,
    save_policies,
)
from .models import Algorithm, EnvState, EvalRecord, Goal, JointAction, RunArtifacts, TransitionRecord
from .replay import ReplayBuffer
from .spacetree import init_tree

logger = get_logger(__name__)

FINAL_WINDOW = 10
SUCCESS_TARGETS = (0.1, 0.5, 0.8)
METRICS_HEADER = ("env_step", "success_rate", "mean_return")


@log_performance
def evaluate_policies(env: MultiAgentEnv, tables: Sequence[QTable], episodes: int,
                      rng: np.random.Generator, env_step: int = 0, seed: int = 0) -> EvalRecord:
    """贪心执行目标策略 (ε = 0)，在独立的环境实例上跑若干回合"""
    returns: List[float] = []
    successes: List[bool] = []
    for i in range(episodes):
        state, _ = env.reset(seed=seed + i)
        total = 0.0
        done = False
        while not done:
            action = act_epsilon_greedy(tables, state, 0.0, rng)
            state, reward, done = env.step(state, action)
            total += reward
        returns.append(total)
        successes.append(env.is_solved(state))
    return EvalRecord(
        env_step=env_step,
        success_rate=sum(successes) / episodes,
        mean_return=float(np.mean(returns)),
        episode_returns=returns,
        episode_successes=successes,
    )


def final_metric(records: Sequence[EvalRecord], window: int = FINAL_WINDOW,
                 metric: str = "return") -> float:
    """最后 window 次评估的全部回合取平均（10 × 10 = 100 个回合）"""
    if len(records) < window:
        raise InsufficientDataError(f"final metric needs {window} evaluations, got {len(records)}")
    outcomes: List[float] = []
    for record in records[-window:]:
        if metric == "success":
            outcomes.extend(float(s) for s in record.episode_successes)
        else:
            outcomes.extend(record.episode_returns)
    return float(np.mean(outcomes))


@log_performance
def absolute_metric(snapshots: Iterable[Sequence[QTable]], env: MultiAgentEnv,
                    episodes: int = 100, seed: int = 0) -> float:
    """每个快照各评估 episodes 个新回合，返回最好的平均回报"""
    best = None
    for index, tables in enumerate(snapshots):
        rng = np.random.default_rng([seed, index])
        record = evaluate_policies(env, tables, episodes, rng, seed=seed * 100_000)
        if best is None or record.mean_return > best:
            best = record.mean_return
    if best is None:
        raise InsufficientDataError("absolute metric needs at least one snapshot")
    return best


def steps_to_success(records: Sequence[EvalRecord], target: float) -> Optional[int]:
    """第一次达到目标成功率时的环境步数"""
    for record in records:
        if record.success_rate >= target:
            return record.env_step
    return None


class Trainer(ABC):
    """单种子训练的公共部分：回合循环、回放、目标策略训练、评估与产物"""

    def __init__(self, config: RunConfig, seed: int, run_dir: Path):
        self.config = config
        self.seed = seed
        self.run_dir = run_dir
        self.spec = config.task_spec
        self.env = make_env(self.spec, random_start=config.random_start)
        self.eval_env = make_env(self.spec, random_start=config.random_start)
        self.rng = np.random.default_rng(seed)
        self.replay = ReplayBuffer(config.replay_capacity)
        self.target = make_tables(self.spec.n_agents, self.spec.action_count,
                                  config.target_step_size, config.gamma)
        self.visits = VisitCounter()  # 完整状态的访问计数
        self.steps = 0
        self.episode = 0
        self.records: List[EvalRecord] = []
        self._recent: List[Path] = []
        self._best_snapshot: Optional[Path] = None
        self._best_return = -np.inf
        self.run_id = f"{config.label}-seed{seed}"
        self.log = logger.bind(run=self.run_id)

    # ---- 子类钩子 ----

    @abstractmethod
    def act(self, state: EnvState) -> JointAction:
        """行为策略给出的联合动作"""

    def training_reward(self, transition: TransitionRecord) -> float:
        return transition.reward

    def on_transition(self, transition: TransitionRecord) -> None:
        """每步：计数并训练目标策略"""
        self.visits.increment(transition.next_state)
        self.train_target(transition)

    def on_episode_start(self) -> None:
        pass

    def on_episode_end(self, transitions: List[TransitionRecord]) -> None:
        pass

    def dump_visits(self) -> List[Path]:
        return [self.visits.dump(self.run_dir / "visits" / "full_state.tsv")]

    def dump_diagnostics(self, env_step: int) -> None:
        pass

    def summary_extras(self) -> Dict[str, object]:
        return {}

    # ---- 训练 ----

    def train_target(self, transition: TransitionRecord) -> None:
        batch = [transition]
        batch.extend(self.replay.sample(self.config.target_batch_size, self.rng))
        for t in batch:
            reward = self.training_reward(t)
            for agent, table in enumerate(self.target):
                q_update(table, t, agent, reward_override=reward)

    def sweep_target(self, transitions: Sequence[TransitionRecord]) -> None:
        """倒序重放一个拿到过环境奖励的回合"""
        for t in reversed(transitions):
            reward = self.training_reward(t)
            for agent, table in enumerate(self.target):
                q_update(table, t, agent, reward_override=reward)

    def run_episode(self) -> None:
        self.episode += 1
        state, obs = self.env.reset(seed=self.seed * 1_000_003 + self.episode)
        self.on_episode_start()
        transitions: List[TransitionRecord] = []
        for t in range(self.spec.horizon):
            action = self.act(state)
            next_state, reward, done = self.env.step(state, action)
            next_obs = self.env.observe(next_state)
            transition = TransitionRecord(state, obs, action, next_state, next_obs, reward, done, t)
            self.replay.add(transition)
            transitions.append(transition)
            self.steps += 1
            self.on_transition(transition)
            if self.steps % self.config.eval_interval == 0:
                self.evaluate()
            state, obs = next_state, next_obs
            if done or self.steps >= self.config.total_env_steps:
                break
        if self.config.target_episode_sweep and any(t.reward != 0.0 for t in transitions):
            self.sweep_target(transitions)
        self.on_episode_end(transitions)

    def evaluate(self) -> EvalRecord:
        rng = np.random.default_rng([self.seed, self.steps])
        record = evaluate_policies(self.eval_env, self.target, self.config.eval_episodes,
                                   rng, env_step=self.steps, seed=self.seed * 7_919 + self.steps)
        self.records.append(record)
        self._append_metric(record)
        self._snapshot(record)
        self.dump_diagnostics(self.steps)
        self.log.info(
            f"[{self.run_id}] step {self.steps}: 成功率 {record.success_rate:.2f}, "
            f"平均回报 {record.mean_return:.3f}"
        )
        return record

    @log_performance
    def run(self) -> RunArtifacts:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        sink = add_run_sink(self.run_dir / "run.log", self.run_id)
        metrics_path = self.run_dir / "metrics.csv"
        with metrics_path.open("w", newline="", encoding="utf-8") as f:
            csv.writer(f).writerow(METRICS_HEADER)

        artifacts = RunArtifacts(run_dir=self.run_dir, seed=self.seed, metrics_path=metrics_path)
        self.log.info(f"开始训练 {self.run_id}: {self.spec}, 预算 {self.config.total_env_steps} 步")
        try:
            while self.steps < self.config.total_env_steps:
                self.run_episode()
        except Exception as e:
            self.log.error(f"训练中断于第 {self.steps} 步: {e}")
            self._write_summary(artifacts, error=e)
            remove_run_sink(sink)
            raise

        artifacts.records = self.records
        artifacts.env_steps = self.steps
        artifacts.visit_paths = self.dump_visits()
        artifacts.snapshot_paths = list(self.snapshots)
        if len(self.records) >= FINAL_WINDOW:
            artifacts.final_metric = final_metric(self.records)
        else:
            self.log.warning(f"评估次数 {len(self.records)} 不足 {FINAL_WINDOW}，不计算最终指标")
        if self.snapshots:
            artifacts.absolute_metric = absolute_metric(
                (load_policies(p) for p in self.snapshots), self.eval_env,
                episodes=self.config.absolute_episodes, seed=self.seed,
            )
        artifacts.steps_to_success = {
            f"{target:.1f}": steps_to_success(self.records, target) for target in SUCCESS_TARGETS
        }
        self._write_summary(artifacts)
        self.log.info(
            f"训练完成 {self.run_id}: {self.steps} 步, {self.episode} 回合, "
            f"最终指标 {artifacts.final_metric}, 绝对指标 {artifacts.absolute_metric}"
        )
        remove_run_sink(sink)
        return artifacts

    # ---- 产物 ----

    def _append_metric(self, record: EvalRecord) -> None:
        with (self.run_dir / "metrics.csv").open("a", newline="", encoding="utf-8") as f:
            csv.writer(f).writerow(
                (record.env_step, f"{record.success_rate:.4f}", f"{record.mean_return:.6f}")
            )

    def _snapshot(self, record: EvalRecord) -> None:
        """保留最近 snapshot_keep 个快照，外加评估回报最好的一个"""
        keep = self.config.snapshot_keep
        if keep == 0:
            return
        path = save_policies(self.target, self.run_dir / "snapshots" / f"step_{record.env_step:09d}.npz")
        self._recent.append(path)
        if record.mean_return > self._best_return:
            previous = self._best_snapshot
            self._best_return = record.mean_return
            self._best_snapshot = path
            if previous is not None and previous not in self._recent:
                previous.unlink(missing_ok=True)
        while len(self._recent) > keep:
            stale = self._recent.pop(0)
            if stale != self._best_snapshot:
                stale.unlink(missing_ok=True)

    @property
    def snapshots(self) -> List[Path]:
        """当前保留在磁盘上的快照"""
        retained = list(self._recent)
        if self._best_snapshot is not None and self._best_snapshot not in retained:
            retained.insert(0, self._best_snapshot)
        return retained

    def _write_summary(self, artifacts: RunArtifacts, error: Optional[Exception] = None) -> None:
        summary = {
            "task": self.spec.label,
            "algo": self.config.algo.value,
            "seed": self.seed,
            "env_steps": self.steps,
            "episodes": self.episode,
            "evaluations": len(self.records),
            "final_metric": artifacts.final_metric,
            "absolute_metric": artifacts.absolute_metric,
            "steps_to_success": artifacts.steps_to_success,
        }
        summary.update(self.summary_extras())
        if error is not None:
            summary["error"] = f"{type(error).__name__}: {error}"
        (self.run_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")


class CMAETrainer(Trainer):
    """目标策略与探索策略解耦，探索策略追逐受限空间里的共享目标"""

    def __init__(self, config: RunConfig, seed: int, run_dir: Path):
        super().__init__(config, seed, run_dir)
        discretizer = None
        if config.hash_counting:
            discretizer = HashDiscretizer.uniform(self.spec.state_dimension, config.bin_width,
                                                  salt=config.hash_salt)
        self.tree = init_tree(self.spec.state_dimension, config.max_space_dimension, discretizer)
        self.exploration = make_tables(self.spec.n_agents, self.spec.action_count,
                                       config.exploration_step_size, config.gamma)
        self.schedule = mixture_schedule(config.alpha_decay_steps, config.alpha_start)
        self.match = GoalMatch(config.goal_match)
        self.goal: Optional[Goal] = None
        self.goal_hits = 0
        self.goals_reached = 0
        self.behaviour: Sequence[QTable] = self.target
        self._goal_reached = False

    def on_episode_start(self) -> None:
        self._goal_reached = self.goal is None
        if self.config.mixture_per_episode:
            self.behaviour = behaviour_tables(self.exploration, self.target, self.steps,
                                              self.schedule, self.rng)

    def act(self, state: EnvState) -> JointAction:
        config = self.config
        if not config.mixture_per_episode:
            return act_mixture(self.exploration, self.target, state, self.steps, self.schedule,
                               self.rng, epsilon=config.residual_epsilon)
        # 到达目标之前探索策略不加噪声
        epsilon = config.residual_epsilon * self.schedule.value(self.steps)
        if self.behaviour is self.exploration and not self._goal_reached:
            epsilon = 0.0
        return act_epsilon_greedy(self.behaviour, state, epsilon, self.rng)

    def on_transition(self, transition: TransitionRecord) -> None:
        self.tree.update(transition.next_state)
        if (not self._goal_reached and self.goal is not None
                and goal_matches(transition.next_state, self.goal, self.match)):
            self._goal_reached = True
            self.goals_reached += 1
        super().on_transition(transition)

    def on_episode_end(self, transitions: List[TransitionRecord]) -> None:
        config = self.config
        if self.episode % config.selection_period == 0:
            size_before = len(self.tree)
            goal = select_space_and_goal(
                self.tree, self.replay, self.rng, self.episode, config.expansion_period,
                batch_size=config.goal_batch_size, bonus=config.goal_bonus,
            )
            if goal is not None:
                self.goal = goal
                if config.reset_exploration:
                    self.exploration = make_tables(self.spec.n_agents, self.spec.action_count,
                                                   config.exploration_step_size, config.gamma)
                self.log.debug(f"回合 {self.episode} 选定目标: {goal}, 轨迹长 {len(goal.path)}")
            if len(self.tree) != size_before:
                self.log.debug(f"空间树扩展到 {len(self.tree)} 个节点")

        batch = self.replay.sample(config.exploration_batch_size, self.rng)
        self.goal_hits += train_exploration(self.exploration, batch, self.goal, self.match,
                                            sweep_path=config.goal_path_sweep)

    def dump_visits(self) -> List[Path]:
        paths = super().dump_visits()
        for k, node in self.tree.nodes.items():
            name = "_".join(map(str, k))
            paths.append(node.counter.dump(self.run_dir / "visits" / f"space_{name}.tsv"))
        return paths

    def dump_diagnostics(self, env_step: int) -> None:
        self.tree.dump(self.run_dir / "tree" / f"step_{env_step:09d}.tsv")

    def summary_extras(self) -> Dict[str, object]:
        return {
            "tree_nodes": len(self.tree),
            "goal_hits": self.goal_hits,
            "goals_reached": self.goals_reached,
            "last_goal": None if self.goal is None else {
                "k": list(self.goal.k), "key": list(self.goal.key),
                "state": list(self.goal.full_state),
            },
        }


class QLearningTrainer(Trainer):
    """ε-贪心 Q 学习基线；beta > 0 时叠加共享计数的探索奖励"""

    def __init__(self, config: RunConfig, seed: int, run_dir: Path, beta: float = 0.0):
        super().__init__(config, seed, run_dir)
        self.beta = beta
        self.schedule = LinearSchedule(start=config.epsilon_start,
                                       horizon=config.epsilon_anneal_steps,
                                       end=config.epsilon_end)

    def act(self, state: EnvState) -> JointAction:
        return act_epsilon_greedy(self.target, state, self.schedule.value(self.steps), self.rng)

    def training_reward(self, transition: TransitionRecord) -> float:
        if self.beta == 0.0:
            return transition.reward
        return transition.reward + count_bonus_reward(self.visits, transition.next_state, self.beta)


def make_trainer(config: RunConfig, seed: int, run_dir: Path) -> Trainer:
    if config.algo is Algorithm.CMAE:
        return CMAETrainer(config, seed, run_dir)
    beta = config.bonus_beta if config.algo is Algorithm.QLEARN_BONUS else 0.0
    return QLearningTrainer(config, seed, run_dir, beta=beta)


def run_training(config: RunConfig, seed: int, run_dir: Path) -> RunArtifacts:
    """执行一个种子的完整训练并写出产物"""
    return make_trainer(config, seed, run_dir).run()
