"""
表格 Q 学习

每个智能体一张 Q 表，以完整环境状态为键、以自身动作为列。
目标策略与探索策略各持一组表，行为策略按 α 混合两者。
"""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .counting import VisitCounter
from .models import EnvState, JointAction, TransitionRecord


class QTable:
    """单个智能体的动作价值表，未访问的条目读作 0"""

    __slots__ = ("action_count", "step_size", "gamma", "values", "_zeros")

    def __init__(self, action_count: int, step_size: float, gamma: float):
        self.action_count = action_count
        self.step_size = step_size
        self.gamma = gamma
        self.values: Dict[EnvState, List[float]] = {}
        self._zeros = [0.0] * action_count

    def __len__(self) -> int:
        return len(self.values)

    def row(self, state: EnvState) -> Sequence[float]:
        return self.values.get(state, self._zeros)

    def value(self, state: EnvState, action: int) -> float:
        return self.row(state)[action]

    def max_value(self, state: EnvState) -> float:
        row = self.values.get(state)
        return max(row) if row is not None else 0.0

    def greedy(self, state: EnvState, rng: np.random.Generator) -> int:
        """贪心动作，并列时均匀随机"""
        row = self.values.get(state)
        if row is None:
            return int(rng.integers(self.action_count))
        best = max(row)
        candidates = [a for a, v in enumerate(row) if v == best]
        if len(candidates) == 1:
            return candidates[0]
        return candidates[int(rng.integers(len(candidates)))]

    def update(self, state: EnvState, action: int, reward: float,
               next_state: EnvState, done: bool) -> float:
        """一步 TD 更新，返回 TD 误差"""
        row = self.values.get(state)
        if row is None:
            row = self.values[state] = [0.0] * self.action_count
        bootstrap = 0.0 if done else self.gamma * self.max_value(next_state)
        td_error = reward + bootstrap - row[action]
        row[action] += self.step_size * td_error
        return td_error


def make_tables(n_agents: int, action_count: int, step_size: float, gamma: float) -> List[QTable]:
    return [QTable(action_count, step_size, gamma) for _ in range(n_agents)]


def q_update(table: QTable, transition: TransitionRecord, agent: int,
             reward_override: Optional[float] = None) -> QTable:
    """Q(s,a) ← Q(s,a) + step·(r + γ·max Q(s',·)·(1-done) − Q(s,a))"""
    reward = transition.reward if reward_override is None else reward_override
    table.update(transition.state, transition.joint_action[agent], reward,
                 transition.next_state, transition.done)
    return table


@dataclass(frozen=True)
class LinearSchedule:
    """从 start 线性变化到 end，horizon 步之后恒为 end"""
    start: float
    horizon: int
    end: float = 0.0

    def value(self, t: int) -> float:
        if self.horizon <= 0 or t >= self.horizon:
            return self.end
        return max(min(self.start, self.end),
                   self.start + (self.end - self.start) * t / self.horizon)


def mixture_schedule(horizon: int, alpha_start: float = 1.0) -> LinearSchedule:
    """α(t) = max(0, α0·(1 − t/horizon))"""
    return LinearSchedule(start=alpha_start, horizon=horizon, end=0.0)


def act_epsilon_greedy(tables: Sequence[QTable], state: EnvState, epsilon: float,
                       rng: np.random.Generator) -> JointAction:
    """每个智能体以概率 ε 随机动作，否则贪心"""
    actions = []
    for table in tables:
        if epsilon > 0.0 and rng.random() < epsilon:
            actions.append(int(rng.integers(table.action_count)))
        else:
            actions.append(table.greedy(state, rng))
    return tuple(actions)


def behaviour_tables(exploration_tables: Sequence[QTable], target_tables: Sequence[QTable],
                     t: int, schedule: LinearSchedule, rng: np.random.Generator) -> Sequence[QTable]:
    """以概率 α(t) 选探索策略，否则选目标策略"""
    return exploration_tables if rng.random() < schedule.value(t) else target_tables


def act_mixture(exploration_tables: Sequence[QTable], target_tables: Sequence[QTable],
                state: EnvState, t: int, schedule: LinearSchedule,
                rng: np.random.Generator, epsilon: float = 0.0) -> JointAction:
    """逐步混合：每一步重新抽一次由哪组策略行动

    残余随机噪声 ε 随 α 一起退火。
    """
    tables = behaviour_tables(exploration_tables, target_tables, t, schedule, rng)
    return act_epsilon_greedy(tables, state, epsilon * schedule.value(t), rng)


def count_bonus_reward(counter: VisitCounter, next_state_key, beta: float) -> float:
    """基于计数的探索奖励 β/√n，未计数时按 n = 1"""
    return beta / math.sqrt(max(counter.count(next_state_key), 1))


def save_policies(tables: Sequence[QTable], path: Path) -> Path:
    """保存为 npz：每个智能体一组 (状态矩阵, 价值矩阵)"""
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {
        "action_count": np.array([t.action_count for t in tables], dtype=np.int64),
        "step_size": np.array([t.step_size for t in tables], dtype=np.float64),
        "gamma": np.array([t.gamma for t in tables], dtype=np.float64),
    }
    for i, table in enumerate(tables):
        states = sorted(table.values)
        width = len(states[0]) if states else 0
        arrays[f"states_{i}"] = np.array(states, dtype=np.int64).reshape(len(states), width)
        arrays[f"values_{i}"] = np.array([table.values[s] for s in states],
                                         dtype=np.float64).reshape(len(states), table.action_count)
    with path.open("wb") as f:
        np.savez_compressed(f, **arrays)
    return path


def load_policies(path: Path) -> List[QTable]:
    with np.load(path) as data:
        tables = []
        for i, (actions, step, gamma) in enumerate(zip(data["action_count"], data["step_size"], data["gamma"])):
            table = QTable(int(actions), float(step), float(gamma))
            for state, row in zip(data[f"states_{i}"], data[f"values_{i}"]):
                table.values[tuple(int(v) for v in state)] = [float(v) for v in row]
            tables.append(table)
    return tables
