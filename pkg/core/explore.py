"""
共享目标选择与探索策略训练
"""
from dataclasses import replace
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from logging_setup import get_logger
from .learner import QTable, q_update
from .models import EnvState, Goal, IndexSet, TransitionRecord
from .replay import ReplayBuffer
from .spacetree import SpaceTree, project

logger = get_logger(__name__)

DEFAULT_GOAL_BATCH = 4096


class GoalMatch(Enum):
    """目标匹配方式"""
    RESTRICTED = "restricted"  # proj_k(s) 等于目标键
    FULL = "full"              # 完整状态相等


def goal_matches(state: EnvState, goal: Goal, match: GoalMatch = GoalMatch.RESTRICTED) -> bool:
    if match is GoalMatch.FULL:
        return state == goal.full_state
    return project(state, goal.k) == goal.key


def select_goal(tree: SpaceTree, replay: ReplayBuffer, rng: np.random.Generator,
                batch_size: int = DEFAULT_GOAL_BATCH, bonus: float = 1.0,
                k_star: Optional[IndexSet] = None) -> Optional[Goal]:
    """在抽中的受限空间里，从回放批次中选计数最小的状态作为目标

    目标带上回放里通向它的那段轨迹。回放为空时返回 None，调用方沿用旧目标。
    """
    if not replay:
        logger.debug("回放缓冲区为空，跳过目标选择")
        return None
    if k_star is None:
        k_star = tree.sample_space(rng)
    node = tree.node(k_star)
    indices = replay.sample_indices(batch_size, rng)

    counts = [node.counter.count(node.key_of(replay[i].state)) for i in indices]
    lowest = min(counts)
    candidates = [i for i, c in zip(indices, counts) if c == lowest]
    index = candidates[0] if len(candidates) == 1 else candidates[int(rng.integers(len(candidates)))]
    state = replay[index].state
    return Goal(full_state=state, k=k_star, key=project(state, k_star), bonus=bonus,
                path=tuple(replay.trajectory_to(index)))


def select_space_and_goal(tree: SpaceTree, replay: ReplayBuffer, rng: np.random.Generator,
                          episode: int, expansion_period: int,
                          batch_size: int = DEFAULT_GOAL_BATCH, bonus: float = 1.0) -> Optional[Goal]:
    """选目标；每 expansion_period 个回合顺带从 k* 扩展空间树"""
    goal = select_goal(tree, replay, rng, batch_size=batch_size, bonus=bonus)
    if goal is not None and episode % expansion_period == 0:
        tree.expand(goal.k, replay.next_states())
    return goal


def reshape_rewards(batch: Sequence[TransitionRecord], goal: Optional[Goal],
                    match: GoalMatch = GoalMatch.RESTRICTED) -> List[TransitionRecord]:
    """命中目标的转移奖励加 r̂，返回新列表，原批次不变"""
    if goal is None:
        return list(batch)
    return [replace(t, reward=t.reward + goal.bonus) if goal_matches(t.state, goal, match) else t
            for t in batch]


def train_exploration(tables: Sequence[QTable], batch: Sequence[TransitionRecord],
                      goal: Optional[Goal], match: GoalMatch = GoalMatch.RESTRICTED,
                      sweep_path: bool = True) -> int:
    """用改写后的奖励对每个探索策略做一遍 Q 更新，返回命中次数

    sweep_path 为真时在批次之后倒序扫一遍目标轨迹，目标奖励一次传回回合开头。
    """
    transitions = list(batch)
    if sweep_path and goal is not None:
        transitions.extend(reversed(goal.path))
    if not transitions:
        return 0
    hits = 0
    for original, transition in zip(transitions, reshape_rewards(transitions, goal, match)):
        if transition is not original:
            hits += 1
        for agent, table in enumerate(tables):
            q_update(table, transition, agent)
    return hits
