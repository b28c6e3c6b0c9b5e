"""
测试公共夹具
"""
from typing import Callable

import numpy as np
import pytest

from config import RunConfig
from core.models import TransitionRecord


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_config() -> Callable[..., RunConfig]:
    """几百步就能跑完的训练配置"""

    def build(**overrides) -> RunConfig:
        values = dict(
            task="push_box",
            reward_mode="sparse",
            algo="cmae",
            horizon=40,
            seeds=[0],
            total_env_steps=400,
            eval_interval=40,
            eval_episodes=2,
            absolute_episodes=2,
            snapshot_keep=3,
            selection_period=2,
            expansion_period=4,
            goal_batch_size=16,
            exploration_batch_size=8,
            replay_capacity=5_000,
        )
        values.update(overrides)
        return RunConfig(**values)

    return build


def make_transition(state, next_state, reward=0.0, done=False, action=(0, 0), step=0) -> TransitionRecord:
    return TransitionRecord(
        state=tuple(state),
        joint_obs=(tuple(state),) * 2,
        joint_action=tuple(action),
        next_state=tuple(next_state),
        next_joint_obs=(tuple(next_state),) * 2,
        reward=reward,
        done=done,
        step_index=step,
    )
