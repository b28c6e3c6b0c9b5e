"""
数据模型定义
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .exceptions import ConfigurationError

# 状态、联合动作与索引集合都用整数元组表示，可直接作为字典键
EnvState = Tuple[int, ...]
JointAction = Tuple[int, ...]
IndexSet = Tuple[int, ...]
JointObservation = Tuple[EnvState, ...]


class TaskName(Enum):
    """任务名称"""
    PASS = "pass"
    SECRET_ROOM = "secret_room"
    PUSH_BOX = "push_box"
    ISLAND = "island"
    MATRIX_GAME = "matrix_game"


class RewardMode(Enum):
    """奖励模式"""
    SPARSE = "sparse"
    DENSE = "dense"


class Algorithm(Enum):
    """训练算法"""
    CMAE = "cmae"
    QLEARN = "qlearn"
    QLEARN_BONUS = "qlearn-bonus"


# 每个任务的固定参数: (网格大小, 状态维度 M, 每个智能体的动作数)
_TASK_TABLE: Dict[TaskName, Tuple[int, int, int]] = {
    TaskName.PASS: (30, 5, 5),
    TaskName.SECRET_ROOM: (25, 7, 5),
    TaskName.PUSH_BOX: (15, 6, 5),
    TaskName.ISLAND: (10, 9, 6),
}

DEFAULT_HORIZON = 300


@dataclass(frozen=True)
class TaskSpec:
    """任务描述"""
    name: TaskName
    reward_mode: RewardMode
    grid_size: int
    n_agents: int
    horizon: int
    state_dimension: int
    action_count: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if self.name is TaskName.MATRIX_GAME:
            if self.horizon != 1 or self.state_dimension != 1 or self.action_count != self.grid_size:
                raise ConfigurationError("matrix_game is a one-shot game over l actions")
            return
        expected = _TASK_TABLE[self.name]
        actual = (self.grid_size, self.state_dimension, self.action_count)
        if actual != expected:
            raise ConfigurationError(
                f"{self.name.value}: (grid, M, actions) must be {expected}, got {actual}"
            )
        if self.n_agents != 2:
            raise ConfigurationError(f"{self.name.value} is a two-agent task")

    @classmethod
    def create(
        cls,
        name: str,
        reward_mode: str = "sparse",
        horizon: int = DEFAULT_HORIZON,
        actions: int = 3,
    ) -> "TaskSpec":
        """按任务名构建任务描述，actions 仅用于矩阵博弈"""
        try:
            task = TaskName(name)
            mode = RewardMode(reward_mode)
        except ValueError as e:
            raise ConfigurationError(f"unknown task or reward mode: {e}") from e

        if task is TaskName.MATRIX_GAME:
            if actions < 2:
                raise ConfigurationError(f"matrix game needs l >= 2 actions, got {actions}")
            return cls(task, mode, grid_size=actions, n_agents=2, horizon=1,
                       state_dimension=1, action_count=actions)

        grid, dimension, action_count = _TASK_TABLE[task]
        return cls(task, mode, grid_size=grid, n_agents=2, horizon=horizon,
                   state_dimension=dimension, action_count=action_count)

    @property
    def label(self) -> str:
        return f"{self.name.value}-{self.reward_mode.value}"

    def __str__(self) -> str:
        return f"{self.label} ({self.grid_size}x{self.grid_size}, M={self.state_dimension})"


@dataclass(frozen=True, slots=True)
class TransitionRecord:
    """一条经验转移"""
    state: EnvState
    joint_obs: JointObservation
    joint_action: JointAction
    next_state: EnvState
    next_joint_obs: JointObservation
    reward: float
    done: bool
    step_index: int


@dataclass(frozen=True)
class Goal:
    """共享目标：完整状态 + 选中它时所用的受限空间

    path 是回放里从回合开头到目标状态的那段轨迹，不参与相等比较。
    """
    full_state: EnvState
    k: IndexSet
    key: Tuple[int, ...]
    bonus: float = 1.0
    path: Tuple[TransitionRecord, ...] = field(default=(), compare=False, repr=False)

    def __str__(self) -> str:
        return f"goal k={self.k} key={self.key} state={self.full_state}"


@dataclass
class EvalRecord:
    """一次评估的结果"""
    env_step: int
    success_rate: float
    mean_return: float
    episode_returns: List[float] = field(default_factory=list)
    episode_successes: List[bool] = field(default_factory=list)


@dataclass
class RunArtifacts:
    """单个种子训练产物"""
    run_dir: Path
    seed: int
    metrics_path: Path
    records: List[EvalRecord] = field(default_factory=list)
    snapshot_paths: List[Path] = field(default_factory=list)
    visit_paths: List[Path] = field(default_factory=list)
    env_steps: int = 0
    final_metric: Optional[float] = None
    absolute_metric: Optional[float] = None
    steps_to_success: Dict[str, Optional[int]] = field(default_factory=dict)


@dataclass
class RunOperation:
    """训练/评估操作结果"""
    success: bool
    message: str
    artifacts: List[RunArtifacts] = field(default_factory=list)
    error: Optional[Exception] = None
