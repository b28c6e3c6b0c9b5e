"""
配置管理模块
应用级开关用 Pydantic Settings（环境变量 / .env），
单次实验参数用 RunConfig（key=value 文件 + 命令行覆盖）
"""
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.exceptions import ConfigurationError
from core.models import DEFAULT_HORIZON, Algorithm, TaskSpec


class Settings(BaseSettings):
    app_name: str = Field(default="cmae")
    debug: bool = Field(default=False)
    log_level: str = Field(default="INFO")
    log_dir: str = Field(default="logs")
    output_dir: str = Field(default="runs")
    workers: int = Field(default=1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="CMAE_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",  # 忽略额外字段
    )


# 全局配置实例
settings = Settings()


def setup_app_logging():
    """初始化应用日志系统"""
    from logging_setup import setup_logging

    return setup_logging(
        debug=settings.debug,
        log_level=settings.log_level,
        app_name=settings.app_name,
        log_dir=settings.log_dir,
    )


class RunConfig(BaseModel):
    """一次实验的全部参数；N′ 必须是 N 的整数倍"""

    model_config = ConfigDict(extra="forbid")

    # 任务
    task: str = "push_box"
    reward_mode: str = "sparse"
    algo: Algorithm = Algorithm.CMAE
    horizon: int = Field(default=DEFAULT_HORIZON, ge=1)
    matrix_actions: int = Field(default=3, ge=2)
    random_start: bool = False

    # 预算与评估
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    total_env_steps: int = Field(default=3_000_000, ge=0)
    eval_interval: Optional[int] = Field(default=None, ge=1)
    eval_episodes: int = Field(default=10, ge=1)
    absolute_episodes: int = Field(default=100, ge=1)
    snapshot_keep: int = Field(default=10, ge=0)

    # CMAE
    selection_period: int = Field(default=10, ge=1)
    expansion_period: int = Field(default=50, ge=1)
    goal_bonus: float = Field(default=1.0, ge=0.0)
    goal_batch_size: int = Field(default=4096, ge=1)
    goal_match: str = "restricted"
    max_space_dimension: int = Field(default=3, ge=1)
    alpha_start: float = Field(default=1.0, ge=0.0, le=1.0)
    alpha_decay_steps: Optional[int] = Field(default=None, ge=1)
    residual_epsilon: float = Field(default=0.05, ge=0.0, le=1.0)
    exploration_batch_size: int = Field(default=256, ge=0)
    mixture_per_episode: bool = True   # False 时每步重新抽 α
    reset_exploration: bool = True     # 换目标时清空探索 Q 表
    goal_path_sweep: bool = True       # 每回合倒序扫一遍通向目标的轨迹
    hash_counting: bool = False
    bin_width: float = Field(default=1.0, gt=0.0)
    hash_salt: int = 0

    # 基线
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.05, ge=0.0, le=1.0)
    epsilon_anneal_steps: Optional[int] = Field(default=None, ge=1)
    bonus_beta: float = Field(default=1.0, ge=0.0)

    # Q 学习
    gamma: float = Field(default=0.95, ge=0.0, le=1.0)
    target_step_size: float = Field(default=0.05, gt=0.0)
    exploration_step_size: float = Field(default=0.1, gt=0.0)
    target_batch_size: int = Field(default=4, ge=0)
    replay_capacity: int = Field(default=1_000_000, ge=1)
    target_episode_sweep: bool = True  # 有环境奖励的回合结束后倒序重放一次

    @field_validator("seeds", mode="before")
    @classmethod
    def _split_seeds(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [int(v) for v in value.replace(" ", "").split(",") if v]
        if isinstance(value, int):
            return [value]
        return value

    @field_validator("goal_match")
    @classmethod
    def _check_goal_match(cls, value: str) -> str:
        if value not in ("restricted", "full"):
            raise ValueError(f"goal_match must be 'restricted' or 'full', got {value!r}")
        return value

    @model_validator(mode="after")
    def _derive_and_check(self) -> "RunConfig":
        if self.expansion_period % self.selection_period != 0:
            raise ValueError(
                f"expansion_period ({self.expansion_period}) must be a multiple of "
                f"selection_period ({self.selection_period})"
            )
        # 任务名与奖励模式在这里就校验
        TaskSpec.create(self.task, self.reward_mode, self.horizon, self.matrix_actions)
        if self.eval_interval is None:
            self.eval_interval = max(self.total_env_steps // 100, self.horizon)
        if self.alpha_decay_steps is None:
            self.alpha_decay_steps = max(self.total_env_steps, 1)
        if self.epsilon_anneal_steps is None:
            self.epsilon_anneal_steps = max(self.total_env_steps, 1)
        return self

    @property
    def task_spec(self) -> TaskSpec:
        return TaskSpec.create(self.task, self.reward_mode, self.horizon, self.matrix_actions)

    @property
    def label(self) -> str:
        return f"{self.task}-{self.reward_mode}-{self.algo.value}"


def parse_config_file(path: Path) -> Dict[str, str]:
    """读取扁平的 key=value 文本，忽略空行与 # 注释"""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config file {path}: {e}") from e

    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{number}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in RunConfig.model_fields:
            raise ConfigurationError(f"{path}:{number}: unknown key {key!r}")
        values[key] = value
    return values


def load_run_config(path: Optional[Path] = None,
                    overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """配置文件 -> 命令行覆盖 -> 校验"""
    data: Dict[str, Any] = parse_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigurationError(str(e)) from e
    except ConfigurationError:
        raise
    except ValueError as e:
        raise ConfigurationError(str(e)) from e
