"""
多智能体离散环境: Pass / Secret-Room / Push-Box / Island 以及单步矩阵博弈

坐标约定: x 向右, y 向上, 网格左下角为 (0, 0)。
所有任务的观测都是完整状态 (每个智能体看到同一个状态向量)。
"""
import math
from abc import ABC, abstractmethod
from enum import IntEnum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigurationError, ContractViolation
from .models import EnvState, JointAction, JointObservation, RewardMode, TaskName, TaskSpec


class Action(IntEnum):
    """单个智能体的动作"""
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4
    ATTACK = 5  # 仅 Island


_DELTAS = ((0, 1), (0, -1), (-1, 0), (1, 0), (0, 0), (0, 0))

SOLVED_REWARD = 1.0
CHECKPOINT_REWARD = 0.1
RING_COUNT = 5

Cell = Tuple[int, int]
Region = Callable[[EnvState], bool]


def chebyshev(a: Cell, b: Cell) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def ring_width(grid_size: int, ring_count: int = RING_COUNT) -> int:
    """同心检查点环的宽度 ⌈grid / (2·ring_count)⌉"""
    return math.ceil(grid_size / (2 * ring_count))


def matrix_payoff(actions: JointAction, payoff_table) -> float:
    """矩阵博弈收益 U[a1][a2]"""
    table = np.asarray(payoff_table)
    if len(actions) != 2 or table.ndim != 2:
        raise ContractViolation("matrix game takes two agents and an l x l table")
    a1, a2 = actions
    if not (0 <= a1 < table.shape[0] and 0 <= a2 < table.shape[1]):
        raise ContractViolation(f"action {actions} out of range for {table.shape} table")
    return float(table[a1, a2])


class MultiAgentEnv(ABC):
    """多智能体 MDP 接口

    环境实例是单线程状态机: reset() 开始一个回合, step() 推进一步。
    稠密奖励的检查点领取记录保存在实例内，按回合清空。
    """

    def __init__(self, spec: TaskSpec, random_start: bool = False):
        self.spec = spec
        self.random_start = random_start
        self.t = 0
        self._rng = np.random.default_rng(0)
        self._claimed: set = set()
        self._solved = False
        self._dense = spec.reward_mode is RewardMode.DENSE
        self._regions: List[Region] = self.checkpoint_regions() if self._dense else []

    # ---- 子类实现 ----

    @abstractmethod
    def initial_state(self) -> EnvState:
        """回合初始状态"""

    @abstractmethod
    def transition(self, state: EnvState, action: JointAction) -> EnvState:
        """纯动力学: 不涉及奖励与回合记录"""

    @abstractmethod
    def is_solved(self, state: EnvState) -> bool:
        """任务完成谓词"""

    def checkpoint_regions(self) -> List[Region]:
        return []

    def shaping_reward(self, state: EnvState, next_state: EnvState) -> float:
        """检查点之外的稠密奖励"""
        return 0.0

    # ---- 公共接口 ----

    @property
    def checkpoint_count(self) -> int:
        return len(self._regions)

    def observe(self, state: EnvState) -> JointObservation:
        return (state,) * self.spec.n_agents

    def reset(self, seed: int = 0) -> Tuple[EnvState, JointObservation]:
        self._rng = np.random.default_rng(seed)
        self.t = 0
        self._solved = False
        state = self.initial_state()
        # 开局已处于其中的检查点不再发放奖励
        self._claimed = {i for i, region in enumerate(self._regions) if region(state)}
        return state, self.observe(state)

    def step(self, state: EnvState, action: JointAction) -> Tuple[EnvState, float, bool]:
        if len(action) != self.spec.n_agents:
            raise ContractViolation(
                f"joint action has {len(action)} entries, task has {self.spec.n_agents} agents"
            )
        next_state = self.transition(state, action)

        reward = 0.0
        solved = self.is_solved(next_state)
        if solved and not self._solved:
            self._solved = True
            reward += SOLVED_REWARD

        if self._dense:
            reward += self.shaping_reward(state, next_state)
            for i, region in enumerate(self._regions):
                if i not in self._claimed and region(next_state):
                    self._claimed.add(i)
                    reward += CHECKPOINT_REWARD

        done = solved or self.t >= self.spec.horizon - 1
        self.t += 1
        return next_state, reward, done

    # ---- 网格工具 ----

    def in_bounds(self, x: int, y: int) -> bool:
        g = self.spec.grid_size
        return 0 <= x < g and 0 <= y < g

    def _target(self, pos: Cell, action: int) -> Cell:
        dx, dy = _DELTAS[action]
        return pos[0] + dx, pos[1] + dy

    def _sample_cells(self, cells: Sequence[Cell], count: int) -> List[Cell]:
        picks = self._rng.choice(len(cells), size=count, replace=False)
        return [cells[int(i)] for i in picks]

    def _rings(self, landmark: Cell, positions: Callable[[EnvState], Sequence[Cell]],
               active: Callable[[EnvState], bool], width: int) -> List[Region]:
        """以 landmark 为中心、Chebyshev 距离递增的同心检查点区域"""
        regions: List[Region] = []
        for j in range(1, RING_COUNT + 1):
            radius = j * width

            def region(s: EnvState, radius=radius) -> bool:
                return active(s) and any(chebyshev(p, landmark) <= radius for p in positions(s))

            regions.append(region)
        return regions


def _agent_cells(s: EnvState) -> Tuple[Cell, Cell]:
    return (s[0], s[1]), (s[2], s[3])


def _off_switch(switches: Sequence[Cell]) -> Callable[[EnvState], List[Cell]]:
    """没有站在开关上的智能体位置"""
    return lambda s: [p for p in _agent_cells(s) if p not in switches]


class PassEnv(MultiAgentEnv):
    """两个房间由一扇门隔开，每个房间一个开关；任一开关被占据时门打开

    两个开关都紧挨着门，站在开关上的智能体自己进不了门。

    状态: (x1, y1, x2, y2, door)
    """

    WALL_X = 15
    DOOR = (15, 15)
    LEFT_SWITCH = (14, 14)
    RIGHT_SWITCH = (16, 16)
    STARTS = ((5, 5), (5, 7))

    def initial_state(self) -> EnvState:
        starts = self.STARTS
        if self.random_start:
            room = [(x, y) for x in range(self.WALL_X) for y in range(self.spec.grid_size)
                    if (x, y) != self.LEFT_SWITCH]
            starts = self._sample_cells(room, 2)
        (x1, y1), (x2, y2) = starts
        return x1, y1, x2, y2, 0

    def _move(self, pos: Cell, action: int, door_open: bool) -> Cell:
        x, y = self._target(pos, action)
        if not self.in_bounds(x, y):
            return pos
        if x == self.WALL_X and not (door_open and (x, y) == self.DOOR):
            return pos
        return x, y

    def transition(self, state: EnvState, action: JointAction) -> EnvState:
        door_open = state[4] == 1
        p1, p2 = _agent_cells(state)
        n1 = self._move(p1, action[0], door_open)
        n2 = self._move(p2, action[1], door_open)
        switches = (self.LEFT_SWITCH, self.RIGHT_SWITCH)
        door = int(n1 in switches or n2 in switches)
        return n1[0], n1[1], n2[0], n2[1], door

    def is_solved(self, state: EnvState) -> bool:
        return state[0] > self.WALL_X and state[2] > self.WALL_X

    def checkpoint_regions(self) -> List[Region]:
        width = ring_width(self.spec.grid_size)
        open_door = lambda s: s[4] == 1
        # 按门的智能体不计，检查点只奖励朝开着的门走去的那一个
        walkers = _off_switch((self.LEFT_SWITCH, self.RIGHT_SWITCH))
        return (self._rings(self.DOOR, walkers, open_door, width)
                + self._rings(self.RIGHT_SWITCH, walkers, open_door, width))


class SecretRoomEnv(MultiAgentEnv):
    """左侧一个大房间，右侧三个小房间

    大房间的开关控制三扇门，小房间的开关只控制自己的门。
    大房间开关和目标房间开关都挨着目标房间的门。
    状态: (x1, y1, x2, y2, door0, door1, door2)
    """

    WALL_X = 12
    ROOM_WALLS_Y = (8, 16)
    DOORS = ((12, 4), (12, 12), (12, 20))
    LARGE_SWITCH = (11, 11)
    ROOM_SWITCHES = ((20, 4), (13, 13), (20, 20))
    STARTS = ((2, 2), (2, 4))
    TARGET_ROOM = 1

    def initial_state(self) -> EnvState:
        starts = self.STARTS
        if self.random_start:
            room = [(x, y) for x in range(self.WALL_X) for y in range(self.spec.grid_size)
                    if (x, y) != self.LARGE_SWITCH]
            starts = self._sample_cells(room, 2)
        (x1, y1), (x2, y2) = starts
        return x1, y1, x2, y2, 0, 0, 0

    def room_of(self, pos: Cell) -> Optional[int]:
        """-1 为大房间，0..2 为小房间，None 为墙或门洞"""
        x, y = pos
        if x < self.WALL_X:
            return -1
        if x == self.WALL_X or y in self.ROOM_WALLS_Y:
            return None
        low, high = self.ROOM_WALLS_Y
        return 0 if y < low else (1 if y < high else 2)

    def _move(self, pos: Cell, action: int, doors: Sequence[int]) -> Cell:
        x, y = self._target(pos, action)
        if not self.in_bounds(x, y):
            return pos
        if x == self.WALL_X:
            for flag, door in zip(doors, self.DOORS):
                if flag and (x, y) == door:
                    return x, y
            return pos
        if x > self.WALL_X and y in self.ROOM_WALLS_Y:
            return pos
        return x, y

    def door_flags(self, positions: Sequence[Cell]) -> Tuple[int, int, int]:
        large = self.LARGE_SWITCH in positions
        return tuple(int(large or switch in positions) for switch in self.ROOM_SWITCHES)

    def transition(self, state: EnvState, action: JointAction) -> EnvState:
        doors = state[4:7]
        p1, p2 = _agent_cells(state)
        n1 = self._move(p1, action[0], doors)
        n2 = self._move(p2, action[1], doors)
        return (n1[0], n1[1], n2[0], n2[1], *self.door_flags((n1, n2)))

    def is_solved(self, state: EnvState) -> bool:
        p1, p2 = _agent_cells(state)
        return self.room_of(p1) == self.TARGET_ROOM and self.room_of(p2) == self.TARGET_ROOM

    def checkpoint_regions(self) -> List[Region]:
        width = ring_width(self.spec.grid_size)
        flag_index = 4 + self.TARGET_ROOM
        open_door = lambda s: s[flag_index] == 1
        walkers = _off_switch((self.LARGE_SWITCH, *self.ROOM_SWITCHES))
        return (self._rings(self.DOORS[self.TARGET_ROOM], walkers, open_door, width)
                + self._rings(self.ROOM_SWITCHES[self.TARGET_ROOM], walkers, open_door, width))


class PushBoxEnv(MultiAgentEnv):
    """两个智能体必须同时朝同一方向推动箱子，箱子碰到墙即完成

    状态: (x1, y1, x2, y2, box_x, box_y)
    """

    BOX_START = (7, 7)
    STARTS = ((3, 3), (11, 3))
    BOX_CHECKPOINTS = 6

    def initial_state(self) -> EnvState:
        starts = self.STARTS
        if self.random_start:
            g = self.spec.grid_size
            cells = [(x, y) for x in range(1, g - 1) for y in range(1, g - 1)
                     if chebyshev((x, y), self.BOX_START) > 1]
            starts = self._sample_cells(cells, 2)
        (x1, y1), (x2, y2) = starts
        return x1, y1, x2, y2, self.BOX_START[0], self.BOX_START[1]

    @staticmethod
    def push_direction(pos: Cell, action: int, box: Cell) -> Optional[Cell]:
        """智能体紧贴箱子背面（含斜对角）并朝箱子方向移动时返回推动方向"""
        dx, dy = _DELTAS[action]
        if (dx, dy) == (0, 0) or chebyshev(pos, box) != 1:
            return None
        if (box[0] - pos[0]) * dx + (box[1] - pos[1]) * dy != 1:
            return None
        return dx, dy

    def _move(self, pos: Cell, action: int, box: Cell) -> Cell:
        x, y = self._target(pos, action)
        if not self.in_bounds(x, y) or (x, y) == box:
            return pos
        return x, y

    def transition(self, state: EnvState, action: JointAction) -> EnvState:
        p1, p2 = _agent_cells(state)
        box = (state[4], state[5])
        d1 = self.push_direction(p1, action[0], box)
        d2 = self.push_direction(p2, action[1], box)
        if d1 is not None and d1 == d2:
            new_box = (box[0] + d1[0], box[1] + d1[1])
            if self.in_bounds(*new_box):
                n1 = self._move(p1, action[0], new_box)
                n2 = self._move(p2, action[1], new_box)
                return n1[0], n1[1], n2[0], n2[1], new_box[0], new_box[1]
        n1 = self._move(p1, action[0], box)
        n2 = self._move(p2, action[1], box)
        return n1[0], n1[1], n2[0], n2[1], box[0], box[1]

    def wall_distance(self, state: EnvState) -> int:
        g = self.spec.grid_size
        bx, by = state[4], state[5]
        return min(bx, by, g - 1 - bx, g - 1 - by)

    def is_solved(self, state: EnvState) -> bool:
        return self.wall_distance(state) == 0

    def checkpoint_regions(self) -> List[Region]:
        # 箱子到墙的距离每缩短一格领取一个检查点
        start = min(self.BOX_START[0], self.BOX_START[1],
                    self.spec.grid_size - 1 - self.BOX_START[0],
                    self.spec.grid_size - 1 - self.BOX_START[1])
        regions: List[Region] = []
        for j in range(1, self.BOX_CHECKPOINTS + 1):
            threshold = start - j
            regions.append(lambda s, threshold=threshold: self.wall_distance(s) <= threshold)
        return regions


class IslandEnv(MultiAgentEnv):
    """两个智能体合力猎杀一头狼

    狼每步追逐最近的存活智能体（平局取编号小者），相邻时攻击它。
    状态: (x1, y1, x2, y2, energy1, energy2, wolf_x, wolf_y, wolf_energy)
    """

    STARTS = ((1, 1), (1, 3))
    WOLF_START = (8, 8)
    AGENT_ENERGY = 5
    WOLF_ENERGY = 8
    KILL_REWARD = 300.0

    def initial_state(self) -> EnvState:
        starts = self.STARTS
        if self.random_start:
            g = self.spec.grid_size
            cells = [(x, y) for x in range(g) for y in range(g)
                     if manhattan((x, y), self.WOLF_START) > 2]
            starts = self._sample_cells(cells, 2)
        (x1, y1), (x2, y2) = starts
        e = self.AGENT_ENERGY
        return (x1, y1, x2, y2, e, e, self.WOLF_START[0], self.WOLF_START[1], self.WOLF_ENERGY)

    def _wolf_step(self, wolf: Cell, target: Cell, agents: Sequence[Cell]) -> Cell:
        dx = target[0] - wolf[0]
        dy = target[1] - wolf[1]
        steps = [(int(math.copysign(1, dx)), 0), (0, int(math.copysign(1, dy)))]
        deltas = (dx, dy)
        order = (0, 1) if abs(dx) >= abs(dy) else (1, 0)
        for axis in order:
            if deltas[axis] == 0:
                continue
            cell = (wolf[0] + steps[axis][0], wolf[1] + steps[axis][1])
            if self.in_bounds(*cell) and cell not in agents:
                return cell
        return wolf

    def transition(self, state: EnvState, action: JointAction) -> EnvState:
        positions = list(_agent_cells(state))
        energy = [state[4], state[5]]
        wolf = (state[6], state[7])
        wolf_energy = state[8]

        for i in range(2):
            if energy[i] == 0:
                continue
            x, y = self._target(positions[i], action[i])
            if self.in_bounds(x, y) and not (wolf_energy > 0 and (x, y) == wolf):
                positions[i] = (x, y)

        if wolf_energy > 0:
            hits = sum(
                1 for i in range(2)
                if energy[i] > 0 and action[i] == Action.ATTACK and manhattan(positions[i], wolf) == 1
            )
            wolf_energy = max(0, wolf_energy - hits)

        if wolf_energy > 0:
            alive = [i for i in range(2) if energy[i] > 0]
            if alive:
                prey = min(alive, key=lambda i: (manhattan(positions[i], wolf), i))
                if manhattan(positions[prey], wolf) == 1:
                    energy[prey] -= 1
                else:
                    wolf = self._wolf_step(wolf, positions[prey], positions)

        (x1, y1), (x2, y2) = positions
        return x1, y1, x2, y2, energy[0], energy[1], wolf[0], wolf[1], wolf_energy

    def is_solved(self, state: EnvState) -> bool:
        return state[8] == 0

    def shaping_reward(self, state: EnvState, next_state: EnvState) -> float:
        # 每点伤害 +1，击杀再加一笔
        damage = state[8] - next_state[8]
        reward = float(damage)
        if damage and next_state[8] == 0:
            reward += self.KILL_REWARD
        return reward


class MatrixGameEnv(MultiAgentEnv):
    """单步合作矩阵博弈，状态是常量占位符"""

    def __init__(self, spec: TaskSpec, payoff_table):
        table = np.asarray(payoff_table, dtype=float)
        if table.shape != (spec.action_count, spec.action_count):
            raise ConfigurationError(
                f"payoff table must be {spec.action_count}x{spec.action_count}, got {table.shape}"
            )
        self.payoff = table
        super().__init__(spec)

    def initial_state(self) -> EnvState:
        return (0,)

    def transition(self, state: EnvState, action: JointAction) -> EnvState:
        return (0,)

    def step(self, state: EnvState, action: JointAction) -> Tuple[EnvState, float, bool]:
        reward = matrix_payoff(action, self.payoff)
        self._solved = reward == self.payoff.max()
        self.t += 1
        return (0,), reward, True

    def is_solved(self, state: EnvState) -> bool:
        return self._solved


_ENVIRONMENTS = {
    TaskName.PASS: PassEnv,
    TaskName.SECRET_ROOM: SecretRoomEnv,
    TaskName.PUSH_BOX: PushBoxEnv,
    TaskName.ISLAND: IslandEnv,
}


def make_env(spec: TaskSpec, payoff_table=None, random_start: bool = False) -> MultiAgentEnv:
    """按任务描述创建环境实例"""
    if spec.name is TaskName.MATRIX_GAME:
        if payoff_table is None:
            payoff_table = np.eye(spec.action_count)
        return MatrixGameEnv(spec, payoff_table)
    env_cls = _ENVIRONMENTS.get(spec.name)
    if env_cls is None:
        raise ConfigurationError(f"unknown task: {spec.name}")
    return env_cls(spec, random_start=random_start)
