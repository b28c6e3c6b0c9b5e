"""
定长回放缓冲区 (FIFO 淘汰)
"""
from typing import Iterator, List

import numpy as np

from .exceptions import ConfigurationError
from .models import EnvState, TransitionRecord


class ReplayBuffer:
    """环形缓冲区：满了以后覆盖最早的转移"""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError(f"replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._storage: List[TransitionRecord] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._storage)

    def __bool__(self) -> bool:
        return bool(self._storage)

    def add(self, transition: TransitionRecord) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(transition)
        else:
            self._storage[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def __iter__(self) -> Iterator[TransitionRecord]:
        """从最旧到最新"""
        if len(self._storage) < self.capacity:
            yield from self._storage
        else:
            yield from self._storage[self._next:]
            yield from self._storage[:self._next]

    def __getitem__(self, index: int) -> TransitionRecord:
        """按存储位置取转移，位置来自 sample_indices"""
        return self._storage[index]

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> List[int]:
        """有放回均匀采样存储位置"""
        if not self._storage or batch_size <= 0:
            return []
        return [int(i) for i in rng.integers(len(self._storage), size=batch_size)]

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[TransitionRecord]:
        """有放回均匀采样"""
        storage = self._storage
        return [storage[i] for i in self.sample_indices(batch_size, rng)]

    def next_states(self) -> Iterator[EnvState]:
        """计数器统计的是 s^{t+1}，回放初始化新节点时与之保持一致"""
        for transition in self:
            yield transition.next_state

    def trajectory_to(self, index: int) -> List[TransitionRecord]:
        """从该转移所在回合的开头走到它本身（含），从旧到新

        回合开头已被淘汰时，从仍保留的最早一步开始。
        """
        storage = self._storage
        oldest = self._next if len(storage) == self.capacity else 0
        path = [storage[index]]
        position = index
        while path[-1].step_index > 0 and position != oldest:
            position = (position - 1) % len(storage)
            previous = storage[position]
            if previous.step_index != path[-1].step_index - 1 or previous.next_state != path[-1].state:
                break
            path.append(previous)
        path.reverse()
        return path
