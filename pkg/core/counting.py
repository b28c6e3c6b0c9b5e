"""
访问计数与基于哈希的离散化
"""
import math
from pathlib import Path
from typing import Dict, Hashable, Iterable, Sequence, Tuple

import numpy as np

from .exceptions import ContractViolation, RejectedInputError, UndefinedDistributionError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class VisitCounter:
    """受限状态键 -> 访问次数

    只增不减；support_size 即已观测到的不同键的个数，用作 |S_k| 的估计。
    """

    __slots__ = ("table", "total")

    def __init__(self):
        self.table: Dict[Hashable, int] = {}
        self.total = 0

    @classmethod
    def from_keys(cls, keys: Iterable[Hashable]) -> "VisitCounter":
        """对一串键做一次完整统计"""
        counter = cls()
        table = counter.table
        for key in keys:
            table[key] = table.get(key, 0) + 1
            counter.total += 1
        return counter

    @property
    def support_size(self) -> int:
        return len(self.table)

    def increment(self, key: Hashable) -> "VisitCounter":
        self.table[key] = self.table.get(key, 0) + 1
        self.total += 1
        return self

    def count(self, key: Hashable) -> int:
        return self.table.get(key, 0)

    def probability(self, key: Hashable) -> float:
        if self.total == 0:
            raise UndefinedDistributionError("probability of an empty counter is undefined")
        return self.table.get(key, 0) / self.total

    def counts(self) -> np.ndarray:
        return np.fromiter(self.table.values(), dtype=np.float64, count=len(self.table))

    def probabilities(self) -> np.ndarray:
        if self.total == 0:
            raise UndefinedDistributionError("probability of an empty counter is undefined")
        return self.counts() / self.total

    def __eq__(self, other) -> bool:
        if not isinstance(other, VisitCounter):
            return NotImplemented
        return self.total == other.total and self.table == other.table

    def __len__(self) -> int:
        return len(self.table)

    def __repr__(self) -> str:
        return f"VisitCounter(total={self.total}, support={self.support_size})"

    # ---- 两列文本导出 ----

    def dump(self, path: Path) -> Path:
        """写出 key<TAB>count，按键排序保证输出稳定"""
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{format_key(key)}\t{count}"
                 for key, count in sorted(self.table.items(), key=lambda kv: _sort_token(kv[0]))]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Path) -> "VisitCounter":
        counter = cls()
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            key_text, count_text = line.split("\t")
            count = int(count_text)
            counter.table[parse_key(key_text)] = count
            counter.total += count
        return counter


def format_key(key: Hashable) -> str:
    """元组键写成 "3,7"，哈希整数键写成 "#12345" """
    if isinstance(key, tuple):
        return ",".join(str(v) for v in key)
    return f"#{key}"


def parse_key(text: str) -> Hashable:
    if text.startswith("#"):
        return int(text[1:])
    return tuple(int(v) for v in text.split(","))


def _sort_token(key: Hashable):
    return (0, key, 0) if isinstance(key, tuple) else (1, (), key)


def _mix64(z: int) -> int:
    """splitmix64 终结函数"""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class HashDiscretizer:
    """把连续分量按箱宽取整后哈希成一个整数键

    同样的输入与盐值在任何进程中得到同样的键。
    """

    def __init__(self, bin_widths: Sequence[float], salt: int = 0):
        widths = tuple(float(w) for w in bin_widths)
        if not widths or any(not math.isfinite(w) or w <= 0 for w in widths):
            raise ContractViolation(f"bin widths must be positive and finite, got {bin_widths}")
        self.bin_widths = widths
        self.salt = salt

    @classmethod
    def uniform(cls, dimension: int, width: float = 1.0, salt: int = 0) -> "HashDiscretizer":
        return cls([width] * dimension, salt=salt)

    def bins(self, values: Sequence[float]) -> Tuple[int, ...]:
        if len(values) != len(self.bin_widths):
            raise ContractViolation(
                f"expected {len(self.bin_widths)} components, got {len(values)}"
            )
        result = []
        for value, width in zip(values, self.bin_widths):
            if not math.isfinite(value):
                raise RejectedInputError(f"cannot discretize non-finite value {value}")
            result.append(math.floor(value / width))
        return tuple(result)

    def hash_bins(self, bins: Sequence[int]) -> int:
        # boost::hash_combine 风格的逐分量混合
        h = _mix64(self.salt & _MASK64)
        for b in bins:
            h ^= (_mix64(b & _MASK64) + _GOLDEN + ((h << 6) & _MASK64) + (h >> 2)) & _MASK64
        return _mix64(h)

    def discretize(self, values: Sequence[float]) -> int:
        return self.hash_bins(self.bins(values))

    def restricted(self, k: Sequence[int]) -> "HashDiscretizer":
        """受限空间 S_k 专用的哈希 φ_k：取对应箱宽，盐值随 k 变化"""
        widths = [self.bin_widths[i] for i in k]
        salt = self.hash_bins(tuple(k))
        return HashDiscretizer(widths, salt=salt)
