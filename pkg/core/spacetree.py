"""
受限空间树

每个节点对应状态分量的一个子集 k，带一个访问计数器。
树从全部一维子集开始，被选中的节点按需向上扩展一维。
"""
import math
from operator import itemgetter
from pathlib import Path
from typing import Callable, Dict, Hashable, Iterable, List, Optional, Sequence

import numpy as np

from logging_setup import get_logger
from .counting import HashDiscretizer, VisitCounter
from .exceptions import ConfigurationError, ContractViolation, UndefinedDistributionError
from .models import EnvState, IndexSet

logger = get_logger(__name__)

DEFAULT_MAX_DIMENSION = 3


def make_index_set(indices: Iterable[int], dimension: int) -> IndexSet:
    """规范化索引集合：去重、排序、非空且都小于 M"""
    k = tuple(sorted(set(int(i) for i in indices)))
    if not k:
        raise ContractViolation("index set must be non-empty")
    if k[0] < 0 or k[-1] >= dimension:
        raise ContractViolation(f"index set {k} out of range for M={dimension}")
    return k


def project(state: EnvState, k: IndexSet) -> tuple:
    """proj_k(s)：按索引顺序取出 k 中的分量"""
    if k and k[-1] >= len(state):
        raise ContractViolation(f"index {k[-1]} out of range for state of dimension {len(state)}")
    return tuple(state[i] for i in k)


def _projector(k: IndexSet) -> Callable[[EnvState], tuple]:
    if len(k) == 1:
        i = k[0]
        return lambda s: (s[i],)
    return itemgetter(*k)


class SpaceNode:
    """树节点：受限空间 S_k 及其计数器"""

    __slots__ = ("k", "counter", "children", "expanded", "_project", "_hasher")

    def __init__(self, k: IndexSet, counter: Optional[VisitCounter] = None,
                 discretizer: Optional[HashDiscretizer] = None):
        self.k = k
        self.counter = counter or VisitCounter()
        self.children: List["SpaceNode"] = []
        self.expanded = False
        self._project = _projector(k)
        self._hasher = discretizer.restricted(k) if discretizer is not None else None

    def key_of(self, state: EnvState) -> Hashable:
        """计数键：离散网格下是投影元组，哈希模式下是 φ_k 的整数"""
        projected = self._project(state)
        if self._hasher is not None:
            return self._hasher.discretize(projected)
        return projected

    def __repr__(self) -> str:
        return f"SpaceNode(k={self.k}, {self.counter!r}, expanded={self.expanded})"


def normalized_entropy(counter: VisitCounter) -> float:
    """η_k = H_k / log|Ŝ_k|，只见过一个取值时为 +inf"""
    if counter.total == 0:
        raise UndefinedDistributionError("entropy of an empty counter is undefined")
    support = counter.support_size
    if support == 1:
        return math.inf
    p = counter.probabilities()
    entropy = float(-(p * np.log(p)).sum())
    return min(1.0, max(0.0, entropy / math.log(support)))


def utility(counter: VisitCounter) -> float:
    """u_k = -η_k"""
    return -normalized_entropy(counter)


def softmax_weights(utilities: Sequence[float]) -> np.ndarray:
    """对有限效用做数值稳定的 softmax，-inf 项权重恰为 0"""
    u = np.asarray(utilities, dtype=np.float64)
    finite = np.isfinite(u)
    weights = np.zeros_like(u)
    if not finite.any():
        return weights
    shifted = u[finite] - u[finite].max()
    e = np.exp(shifted)
    weights[finite] = e / e.sum()
    return weights


class SpaceTree:
    """受限空间树"""

    def __init__(self, dimension: int, max_dimension: int = DEFAULT_MAX_DIMENSION,
                 discretizer: Optional[HashDiscretizer] = None):
        if dimension < 1:
            raise ConfigurationError(f"state dimension must be >= 1, got {dimension}")
        if max_dimension < 1:
            raise ConfigurationError(f"max dimension must be >= 1, got {max_dimension}")
        if discretizer is not None and len(discretizer.bin_widths) != dimension:
            raise ConfigurationError("discretizer dimension does not match state dimension")
        self.dimension = dimension
        self.max_dimension = max_dimension
        self.discretizer = discretizer
        self.nodes: Dict[IndexSet, SpaceNode] = {}
        for i in range(dimension):
            self.nodes[(i,)] = SpaceNode((i,), discretizer=discretizer)

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, k: IndexSet) -> bool:
        return k in self.nodes

    def node(self, k: IndexSet) -> SpaceNode:
        return self.nodes[k]

    def key_of(self, state: EnvState, k: IndexSet) -> Hashable:
        return self.nodes[k].key_of(state)

    def update(self, state: EnvState) -> None:
        """所有节点的计数器都记录这一状态"""
        for node in self.nodes.values():
            node.counter.increment(node.key_of(state))

    def utilities(self) -> List[float]:
        """按节点顺序的效用，计数器为空的节点视为 -inf"""
        return [utility(node.counter) if node.counter.total else -math.inf
                for node in self.nodes.values()]

    def sample_space(self, rng: np.random.Generator) -> IndexSet:
        """k* ~ Cat(softmax(u))；全部为 -inf 时在一维节点上均匀抽取"""
        keys = list(self.nodes)
        weights = softmax_weights(self.utilities())
        if weights.sum() == 0.0:
            singletons = [k for k in keys if len(k) == 1]
            return singletons[int(rng.integers(len(singletons)))]
        return keys[int(rng.choice(len(keys), p=weights))]

    def expand(self, k_star: IndexSet, states: Iterable[EnvState]) -> List[IndexSet]:
        """为 k* 添加所有多一维的超集节点，计数器从回放状态一次性统计得到"""
        if k_star not in self.nodes:
            raise ContractViolation(f"{k_star} is not in the space tree")
        parent = self.nodes[k_star]
        if len(k_star) >= min(self.dimension, self.max_dimension):
            return []

        supersets = [make_index_set(k_star + (i,), self.dimension)
                     for i in range(self.dimension) if i not in k_star]
        added: List[SpaceNode] = []
        for k in supersets:
            child = self.nodes.get(k)
            if child is None:
                child = SpaceNode(k, discretizer=self.discretizer)
                self.nodes[k] = child
                added.append(child)
            if child not in parent.children:
                parent.children.append(child)
        parent.expanded = True

        if added:
            for state in states:
                for child in added:
                    child.counter.increment(child.key_of(state))
            logger.debug(f"扩展空间 {k_star}: 新增 {[c.k for c in added]}")
        return [c.k for c in added]

    def is_well_formed(self) -> bool:
        """节点唯一有序、维度不超上限、每个高维节点都有一个被扩展过的父节点"""
        for k, node in self.nodes.items():
            if node.k != k or list(k) != sorted(set(k)) or len(k) > self.max_dimension:
                return False
            if any(len(child.k) != len(k) + 1 or not set(k) < set(child.k) for child in node.children):
                return False
            if len(k) > 1:
                parents = [k[:i] + k[i + 1:] for i in range(len(k))]
                if not any(p in self.nodes and self.nodes[p].expanded for p in parents):
                    return False
        return True

    def dump(self, path: Path) -> Path:
        """诊断输出：每个节点一行"""
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["space\texpanded\ttotal\tsupport\tentropy\tutility"]
        for k, node in self.nodes.items():
            if node.counter.total:
                eta = normalized_entropy(node.counter)
                eta_text, u_text = f"{eta:.6f}", f"{-eta:.6f}"
            else:
                eta_text = u_text = "nan"
            lines.append(
                f"{','.join(map(str, k))}\t{int(node.expanded)}\t{node.counter.total}\t"
                f"{node.counter.support_size}\t{eta_text}\t{u_text}"
            )
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path


def init_tree(dimension: int, max_dimension: int = DEFAULT_MAX_DIMENSION,
              discretizer: Optional[HashDiscretizer] = None) -> SpaceTree:
    return SpaceTree(dimension, max_dimension=max_dimension, discretizer=discretizer)
