"""
矩阵博弈上的探索分析

共享目标 vs 无协调的覆盖时间，以及只依赖一个智能体动作时
按智能体分开探索 vs 在联合动作空间探索的发现时间。
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from logging_setup import get_logger, log_performance
from .env import matrix_payoff
from .exceptions import ContractViolation

logger = get_logger(__name__)


def coupon_collector_expectation(m: int) -> float:
    """m·Σ_{i=1..m} 1/i"""
    return m * sum(1.0 / i for i in range(1, m + 1))


def coverage_times(l: int, shared: bool, trials: int, rng: np.random.Generator) -> np.ndarray:
    """每次试验看全 m = l² 种动作组合所需的步数"""
    if l < 2 or trials < 1:
        raise ContractViolation(f"need l >= 2 and trials >= 1, got l={l}, trials={trials}")
    m = l * l
    times = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    step = 0

    if shared:
        # 每步把访问最少的组合定为共享目标，两个智能体协同执行它
        counts = np.zeros((trials, m), dtype=np.int64)
        while active.size:
            step += 1
            sub = counts[active]
            least = sub == sub.min(axis=1, keepdims=True)
            goal = np.argmax(np.where(least, rng.random(sub.shape), -1.0), axis=1)
            counts[active, goal] += 1
            covered = (counts[active] > 0).all(axis=1)
            times[active[covered]] = step
            active = active[~covered]
        return times

    # 无协调：每步等价于均匀抽一个组合
    seen = np.zeros((trials, m), dtype=bool)
    n_seen = np.zeros(trials, dtype=np.int64)
    while active.size:
        step += 1
        draws = rng.integers(m, size=active.size)
        fresh = ~seen[active, draws]
        seen[active, draws] = True
        n_seen[active] += fresh
        finished = n_seen[active] == m
        times[active[finished]] = step
        active = active[~finished]
    return times


def simulate_coverage(l: int, shared: bool, trials: int, rng: np.random.Generator) -> float:
    return float(coverage_times(l, shared, trials, rng).mean())


def agent_one_payoff(l: int, best_action: int = 0) -> np.ndarray:
    """只依赖智能体一动作的收益矩阵，best_action 行唯一最大"""
    rows = np.linspace(0.0, 0.5, l)
    rows[best_action] = 1.0
    return np.repeat(rows[:, None], l, axis=1)


def _check_agent_one_payoff(payoff: np.ndarray) -> int:
    if payoff.ndim != 2 or payoff.shape[0] != payoff.shape[1]:
        raise ContractViolation(f"payoff must be a square matrix, got shape {payoff.shape}")
    if not np.all(payoff == payoff[:, :1]):
        raise ContractViolation("payoff must depend only on agent one's action (constant rows)")
    column = payoff[:, 0]
    best = np.flatnonzero(column == column.max())
    if best.size != 1:
        raise ContractViolation("maximal payoff must be attained by a unique agent-one action")
    return int(best[0])


def discovery_times(l: int, mode: str, trials: int, rng: np.random.Generator,
                    payoff: Optional[np.ndarray] = None, order: str = "adversarial") -> np.ndarray:
    """每次试验第一次观测到最大收益时的步数

    mode="sub": 逐个尝试 2l 个单智能体动作配置，另一个智能体随机动作
    mode="full": 在 l² 个联合组合上扫描，order 为 "adversarial"（最坏顺序）或 "random"
    """
    payoff = agent_one_payoff(l) if payoff is None else np.asarray(payoff, dtype=float)
    if payoff.shape != (l, l):
        raise ContractViolation(f"payoff must be {l}x{l}, got {payoff.shape}")
    best_row = _check_agent_one_payoff(payoff)
    maximum = payoff.max()
    times = np.zeros(trials, dtype=np.int64)

    for trial in range(trials):
        if mode == "sub":
            configs = [(0, a) for a in range(l)] + [(1, b) for b in range(l)]
            sweep = []
            for idx in rng.permutation(len(configs)):
                agent, action = configs[idx]
                partner = int(rng.integers(l))
                sweep.append((action, partner) if agent == 0 else (partner, action))
        elif mode == "full":
            joint = [(a1, a2) for a1 in range(l) for a2 in range(l)]
            if order == "adversarial":
                losing = [c for c in joint if c[0] != best_row]
                winning = [c for c in joint if c[0] == best_row]
                sweep = [losing[i] for i in rng.permutation(len(losing))] + winning
            elif order == "random":
                sweep = [joint[i] for i in rng.permutation(len(joint))]
            else:
                raise ContractViolation(f"unknown order {order!r}")
        else:
            raise ContractViolation(f"unknown mode {mode!r}")

        for step, actions in enumerate(sweep, 1):
            if matrix_payoff(actions, payoff) == maximum:
                times[trial] = step
                break
    return times


def simulate_restricted_discovery(l: int, mode: str, trials: int, rng: np.random.Generator,
                                  payoff: Optional[np.ndarray] = None,
                                  order: str = "adversarial") -> float:
    return float(discovery_times(l, mode, trials, rng, payoff=payoff, order=order).mean())


@dataclass
class CoverageRow:
    l: int
    m: int
    shared_mean: float
    non_shared_mean: float
    closed_form: float
    std_error: float

    @property
    def relative_error(self) -> float:
        return abs(self.non_shared_mean - self.closed_form) / self.closed_form

    @property
    def ratio(self) -> float:
        return self.non_shared_mean / self.shared_mean


@dataclass
class DiscoveryRow:
    l: int
    sub_max: int
    sub_mean: float
    full_adversarial: int
    full_random_mean: float

    @property
    def sub_bound(self) -> int:
        return 2 * self.l

    @property
    def full_bound(self) -> int:
        return self.l * self.l - self.l + 1


@log_performance
def coverage_table(ls: Sequence[int], trials: int, seed: int = 0) -> List[CoverageRow]:
    rows = []
    for l in ls:
        rng = np.random.default_rng([seed, l])
        shared = coverage_times(l, True, trials, rng)
        non_shared = coverage_times(l, False, trials, rng)
        m = l * l
        rows.append(CoverageRow(
            l=l, m=m,
            shared_mean=float(shared.mean()),
            non_shared_mean=float(non_shared.mean()),
            closed_form=coupon_collector_expectation(m),
            std_error=float(non_shared.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        ))
        logger.debug(f"l={l}: 共享 {rows[-1].shared_mean:.3f}, 非共享 {rows[-1].non_shared_mean:.3f}")
    return rows


@log_performance
def discovery_table(ls: Sequence[int], trials: int, seed: int = 0) -> List[DiscoveryRow]:
    rows = []
    for l in ls:
        rng = np.random.default_rng([seed, l, 2])
        sub = discovery_times(l, "sub", trials, rng)
        adversarial = discovery_times(l, "full", trials, rng, order="adversarial")
        random_order = discovery_times(l, "full", trials, rng, order="random")
        rows.append(DiscoveryRow(
            l=l,
            sub_max=int(sub.max()),
            sub_mean=float(sub.mean()),
            full_adversarial=int(adversarial.max()),
            full_random_mean=float(random_order.mean()),
        ))
    return rows
