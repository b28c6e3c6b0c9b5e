"""
实验管理器：多种子训练、汇总、快照评估与访问计数导出
"""
import csv
import json
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from config import RunConfig, setup_app_logging
from logging_setup import get_logger
from .counting import VisitCounter
from .env import make_env
from .exceptions import CMAEError, ConfigurationError, InsufficientDataError
from .learner import load_policies
from .models import RunArtifacts, RunOperation
from .trainer import absolute_metric, run_training

logger = get_logger(__name__)

AGGREGATE_HEADER = (
    "env_step", "success_rate_mean", "success_rate_std",
    "mean_return_mean", "mean_return_std", "seeds",
)


def _train_seed(config: RunConfig, seed: int, run_dir: Path) -> RunArtifacts:
    return run_training(config, seed, run_dir)


def _mean_std(values: List[float]) -> Dict[str, Optional[float]]:
    if not values:
        return {"mean": None, "std": None, "n": 0}
    return {"mean": float(np.mean(values)), "std": float(np.std(values)), "n": len(values)}


class ExperimentRunner:
    """一组配置下的全部种子，产物写到 out_dir/<label>/"""

    def __init__(self, config: RunConfig, out_dir: Path, workers: int = 1):
        self.config = config
        self.out_dir = Path(out_dir)
        self.workers = max(1, workers)

    @property
    def experiment_dir(self) -> Path:
        return self.out_dir / self.config.label

    def run_dir(self, seed: int) -> Path:
        return self.experiment_dir / f"seed_{seed}"

    def train(self) -> RunOperation:
        """训练全部种子并写出 aggregate.csv 与 summary.json"""
        seeds = list(self.config.seeds)
        self.experiment_dir.mkdir(parents=True, exist_ok=True)
        (self.experiment_dir / "config.json").write_text(
            self.config.model_dump_json(indent=2), encoding="utf-8"
        )
        logger.info(f"开始实验 {self.config.label}: 种子 {seeds}, 并行 {self.workers}")

        try:
            if self.workers == 1 or len(seeds) == 1:
                results = [_train_seed(self.config, s, self.run_dir(s)) for s in seeds]
            else:
                results = self._train_parallel(seeds)
        except CMAEError as e:
            logger.error(f"实验 {self.config.label} 失败: {e}")
            return RunOperation(success=False, message=f"Training failed: {e}", error=e)

        results.sort(key=lambda a: a.seed)
        self.write_aggregate(results)
        summary = self.write_summary(results)
        final = summary["final_metric"]
        message = f"Trained {self.config.label} on {len(results)} seed(s)"
        if final["mean"] is not None:
            message += f", final metric {final['mean']:.3f} ± {final['std']:.3f}"
        logger.info(message)
        return RunOperation(success=True, message=message, artifacts=results)

    def _train_parallel(self, seeds: List[int]) -> List[RunArtifacts]:
        results = []
        with ProcessPoolExecutor(max_workers=min(self.workers, len(seeds)),
                                 initializer=setup_app_logging) as pool:
            futures = {pool.submit(_train_seed, self.config, s, self.run_dir(s)): s for s in seeds}
            for future in as_completed(futures):
                artifacts = future.result()
                logger.info(f"种子 {futures[future]} 完成: {artifacts.env_steps} 步")
                results.append(artifacts)
        return results

    def write_aggregate(self, results: List[RunArtifacts]) -> Path:
        """按评估步对齐各种子的曲线，只保留所有种子都有的步"""
        by_step: Dict[int, List] = {}
        for artifacts in results:
            for record in artifacts.records:
                by_step.setdefault(record.env_step, []).append(record)

        path = self.experiment_dir / "aggregate.csv"
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(AGGREGATE_HEADER)
            for step in sorted(by_step):
                records = by_step[step]
                if len(records) != len(results):
                    continue
                success = [r.success_rate for r in records]
                returns = [r.mean_return for r in records]
                writer.writerow((
                    step,
                    f"{np.mean(success):.4f}", f"{np.std(success):.4f}",
                    f"{np.mean(returns):.6f}", f"{np.std(returns):.6f}",
                    len(records),
                ))
        return path

    def write_summary(self, results: List[RunArtifacts]) -> Dict:
        summary = {
            "label": self.config.label,
            "seeds": [a.seed for a in results],
            "final_metric": _mean_std([a.final_metric for a in results if a.final_metric is not None]),
            "absolute_metric": _mean_std(
                [a.absolute_metric for a in results if a.absolute_metric is not None]
            ),
            "per_seed": {
                str(a.seed): {
                    "env_steps": a.env_steps,
                    "final_metric": a.final_metric,
                    "absolute_metric": a.absolute_metric,
                    "steps_to_success": a.steps_to_success,
                }
                for a in results
            },
        }
        (self.experiment_dir / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
        return summary


def load_experiment_config(experiment_dir: Path) -> RunConfig:
    path = Path(experiment_dir) / "config.json"
    if not path.exists():
        raise ConfigurationError(f"no config.json in {experiment_dir}")
    return RunConfig.model_validate_json(path.read_text(encoding="utf-8"))


def evaluate_snapshots(run_dir: Path, config: Optional[RunConfig] = None,
                       episodes: Optional[int] = None) -> RunOperation:
    """对一个种子目录下保留的快照重新计算绝对指标"""
    run_dir = Path(run_dir)
    try:
        config = config or load_experiment_config(run_dir.parent)
        snapshots = sorted((run_dir / "snapshots").glob("step_*.npz"))
        if not snapshots:
            raise InsufficientDataError(f"no snapshots under {run_dir}")
        seed = int(run_dir.name.removeprefix("seed_")) if run_dir.name.startswith("seed_") else 0
        env = make_env(config.task_spec, random_start=config.random_start)
        value = absolute_metric((load_policies(p) for p in snapshots), env,
                                episodes=episodes or config.absolute_episodes, seed=seed)
    except (CMAEError, OSError, ValueError) as e:
        logger.error(f"快照评估失败 {run_dir}: {e}")
        return RunOperation(success=False, message=f"Evaluation failed: {e}", error=e)

    logger.info(f"{run_dir}: {len(snapshots)} 个快照, 绝对指标 {value:.4f}")
    return RunOperation(success=True,
                        message=f"Absolute metric over {len(snapshots)} snapshot(s): {value:.4f}")


def visits_to_grid(counter: VisitCounter, size: Optional[int] = None) -> np.ndarray:
    """二维受限空间的计数 -> size × size 矩阵，行是 y，列是 x"""
    keys = list(counter.table)
    if any(not isinstance(k, tuple) or len(k) != 2 for k in keys):
        raise ConfigurationError("grid export needs a two-index space with tuple keys")
    if size is None:
        size = max((max(k) for k in keys), default=-1) + 1
    grid = np.zeros((size, size), dtype=np.int64)
    for (x, y), n in counter.table.items():
        if 0 <= x < size and 0 <= y < size:
            grid[y, x] = n
    return grid


def dump_visits(tsv_path: Path, out_path: Path, size: Optional[int] = None) -> RunOperation:
    """把 space_i_j.tsv 转成可直接画热力图的 CSV"""
    try:
        grid = visits_to_grid(VisitCounter.load(Path(tsv_path)), size)
    except (CMAEError, OSError, ValueError) as e:
        return RunOperation(success=False, message=f"Cannot export {tsv_path}: {e}", error=e)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(out_path, grid, fmt="%d", delimiter=",")
    return RunOperation(success=True, message=f"Wrote {grid.shape[0]}x{grid.shape[1]} grid to {out_path}")
