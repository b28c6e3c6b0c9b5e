"""
命令行界面主程序
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from config import load_run_config, settings, setup_app_logging
from core.analysis import coverage_table, discovery_table
from core.exceptions import CMAEError
from core.experiment import ExperimentRunner, dump_visits, evaluate_snapshots
from core.models import Algorithm, RewardMode, TaskName
from logging_setup import get_logger

logger = get_logger(__name__)


def error_line(error: BaseException) -> str:
    """机器可读的单行错误"""
    return json.dumps({"error": type(error).__name__, "message": str(error)})


class CMAECLI:
    """协同多智能体探索命令行界面"""

    def create_parser(self) -> argparse.ArgumentParser:
        """创建命令行参数解析器"""
        parser = argparse.ArgumentParser(
            prog="cmae",
            description="Coordinated multi-agent exploration on sparse-reward gridworlds",
            epilog="Use cmae <command> --help to see help for specific commands",
        )
        parser.add_argument("--version", action="version", version="cmae 0.1.0")

        subparsers = parser.add_subparsers(dest="command", help="Available commands", metavar="<command>")

        # 训练
        train_parser = subparsers.add_parser("train", help="Train one configuration over several seeds")
        train_parser.add_argument("--task", choices=[t.value for t in TaskName], help="Task name")
        train_parser.add_argument("--reward-mode", choices=[m.value for m in RewardMode],
                                  help="Sparse or dense reward")
        train_parser.add_argument("--algo", choices=[a.value for a in Algorithm], help="Training algorithm")
        train_parser.add_argument("--seeds", type=str, help="Comma-separated seeds, e.g. 0,1,2")
        train_parser.add_argument("--steps", type=int, help="Environment steps per seed")
        train_parser.add_argument("--config", type=Path, help="key=value config file")
        train_parser.add_argument("--out", type=Path, help="Output directory (default: settings.output_dir)")
        train_parser.add_argument("--workers", type=int, help="Seeds trained in parallel")

        # 快照评估
        eval_parser = subparsers.add_parser("eval", help="Absolute metric over a run's snapshots")
        eval_parser.add_argument("run_dir", type=Path, help="Seed directory, e.g. runs/push_box-sparse-cmae/seed_0")
        eval_parser.add_argument("--episodes", type=int, help="Episodes per snapshot")

        # 分析
        claims_parser = subparsers.add_parser("claims", help="Monte Carlo checks on the matrix game")
        claims_parser.add_argument("--ls", type=str, default="2,3,4,5,6", help="Action counts per agent")
        claims_parser.add_argument("--trials", type=int, default=100_000, help="Trials per l")
        claims_parser.add_argument("--seed", type=int, default=0)
        claims_parser.add_argument("--json", type=Path, help="Also write the tables as JSON")

        # 计数导出
        dump_parser = subparsers.add_parser("dump-visits", help="Export a two-index visit counter as a grid CSV")
        dump_parser.add_argument("counter", type=Path, help="visits/space_i_j.tsv")
        dump_parser.add_argument("output", type=Path, help="CSV path")
        dump_parser.add_argument("--size", type=int, help="Grid size (default: largest coordinate + 1)")

        return parser

    def run(self, args: Optional[list] = None) -> int:
        """运行CLI"""
        parser = self.create_parser()
        parsed_args = parser.parse_args(args)

        if not parsed_args.command:
            parser.print_help()
            return 1

        command_method = getattr(self, f"cmd_{parsed_args.command.replace('-', '_')}", None)
        if command_method is None:
            print(error_line(ValueError(f"unknown command {parsed_args.command}")), file=sys.stderr)
            return 2

        try:
            return command_method(parsed_args)
        except KeyboardInterrupt:
            print("\nOperation cancelled by user", file=sys.stderr)
            return 130
        except CMAEError as e:
            logger.error(f"命令执行失败: {e}")
            print(error_line(e), file=sys.stderr)
            return 1
        except Exception as e:
            logger.exception(f"命令执行异常: {e}")
            print(error_line(e), file=sys.stderr)
            return 1

    def cmd_train(self, args) -> int:
        """训练"""
        overrides = {
            "task": args.task,
            "reward_mode": args.reward_mode,
            "algo": args.algo,
            "seeds": args.seeds,
            "total_env_steps": args.steps,
        }
        config = load_run_config(args.config, overrides)
        runner = ExperimentRunner(config, args.out or Path(settings.output_dir),
                                  workers=args.workers or settings.workers)
        print(f"Training {config.label} on seeds {config.seeds} "
              f"({config.total_env_steps} env steps each)")
        result = runner.train()

        if not result.success:
            print(f"✗ {result.message}", file=sys.stderr)
            print(error_line(result.error), file=sys.stderr)
            return 1
        print(f"✓ {result.message}")
        for artifacts in result.artifacts:
            final = "-" if artifacts.final_metric is None else f"{artifacts.final_metric:.3f}"
            print(f"  seed {artifacts.seed}: {artifacts.env_steps} steps, final {final}, {artifacts.run_dir}")
        return 0

    def cmd_eval(self, args) -> int:
        """快照评估"""
        result = evaluate_snapshots(args.run_dir, episodes=args.episodes)
        if not result.success:
            print(f"✗ {result.message}", file=sys.stderr)
            print(error_line(result.error), file=sys.stderr)
            return 1
        print(f"✓ {result.message}")
        return 0

    def cmd_claims(self, args) -> int:
        """打印覆盖时间与发现时间两张表"""
        ls = [int(v) for v in args.ls.split(",") if v.strip()]
        coverage = coverage_table(ls, args.trials, seed=args.seed)
        discovery = discovery_table(ls, min(args.trials, 10_000), seed=args.seed)

        print(f"{'l':>3} {'m':>4} {'shared':>9} {'non-shared':>11} {'closed form':>12} {'rel. error':>11}")
        print("-" * 55)
        for row in coverage:
            print(f"{row.l:>3} {row.m:>4} {row.shared_mean:>9.3f} {row.non_shared_mean:>11.3f} "
                  f"{row.closed_form:>12.3f} {row.relative_error:>11.4f}")
        print()
        print(f"{'l':>3} {'sub max':>8} {'2l':>4} {'full adv.':>10} {'l²-l+1':>7} {'full random':>12}")
        print("-" * 49)
        for row in discovery:
            print(f"{row.l:>3} {row.sub_max:>8} {row.sub_bound:>4} {row.full_adversarial:>10} "
                  f"{row.full_bound:>7} {row.full_random_mean:>12.3f}")

        if args.json:
            payload = {
                "coverage": [dict(vars(r), relative_error=r.relative_error) for r in coverage],
                "discovery": [vars(r) for r in discovery],
            }
            args.json.write_text(json.dumps(payload, indent=2), encoding="utf-8")
            print(f"✓ Wrote {args.json}")
        return 0

    def cmd_dump_visits(self, args) -> int:
        """导出访问计数网格"""
        result = dump_visits(args.counter, args.output, size=args.size)
        if not result.success:
            print(f"✗ {result.message}", file=sys.stderr)
            print(error_line(result.error), file=sys.stderr)
            return 1
        print(f"✓ {result.message}")
        return 0


def main():
    """主函数"""
    setup_app_logging()
    cli = CMAECLI()

    # 启用Tab补全（如果argcomplete可用）
    try:
        import argcomplete
        argcomplete.autocomplete(cli.create_parser())
    except ImportError:
        pass

    sys.exit(cli.run())
