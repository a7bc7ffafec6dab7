"""
VGDP desk benchmark - demo collection, training, evaluation and ablation

Usage:
    python -m src.main collect --task reach_target --level L1 --demos 100 --out runs/demos/reach_L1
    python -m src.main train --data runs/demos/reach_L1 --variant vgdp --seed 0 --out runs/vgdp.ckpt
    python -m src.main train ... --fusion-mode concat --no-residual   # ablation flags
    python -m src.main train ... --resume runs/vgdp.ckpt              # continue a run
    python -m src.main eval --ckpt runs/vgdp.ckpt --level L1 --split ood --trials 200 --seed 0
    python -m src.main eval --ckpt runs/vgdp.ckpt ... --fault rgb_missing
    python -m src.main eval --baseline expert --task push_block --level L2 --split iid --trials 50
    python -m src.main ablate --tasks reach_target push_block --levels L0 L1 L2 --seeds 0 1 2 --out runs
    python -m src.main report --runs runs --format md

Every command takes --config FILE, --preset NAME and --verbose.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
import argparse
import sys
from pathlib import Path

from .config_loader import VALID_LEVELS, VALID_SPLITS, VALID_TASKS
from .errors import ConfigError, DataFormatError, NumericalError, StoreBusyError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def get_project_root() -> Path:
    return Path(__file__).resolve().parent.parent


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 is our data-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=str(get_project_root() / "config" / "settings.yaml"),
                        help="Settings YAML")
    common.add_argument("--preset", type=str, help="Preset name (desk, paper)")
    common.add_argument("--verbose", action="store_true", help="Debug-level logging")

    parser = _Parser(description="VGDP desk benchmark")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", parents=[common], help="Record expert demos into a store")
    p.add_argument("--task", required=True, choices=VALID_TASKS)
    p.add_argument("--level", required=True, choices=VALID_LEVELS)
    p.add_argument("--demos", type=int, help="Episodes to record (default: evaluation.demos)")
    p.add_argument("--out", required=True, help="Store directory")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", parents=[common], help="Train a policy on a demo store")
    p.add_argument("--data", required=True, help="Store directory")
    p.add_argument("--variant", default="vgdp")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="Checkpoint path")
    p.add_argument("--resume", help="Checkpoint to continue from")
    p.add_argument("--steps", type=int, help="Override training.steps")
    p.add_argument("--fusion-mode", choices=("cross_attention", "concat", "early_fusion"))
    p.add_argument("--no-residual", action="store_true", help="Disable attention residuals")
    p.add_argument("--no-modality-dropout", action="store_true", help="Disable modality dropout")

    p = sub.add_parser("eval", parents=[common], help="Closed-loop evaluation")
    p.add_argument("--ckpt", help="Checkpoint path")
    p.add_argument("--baseline", choices=("expert", "random"), help="Evaluate a scripted baseline instead")
    p.add_argument("--task", choices=VALID_TASKS, help="Defaults to the checkpoint's task")
    p.add_argument("--level", required=True, choices=VALID_LEVELS)
    p.add_argument("--split", required=True, choices=VALID_SPLITS)
    p.add_argument("--trials", type=int, help="Default: evaluation.trials")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fault", default="none", choices=("none", "rgb_missing", "pc_missing"))

    p = sub.add_parser("ablate", parents=[common], help="Run the variant x task x level x seed matrix")
    p.add_argument("--tasks", nargs="+", choices=VALID_TASKS)
    p.add_argument("--levels", nargs="+", choices=VALID_LEVELS)
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--variants", nargs="+")
    p.add_argument("--out", default="runs", help="Work directory (demos, checkpoints, results.csv)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--demos", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("report", parents=[common], help="Render results.csv as csv, md or svg")
    p.add_argument("--runs", required=True, help="Directory holding results.csv")
    p.add_argument("--format", required=True, choices=("csv", "md", "svg"))
    p.add_argument("--out", help="Output file (csv, md) or directory (svg)")
    return parser


def _fusion_overrides(args) -> dict:
    overrides = {}
    if getattr(args, "fusion_mode", None):
        overrides["fusion.fusion_mode"] = args.fusion_mode
    if getattr(args, "no_residual", False):
        overrides["fusion.use_residual"] = False
    if getattr(args, "no_modality_dropout", False):
        overrides["fusion.use_modality_dropout"] = False
    return overrides


def _collect(args, settings, logger) -> int:
    from .dataset import collect_demos
    demos = args.demos if args.demos is not None else settings.evaluation.demos
    logger.info(f"=== Collecting {demos} {args.task} demos at {args.level} ===")
    collect_demos(settings, args.task, args.level, demos, args.out, seed=args.seed)
    logger.info(f"=== Collection complete: {args.out} ===")
    return EXIT_OK


def _train(args, settings, logger) -> int:
    from .trainer import train_policy
    logger.info(f"=== Training {args.variant} (seed {args.seed}) on {args.data} ===")
    result = train_policy(args.data, settings, args.variant, args.seed, args.out, steps=args.steps,
                          resume=args.resume)
    logger.info(f"=== Training complete. loss {result.initial_loss:.4f} -> {result.final_loss:.4f}, "
                f"checkpoint {result.checkpoint} ===")
    return EXIT_OK


def _eval(args, settings, logger) -> int:
    from .evaluator import ExpertRunner, RandomRunner, evaluate_policy, evaluate_runner
    from .sim import Simulator
    trials = args.trials if args.trials is not None else settings.evaluation.trials
    if args.baseline:
        if not args.task:
            raise ConfigError("eval --baseline needs --task")
        if args.baseline == "expert":
            runner = ExpertRunner(Simulator(settings))
        else:
            runner = RandomRunner(settings.task(args.task).action_dim, args.seed)
        result = evaluate_runner(settings, runner, args.task, args.level, args.split, trials, args.seed,
                                 variant=args.baseline)
    else:
        if not args.ckpt:
            raise ConfigError("eval needs --ckpt or --baseline")
        result = evaluate_policy(args.ckpt, args.level, args.split, trials, args.seed, task=args.task,
                                 fault=args.fault)
    logger.info(f"=== {result.variant or 'policy'} {result.task} {result.level}/{result.split}: "
                f"{result.successes}/{result.trials} successes, SR={result.success_rate:.3f} ===")
    print(f"{result.success_rate:.4f}")
    return EXIT_OK


def _ablate(args, settings, logger) -> int:
    from .ablation import run_ablation_matrix
    from .report import write_markdown
    logger.info(f"=== Ablation matrix into {args.out} ===")
    report = run_ablation_matrix(settings, tasks=args.tasks, levels=args.levels, seeds=args.seeds,
                                 work_dir=args.out, variants=args.variants, workers=args.workers,
                                 demos=args.demos, trials=args.trials, steps=args.steps)
    if any(r.ok for r in report.rows):
        write_markdown(report, Path(args.out) / "report.md")
    logger.info(f"=== Ablation complete. {len(report.rows)} rows ===")
    return EXIT_OK


def _report(args, settings, logger) -> int:
    from .config_loader import config_hash
    from .report import emit_report, read_csv
    from .ablation import RESULTS_FILE
    report = read_csv(Path(args.runs) / RESULTS_FILE)
    current = config_hash(settings)
    if not report.config_hash:
        report.config_hash = current
    elif report.config_hash != current:
        logger.warning(f"Results were produced under config {report.config_hash}, "
                       f"current config is {current}; reporting the stored hash")
    default_out = {"csv": "report.csv", "md": "report.md", "svg": "charts"}[args.format]
    emit_report(report, args.format, args.out or Path(args.runs) / default_out)
    return EXIT_OK


COMMANDS = {"collect": _collect, "train": _train, "eval": _eval, "ablate": _ablate, "report": _report}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)

    from .config_loader import load_settings
    from .utils import setup_logging

    try:
        settings = load_settings(args.config, preset=args.preset, overrides=_fusion_overrides(args))
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    if args.verbose:
        settings.logging["level"] = "DEBUG"
    logger = setup_logging(settings, root=get_project_root())

    try:
        return COMMANDS[args.command](args, settings, logger)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except (DataFormatError, StoreBusyError, FileNotFoundError, OSError) as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
