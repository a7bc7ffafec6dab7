"""
Ablation matrix: every variant × task × level × seed is trained on the same
demos and evaluated on IID and OOD scenes (half the trials each).

Cells are independent. A failing cell is logged and marked failed; the
others still run. With workers > 1 cells run in a process pool; results are
gathered in matrix order, so the report does not depend on scheduling.
"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config_loader import VALID_SPLITS, Settings, config_hash
from .dataset import collect_demos
from .evaluator import evaluate_policy
from .metrics import SuccessRow
from .policy import VARIANTS, resolve_variant
from .report import RunReport, write_csv
from .storage import INDEX_FILE
from .trainer import load_policy, train_policy

logger = logging.getLogger("vgdp")

RESULTS_FILE = "results.csv"


@dataclass(frozen=True)
class Cell:
    variant: str
    task: str
    level: str
    seed: int

    @property
    def label(self) -> str:
        return f"{self.variant}/{self.task}/{self.level}/seed{self.seed}"


def demo_dir(work_dir, task: str, level: str, seed: int) -> Path:
    return Path(work_dir) / "demos" / f"{task}_{level}_s{seed}"


def checkpoint_file(work_dir, cell: Cell) -> Path:
    return Path(work_dir) / "checkpoints" / f"{cell.variant}_{cell.task}_{cell.level}_s{cell.seed}.ckpt"


def run_cell(settings: Settings, cell: Cell, work_dir, trials: int, steps: int = None) -> list:
    """Train and evaluate one cell. Never raises: failures become 'failed' rows."""
    try:
        result = train_policy(demo_dir(work_dir, cell.task, cell.level, cell.seed), settings, cell.variant,
                              cell.seed, checkpoint_file(work_dir, cell), steps=steps)
        loaded = load_policy(result.checkpoint)
        rows = []
        for split in VALID_SPLITS:
            ev = evaluate_policy(loaded, cell.level, split, trials // 2, cell.seed, task=cell.task)
            rows.append(SuccessRow(cell.variant, cell.task, cell.level, split, cell.seed, ev.successes, ev.trials))
        return rows
    except Exception as e:
        logger.error(f"Ablation cell {cell.label} failed: {e}", exc_info=True)
        return [SuccessRow(cell.variant, cell.task, cell.level, split, cell.seed, 0, 0, status="failed")
                for split in VALID_SPLITS]


def matrix_cells(variants, tasks, levels, seeds) -> list:
    return [Cell(v, t, lv, s) for v, t, lv, s in itertools.product(variants, tasks, levels, seeds)]


def run_ablation_matrix(settings: Settings, tasks=None, levels=None, seeds=None, work_dir="runs",
                        variants=None, workers: int = 1, demos: int = None, trials: int = None,
                        steps: int = None) -> RunReport:
    ev = settings.evaluation
    tasks = list(tasks or ev.ablation_tasks)
    levels = list(levels or ev.ablation_levels)
    seeds = [int(s) for s in (seeds if seeds is not None else ev.ablation_seeds)]
    variants = list(variants or ev.ablation_variants or VARIANTS)
    for name in variants:
        resolve_variant(name)
    demos = ev.demos if demos is None else demos
    trials = ev.trials if trials is None else trials

    for task, level, seed in itertools.product(tasks, levels, seeds):
        path = demo_dir(work_dir, task, level, seed)
        if (path / INDEX_FILE).exists():
            logger.info(f"Reusing demos at {path}")
            continue
        collect_demos(settings, task, level, demos, path, seed=seed)

    cells = matrix_cells(variants, tasks, levels, seeds)
    logger.info(f"Ablation matrix: {len(cells)} cells, {workers} worker(s)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, settings, cell, work_dir, trials, steps) for cell in cells]
            cell_rows = [f.result() for f in futures]
    else:
        cell_rows = [run_cell(settings, cell, work_dir, trials, steps) for cell in cells]

    report = RunReport(rows=[row for rows in cell_rows for row in rows], config_hash=config_hash(settings),
                       seeds=tuple(seeds))
    failed = sum(1 for rows in cell_rows if rows[0].status != "ok")
    write_csv(report, Path(work_dir) / RESULTS_FILE)
    logger.info(f"Ablation matrix done: {len(cells) - failed}/{len(cells)} cells succeeded")
    return report
