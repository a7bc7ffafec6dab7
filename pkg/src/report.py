"""
Run reports: CSV (fixed column order), Markdown tables, SVG charts.

All outputs are byte-deterministic for a given report: rows are written in
sorted order, numbers with fixed precision, and SVGs without timestamps and
with a fixed id salt.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import ConfigError
from .metrics import SuccessRow, cell_rates, compute_metrics

logger = logging.getLogger("vgdp")

HASH_PREFIX = "# config_hash: "
CSV_COLUMNS = ("variant", "task", "level", "split", "seed", "successes", "trials", "success_rate", "status")
FORMATS = ("csv", "md", "svg")
VARIANT_ORDER = ("vgdp", "no_residual", "no_dropout", "concat", "early_fusion", "rgb_only", "pc_only")


@dataclass
class RunReport:
    rows: list = field(default_factory=list)
    config_hash: str = ""
    seeds: tuple = ()

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: (_variant_rank(r.variant), r.task, r.level, r.split, r.seed))

    @property
    def variants(self) -> list:
        return sorted({r.variant for r in self.rows}, key=_variant_rank)


def _variant_rank(name: str) -> tuple:
    return (VARIANT_ORDER.index(name), name) if name in VARIANT_ORDER else (len(VARIANT_ORDER), name)


def _fmt_rate(rate: float) -> str:
    return "nan" if math.isnan(rate) else f"{rate:.3f}"


def _fmt_pct(value: float, defined: bool = True) -> str:
    return "n/a (zero mean)" if not defined else f"{value:.1f}%"


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_csv(report: RunReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        if report.config_hash:
            f.write(f"{HASH_PREFIX}{report.config_hash}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in report.sorted_rows():
            writer.writerow([r.variant, r.task, r.level, r.split, r.seed, r.successes, r.trials,
                             _fmt_rate(r.success_rate), r.status])
    return path


def read_csv(path) -> RunReport:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"results file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        lines = f.read().splitlines()
    digest = ""
    if lines and lines[0].startswith(HASH_PREFIX):
        digest = lines.pop(0)[len(HASH_PREFIX):].strip()
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    rows = [SuccessRow(variant=d["variant"], task=d["task"], level=d["level"], split=d["split"],
                       seed=int(d["seed"]), successes=int(d["successes"]), trials=int(d["trials"]),
                       status=d["status"]) for d in reader]
    return RunReport(rows=rows, config_hash=digest, seeds=tuple(sorted({r.seed for r in rows})))


# ---------------------------------------------------------------------------
# Markdown
# ---------------------------------------------------------------------------

def _table(header: list, body: list) -> list:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * len(header)) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    return lines


def render_markdown(report: RunReport) -> str:
    lines = ["# Ablation report", ""]
    if report.config_hash:
        lines += [f"Config hash: `{report.config_hash}`", ""]
    if report.seeds:
        lines += [f"Seeds: {', '.join(str(s) for s in report.seeds)}", ""]
    rows = report.sorted_rows()
    failed = [r for r in rows if r.status != "ok"]
    if not any(r.ok for r in rows):
        lines += ["No evaluated cells.", ""]
        return "\n".join(lines)

    rates = cell_rates(rows)
    tasks = sorted({r.task for r in rows})
    levels = sorted({r.level for r in rows})
    variants = report.variants

    lines += ["## Success rate by task, level and split", ""]
    header = ["variant"] + [f"{t} {lv} {s}" for t in tasks for lv in levels for s in ("iid", "ood")]
    body = [[v] + [_fmt_rate(rates.get((v, t, lv, s), float("nan")))
                   for t in tasks for lv in levels for s in ("iid", "ood")] for v in variants]
    lines += _table(header, body) + [""]

    metrics = compute_metrics(rows)
    lines += ["## Cross-task (averaged over levels and splits)", ""]
    body = [[v] + [_fmt_rate(metrics[v].task_rates.get(t, float("nan"))) for t in tasks]
            + [_fmt_rate(metrics[v].mean_sr)]
            for v in variants if v in metrics]
    lines += _table(["variant"] + tasks + ["mean"], body) + [""]

    lines += ["## Cross-level (averaged over tasks and splits)", ""]
    body = [[v] + [_fmt_rate(metrics[v].level_rates.get(lv, float("nan"))) for lv in levels]
            for v in variants if v in metrics]
    lines += _table(["variant"] + levels, body) + [""]

    lines += ["## Stability and generalization", ""]
    body = [[v, _fmt_rate(m.mean_sr), _fmt_rate(m.iid_sr), _fmt_rate(m.ood_sr), _fmt_rate(m.gap),
             _fmt_pct(m.cross_task.percent, m.cross_task.defined),
             _fmt_pct(m.cross_level.percent, m.cross_level.defined)]
            for v, m in ((v, metrics[v]) for v in variants if v in metrics)]
    lines += _table(["variant", "mean SR", "IID", "OOD", "IID−OOD gap", "cross-task dispersion",
                     "cross-level dispersion"], body) + [""]

    if failed:
        lines += ["## Failed cells", ""]
        lines += [f"- {r.variant} / {r.task} / {r.level} / {r.split} / seed {r.seed}" for r in failed]
        lines.append("")
    return "\n".join(lines)


def write_markdown(report: RunReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_markdown(report), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

def _save_svg(fig, path: Path):
    with matplotlib.rc_context({"svg.hashsalt": "vgdp-report", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _grouped_bars(groups: list, variants: list, value, title: str, path: Path):
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(groups) + 2.0), 3.6))
    width = 0.8 / max(len(variants), 1)
    for i, variant in enumerate(variants):
        xs = [g + (i - (len(variants) - 1) / 2) * width for g in range(len(groups))]
        ax.bar(xs, [value(variant, group) for group in groups], width, label=variant)
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels(groups)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("success rate")
    ax.set_title(title)
    ax.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    _save_svg(fig, path)


def write_svg(report: RunReport, out_dir) -> list:
    """Per-task and per-level bar charts, plus mean SR vs. |IID−OOD gap| at the hardest level."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not any(r.ok for r in report.rows):
        raise ValueError("cannot chart a report without evaluated cells")
    metrics = compute_metrics(report.rows)
    variants = [v for v in report.variants if v in metrics]
    tasks = sorted({r.task for r in report.rows if r.ok})
    levels = sorted({r.level for r in report.rows if r.ok})

    def task_rate(v, t):
        return metrics[v].task_rates.get(t, 0.0)

    def level_rate(v, lv):
        return metrics[v].level_rates.get(lv, 0.0)

    paths = [out_dir / "success_by_task.svg", out_dir / "success_by_level.svg", out_dir / "iid_ood_scatter.svg"]
    _grouped_bars(tasks, variants, task_rate, "Success rate by task", paths[0])
    _grouped_bars(levels, variants, level_rate, "Success rate by randomization level", paths[1])

    hardest = levels[-1]
    at_level = compute_metrics(report.rows, level=hardest)
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    for variant in variants:
        if variant not in at_level:
            continue
        m = at_level[variant]
        gap = abs(m.gap) if not math.isnan(m.gap) else 0.0
        ax.scatter([gap], [m.mean_sr], label=variant)
        ax.annotate(variant, (gap, m.mean_sr), fontsize="small", xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("|IID − OOD| gap")
    ax.set_ylabel("mean success rate")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(f"Generalization at {hardest}")
    fig.tight_layout()
    _save_svg(fig, paths[2])
    return paths


def emit_report(report: RunReport, fmt: str, out_path) -> list:
    """Write one format. `out_path` is a file for csv/md and a directory for svg."""
    if fmt == "csv":
        paths = [write_csv(report, out_path)]
    elif fmt == "md":
        paths = [write_markdown(report, out_path)]
    elif fmt == "svg":
        paths = write_svg(report, out_path)
    else:
        raise ConfigError(f"unknown report format '{fmt}'. Must be one of {FORMATS}")
    for p in paths:
        logger.info(f"Report written to {p}")
    return paths
