"""
Success-rate metrics: mean success rate, IID−OOD gap, and relative
dispersion (population coefficient of variation, in percent) across tasks
and across randomization levels.
"""

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SuccessRow:
    """One evaluated (variant, task, level, split, seed) cell."""
    variant: str
    task: str
    level: str
    split: str
    seed: int
    successes: int
    trials: int
    status: str = "ok"

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @property
    def ok(self) -> bool:
        return self.status == "ok" and self.trials > 0


@dataclass(frozen=True)
class Dispersion:
    percent: float
    defined: bool = True


@dataclass
class VariantMetrics:
    variant: str
    mean_sr: float
    iid_sr: float
    ood_sr: float
    gap: float
    cross_task: Dispersion
    cross_level: Dispersion
    task_rates: dict = field(default_factory=dict)
    level_rates: dict = field(default_factory=dict)


def relative_dispersion(rates) -> Dispersion:
    """Population std / mean × 100. A zero mean gives NaN flagged as undefined."""
    rates = np.asarray(list(rates), dtype=np.float64)
    if rates.size == 0:
        raise ValueError("relative_dispersion: no rates given")
    mean = float(rates.mean())
    if mean == 0.0:
        return Dispersion(float("nan"), defined=False)
    return Dispersion(float(rates.std(ddof=0) / mean * 100.0))


def iid_ood_gap(iid_rate: float, ood_rate: float) -> float:
    return iid_rate - ood_rate


def cell_rates(rows: list) -> dict:
    """(variant, task, level, split) → success rate pooled over seeds."""
    pooled = defaultdict(lambda: [0, 0])
    for row in rows:
        if not row.ok:
            continue
        key = (row.variant, row.task, row.level, row.split)
        pooled[key][0] += row.successes
        pooled[key][1] += row.trials
    return {key: s / n for key, (s, n) in pooled.items()}


def _mean(values) -> float:
    values = list(values)
    return float(np.mean(values)) if values else float("nan")


def compute_metrics(rows: list, level: str = None) -> dict:
    """variant → VariantMetrics over successful cells (optionally one level only)."""
    if level is not None:
        rows = [r for r in rows if r.level == level]
    rates = cell_rates(rows)
    if not rates:
        raise ValueError("compute_metrics: success table has no evaluated cells")

    by_variant = defaultdict(dict)
    for (variant, task, lvl, split), rate in rates.items():
        by_variant[variant][(task, lvl, split)] = rate

    out = {}
    for variant, cells in by_variant.items():
        tasks = sorted({k[0] for k in cells})
        levels = sorted({k[1] for k in cells})
        task_rates = {t: _mean(r for k, r in cells.items() if k[0] == t) for t in tasks}
        level_rates = {lv: _mean(r for k, r in cells.items() if k[1] == lv) for lv in levels}
        iid = _mean(r for k, r in cells.items() if k[2] == "iid")
        ood = _mean(r for k, r in cells.items() if k[2] == "ood")
        out[variant] = VariantMetrics(
            variant=variant,
            mean_sr=_mean(cells.values()),
            iid_sr=iid,
            ood_sr=ood,
            gap=iid_ood_gap(iid, ood) if not (math.isnan(iid) or math.isnan(ood)) else float("nan"),
            cross_task=relative_dispersion(task_rates.values()),
            cross_level=relative_dispersion(level_rates.values()),
            task_rates=task_rates,
            level_rates=level_rates,
        )
    return out
