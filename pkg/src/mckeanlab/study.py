"""Convergence studies: one experiment swept along one refinement axis."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig
from .experiments import RUNNERS, _write_rows
from .report import _jsonable

AXES = ("N", "dt", "h", "eps", "bandwidth")
STOCHASTIC = ("particles-moderated", "conditional", "picard", "girsanov-check")


class StudyError(RuntimeError):
    """A (level, seed) cell failed; the original error is chained."""

    def __init__(self, message: str, level: float, seed: int):
        super().__init__(message)
        self.level = level
        self.seed = seed


@dataclass
class StudyTable:
    axis: str
    metric: str
    levels: list
    rows: list = field(default_factory=list)        # (level, seed, value)
    medians: list = field(default_factory=list)
    slope: float | None = None

    @property
    def monotone_nonincreasing(self) -> bool:
        m = np.asarray(self.medians)
        return bool(np.all(np.diff(m) <= 0))

    def as_dict(self) -> dict:
        return {"axis": self.axis, "metric": self.metric, "levels": self.levels, "medians": self.medians,
                "slope": self.slope, "monotone_nonincreasing": self.monotone_nonincreasing,
                "rows": [list(r) for r in self.rows]}


def apply_level(cfg: ExperimentConfig, axis: str, level: float, first: float) -> ExperimentConfig:
    """Copy of ``cfg`` with the axis parameter set to ``level``."""
    out = cfg.copy()
    time_section = "particles" if "particles" in cfg.sections else "grid"
    if axis == "N":
        out.set("particles", "N", int(level))
    elif axis == "dt":
        out.set(time_section, "dt", float(level))
    elif axis == "h":
        L = cfg.get("grid", "half_width", 8.0)
        out.set("grid", "n_cells", int(round(2 * L / level)))
        if cfg.get("study", "couple_dt", False):
            # refine time with space so both error terms shrink together
            out.set("grid", "dt", cfg.get("grid", "dt", 1e-3) * level / first)
    elif axis == "eps":
        out.set("model", "eps", float(level))
    elif axis == "bandwidth":
        out.set("estimator", "bandwidth", float(level))
    else:
        raise ValueError(f"unknown axis {axis!r}; choose from {AXES}")
    return out


def log_log_slope(levels, values) -> float | None:
    x, y = np.asarray(levels, dtype=float), np.asarray(values, dtype=float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return None
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def run_convergence_study(cfg: ExperimentConfig, axis: str | None = None, levels: Sequence[float] | None = None,
                          seeds: Sequence[int] | None = None, metric: str | None = None, out_dir=None) -> StudyTable:
    """Run ``[study] experiment`` at each level and seed; median over seeds; log-log slope.

    Arguments left as None come from the ``[study]`` section.
    """
    axis = axis or cfg.get("study", "axis")
    levels = list(levels) if levels is not None else cfg.get_list("study", "levels")
    seeds = list(seeds) if seeds is not None else cfg.get_list("study", "seeds", [cfg.seed], int)
    metric = metric or cfg.get("study", "metric")
    experiment = cfg.get("study", "experiment")
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; choose from {AXES}")
    if experiment not in RUNNERS:
        raise ValueError(f"unknown experiment {experiment!r}")
    if len(levels) == 2:
        raise ValueError("a study needs one level (degenerate) or at least three")
    if experiment in STOCHASTIC and len(levels) > 1 and len(seeds) < 3:
        raise ValueError("stochastic studies need at least three seeds")

    table = StudyTable(axis, metric, [float(v) for v in levels])
    for level in levels:
        values = []
        for seed in seeds:
            sub = apply_level(cfg, axis, level, levels[0])
            sub = ExperimentConfig(experiment, seed, sub.output_dir, sub.sections)
            try:
                _, metrics = RUNNERS[experiment](sub)
            except Exception as exc:
                raise StudyError(f"{experiment} failed at {axis}={level:g}, seed={seed}: {exc}", level, seed) from exc
            if metric not in metrics:
                raise KeyError(f"{experiment} reports no metric {metric!r}")
            values.append(float(metrics[metric]))
            table.rows.append((float(level), int(seed), values[-1]))
        table.medians.append(float(np.median(values)))
    table.slope = log_log_slope(table.levels, table.medians) if len(levels) >= 3 else None

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "study.csv", ["level", "seed", metric], table.rows)
        (out / "study.json").write_text(json.dumps(_jsonable(table.as_dict()), indent=2, sort_keys=True) + "\n")
        (out / "config.ini").write_text(cfg.to_ini())
    return table
