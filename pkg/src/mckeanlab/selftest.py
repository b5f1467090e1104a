"""Run the acceptance criteria and write one JSON report per criterion."""
from __future__ import annotations

import json
import logging
import time
from pathlib import Path
from typing import Iterable

from .acceptance import CRITERIA, DEFAULT_SEED, max_principle_and_energy
from .report import VerificationReport

log = logging.getLogger(__name__)


def run_selftest(scale: str = "smoke", out_dir=None, seed: int = DEFAULT_SEED,
                 only: Iterable[int] | None = None) -> dict[int, VerificationReport]:
    """Reports keyed by criterion number; files ``criterion_NN.json`` and ``summary.json``.

    Criteria 2 and 3 share one pass over the solver matrix.
    """
    wanted = sorted(CRITERIA) if only is None else sorted(set(only))
    unknown = [i for i in wanted if i not in CRITERIA]
    if unknown:
        raise ValueError(f"no criteria numbered {unknown}")
    reports: dict[int, VerificationReport] = {}
    for i in wanted:
        if i in reports:
            continue
        name, fn = CRITERIA[i]
        start = time.perf_counter()
        if i in (2, 3):
            mp, en = max_principle_and_energy(scale, seed)
            for j, rep in ((2, mp), (3, en)):
                if j in wanted:
                    reports[j] = rep
        else:
            reports[i] = fn(scale, seed)
        log.info("criterion %d (%s): %s in %.1fs", i, name, "PASS" if reports[i].passed else "FAIL",
                 time.perf_counter() - start)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, rep in reports.items():
            rep.info["criterion"] = i
            rep.info["scale"] = scale
            rep.info["seed"] = seed
            rep.write(out / f"criterion_{i:02d}.json")
        summary = {"scale": scale, "seed": seed,
                   "criteria": {str(i): {"name": CRITERIA[i][0], "pass": rep.passed, "failures": rep.failures()}
                                for i, rep in reports.items()}}
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return reports
