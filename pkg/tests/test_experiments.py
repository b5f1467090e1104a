import csv
import json

import numpy as np
import pytest

from mckeanlab.config import default_config
from mckeanlab.experiments import RUNNERS, run

SMALL = {
    "fp-solve": {"grid.n_cells": 256, "grid.dt": 4e-3, "reference.l1_bound": 1e-2},
    "particles-moderated": {"particles.N": 2000, "particles.dt": 0.05, "reference.n_cells": 256,
                            "reference.dt": 1e-2, "tolerances.w1_particles": 0.08},
    "verify-mild": {"mild.n_random": 3, "grid.n_cells": 128, "grid.dt": 1e-2},
    "conditional": {"particles.N": 2000, "particles.dt": 0.05},
    "picard": {"particles.N": 2000, "particles.dt": 0.05, "picard.K": 5},
    "girsanov-check": {"particles.N": 4000, "particles.dt": 0.05, "particles.record_stride": 5},
}


def _small(sub):
    cfg = default_config(sub, seed=1)
    for key, value in SMALL[sub].items():
        section, name = key.split(".")
        cfg.set(section, name, value)
    return cfg


@pytest.mark.parametrize("sub", sorted(RUNNERS))
def test_runner_writes_report_and_config(sub, tmp_path):
    rep, metrics = run(_small(sub), tmp_path)
    assert rep.passed, rep.summary()
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["title"] and all(c["provenance"] for c in data["checks"])
    assert (tmp_path / "config.ini").read_text() == _small(sub).to_ini()
    assert metrics


def test_fp_solve_barenblatt_reference(tmp_path):
    cfg = default_config("fp-solve")
    for key, value in {"model.sigma": "pme(2)", "initial.law": "barenblatt(2, 1)", "reference.kind": "barenblatt",
                       "grid.half_width": 4, "grid.n_cells": 400, "grid.dt": 5e-3, "grid.T": 1.0,
                       "reference.l1_bound": 5e-3}.items():
        cfg.set(*key.split("."), value)
    rep, metrics = run(cfg, tmp_path)
    assert rep.passed and metrics["l1_error"] < 5e-3
    rows = list(csv.reader((tmp_path / "density.csv").open()))
    assert len(rows) > 2


def test_conditional_csv_columns(tmp_path):
    run(_small("conditional"), tmp_path)
    with (tmp_path / "coefficients.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0]) == {"t", "x", "lambda", "gamma", "rho_x"}
    lam = np.array([float(r["lambda"]) for r in rows])
    assert np.all(np.abs(lam) <= 1.0)


def test_picard_distances_csv(tmp_path):
    _, metrics = run(_small("picard"), tmp_path)
    lines = (tmp_path / "distances.csv").read_text().splitlines()
    assert lines[0] == "k,D_k" and len(lines) == 6
    assert metrics["certified"]


def test_run_rejects_non_experiments():
    with pytest.raises(ValueError):
        run(default_config("selftest"))
