"""One runner per CLI subcommand.

Each runner takes an :class:`ExperimentConfig`, returns ``(report, metrics)``
and, given an output directory, writes its arrays as CSV and its report as
JSON there. Nothing time- or host-dependent goes into the files, so equal
configs give byte-identical outputs.
"""
from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np
from scipy import stats

from . import conditional as cm
from .coefficients import model_from_spec
from .estimators import MollifierSpec
from .config import ExperimentConfig
from .fields import GridSpec, write_path_csv
from .fp_solver import barenblatt, energy_report, initial_density, mass_report, project_initial, solve_nonlinear_fp
from .metrics import wasserstein1_1d
from .mild import (CONTRACTION_BOUND, choose_gamma, contraction_factor, mild_report, pointwise_factor,
                   symbol_bound_check)
from .particles import initial_law, martingale_residual, simulate_moderated
from .report import VerificationReport

_CALL = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def _args(spec: str):
    match = _CALL.match(spec)
    if not match:
        raise ValueError(f"cannot parse {spec!r}")
    return match.group(1), [float(a) for a in match.group(2).split(",") if a.strip()]


def _grid(cfg: ExperimentConfig, section: str = "grid") -> GridSpec:
    return GridSpec.from_horizon(cfg.get(section, "half_width", 8.0), cfg.get(section, "n_cells", 512),
                                 cfg.get(section, "dt", 1e-3), cfg.get(section, "T", 0.5))


def _model(cfg: ExperimentConfig):
    return model_from_spec(cfg.get("model", "sigma"), cfg.get("model", "r_max", 10.0))


def _coefficients(cfg: ExperimentConfig) -> cm.CoefficientSet:
    s = "coefficients"
    return cm.CoefficientSet.from_names(b=cfg.get(s, "b", "zero"), sigma=cfg.get(s, "sigma", "const(1)"),
                                        ell=cfg.get(s, "ell", "tanh"), gamma=cfg.get(s, "gamma", "const(1)"))


def _estimator(cfg: ExperimentConfig) -> cm.EstimatorConfig:
    s = "estimator"
    bw = cfg.get(s, "bandwidth", None, float)
    return cm.EstimatorConfig(cfg.get(s, "kind", "nw"), bw, cfg.get(s, "n_bins", 50))


def _out(out_dir) -> Path | None:
    if out_dir is None:
        return None
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _finish(rep: VerificationReport, cfg: ExperimentConfig, out: Path | None, metrics: dict):
    rep.info["config"] = cfg.as_dict()
    rep.info["metrics"] = metrics
    if out is not None:
        rep.write(out / "report.json")
        (out / "config.ini").write_text(cfg.to_ini())
    return rep, metrics


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# --- fp-solve -----------------------------------------------------------------------------


def reference_density(kind: str, cfg: ExperimentConfig, T: float):
    """Exact density at time T, or None: ``heat`` (constant sigma, normal law) or ``barenblatt``."""
    law = cfg.get("initial", "law")
    name, args = _args(law)
    if kind == "heat":
        model = _model(cfg)
        if name != "normal" or model.name.split("(")[0] != "constant":
            raise ValueError("the heat reference needs constant sigma and a normal initial law")
        mean = args[0] if args else 0.0
        var = args[1] if len(args) > 1 else 1.0
        s2 = float(model.sigma_sq(0.0))
        return stats.norm(mean, np.sqrt(var + s2 * T)).pdf
    if kind == "barenblatt":
        if name != "barenblatt":
            raise ValueError("the Barenblatt reference needs a barenblatt initial law")
        m, t0 = args
        return barenblatt(m, t0 + T)
    if kind in ("", "none"):
        return None
    raise ValueError(f"unknown reference {kind!r}")


def run_fp_solve(cfg: ExperimentConfig, out_dir=None):
    model = _model(cfg)
    eps = cfg.get("model", "eps", 0.0)
    grid = _grid(cfg)
    u0 = project_initial(initial_density(cfg.get("initial", "law")), grid)
    traj = solve_nonlinear_fp(model, u0, eps, grid)
    rep = VerificationReport("fp-solve")
    rep.extend(energy_report(traj, model, eps))
    rep.extend(mass_report(traj, cfg.tolerance("mass")))
    metrics = {"sup_final": traj.final.sup, "mass_final": traj.final.mass}
    exact = reference_density(cfg.get("reference", "kind", "none"), cfg, grid.T)
    if exact is not None:
        err = float(grid.h * np.sum(np.abs(traj.final.values - exact(grid.centers))))
        metrics["l1_error"] = err
        rep.add("l1_error", err, cfg.get("reference", "l1_bound", 1e-3), 0.0, "upper", "exact-solution")
    out = _out(out_dir)
    if out is not None:
        stride = max(1, grid.n_steps // cfg.get("output", "snapshots", 50))
        write_path_csv(traj, out / "density.csv", stride=stride)
    return _finish(rep, cfg, out, metrics)


# --- particles-moderated -------------------------------------------------------------------


def run_particles_moderated(cfg: ExperimentConfig, out_dir=None):
    model = _model(cfg)
    law_spec = cfg.get("initial", "law")
    N = cfg.get("particles", "N", 10000)
    dt = cfg.get("particles", "dt", 1e-2)
    T = cfg.get("particles", "T", 0.5)
    martingale = cfg.get("martingale", "enabled", False)
    ref_grid = GridSpec.from_horizon(cfg.get("reference", "half_width", 8.0), cfg.get("reference", "n_cells", 1024),
                                     dt if martingale else cfg.get("reference", "dt", 1e-3), T)
    u0 = project_initial(initial_density(law_spec), ref_grid)
    ref = solve_nonlinear_fp(model, u0, 0.0, ref_grid)
    stride = 1 if martingale else int(round(T / dt))
    bw = cfg.get("estimator", "bandwidth", None, float)
    spec = None if bw is None else MollifierSpec("gaussian", bw)
    path, _ = simulate_moderated(model, initial_law(law_spec), N, spec, dt, T, cfg.seed, record_stride=stride)
    w1 = wasserstein1_1d(path.final.positions, ref.final)
    rep = VerificationReport("particles-moderated")
    rep.add("w1_final", w1, cfg.tolerance("w1_particles"), 0.0, "upper", "particle-pde-agreement")
    rep.add("clamp_fraction", path.clamp_fraction, 0.0, 0.0, "upper", "plumbing")
    if martingale:
        rep.extend(martingale_residual(path, ref, model, n_se=cfg.tolerance("n_se")), "mp:")
    metrics = {"w1": w1, "bandwidth": path.info["bandwidth"], "clamp_fraction": path.clamp_fraction}
    out = _out(out_dir)
    if out is not None:
        _write_rows(out / "final_positions.csv", ["id", "x"], zip(path.final.ids.tolist(), path.final.positions))
    return _finish(rep, cfg, out, metrics)


# --- verify-mild ---------------------------------------------------------------------------


def run_verify_mild(cfg: ExperimentConfig, out_dir=None):
    rep = VerificationReport("verify-mild")
    metrics = {}
    gammas = cfg.get_list("mild", "gammas", [0.5, 1.0, 2.0])
    n_random = cfg.get("mild", "n_random", 20)
    for g in gammas:
        sub = symbol_bound_check(g, n_random=n_random, seed=cfg.seed)
        sub["symbol_sup"].tolerance = cfg.tolerance("symbol")
        sub["operator_ratio_max"].tolerance = cfg.tolerance("operator")
        rep.extend(sub, f"gamma={g:g}:")
        metrics[f"operator_ratio@{g:g}"] = sub["operator_ratio_max"].value
    model = _model(cfg)
    grid = _grid(cfg)
    a = solve_nonlinear_fp(model, project_initial(initial_density(cfg.get("initial", "law")), grid), 0.0, grid)
    b = solve_nonlinear_fp(model, project_initial(initial_density(cfg.get("initial", "law_b")), grid), 0.0, grid)
    u_max = max(a.snapshots.max(), b.snapshots.max())
    if u_max > model.r_max:
        raise ValueError(f"trajectories exceed r_max: {u_max:g} > {model.r_max:g}")
    gamma = choose_gamma(model, model.r_max)
    fac = contraction_factor(a, b, model, gamma)
    pw = pointwise_factor(a, b, model, gamma)
    rep.add("contraction_factor", fac, CONTRACTION_BOUND, 0.0, "upper", "mild-contraction", pointwise_bound=pw)
    rep.extend(mild_report(a, None, model, gamma), "fixed:")
    rep["fixed:fixed_point_gap"].tolerance = cfg.tolerance("mild_gap")
    metrics.update(contraction_factor=fac, pointwise_bound=pw, gamma=gamma)
    return _finish(rep, cfg, _out(out_dir), metrics)


# --- conditional McKean ----------------------------------------------------------------------


def _particles(cfg: ExperimentConfig):
    return (cfg.get("particles", "N", 20000), cfg.get("particles", "dt", 1e-2), cfg.get("particles", "T", 0.5),
            cfg.get("particles", "record_stride", 10))


def run_conditional(cfg: ExperimentConfig, out_dir=None):
    coeffs = _coefficients(cfg)
    N, dt, T, stride = _particles(cfg)
    query = np.linspace(cfg.get("output", "grid_lo", -3.0), cfg.get("output", "grid_hi", 3.0),
                        cfg.get("output", "grid_n", 61))
    run = cm.simulate_conditional(coeffs, cfg.get("initial", "law"), N, _estimator(cfg), dt, T, cfg.seed,
                                  cfg.get("particles", "measure", "P"), stride, query)
    rep = VerificationReport("conditional")
    rep.extend(cm.bound_transfer_check([run]))
    rep.extend(cm.normalization_check(run if run.measure == "P" else None, run if run.measure == "Q" else None,
                                      cfg.tolerance("n_se")))
    metrics = {"mean_Y_final": float(run.Y[-1].mean()), "var_X_final": float(run.X[-1].var()),
               "degenerate_queries": run.degenerate_queries}
    out = _out(out_dir)
    if out is not None:
        g = run.coefficient_grid
        rows = ((t, x, lam, gam, rho) for i, t in enumerate(g["t"])
                for x, lam, gam, rho in zip(g["x"], g["lambda"][i], g["gamma"][i], g["rho"][i]))
        _write_rows(out / "coefficients.csv", ["t", "x", "lambda", "gamma", "rho_x"], rows)
    return _finish(rep, cfg, out, metrics)


def run_picard(cfg: ExperimentConfig, out_dir=None):
    coeffs = _coefficients(cfg)
    N, dt, T, _ = _particles(cfg)
    c = cfg.get("picard", "c", coeffs.default_c())
    res = cm.picard_iterate(coeffs, cfg.get("initial", "law"), N, cm.PathNormSpec(c, dt, T),
                            cfg.get("picard", "K", 8), cfg.seed, _estimator(cfg))
    rep = VerificationReport("picard")
    rep.add("geometric_ratio", res.geometric_ratio, cfg.tolerance("picard_ratio"), 0.0, "upper",
            "picard-contraction", floor_index=res.floor_index)
    rep.add("no_contraction_flag", float(res.no_contraction), 0.0, 0.0, "upper", "picard-contraction")
    rep.info.update(res.info)
    metrics = {"geometric_ratio": res.geometric_ratio, "distances": res.distances.tolist(),
               "floor_index": res.floor_index, "certified": res.info["certified"]}
    out = _out(out_dir)
    if out is not None:
        _write_rows(out / "distances.csv", ["k", "D_k"], enumerate(res.distances))
    return _finish(rep, cfg, out, metrics)


def run_girsanov_check(cfg: ExperimentConfig, out_dir=None):
    coeffs = _coefficients(cfg)
    N, dt, T, stride = _particles(cfg)
    est = _estimator(cfg)
    mu0 = cfg.get("initial", "law")
    n_se = cfg.tolerance("n_se")
    p_run = cm.simulate_conditional(coeffs, mu0, N, est, dt, T, cfg.seed, "P", stride)
    q_run = cm.simulate_conditional(coeffs, mu0, N, est, dt, T, cfg.seed, "Q", stride)
    rep = VerificationReport("girsanov-check")
    rep.extend(cm.normalization_check(p_run, q_run, n_se), "norm:")
    rep.extend(cm.weighted_conditional_check(p_run, q_run, estimator=est, n_se=n_se, seed=cfg.seed), "cond:")
    rep.extend(cm.exp_mart_bound_check(q_run, coeffs, est, n_se=n_se, seed=cfg.seed), "expmart:")
    rep.extend(cm.girsanov_marginal_check(p_run, q_run, n_se=n_se, seed=cfg.seed), "marginal:")
    rep.extend(cm.bound_transfer_check([p_run, q_run]), "transfer:")
    metrics = {"E_Q[Z]_final": rep.info.get("norm:E_Q[Z]_final"), "theta_sup": coeffs.theta_sup}
    return _finish(rep, cfg, _out(out_dir), metrics)


RUNNERS = {
    "fp-solve": run_fp_solve,
    "particles-moderated": run_particles_moderated,
    "verify-mild": run_verify_mild,
    "conditional": run_conditional,
    "picard": run_picard,
    "girsanov-check": run_girsanov_check,
}


def run(cfg: ExperimentConfig, out_dir=None):
    if cfg.subcommand not in RUNNERS:
        raise ValueError(f"{cfg.subcommand!r} is not a single experiment")
    return RUNNERS[cfg.subcommand](cfg, out_dir)
