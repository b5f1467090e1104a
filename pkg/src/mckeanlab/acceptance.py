"""Acceptance criteria as functions returning :class:`VerificationReport`.

``scale="full"`` uses the stated problem sizes; ``scale="smoke"`` shrinks
particle counts, grids and seed lists so the whole suite runs in well under a
minute. ``seed`` is the base of every random stream a criterion uses; the
deterministic criteria accept and ignore it. Reports hold no timings, so
repeated runs serialize identically.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import conditional as cm
from . import mild
from .coefficients import constant, pme, sqrt_affine
from .fields import GridSpec, PathField
from .fp_solver import energy_report, initial_density, project_initial, solve_nonlinear_fp
from .metrics import wasserstein1_1d
from .particles import initial_law, martingale_residual, simulate_moderated
from .report import VerificationReport

DEFAULT_SEED = 0
SCALES = ("full", "smoke")

FP_MODELS = (constant(1.0), sqrt_affine(1.0, 1.0), pme(2.0), pme(3.0))
FP_DENSITIES = ("normal(0, 1)", "uniform(-1, 1)", "bimodal(3, 0.25)")
FP_EPS = (0.0, 0.01)

DRIFT_PRESETS = ("const(0.8)", "tanh_x(0.8)", "tanh_y(0.8)", "tanh_sum(0.8)")
JOINT_LAW = "correlated_normal(0.5)"


def _check_scale(scale: str) -> bool:
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}")
    return scale == "full"


# --- Fokker-Planck -----------------------------------------------------------------------------


def heat_exactness(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    """sigma = 1, eps = 0, u0 = N(0, 0.25): L1 error against N(0, 0.75) at T = 0.5."""
    full = _check_scale(scale)
    grid = GridSpec.from_horizon(8.0, 512 if full else 256, 1e-3 if full else 2e-3, 0.5)
    model = constant(1.0)
    u0 = project_initial(initial_density("normal(0, 0.25)"), grid)
    traj = solve_nonlinear_fp(model, u0, 0.0, grid)
    exact = initial_density("normal(0, 0.75)")(grid.centers)
    err = float(grid.h * np.sum(np.abs(traj.final.values - exact)))
    rep = VerificationReport("heat-exactness")
    rep.add("l1_error", err, 1e-3 if full else 2e-3, 0.0, "upper", "exact-solution")
    return rep


def _fp_matrix(scale: str):
    full = _check_scale(scale)
    grid = GridSpec.from_horizon(8.0, 256 if full else 128, 5e-3 if full else 1e-2, 0.5 if full else 0.2)
    for model in FP_MODELS:
        for dens in FP_DENSITIES:
            u0 = project_initial(initial_density(dens), grid)
            m = model.with_r_max(2.0 * u0.sup)
            for eps in FP_EPS:
                traj = solve_nonlinear_fp(m, u0, eps, grid)
                yield f"{model.name}|{dens}|eps={eps:g}", energy_report(traj, m, eps)


def max_principle_and_energy(scale: str = "full", seed: int = DEFAULT_SEED):
    """Both criteria on the model x density x eps matrix; returns (max-principle, energy) reports."""
    mp = VerificationReport("maximum-principle")
    en = VerificationReport("energy-inequality")
    for label, rep in _fp_matrix(scale):
        c = rep["max_principle"]
        mp.add(label, c.value, c.bound, 1e-8, "upper", c.provenance)
        c = rep["energy"]
        en.add(label, c.value, c.bound, 1e-6, "upper", c.provenance)
        # sup_t |u|^2 + eps int_0^T |u'|^2 exactly as stated; exceeds |u0|^2 whenever eps > 0
        en.add(f"{label}|split", rep.info["energy_split_form"], c.bound, 1e-6, "upper", c.provenance)
    return mp, en


def dissipation_identity(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    """Residual <= C (h + dt) on a refinement ladder and ratio in [0.4, 0.7] per halving.

    Smooth initial data only: with a discontinuous u0 the first step carries an
    O(1) gradient and the residual converges more slowly than first order.
    """
    full = _check_scale(scale)
    levels = 3 if full else 2
    n0, dt0 = (128, 4e-3) if full else (64, 1e-2)
    eps = 0.01
    rep = VerificationReport("dissipation-identity")
    for model in FP_MODELS[:3]:
        for dens in ("normal(0, 1)", "bimodal(3, 0.25)"):
            res = []
            for lev in range(levels):
                grid = GridSpec.from_horizon(8.0, n0 * 2**lev, dt0 / 2**lev, 0.5)
                u0 = project_initial(initial_density(dens), grid)
                m = model.with_r_max(2.0 * u0.sup)
                c = energy_report(solve_nonlinear_fp(m, u0, eps, grid), m, eps)["dissipation_identity"]
                res.append(c.value)
                rep.add(f"{model.name}|{dens}|level={lev}", c.value, c.bound, 0.0, "upper", c.provenance)
            for lev in range(levels - 1):
                ratio = res[lev + 1] / res[lev]
                rep.add(f"{model.name}|{dens}|ratio_hi{lev}", ratio, 0.7, 0.0, "upper", "entropy-dissipation-identity")
                rep.add(f"{model.name}|{dens}|ratio_lo{lev}", ratio, 0.4, 0.0, "lower", "entropy-dissipation-identity")
    return rep


# --- mild formulation -------------------------------------------------------------------------


def symbol_bound(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    full = _check_scale(scale)
    rep = VerificationReport("symbol-bound")
    for gamma in (0.5, 1.0, 2.0):
        rep.extend(mild.symbol_bound_check(gamma, n_random=20 if full else 4, seed=seed), f"gamma={gamma:g}:")
    return rep


MILD_PAIR_BOUND = 0.45


def mild_pairs(grid: GridSpec, model):
    """The fixed family of admissible trajectory pairs (all values in [0, 1])."""

    def fp(spec):
        u0 = project_initial(initial_density(spec), grid)
        return solve_nonlinear_fp(model, u0, 0.0, grid), u0

    a, ua = fp("normal(0, 0.25)")
    b, _ = fp("normal(0.5, 0.4)")
    c, _ = fp("bimodal(2, 0.2)")
    d, _ = fp("uniform(-0.6, 0.6)")
    x, t = grid.centers, grid.times[:, None]
    frozen = PathField(np.tile(ua.values, (len(grid.times), 1)), grid.times, grid)
    bumped = PathField(np.clip(a.snapshots + 0.2 * np.exp(-x**2) * np.sin(3 * x) * np.cos(5 * t), 0.0, 1.0),
                       grid.times, grid)
    pairs = {"a-b": (a, b), "a-c": (a, c), "a-d": (a, d), "b-c": (b, c), "frozen-a": (frozen, a),
             "bump-a": (bumped, a)}
    return pairs, ua


def mild_contraction(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    """Contraction factors on the fixed pair family, plus the two-start uniqueness replay."""
    full = _check_scale(scale)
    model = sqrt_affine(1.0, 1.0, r_max=1.0)
    grid = GridSpec.from_horizon(8.0, 256 if full else 128, 5e-3 if full else 1e-2, 0.5)
    gamma = mild.choose_gamma(model, 1.0)
    pairs, u0 = mild_pairs(grid, model)
    rep = VerificationReport("mild-contraction")
    rep.info.update(gamma=gamma, pointwise_bound_design=1.0 - 1.0 / mild.GAMMA_SAFETY)
    factors = {}
    for name, (p, q) in pairs.items():
        factors[name] = mild.contraction_factor(p, q, model, gamma, u0.values)
        rep.info[f"pointwise_factor:{name}"] = mild.pointwise_factor(p, q, model, gamma)
    worst = max(factors, key=factors.get)
    rep.add("contraction_factor_max", factors[worst], MILD_PAIR_BOUND, 0.0, "upper", "mild-contraction",
            pair=worst, factors=factors)
    rep.add("contraction_factor_strict", factors[worst], mild.CONTRACTION_BOUND, 0.0, "upper", "mild-contraction")
    zero = PathField(np.zeros((len(grid.times), grid.n_cells)), grid.times, grid)
    start = pairs["frozen-a"][0]
    k, dists = mild.uniqueness_replay(start, zero, model, gamma, u0.values, 1e-6, 30)
    rep.add("replay_iterations", k, 30, 0.0, "upper", "mild-uniqueness", distances=dists)
    rep.add("replay_distance", dists[-1], 1e-6, 0.0, "upper", "mild-uniqueness")
    return rep


# --- moderated particles --------------------------------------------------------------------


PARTICLE_MODEL = sqrt_affine(1.0, 1.0, r_max=0.8)
PARTICLE_LAW = "normal(0, 1)"


def _fp_reference(dt: float, n_cells: int = 1024, T: float = 0.5):
    grid = GridSpec.from_horizon(8.0, n_cells, dt, T)
    u0 = project_initial(initial_density(PARTICLE_LAW), grid)
    return solve_nonlinear_fp(PARTICLE_MODEL, u0, 0.0, grid)


def particle_pde_agreement(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    """Median W1 over seeds seed + {1, 2, 3} at three particle counts; final level <= 0.02 and monotone."""
    full = _check_scale(scale)
    Ns = (1000, 10000, 100000) if full else (1000, 3000, 10000)
    ref = _fp_reference(1e-3 if full else 2e-3, 1024 if full else 512)
    law = initial_law(PARTICLE_LAW)
    medians = []
    rep = VerificationReport("particle-pde-agreement")
    for N in Ns:
        w = []
        for s in (seed + 1, seed + 2, seed + 3):
            path, _ = simulate_moderated(PARTICLE_MODEL, law, N, None, 1e-2, 0.5, s, record_stride=50)
            w.append(wasserstein1_1d(path.final.positions, ref.final))
            rep.info[f"clamp_fraction:N={N}:seed={s}"] = path.clamp_fraction
        medians.append(float(np.median(w)))
        rep.info[f"w1:N={N}"] = w
    rep.add("w1_median_finest", medians[-1], 0.02, 0.0, "upper", "particle-pde-agreement", N=Ns[-1])
    for i in range(len(Ns) - 1):
        rep.add(f"monotone:{Ns[i]}->{Ns[i + 1]}", medians[i + 1], medians[i], 0.0, "upper", "particle-pde-agreement")
    return rep


def martingale_problem(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    full = _check_scale(scale)
    dt = 2.5e-3 if full else 1e-2
    ref = _fp_reference(dt, 1024 if full else 512)
    path, _ = simulate_moderated(PARTICLE_MODEL, initial_law(PARTICLE_LAW), 100000 if full else 10000, None, dt, 0.5,
                                 seed, record_stride=1)
    return martingale_residual(path, ref, PARTICLE_MODEL)


# --- conditional McKean ------------------------------------------------------------------------


def picard_contraction(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    """ell = sin / 2, gamma = 1, c = 4 (L_ell^2 + L_gamma^2); 5-seed median geometric ratio < 0.8."""
    full = _check_scale(scale)
    coeffs = cm.CoefficientSet.from_names(b="zero", ell="half_sin", gamma="const(1)")
    N, dt, n_seeds = (100000, 1e-3, 5) if full else (5000, 1e-2, 3)
    norm = cm.PathNormSpec(coeffs.default_c(), dt, 1.0)
    rep = VerificationReport("picard-contraction")
    ratios = []
    for s in range(seed, seed + n_seeds):
        res = cm.picard_iterate(coeffs, JOINT_LAW, N, norm, K=8, seed=s)
        ratios.append(res.geometric_ratio)
        rep.info[f"distances:seed={s}"] = res.distances.tolist()
        rep.info[f"floor_index:seed={s}"] = res.floor_index
    rep.add("geometric_ratio_median", float(np.median(ratios)), 0.8, 0.0, "upper", "picard-contraction",
            ratios=ratios, c=norm.c, certified=norm.certified(coeffs))
    return rep


def _pq_runs(b: str, sigma: str, N: int, dt: float, seed: int, estimator=None):
    coeffs = cm.CoefficientSet.from_names(b=b, sigma=sigma, ell="tanh", gamma="const(1)")
    p = cm.simulate_conditional(coeffs, JOINT_LAW, N, estimator, dt, 0.5, seed, "P", record_stride=10)
    q = cm.simulate_conditional(coeffs, JOINT_LAW, N, estimator, dt, 0.5, seed, "Q", record_stride=10)
    return coeffs, p, q


def girsanov_identity(scale: str = "full", seed: int = DEFAULT_SEED, b: str = "tanh_y(0.8)") -> VerificationReport:
    """P-run vs weighted Q-run estimates of E[tanh(Y_t) | X_t] at adequate queries."""
    full = _check_scale(scale)
    _, p, q = _pq_runs(b, "const(1)", 100000 if full else 10000, 1e-2, seed)
    rep = cm.weighted_conditional_check(p, q, seed=seed)
    rep.title = "girsanov-identity"
    rep.info["b"] = b
    return rep


def exponential_martingale(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    """Normalization and the conditional second-moment bound on every drift preset."""
    full = _check_scale(scale)
    N = 100000 if full else 10000
    rep = VerificationReport("exponential-martingale")
    cases = [(b, "const(1)") for b in DRIFT_PRESETS] + [("tanh_sum(0.8)", "sin_modulated(0.3)")]
    for b, sigma in cases:
        coeffs, p, q = _pq_runs(b, sigma, N, 1e-2, seed)
        label = f"{b}|{sigma}"
        rep.extend(cm.normalization_check(p, q), f"{label}:")
        rep.extend(cm.exp_mart_bound_check(q, coeffs, seed=seed), f"{label}:")
    return rep


def bound_transfer(scale: str = "full", seed: int = DEFAULT_SEED) -> VerificationReport:
    """Violation count over P and Q runs of every drift preset with both estimator kinds."""
    full = _check_scale(scale)
    N = 20000 if full else 5000
    runs = []
    for b in DRIFT_PRESETS:
        for est in (cm.EstimatorConfig("nw"), cm.EstimatorConfig("binned", n_bins=40)):
            runs.extend(_pq_runs(b, "const(1)", N, 1e-2, seed, est)[1:])
    rep = cm.bound_transfer_check(runs)
    rep.info["runs"] = len(runs)
    return rep


def _energy(scale, seed=DEFAULT_SEED):
    return max_principle_and_energy(scale)[1]


def _max_principle(scale, seed=DEFAULT_SEED):
    return max_principle_and_energy(scale)[0]


CRITERIA: dict[int, tuple[str, Callable[..., VerificationReport]]] = {
    1: ("heat-exactness", heat_exactness),
    2: ("maximum-principle", _max_principle),
    3: ("energy-inequality", _energy),
    4: ("dissipation-identity", dissipation_identity),
    5: ("symbol-bound", symbol_bound),
    6: ("mild-contraction", mild_contraction),
    7: ("particle-pde-agreement", particle_pde_agreement),
    8: ("martingale-problem", martingale_problem),
    9: ("picard-contraction", picard_contraction),
    10: ("girsanov-identity", girsanov_identity),
    11: ("exponential-martingale", exponential_martingale),
    12: ("bound-transfer", bound_transfer),
}
