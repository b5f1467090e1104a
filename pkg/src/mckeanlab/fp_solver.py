"""Finite-volume solver for the eps-regularised Fokker-Planck equation

    du/dt = 1/2 d/dx(alpha_eps(u) du/dx)   on [-L, L], zero flux at +-L,

with backward-Euler steps, a whole-trajectory (Schaefer) fixed-point loop and
certification of the maximum principle, energy inequality and dissipation identity.
"""
from __future__ import annotations

import re
from typing import Callable, Union

import numpy as np
from scipy import integrate, linalg, stats

from .coefficients import DiffusionModel, alpha_eps, psi_eps, sup_alpha
from .errors import NoConvergence, SolveError, TruncationError
from .fields import DensityField, GridSpec, PathField, l2_spacetime
from .report import VerificationReport

MASS_TOL = 1e-6


# --- initial data ------------------------------------------------------------


def project_initial(u0: Union[Callable, np.ndarray], grid: GridSpec, mass_tol: float = MASS_TOL) -> DensityField:
    """Cell averages of a density (midpoint rule) or a histogram of samples, mass 1.

    Raises TruncationError when more than ``mass_tol`` lies outside
    [-L + 5h, L - 5h].
    """
    lo, hi = -grid.half_width + 5 * grid.h, grid.half_width - 5 * grid.h
    x = grid.centers
    if callable(u0):
        left, _ = integrate.quad(u0, -np.inf, lo, limit=200)
        right, _ = integrate.quad(u0, hi, np.inf, limit=200)
        tail = abs(left) + abs(right)
        vals = np.asarray(u0(x), dtype=float)
    else:
        pts = np.asarray(u0, dtype=float).ravel()
        tail = float(np.mean((pts < lo) | (pts > hi)))
        counts, _ = np.histogram(pts, bins=grid.faces)
        vals = counts.astype(float)
    if tail > mass_tol:
        raise TruncationError(f"tail mass {tail:.3g} outside [-L+5h, L-5h] exceeds {mass_tol:g}")
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("initial density must be finite and nonnegative")
    total = vals.sum() * grid.h
    if total <= 0:
        raise ValueError("initial density has no mass on the grid")
    return DensityField(vals / total, grid)


def barenblatt(m: float, t: float) -> Callable:
    """Unit-mass Barenblatt profile of du/dt = 1/2 (u^m)'' at time t > 0.

    With s = t / 2 this is the classical profile of U_s = (U^m)'':
    U = s^-a (C - k x^2 s^-2a)_+^(1/(m-1)), a = 1/(m+1), k = a (m-1) / (2m).
    """
    m, t = float(m), float(t)
    if m <= 1 or t <= 0:
        raise ValueError("Barenblatt profile needs m > 1 and t > 0")
    a = 1.0 / (m + 1.0)
    k = a * (m - 1.0) / (2.0 * m)
    p = 1.0 / (m - 1.0)
    s = 0.5 * t
    # the mass of (C - k y^2)_+^p scales like C^(p + 1/2)
    r1 = np.sqrt(1.0 / k)
    c1, _ = integrate.quad(lambda y: max(1.0 - k * y * y, 0.0) ** p, -r1, r1)
    C = (1.0 / c1) ** (1.0 / (p + 0.5))

    def u(x):
        x = np.asarray(x, dtype=float)
        return s**-a * np.maximum(C - k * x**2 * s ** (-2 * a), 0.0) ** p

    return u


_U0 = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def initial_density(spec: str) -> Callable:
    """Density from a preset string.

    ``normal(mean, var)``, ``uniform(a, b)``, ``triangle(center, half_width)``,
    ``bimodal(sep, var)`` (equal mixture at +-sep/2), ``barenblatt(m, t0)``.
    """
    match = _U0.match(spec)
    if not match:
        raise ValueError(f"unrecognised initial density {spec!r}")
    name, raw = match.groups()
    args = [float(a) for a in raw.split(",") if a.strip()]
    if name == "normal":
        mean = args[0] if args else 0.0
        var = args[1] if len(args) > 1 else 1.0
        return stats.norm(mean, np.sqrt(var)).pdf
    if name == "uniform":
        a, b = args
        return stats.uniform(a, b - a).pdf
    if name == "triangle":
        c, w = args
        return stats.triang(0.5, loc=c - w, scale=2 * w).pdf
    if name == "bimodal":
        sep, var = args
        s = np.sqrt(var)
        return lambda x: 0.5 * (stats.norm.pdf(x, -sep / 2, s) + stats.norm.pdf(x, sep / 2, s))
    if name == "barenblatt":
        return barenblatt(*args)
    raise ValueError(f"unknown initial density {name!r}")


# --- linear step -------------------------------------------------------------


def _coefficients(model: DiffusionModel, v: np.ndarray, eps: float) -> np.ndarray:
    # rounding can push a cell average a hair below zero
    v = np.where((v < 0) & (v > -1e-12), 0.0, v)
    return np.asarray(alpha_eps(model, v, eps), dtype=float)


def _stiffness_bands(a_cell: np.ndarray, grid: GridSpec, dt: float) -> np.ndarray:
    """Upper banded form of I + dt/(2h^2) K with face coefficients (a_i + a_i+1)/2."""
    a_face = 0.5 * (a_cell[1:] + a_cell[:-1])
    r = dt / (2.0 * grid.h**2)
    ab = np.zeros((2, grid.n_cells))
    ab[0, 1:] = -r * a_face
    diag = np.ones(grid.n_cells)
    diag[:-1] += r * a_face
    diag[1:] += r * a_face
    ab[1] = diag
    return ab


def step_linear(u: DensityField, frozen_v: DensityField, model: DiffusionModel, eps: float, dt: float) -> DensityField:
    """One backward-Euler step of du/dt = 1/2 (alpha_eps(v) u')' with v frozen."""
    grid = u.grid
    a = _coefficients(model, frozen_v.values, eps)
    return DensityField(_solve(a, u.values, grid, dt), grid)


def _solve(a_cell: np.ndarray, rhs: np.ndarray, grid: GridSpec, dt: float) -> np.ndarray:
    ab = _stiffness_bands(a_cell, grid, dt)
    try:
        return linalg.solveh_banded(ab, rhs, lower=False, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SolveError(f"implicit operator not positive definite: {exc}") from exc


def explicit_step(u: np.ndarray, v: np.ndarray, model: DiffusionModel, eps: float, grid: GridSpec, dt: float) -> np.ndarray:
    """Forward-Euler counterpart of :func:`step_linear` (CFL-limited, used as an oracle)."""
    a = _coefficients(model, v, eps)
    a_face = 0.5 * (a[1:] + a[:-1])
    flux = a_face * np.diff(u) / grid.h
    div = np.zeros_like(u)
    div[:-1] += flux
    div[1:] -= flux
    return u + 0.5 * dt * div / grid.h


# --- nonlinear solves ----------------------------------------------------------


def solve_nonlinear_fp(model: DiffusionModel, u0: DensityField, eps: float, grid: GridSpec | None = None,
                       picard_inner_tol: float = 1e-10, max_inner: int = 50, implicit: bool = True) -> PathField:
    """March u0 over ``grid.n_steps`` steps.

    Each step freezes alpha_eps at the latest inner iterate and re-solves until
    successive iterates differ by less than ``picard_inner_tol`` in sup norm.
    With ``implicit=False`` only one sweep (coefficient at the old time) is made.
    """
    grid = u0.grid if grid is None else grid
    snaps = np.empty((grid.n_steps + 1, grid.n_cells))
    snaps[0] = u0.values
    u = u0.values
    for n in range(grid.n_steps):
        prev = u
        for sweep in range(max_inner):
            new = _solve(_coefficients(model, prev, eps), u, grid, grid.dt)
            change = np.max(np.abs(new - prev))
            prev = new
            if not implicit or change < picard_inner_tol:
                break
        else:
            raise NoConvergence(f"inner sweeps did not converge at step {n}", max_inner, float(change))
        u = prev
        snaps[n + 1] = u
    return PathField(snaps, grid.times, grid)


def trajectory_map(v: PathField, model: DiffusionModel, u0: DensityField, eps: float) -> PathField:
    """Solve the linear equation with alpha_eps(v) frozen over the whole trajectory.

    The step from t_n to t_n+1 uses the coefficient at t_n+1, so a fixed point
    of this map is exactly the fully implicit nonlinear solution.
    """
    grid = v.grid
    snaps = np.empty_like(v.snapshots)
    snaps[0] = u0.values
    for n in range(len(v) - 1):
        snaps[n + 1] = _solve(_coefficients(model, v.snapshots[n + 1], eps), snaps[n], grid, grid.dt)
    return PathField(snaps, v.times, grid)


def schaefer_fixed_point(model: DiffusionModel, u0: DensityField, eps: float, grid: GridSpec | None = None,
                         outer_tol: float = 1e-8, max_outer: int = 200):
    """Iterate v -> A(v) from the constant-in-time path u0.

    Returns ``(v_k, k)`` for the first k >= 1 with ||A(v_k) - v_k|| <= outer_tol in
    L^2((0,T) x grid); the confirming evaluation of A is not counted.
    """
    grid = u0.grid if grid is None else grid
    v = PathField(np.tile(u0.values, (grid.n_steps + 1, 1)), grid.times, grid)
    v = trajectory_map(v, model, u0, eps)
    for k in range(1, max_outer + 1):
        if np.isinf(outer_tol):
            return v, k
        w = trajectory_map(v, model, u0, eps)
        gap = l2_spacetime(w, v)
        if gap <= outer_tol:
            return v, k
        v = w
    raise NoConvergence("Schaefer iteration exhausted max_outer", max_outer, gap)


# --- certification ---------------------------------------------------------------


def _grad(values: np.ndarray, h: float) -> np.ndarray:
    return np.gradient(values, h, axis=-1)


def dissipation_constant(model: DiffusionModel, u0: DensityField, eps: float) -> float:
    """C = 10 sup_[0, |u0|_inf] alpha_eps * |u0|^2_L2."""
    return 10.0 * sup_alpha(model, u0.sup, eps) * u0.l2_sq()


def energy_report(traj: PathField, model: DiffusionModel, eps: float, t0_index: int = -1) -> VerificationReport:
    """Maximum principle, energy inequality and dissipation identity for ``traj``.

    The energy check bounds sup_t [|u(t)|^2 + eps int_0^t |u'|^2] by |u0|^2; the
    literal split form sup_t |u(t)|^2 + eps int_0^T |u'|^2 is stored as info.
    """
    grid, u, t = traj.grid, traj.snapshots, traj.times
    h = grid.h
    u0 = traj.at(0)
    rep = VerificationReport("fp-energy")
    rep.info.update(model=model.name, eps=eps, n_cells=grid.n_cells, dt=traj.dt, T=float(t[-1]))

    sup_t = np.max(np.abs(u), axis=1)
    rep.add("max_principle", float(sup_t.max()), u0.sup, 1e-8, "upper", "maximum-principle")

    grad = _grad(u, h)
    l2 = h * np.sum(u * u, axis=1)
    g2 = h * np.sum(grad * grad, axis=1)
    cum = np.concatenate([[0.0], integrate.cumulative_trapezoid(g2, t)]) if len(t) > 1 else np.zeros(1)
    rep.add("energy", float(np.max(l2 + eps * cum)), u0.l2_sq(), 1e-6, "upper", "energy-inequality")
    rep.info["energy_split_form"] = float(l2.max() + eps * cum[-1])

    k = t0_index % len(t)
    uc = np.clip(u[: k + 1], 0.0, None)
    psi_T = h * np.sum(psi_eps(model, uc[-1], eps))
    psi_0 = h * np.sum(psi_eps(model, uc[0], eps))
    # alpha_eps(u) u' evaluated on cell faces with the scheme's face coefficient,
    # summed at right endpoints in time to match the backward-Euler steps
    a = np.asarray(alpha_eps(model, uc, eps))
    dphi = 0.5 * (a[:, 1:] + a[:, :-1]) * np.diff(uc, axis=1) / h
    dphi2 = h * np.sum(dphi * dphi, axis=1)
    diss = 0.5 * float(np.sum(np.diff(t[: k + 1]) * dphi2[1:]))
    resid = abs(psi_T + diss - psi_0)
    C = dissipation_constant(model, u0, eps)
    rep.add("dissipation_identity", resid, C * (h + traj.dt), 0.0, "upper", "entropy-dissipation-identity",
            constant=C)
    rep.info.update(psi_T0=float(psi_T), psi_0=float(psi_0), dissipation=float(diss))
    return rep


def mass_report(traj: PathField, mass_tol: float = MASS_TOL) -> VerificationReport:
    rep = VerificationReport("fp-mass")
    mass = traj.grid.h * traj.snapshots.sum(axis=1)
    rep.add("mass_drift", float(np.max(np.abs(mass - 1.0))), 1.0, mass_tol, "residual", "plumbing")
    rep.add("min_value", float(traj.snapshots.min()), -1e-12, 0.0, "lower", "plumbing")
    return rep
