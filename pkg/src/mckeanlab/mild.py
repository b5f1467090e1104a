"""Gaussian-kernel mild formulation, the heat-symbol bound and contraction factors.

With G^g_t the centred Gaussian of variance g^2 t, the mild map is

    M(u)(t) = G_t * u0 + 1/2 int_0^t d^2/dx^2 G_{t-s} * ((sigma^2(u_s) - g^2) u_s) ds.

Convolutions act spectrally on a zero-padded periodic copy of the grid (twice
the cells). The Duhamel integral freezes the integrand at the left endpoint of
each step and integrates the kernel exactly over the step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .coefficients import DiffusionModel, alpha, sup_alpha
from .errors import AliasError, DomainError
from .fields import GridSpec, PathField, l2_spacetime
from .report import VerificationReport

ALIAS_TOL = 1e-8
GAMMA_SAFETY = 1.5
# strict contraction margin for gamma^2 = 1.5 sup alpha, plus slack
CONTRACTION_BOUND = 1.0 - 1.0 / (2.0 * GAMMA_SAFETY) + 0.1


@dataclass(frozen=True)
class HeatKernelOp:
    """Spectral heat semigroup with variance gamma^2 t on the padded grid."""

    gamma: float
    grid: GridSpec
    pad: int = 2

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def size(self) -> int:
        return self.pad * self.grid.n_cells

    @property
    def xi(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.rfftfreq(self.size, d=self.grid.h)

    def alias_mass(self, t: float) -> float:
        """Kernel mass farther than the padding width (2L for pad 2)."""
        if t <= 0:
            return 0.0
        reach = (self.pad - 1) * 2.0 * self.grid.half_width
        return float(erfc(reach / (self.gamma * np.sqrt(2.0 * t))))

    def check_alias(self, t: float) -> None:
        mass = self.alias_mass(t)
        if mass > ALIAS_TOL:
            raise AliasError(f"kernel mass {mass:.3g} wraps around the padding at t={t:g}")

    def forward(self, values: np.ndarray) -> np.ndarray:
        return np.fft.rfft(values, n=self.size, axis=-1)

    def inverse(self, spectrum: np.ndarray) -> np.ndarray:
        return np.fft.irfft(spectrum, n=self.size, axis=-1)[..., : self.grid.n_cells]

    def multiplier(self, t: float) -> np.ndarray:
        return np.exp(-0.5 * self.gamma**2 * self.xi**2 * t)

    def kernel_mass(self, t: float) -> float:
        """Total mass of the sampled kernel (the zero-frequency multiplier)."""
        return float(self.multiplier(t)[0])


def heat_convolve(f, gamma: float, t: float, grid: GridSpec) -> np.ndarray:
    """G^gamma_t * f for cell values ``f`` (last axis is space)."""
    f = np.asarray(f, dtype=float)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return f.copy()
    op = HeatKernelOp(gamma, grid)
    op.check_alias(t)
    return op.inverse(op.forward(f) * op.multiplier(t))


def choose_gamma(model: DiffusionModel, u_max: float, safety: float = GAMMA_SAFETY) -> float:
    """gamma with gamma^2 = safety * sup_[0, u_max] alpha."""
    top = sup_alpha(model, u_max)
    if not top > 0:
        raise DomainError("sup alpha must be positive to choose gamma")
    return float(np.sqrt(safety * top))


def duhamel(op: HeatKernelOp, forcing: np.ndarray, dt: float, half: bool = False) -> np.ndarray:
    """H_n = int_0^t_n d^2/dx^2 G_{t_n - s} * F(s) ds with F frozen on [t_j, t_j+1).

    ``forcing`` has shape (n_t, n_cells); row n of the result depends on rows
    0..n-1 only (H_0 = 0). With ``half`` the operator carries the factor 1/2.
    """
    a = 0.5 * op.gamma**2 * op.xi**2
    q = np.exp(-a * dt)
    # exact integral of -xi^2 exp(-a (t - s)) over one step, per unit forcing
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(a > 0, -(2.0 / op.gamma**2) * (1.0 - q), 0.0)
    if half:
        w = 0.5 * w
    spec = op.forward(forcing)
    out = np.zeros_like(spec)
    acc = np.zeros(spec.shape[1], dtype=complex)
    for n in range(1, spec.shape[0]):
        acc = q * acc + w * spec[n - 1]
        out[n] = acc
    return op.inverse(out)


def mild_map(u_traj: PathField, model: DiffusionModel, gamma: float, u0) -> PathField:
    """Apply the mild map to a trajectory; ``u0`` is the initial cell vector or field.

    Values are clipped to [0, r_max] before sigma^2 is evaluated, which leaves
    admissible trajectories untouched.
    """
    grid = u_traj.grid
    times = u_traj.times
    dt = u_traj.dt
    op = HeatKernelOp(gamma, grid)
    op.check_alias(float(times[-1]))
    u0 = np.asarray(getattr(u0, "values", u0), dtype=float)

    u = np.clip(u_traj.snapshots, 0.0, model.r_max)
    forcing = (model.sigma_sq(u) - gamma**2) * u
    spec0 = op.forward(u0)
    free = op.inverse(spec0[None, :] * np.exp(-0.5 * gamma**2 * op.xi[None, :] ** 2 * times[:, None]))
    out = free + duhamel(op, forcing, dt, half=True)
    return PathField(out, times, grid)


def averaged_alpha(model: DiffusionModel, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """int_0^1 alpha(u1 + th (u2 - u1)) dth as a secant of r -> sigma^2(r) r."""
    u1 = np.clip(u1, 0.0, model.r_max)
    u2 = np.clip(u2, 0.0, model.r_max)
    du = u2 - u1
    phi = lambda r: model.sigma_sq(r) * r
    close = np.abs(du) < 1e-9
    with np.errstate(invalid="ignore", divide="ignore"):
        secant = (phi(u2) - phi(u1)) / np.where(close, 1.0, du)
    return np.where(close, alpha(model, 0.5 * (u1 + u2)), secant)


def pointwise_factor(u1: PathField, u2: PathField, model: DiffusionModel, gamma: float) -> float:
    """sup |gamma^2 - averaged alpha| / gamma^2 over points where the paths differ."""
    abar = averaged_alpha(model, u1.snapshots, u2.snapshots)
    mask = np.abs(u1.snapshots - u2.snapshots) > 0
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(gamma**2 - abar[mask])) / gamma**2)


def contraction_factor(u1: PathField, u2: PathField, model: DiffusionModel, gamma: float, u0=None) -> float:
    """|M(u1) - M(u2)| / |u1 - u2| in L^2((0,T) x grid); 0 when the paths coincide."""
    if u1.snapshots.shape != u2.snapshots.shape:
        raise ValueError("trajectories live on different lattices")
    denom = l2_spacetime(u1, u2)
    if denom < 1e-14:
        return 0.0
    # the free part cancels, so any common u0 will do
    u0 = u1.snapshots[0] if u0 is None else u0
    m1 = mild_map(u1, model, gamma, u0)
    m2 = mild_map(u2, model, gamma, u0)
    return l2_spacetime(m1, m2) / denom


def mild_iterate(start: PathField, model: DiffusionModel, gamma: float, u0, tol: float = 1e-6,
                 max_iter: int = 30):
    """Picard iteration of the mild map; returns (path, iterations, gaps)."""
    v = start
    gaps = []
    for k in range(1, max_iter + 1):
        w = mild_map(v, model, gamma, u0)
        gaps.append(l2_spacetime(w, v))
        v = w
        if gaps[-1] <= tol:
            return v, k, gaps
    return v, max_iter, gaps


def uniqueness_replay(start_a: PathField, start_b: PathField, model: DiffusionModel, gamma: float, u0,
                      tol: float = 1e-6, max_iter: int = 30):
    """Iterate the mild map from two starts in lockstep; returns (iterations, distances).

    Stops at the first k with ||M^k(a) - M^k(b)|| <= tol; ``iterations`` is
    ``max_iter + 1`` when that never happens.
    """
    a, b = start_a, start_b
    dists = [l2_spacetime(a, b)]
    for k in range(1, max_iter + 1):
        a = mild_map(a, model, gamma, u0)
        b = mild_map(b, model, gamma, u0)
        dists.append(l2_spacetime(a, b))
        if dists[-1] <= tol:
            return k, dists
    return max_iter + 1, dists


def symbol(tau, xi, gamma: float):
    """|xi|^2 / |i tau + gamma^2 |xi|^2 / 2| written as 2|xi|^2 / sqrt(4 tau^2 + gamma^4 |xi|^4)."""
    tau = np.asarray(tau, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return 2.0 * xi**2 / np.sqrt(4.0 * tau**2 + gamma**4 * xi**4)


def random_bandlimited(rng: np.random.Generator, grid: GridSpec, n_t: int, xi_max: float, n_modes: int = 6) -> np.ndarray:
    """Sum of separable terms with band-limited spatial profiles, windowed away from the edges."""
    x = grid.centers
    t = np.linspace(0.0, 1.0, n_t)
    window = np.exp(-0.5 * (x / (0.25 * grid.half_width)) ** 2)
    f = np.zeros((n_t, grid.n_cells))
    for _ in range(n_modes):
        k = rng.uniform(0.0, xi_max)
        om = rng.uniform(0.0, 20.0)
        prof = np.cos(k * x + rng.uniform(0, 2 * np.pi)) * window
        f += rng.normal() * np.cos(om * t + rng.uniform(0, 2 * np.pi))[:, None] * prof[None, :]
    return f


def symbol_bound_check(gamma: float, n_tau: int = 256, n_xi: int = 256, n_random: int = 20,
                       seed: int = 0, grid: GridSpec | None = None) -> VerificationReport:
    """Grid supremum of the symbol and the operator inequality on random inputs.

    The random part compares dt-weighted sums of |H_n|^2 (n >= 1) with those of
    |f_j|^2 (j < N), which is the norm pairing the one-sided discrete operator
    respects.
    """
    if n_tau < 64 or n_xi < 64:
        raise ValueError("need at least 64 samples per axis")
    bound = 2.0 / gamma**2
    rep = VerificationReport("symbol-bound")
    rep.info["gamma"] = gamma
    tau = np.logspace(-6, 6, n_tau)
    xi = np.logspace(-6, 6, n_xi)
    s = symbol(tau[:, None], xi[None, :], gamma)
    i, j = np.unravel_index(np.argmax(s), s.shape)
    rep.add("symbol_sup", float(s.max()), bound, 1e-12, "upper", "heat-symbol-bound",
            argmax_tau=float(tau[i]), argmax_xi=float(xi[j]))

    grid = GridSpec(8.0, 256, 2e-3, 250) if grid is None else grid
    op = HeatKernelOp(gamma, grid)
    op.check_alias(grid.T)
    rng = np.random.default_rng(seed)
    ratios = []
    xi_max = 0.5 * np.pi / grid.h
    for _ in range(n_random):
        f = random_bandlimited(rng, grid, grid.n_steps + 1, xi_max)
        H = duhamel(op, f, grid.dt)
        num = np.sqrt(grid.dt * grid.h * np.sum(H[1:] ** 2))
        den = np.sqrt(grid.dt * grid.h * np.sum(f[:-1] ** 2))
        ratios.append(num / den if den > 0 else 0.0)
    ratios = np.array(ratios)
    rep.add("operator_ratio_max", float(ratios.max()) if ratios.size else 0.0, bound, 0.05, "upper",
            "heat-symbol-bound", n_random=n_random)
    rep.info["operator_ratios"] = ratios.tolist()
    return rep


def mild_report(u1: PathField, u2: PathField | None, model: DiffusionModel, gamma: float, u0=None) -> VerificationReport:
    """Self-consistency of a trajectory under the mild map and (optionally) a pair factor."""
    rep = VerificationReport("mild")
    u0 = u1.snapshots[0] if u0 is None else u0
    m = mild_map(u1, model, gamma, u0)
    scale = l2_spacetime(u1)
    rep.add("fixed_point_gap", l2_spacetime(m, u1), scale, 0.05, "residual", "mild-formulation")
    rep.info["gamma"] = gamma
    if u2 is not None:
        fac = contraction_factor(u1, u2, model, gamma, u0)
        pw = pointwise_factor(u1, u2, model, gamma)
        rep.add("contraction_factor", fac, CONTRACTION_BOUND, 0.0, "upper", "mild-contraction", pointwise_bound=pw)
    return rep
