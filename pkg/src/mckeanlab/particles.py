"""Moderately interacting particles for dX = sigma(u(t, X)) dW.

Each Euler-Maruyama step reads the diffusion from the mollified empirical
density at the particle positions:

    X <- X + sigma(clip(u_hat(X), 0, r_max)) sqrt(dt) xi.

Noise is drawn from counter-based streams keyed by (seed, particle id, step),
so a run is reproducible regardless of how it is scheduled.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, stats

from .coefficients import DiffusionModel
from .estimators import MollifierSpec, default_bandwidth, kde
from .fields import GridSpec, PathField
from .report import VerificationReport
from .rng import Channel, brownian_increments, uniform_stream


# --- initial laws -------------------------------------------------------------


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution sampled by inverse CDF from the counter RNG."""

    name: str
    ppf: Callable[[np.ndarray], np.ndarray]
    dim: int = 1

    def sample(self, seed: int, ids: np.ndarray, channel: int = Channel.INIT) -> np.ndarray:
        u = uniform_stream(seed, ids, 0, channel)
        if self.dim == 1:
            return self.ppf(u[:, 0])
        # independent coordinates from the two uniforms of the block
        return np.stack([self.ppf(u[:, 0]), self.ppf(u[:, 1])], axis=1)


def _tabulated_ppf(pdf: Callable, lo: float, hi: float, n: int = 20001) -> Callable:
    x = np.linspace(lo, hi, n)
    cdf = integrate.cumulative_trapezoid(pdf(x), x, initial=0.0)
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return lambda u: np.interp(u, cdf[keep], x[keep])


_LAW = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def initial_law(spec: str, dim: int = 1) -> InitialLaw:
    """``normal(mean, var)``, ``uniform(a, b)``, ``triangle(c, w)``, ``bimodal(sep, var)``, ``barenblatt(m, t0)``."""
    match = _LAW.match(spec)
    if not match:
        raise ValueError(f"unrecognised initial law {spec!r}")
    name, raw = match.groups()
    args = [float(a) for a in raw.split(",") if a.strip()]
    if name == "normal":
        mean = args[0] if args else 0.0
        var = args[1] if len(args) > 1 else 1.0
        dist = stats.norm(mean, np.sqrt(var))
        # ppf of 0 is -inf; 53-bit uniforms are < 1 but may be 0
        return InitialLaw(spec, lambda u: dist.ppf(np.clip(u, 2.0**-60, None)), dim)
    if name == "uniform":
        a, b = args
        return InitialLaw(spec, lambda u: a + (b - a) * u, dim)
    if name == "triangle":
        c, w = args
        return InitialLaw(spec, stats.triang(0.5, loc=c - w, scale=2 * w).ppf, dim)
    from .fp_solver import initial_density

    pdf = initial_density(spec)
    if name == "bimodal":
        sep, var = args
        reach = sep / 2 + 12 * np.sqrt(var)
    elif name == "barenblatt":
        reach = 20.0
    else:
        raise ValueError(f"unknown initial law {name!r}")
    return InitialLaw(spec, _tabulated_ppf(pdf, -reach, reach), dim)


# --- ensembles ------------------------------------------------------------------


@dataclass
class Ensemble:
    """Particle state: positions (N,) in 1-D or (N, 2), ids, step index, seed."""

    positions: np.ndarray
    seed: int
    step: int = 0
    ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.ids is None:
            self.ids = np.arange(self.positions.shape[0], dtype=np.int64)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return 1 if self.positions.ndim == 1 else self.positions.shape[1]

    def copy(self) -> "Ensemble":
        return Ensemble(self.positions.copy(), self.seed, self.step, self.ids.copy())


@dataclass
class ParticlePath:
    """Positions recorded at ``times`` (shape (n_records, N[, 2])) plus run counters."""

    times: np.ndarray
    positions: np.ndarray
    final: Ensemble
    dt: float
    clamp_count: int = 0
    particle_steps: int = 0
    info: dict = field(default_factory=dict)

    @property
    def clamp_fraction(self) -> float:
        return self.clamp_count / max(self.particle_steps, 1)

    def at_time(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no record at t={t}")
        return self.positions[k]


def simulate_moderated(model: DiffusionModel, u0: InitialLaw | np.ndarray, N: int, spec: MollifierSpec | None,
                       dt: float, T: float, seed: int, snapshot_stride: int = 1, kde_grid: GridSpec | None = None,
                       lag: int = 1, record_stride: int | None = None, ids: np.ndarray | None = None):
    """Run the particle system; returns ``(ParticlePath, PathField or None)``.

    ``spec=None`` uses the Gaussian mollifier with the default bandwidth of the
    initial cloud. ``lag > 1`` refreshes the density only every ``lag`` steps.
    KDE snapshots are taken on ``kde_grid`` every ``snapshot_stride`` steps;
    positions are recorded every ``record_stride`` steps (default: same stride).
    """
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    if N < 100:
        raise ValueError("need at least 100 particles")
    ids = np.arange(N, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)
    x = u0.sample(seed, ids) if isinstance(u0, InitialLaw) else np.array(u0, dtype=float)
    if x.shape[0] != N:
        raise ValueError("initial positions must have N rows")
    dim = 1 if x.ndim == 1 else x.shape[1]
    if spec is None:
        spec = MollifierSpec("gaussian", default_bandwidth(x), dim)
    record_stride = snapshot_stride if record_stride is None else record_stride

    rec_t, rec_x = [0.0], [x.copy()]
    kde_t, kde_u = [], []

    def snapshot(k):
        if kde_grid is not None:
            kde_t.append(k * dt)
            kde_u.append(kde(x, None, spec, kde_grid.centers))

    snapshot(0)
    clamps = 0
    dens = None
    for k in range(n_steps):
        if dens is None or k % lag == 0:
            dens = kde(x, None, spec, x)
        over = dens > model.r_max
        clamps += int(np.count_nonzero(over))
        sig = model.sigma(np.clip(dens, 0.0, model.r_max))
        dw = brownian_increments(seed, ids, k + 1, Channel.W, dim, dt)
        if dim == 1:
            x = x + sig * dw[:, 0]
        else:
            x = x + sig[:, None] * dw
        if lag > 1:
            dens = None if (k + 1) % lag == 0 else dens
        if (k + 1) % record_stride == 0:
            rec_t.append((k + 1) * dt)
            rec_x.append(x.copy())
        if (k + 1) % snapshot_stride == 0:
            snapshot(k + 1)

    path = ParticlePath(np.array(rec_t), np.stack(rec_x), Ensemble(x, seed, n_steps, ids), dt,
                        clamps, N * n_steps, {"bandwidth": spec.bandwidth, "lag": lag})
    field_ = None
    if kde_grid is not None:
        field_ = PathField(np.stack(kde_u), np.array(kde_t), kde_grid)
    return path, field_


# --- martingale problem -------------------------------------------------------------


@dataclass(frozen=True)
class Bump:
    """Compactly supported C^2 test function (1 - z^2)^3, z = (x - center) / width."""

    center: float
    width: float

    def __call__(self, x):
        z = (np.asarray(x) - self.center) / self.width
        return np.where(np.abs(z) < 1, (1 - z * z) ** 3, 0.0)

    def second(self, x):
        z = (np.asarray(x) - self.center) / self.width
        return np.where(np.abs(z) < 1, -6.0 * (1 - z * z) * (1 - 5 * z * z) / self.width**2, 0.0)


@dataclass(frozen=True)
class Linear:
    """f(x) = x, for windows where the mass stays interior."""

    def __call__(self, x):
        return np.asarray(x, dtype=float)

    def second(self, x):
        return np.zeros(np.shape(x))


DEFAULT_BUMPS = (Bump(-0.5, 1.5), Bump(0.5, 1.5), Bump(0.0, 3.0))
DEFAULT_WINDOWS = ((0.1, 0.3), (0.3, 0.5))


def past_functionals(path: ParticlePath, s: float) -> dict:
    """psi in {1, tanh(X_s), tanh(X_s/2)} evaluated on the recorded path."""
    xs = path.at_time(s)
    half = path.times[np.argmin(np.abs(path.times - 0.5 * s))]
    return {"one": np.ones_like(xs), "tanh_Xs": np.tanh(xs), "tanh_Xs_half": np.tanh(path.at_time(half))}


def martingale_residual(path: ParticlePath, u_path: PathField, model: DiffusionModel,
                        test_fns: Sequence = DEFAULT_BUMPS, windows: Sequence = DEFAULT_WINDOWS,
                        n_se: float = 3.0) -> VerificationReport:
    """Covariances of M_t - M_s with past functionals, each against n_se standard errors.

    M_t - M_s = f(X_t) - f(X_s) - 1/2 int_s^t sigma^2(u(r, X_r)) f''(X_r) dr with
    the integral taken by the left-endpoint rule on the recorded steps, which
    must include every step of each window.
    """
    rep = VerificationReport("martingale-problem")
    times = path.times
    for fi, f in enumerate(test_fns):
        for (s, t) in windows:
            ks = int(np.argmin(np.abs(times - s)))
            kt = int(np.argmin(np.abs(times - t)))
            if abs(times[ks] - s) > 1e-9 or abs(times[kt] - t) > 1e-9:
                raise KeyError("window endpoints must be recorded times")
            if not np.allclose(np.diff(times[ks : kt + 1]), path.dt):
                raise ValueError("every step inside a window must be recorded")
            drift = np.zeros(path.positions.shape[1])
            for k in range(ks, kt):
                xk = path.positions[k]
                u = np.clip(u_path.interpolate(times[k], xk), 0.0, model.r_max)
                drift += 0.5 * model.sigma_sq(u) * f.second(xk) * path.dt
            inc = f(path.positions[kt]) - f(path.positions[ks]) - drift
            for name, psi in past_functionals(path, s).items():
                prod = psi * inc
                mean = float(prod.mean())
                se = float(prod.std(ddof=1) / np.sqrt(prod.size))
                rep.add(f"f{fi}[{s:g},{t:g}]/{name}", mean, se, n_se, "residual", "martingale-problem",
                        standard_error=se)
    return rep
