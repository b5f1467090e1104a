"""Particle realisation of the conditional McKean system (scalar X and Y)

    dX = b(X, Y) dt + sigma(X) dB
    dY = E[ell(Y) | X] dt + E[gam(Y) | X] dW,

its Girsanov-reweighted form (X driftless, weights Z), Picard iteration in the
exponentially weighted path norm and the associated diagnostics.

Girsanov orientation: with theta = b / sigma and dB_hat = dX / sigma,

    Z_t = exp(-int theta dB_hat + 1/2 int theta^2 dt).

Along a drifted run (dX = b dt + sigma dB) this is exp(-int theta dB - 1/2 int
theta^2), a mean-one martingale. Along a driftless run it is the inverse of
the density of the drifted law, so there Z^-1 has mean one and conditional
expectations of the drifted system are Z^-1-weighted averages.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import OverflowGuard
from .estimators import (ConditionalEstimate, MollifierSpec, binned_conditional, bootstrap_se,
                         default_bandwidth, kde, nw_conditional)
from .metrics import wasserstein1_1d
from .particles import InitialLaw, initial_law
from .report import VerificationReport
from .rng import Channel, brownian_increments, rng_stream

LOG_Z_LIMIT = 700.0
COND_LIMIT = 1e8


# --- coefficient catalogue ------------------------------------------------------


@dataclass(frozen=True)
class Coef:
    """Scalar coefficient with a Lipschitz constant and a sup bound."""

    fn: Callable
    lip: float
    sup: float
    name: str

    def __call__(self, *args):
        return self.fn(*args)


_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


def _parse(spec: str):
    match = _CALL.match(spec)
    if not match:
        raise ValueError(f"unrecognised coefficient {spec!r}")
    name, raw = match.groups()
    args = [float(a) for a in (raw or "").split(",") if a.strip()]
    return name, args


def scalar_coef(spec: str) -> Coef:
    """One-argument presets: const(c), tanh, scaled_tanh(c), half_sin, affine_clamped(a, b, lo, hi)."""
    name, args = _parse(spec)
    if name in ("const", "zero"):
        c = args[0] if args else 0.0
        return Coef(lambda z: np.full(np.shape(z), c), 0.0, abs(c), spec)
    if name == "tanh":
        return Coef(np.tanh, 1.0, 1.0, spec)
    if name == "scaled_tanh":
        c = args[0]
        return Coef(lambda z: c * np.tanh(z), abs(c), abs(c), spec)
    if name == "half_sin":
        return Coef(lambda z: 0.5 * np.sin(z), 0.5, 0.5, spec)
    if name == "affine_clamped":
        a, b, lo, hi = args
        if hi < lo:
            raise ValueError("affine_clamped needs lo <= hi")
        return Coef(lambda z: np.clip(a + b * np.asarray(z), lo, hi), abs(b), max(abs(lo), abs(hi)), spec)
    raise ValueError(f"unknown coefficient preset {name!r}")


def drift_coef(spec: str) -> Coef:
    """Drift b(x, y): zero, const(c), tanh_x(c), tanh_y(c), tanh_sum(c) = c tanh(x + y), kinetic (b = y)."""
    name, args = _parse(spec)
    c = args[0] if args else 1.0
    if name in ("zero", "const"):
        v = args[0] if (name == "const" and args) else 0.0
        return Coef(lambda x, y: np.full(np.shape(x), v), 0.0, abs(v), spec)
    if name == "tanh_x":
        return Coef(lambda x, y: c * np.tanh(x), abs(c), abs(c), spec)
    if name == "tanh_y":
        return Coef(lambda x, y: c * np.tanh(y), abs(c), abs(c), spec)
    if name == "tanh_sum":
        return Coef(lambda x, y: c * np.tanh(x + y), abs(c), abs(c), spec)
    if name == "kinetic":
        return Coef(lambda x, y: np.asarray(y, dtype=float), 1.0, np.inf, spec)
    raise ValueError(f"unknown drift preset {name!r}")


def diffusion_coef(spec: str) -> Coef:
    """X-diffusion sigma(x): const(s) or sin_modulated(a) = 1 + a sin(x) with |a| < 1."""
    name, args = _parse(spec)
    if name == "const":
        s = args[0] if args else 1.0
        return Coef(lambda x: np.full(np.shape(x), s), 0.0, abs(s), spec)
    if name == "sin_modulated":
        a = args[0]
        return Coef(lambda x: 1.0 + a * np.sin(x), abs(a), 1.0 + abs(a), spec)
    raise ValueError(f"unknown diffusion preset {name!r}")


@dataclass(frozen=True)
class CoefficientSet:
    b: Coef
    sigma: Coef
    ell: Coef
    gamma: Coef
    a_star: float = 1.0
    alpha_star: float = 1.0
    b_depends_on_y: bool = True

    @classmethod
    def from_names(cls, b="zero", sigma="const(1)", ell="tanh", gamma="const(1)",
                   a_star: float | None = None, alpha_star: float | None = None) -> "CoefficientSet":
        bc, sc, lc, gc = drift_coef(b), diffusion_coef(sigma), scalar_coef(ell), scalar_coef(gamma)
        a_star = _infimum(sc.fn) if a_star is None else a_star
        alpha_star = _infimum(lambda y: gc.fn(y) ** 2) if alpha_star is None else alpha_star
        depends = not (b.startswith("zero") or b.startswith("const") or b.startswith("tanh_x"))
        return cls(bc, sc, lc, gc, a_star, alpha_star, depends)

    @property
    def kinetic(self) -> bool:
        """Degenerate kinetic configuration: runnable, outside the certified hypotheses."""
        return self.b.name.startswith("kinetic")

    @property
    def theta_sup(self) -> float:
        """Bound on |sigma^-1 b|."""
        return self.b.sup / self.a_star

    @property
    def lipschitz_sq(self) -> float:
        return self.ell.lip**2 + self.gamma.lip**2

    def default_c(self) -> float:
        """Twice the threshold 2 (L_ell^2 + L_gamma^2)."""
        return 4.0 * self.lipschitz_sq

    def describe(self) -> dict:
        return {"b": self.b.name, "sigma": self.sigma.name, "ell": self.ell.name, "gamma": self.gamma.name,
                "a_star": self.a_star, "alpha_star": self.alpha_star,
                "status": "untested theory" if self.kinetic else "certified"}


def _infimum(fn) -> float:
    # presets are constant, monotone-saturating or 2 pi periodic
    z = np.linspace(-np.pi, np.pi, 4001)
    return float(np.min(fn(z)))


def ellipticity_check(coeffs: CoefficientSet, n: int = 4096, seed: int = 0, span: float = 10.0) -> VerificationReport:
    """Spot checks sigma(x) xi^2 >= a* xi^2 and gam(y)^2 xi^2 >= alpha* xi^2 at random points."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-span, span, n)
    xi = rng.normal(size=n)
    rep = VerificationReport("ellipticity")
    q_sigma = coeffs.sigma(x) * xi**2
    q_gamma = coeffs.gamma(x) ** 2 * xi**2
    rep.add("sigma_form_min", float(np.min(q_sigma - coeffs.a_star * xi**2)), -1e-12, 0.0, "lower", "ellipticity")
    rep.add("gamma_form_min", float(np.min(q_gamma - coeffs.alpha_star * xi**2)), -1e-12, 0.0, "lower", "ellipticity")
    rep.add("a_star", coeffs.a_star, 1e-12, 0.0, "lower", "ellipticity")
    return rep


def sigma_inverse(s: np.ndarray) -> np.ndarray:
    """Inverse of the X-diffusion at each particle with a conditioning guard.

    Scalars are 1x1 matrices: the guard rejects non-positive or vanishing values.
    (N, d, d) stacks are inverted directly after a condition-number check.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim == 3:
        cond = np.linalg.cond(s)
        if np.any(cond > COND_LIMIT):
            raise ValueError(f"sigma condition number {cond.max():.3g} exceeds {COND_LIMIT:g}")
        return np.linalg.inv(s)
    scale = max(1.0, float(np.max(np.abs(s)))) if s.size else 1.0
    if np.any(s <= scale / COND_LIMIT):
        raise ValueError("sigma is not uniformly positive")
    return 1.0 / s


# --- estimator configuration --------------------------------------------------------


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "nw"            # nw | binned
    bandwidth: Optional[float] = None
    n_bins: int = 50
    shape: str = "gaussian"
    c_b: float = 1.06

    def resolve_bandwidth(self, x: np.ndarray) -> float:
        return self.bandwidth if self.bandwidth is not None else default_bandwidth(x, self.c_b)

    def estimate(self, x, vals, weights=None, query=None) -> ConditionalEstimate:
        query = x if query is None else query
        if self.kind == "nw":
            spec = MollifierSpec(self.shape, self.resolve_bandwidth(x))
            return nw_conditional(x, vals, weights, None, spec, query)
        if self.kind == "binned":
            lo, hi = float(np.min(x)), float(np.max(x))
            return binned_conditional(x, vals, weights, None, self.n_bins, (lo, hi), query)
        raise ValueError(f"unknown estimator kind {self.kind!r}")


# --- simulation ------------------------------------------------------------------------


@dataclass
class CoupledPath:
    """Recorded states of a coupled run; arrays have shape (n_records, N)."""

    times: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    logZ: np.ndarray
    dt: float
    measure: str                       # "P" (drifted X) or "Q" (driftless X, Z^-1 weights)
    degenerate_queries: int = 0
    bound_violations: int = 0
    coefficient_grid: Optional[dict] = None
    info: dict = field(default_factory=dict)

    @property
    def Z(self) -> np.ndarray:
        return np.exp(self.logZ)

    @property
    def final(self):
        return self.X[-1], self.Y[-1], self.logZ[-1]

    def weights(self, k: int = -1) -> np.ndarray:
        """Weights turning records of this run into the drifted law (Z^-1 for a Q run)."""
        if self.measure == "Q":
            return np.exp(-self.logZ[k])
        return np.ones(self.X.shape[1])


@dataclass(frozen=True)
class CorrelatedNormal:
    """(X0, Y0) standard normal marginals with correlation rho."""

    rho: float

    def sample(self, seed: int, ids: np.ndarray):
        zx = rng_stream(seed, ids, 0, Channel.INIT)
        zy = rng_stream(seed, ids, 0, Channel.INIT_Y)
        return zx, self.rho * zx + np.sqrt(1.0 - self.rho**2) * zy


def initial_pair(spec: str):
    """``correlated_normal(rho)`` joint law for (X0, Y0)."""
    match = _CALL.match(spec)
    if not match or match.group(1) != "correlated_normal":
        raise ValueError(f"unrecognised joint initial law {spec!r}")
    return CorrelatedNormal(float(match.group(2)))


def _initial(mu0, seed: int, N: int):
    """(X0, Y0) from a pair of laws (independent coordinates) or explicit arrays."""
    ids = np.arange(N, dtype=np.int64)
    if isinstance(mu0, str):
        return initial_pair(mu0).sample(seed, ids)
    if isinstance(mu0, tuple) and len(mu0) == 2 and isinstance(mu0[0], (InitialLaw, str)):
        lx = initial_law(mu0[0]) if isinstance(mu0[0], str) else mu0[0]
        ly = initial_law(mu0[1]) if isinstance(mu0[1], str) else mu0[1]
        return lx.sample(seed, ids, Channel.INIT), ly.sample(seed, ids, Channel.INIT_Y)
    x0, y0 = mu0
    return np.array(x0, dtype=float), np.array(y0, dtype=float)


def simulate_conditional(coeffs: CoefficientSet, mu0, N: int, estimator: EstimatorConfig | None = None,
                         dt: float = 1e-2, T: float = 0.5, seed: int = 0, measure: str = "P",
                         record_stride: int = 10, grid_query: np.ndarray | None = None,
                         grid_stride: int | None = None, check_hypotheses: bool = True) -> CoupledPath:
    """Euler-Maruyama for the coupled system.

    ``measure="P"``: X carries the drift b. ``measure="Q"``: X is driftless and the
    Y coefficients are Z^-1-weighted conditional means, which reproduces the law
    of the drifted system. log Z is accumulated along both.
    """
    if N < 100:
        raise ValueError("need at least 100 particles")
    if measure not in ("P", "Q"):
        raise ValueError("measure must be 'P' or 'Q'")
    estimator = EstimatorConfig() if estimator is None else estimator
    if check_hypotheses and not coeffs.kinetic:
        rep = ellipticity_check(coeffs, seed=seed)
        if not rep.passed:
            raise ValueError(f"ellipticity spot-check failed: {rep.failures()}")
    n_steps = int(round(T / dt))
    ids = np.arange(N, dtype=np.int64)
    x, y = _initial(mu0, seed, N)
    logz = np.zeros(N)
    grid_stride = record_stride if grid_stride is None else grid_stride
    rec = {"t": [0.0], "X": [x.copy()], "Y": [y.copy()], "logZ": [logz.copy()]}
    grid_rec = {"t": [], "lambda": [], "gamma": [], "rho": []} if grid_query is not None else None
    degenerate = violations = 0
    ell_sup, gam_sup = coeffs.ell.sup, coeffs.gamma.sup

    for k in range(n_steps):
        w = np.exp(-logz) if measure == "Q" else None
        vals = np.stack([coeffs.ell(y), coeffs.gamma(y)], axis=1)
        est = estimator.estimate(x, vals, w)
        lam, gam = est.values[:, 0], est.values[:, 1]
        degenerate += est.n_degenerate
        violations += int(np.count_nonzero(np.abs(lam) > ell_sup * (1 + 1e-12)))
        violations += int(np.count_nonzero(np.abs(gam) > gam_sup * (1 + 1e-12)))
        if grid_rec is not None and k % grid_stride == 0:
            g = estimator.estimate(x, vals, w, grid_query)
            grid_rec["t"].append(k * dt)
            grid_rec["lambda"].append(g.values[:, 0])
            grid_rec["gamma"].append(g.values[:, 1])
            spec = MollifierSpec("gaussian", estimator.resolve_bandwidth(x))
            grid_rec["rho"].append(kde(x, w, spec, grid_query))

        sig = coeffs.sigma(x)
        theta = coeffs.b(x, y) * sigma_inverse(sig) if not coeffs.kinetic else np.zeros(N)
        dB = brownian_increments(seed, ids, k + 1, Channel.B, 1, dt)[:, 0]
        dW = brownian_increments(seed, ids, k + 1, Channel.W, 1, dt)[:, 0]
        if coeffs.kinetic:
            dx = coeffs.b(x, y) * dt + sig * dB
        elif measure == "P":
            dx = coeffs.b(x, y) * dt + sig * dB
        else:
            dx = sig * dB
        dB_hat = dx / sig if not coeffs.kinetic else dB
        logz = logz - theta * dB_hat + 0.5 * theta**2 * dt
        _guard(logz, k + 1)
        x = x + dx
        y = y + lam * dt + gam * dW
        if (k + 1) % record_stride == 0 or k + 1 == n_steps:
            rec["t"].append((k + 1) * dt)
            rec["X"].append(x.copy())
            rec["Y"].append(y.copy())
            rec["logZ"].append(logz.copy())

    grid_out = None
    if grid_rec is not None:
        grid_out = {"x": np.asarray(grid_query), **{k: np.asarray(v) for k, v in grid_rec.items()}}
    return CoupledPath(np.array(rec["t"]), np.stack(rec["X"]), np.stack(rec["Y"]), np.stack(rec["logZ"]), dt,
                       measure, degenerate, violations, grid_out,
                       {"coefficients": coeffs.describe(), "estimator": estimator.kind, "N": N, "seed": seed})


def _guard(logz: np.ndarray, step: int) -> None:
    bad = np.abs(logz) > LOG_Z_LIMIT
    if bad.any():
        i = int(np.argmax(bad))
        raise OverflowGuard(f"|log Z| exceeded {LOG_Z_LIMIT:g} for particle {i} at step {step}", i, step)


def girsanov_weights(X: np.ndarray, Y: np.ndarray, coeffs: CoefficientSet, dt: float) -> np.ndarray:
    """log Z along recorded paths (shape (n_steps + 1, N)), every step recorded.

    dB_hat = (X_k+1 - X_k) / sigma(X_k); log Z <- log Z - theta dB_hat + theta^2 dt / 2.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    logz = np.zeros_like(X)
    for k in range(X.shape[0] - 1):
        sig = coeffs.sigma(X[k])
        theta = coeffs.b(X[k], Y[k]) * sigma_inverse(sig)
        dB_hat = (X[k + 1] - X[k]) / sig
        logz[k + 1] = logz[k] - theta * dB_hat + 0.5 * theta**2 * dt
        _guard(logz[k + 1], k + 1)
    return logz


# --- checks ----------------------------------------------------------------------------------


def normalization_check(p_run: CoupledPath | None, q_run: CoupledPath | None, n_se: float = 3.0) -> VerificationReport:
    """Mean-one checks at every recorded time: E_P[Z_t] on the drifted run, E_Q[Z_t^-1] on the driftless one."""
    rep = VerificationReport("girsanov-normalization")
    for run, label in ((p_run, "P"), (q_run, "Q")):
        if run is None:
            continue
        for k, t in enumerate(run.times):
            if t == 0:
                continue
            v = np.exp(run.logZ[k]) if label == "P" else np.exp(-run.logZ[k])
            mean = float(v.mean())
            se = float(v.std(ddof=1) / np.sqrt(v.size))
            name = "E_P[Z]" if label == "P" else "E_Q[1/Z]"
            rep.add(f"{name}@t={t:g}", mean - 1.0, max(se, 1e-300), n_se, "residual", "exponential-martingale",
                    standard_error=se)
        if label == "Q":
            rep.info["E_Q[Z]_final"] = float(np.exp(run.logZ[-1]).mean())
    return rep


def adequate_queries(x: np.ndarray, bandwidth: float, lo_q: float = 0.02, hi_q: float = 0.98) -> np.ndarray:
    """Query grid spaced two bandwidths apart inside the central quantile range."""
    lo, hi = np.quantile(x, [lo_q, hi_q])
    n = max(int(np.floor((hi - lo) / (2 * bandwidth))) + 1, 1)
    return lo + 2 * bandwidth * np.arange(n)


def weighted_conditional_check(p_run: CoupledPath, q_run: CoupledPath, theta: Callable = np.tanh,
                               estimator: EstimatorConfig | None = None, query: np.ndarray | None = None,
                               n_boot: int = 40, min_ess: float = 200.0, n_se: float = 3.0,
                               seed: int = 0) -> VerificationReport:
    """Drifted-law conditional mean of theta(Y_T) given X_T from both runs.

    P side: plain estimate on the drifted run. Q side: Z^-1-weighted estimate on
    the driftless run. Each query with effective sample size >= ``min_ess`` on
    both sides is compared against ``n_se`` combined bootstrap standard errors.
    """
    estimator = EstimatorConfig() if estimator is None else estimator
    xp, yp, _ = p_run.final
    xq, yq, _ = q_run.final
    wq = q_run.weights(-1)
    bw = estimator.resolve_bandwidth(xp)
    est = replace(estimator, bandwidth=bw)
    query = adequate_queries(xp, bw) if query is None else np.asarray(query)
    tp, tq = theta(yp), theta(yq)

    ep = est.estimate(xp, tp, None, query)
    eq = est.estimate(xq, tq, wq, query)
    se_p = bootstrap_se(lambda i: est.estimate(xp[i], tp[i], None, query).values[:, 0], xp.size, n_boot, seed)
    se_q = bootstrap_se(lambda i: est.estimate(xq[i], tq[i], wq[i], query).values[:, 0], xq.size, n_boot, seed + 1)
    se = np.sqrt(se_p**2 + se_q**2)
    ok = (ep.ess >= min_ess) & (eq.ess >= min_ess) & ~ep.degenerate & ~eq.degenerate & (se > 0)
    diff = ep.values[:, 0] - eq.values[:, 0]
    z = np.where(ok, np.abs(diff) / np.where(se > 0, se, 1.0), 0.0)
    rep = VerificationReport("weighted-conditional")
    rep.add("max_z", float(z.max()) if ok.any() else 0.0, n_se, 0.0, "upper", "girsanov-conditional-identity",
            n_queries=int(ok.sum()))
    rep.info.update(query=query.tolist(), p=ep.values[:, 0].tolist(), q=eq.values[:, 0].tolist(),
                    se=se.tolist(), adequate=ok.tolist(), bandwidth=bw)
    return rep


def exp_mart_bound_check(q_run: CoupledPath, coeffs: CoefficientSet, estimator: EstimatorConfig | None = None,
                         record_indices: Sequence[int] | None = None, n_boot: int = 30, min_ess: float = 200.0,
                         n_se: float = 3.0, seed: int = 0) -> VerificationReport:
    """E_Q[Z^2 | X] * Zhat(X)^-2 with Zhat = 1 / E_Q[Z^-1 | X], against exp(3 T sup theta^2).

    The statistic is evaluated on adequate-mass queries at the recorded times;
    the tolerance is ``n_se`` bootstrap standard errors of the maximiser.
    """
    estimator = EstimatorConfig() if estimator is None else estimator
    if q_run.measure != "Q":
        raise ValueError("needs a driftless (Q) run")
    T = float(q_run.times[-1])
    th = coeffs.theta_sup
    bound = float(np.exp(3.0 * T * th**2))
    ks = range(1, len(q_run.times)) if record_indices is None else record_indices
    best = (1.0, 0.0, 0.0)  # value, se, time
    for k in ks:
        x = q_run.X[k]
        z = np.exp(q_run.logZ[k])
        bw = estimator.resolve_bandwidth(x)
        est = replace(estimator, bandwidth=bw)
        query = adequate_queries(x, bw)
        vals = np.stack([z * z, 1.0 / z], axis=1)

        def stat(idx=None):
            xi, vi = (x, vals) if idx is None else (x[idx], vals[idx])
            e = est.estimate(xi, vi, None, query)
            return e.values[:, 0] * e.values[:, 1] ** 2, e

        s, e = stat()
        ok = (e.ess >= min_ess) & ~e.degenerate
        if not ok.any():
            continue
        j = int(np.argmax(np.where(ok, s, -np.inf)))
        if s[j] > best[0]:
            se = float(bootstrap_se(lambda i: stat(i)[0][j], x.size, n_boot, seed + k))
            best = (float(s[j]), se, float(q_run.times[k]))
    value, se, t_at = best
    rep = VerificationReport("exp-martingale-bound")
    rep.add("conditional_second_moment", value, bound, n_se * se / bound, "upper", "exponential-martingale-moment",
            standard_error=se, time=t_at)
    rep.info.update(bound_theta_squared=bound, bound_theta_linear=float(np.exp(3.0 * T * th)), theta_sup=th)
    return rep


def girsanov_marginal_check(p_run: CoupledPath, q_run: CoupledPath, n_boot: int = 30, n_se: float = 3.0,
                            seed: int = 0) -> VerificationReport:
    """W1 between X-marginals of the drifted run and the Z^-1-weighted driftless run.

    The standard error of each empirical measure is the bootstrap root-mean-square
    W1 distance between the sample and its resamples; the two are combined in
    quadrature. (The spread of W1 itself would understate the scale because W1
    is biased upward.)
    """
    rep = VerificationReport("girsanov-marginal")
    rng = np.random.default_rng(seed)
    common = np.intersect1d(np.round(p_run.times, 12), np.round(q_run.times, 12))
    for t in common[1:]:
        kp = int(np.argmin(np.abs(p_run.times - t)))
        kq = int(np.argmin(np.abs(q_run.times - t)))
        xp, xq, wq = p_run.X[kp], q_run.X[kq], q_run.weights(kq)
        w1 = wasserstein1_1d(xp, xq, None, wq)
        dp, dq = [], []
        for _ in range(n_boot):
            ip = rng.integers(0, xp.size, xp.size)
            iq = rng.integers(0, xq.size, xq.size)
            dp.append(wasserstein1_1d(xp[ip], xp))
            dq.append(wasserstein1_1d(xq[iq], xq, wq[iq], wq))
        se = float(np.sqrt(np.mean(np.square(dp)) + np.mean(np.square(dq))))
        rep.add(f"W1@t={t:g}", w1, n_se * se, 0.0, "upper", "girsanov-marginal", standard_error=se)
    return rep


def bound_transfer_check(runs: Sequence[CoupledPath]) -> VerificationReport:
    rep = VerificationReport("bound-transfer")
    total = sum(r.bound_violations for r in runs)
    rep.add("violations", total, 0.0, 0.0, "upper", "conditional-mean-bound")
    rep.info["degenerate_queries"] = int(sum(r.degenerate_queries for r in runs))
    return rep


# --- Picard iteration --------------------------------------------------------------------------


@dataclass(frozen=True)
class PathNormSpec:
    c: float
    dt: float
    T: float

    def certified(self, coeffs: CoefficientSet) -> bool:
        return self.c > 2.0 * coeffs.lipschitz_sq


@dataclass
class PicardResult:
    distances: np.ndarray
    iterates: Optional[np.ndarray]       # (K + 1, n_records, N) when kept
    ratios: np.ndarray
    geometric_ratio: float
    floor_index: int
    no_contraction: bool
    info: dict = field(default_factory=dict)


def picard_iterate(coeffs: CoefficientSet, mu0, N: int, norm: PathNormSpec, K: int = 8, seed: int = 0,
                   estimator: EstimatorConfig | None = None, keep_iterates: bool = False,
                   record_stride: int = 10, floor_rel: float = 1e-10) -> PicardResult:
    """Iterates zeta^0 = Y0, zeta^k+1 = Y(zeta^k) on frozen noise and X paths.

    All K + 1 iterates are advanced in one time sweep; D_k = ||zeta^k+1 - zeta^k||_c
    uses the trapezoid rule in time with weight exp(-c s) and the particle mean.
    """
    if coeffs.b_depends_on_y:
        raise ValueError("Picard iteration needs autonomous X dynamics (b independent of y)")
    if K < 1:
        raise ValueError("K must be at least 1")
    estimator = EstimatorConfig() if estimator is None else estimator
    dt, T, c = norm.dt, norm.T, norm.c
    n_steps = int(round(T / dt))
    ids = np.arange(N, dtype=np.int64)
    x, y0 = _initial(mu0, seed, N)
    zeta = np.tile(y0, (K + 1, 1))            # zeta[k] is iterate k at the current time
    acc = np.zeros(K)                          # running trapezoid sums per particle mean
    prev_sq = np.zeros(K)
    kept = [zeta.copy()] if keep_iterates else None
    for n in range(n_steps):
        bw = estimator.resolve_bandwidth(x)
        est = replace(estimator, bandwidth=bw)
        # conditional means of ell(zeta^k), gam(zeta^k) for k = 0..K-1, sharing the X binning
        vals = np.concatenate([coeffs.ell(zeta[:K]), coeffs.gamma(zeta[:K])], axis=0).T
        e = est.estimate(x, vals)
        lam, gam = e.values[:, :K].T, e.values[:, K:].T
        dB = brownian_increments(seed, ids, n + 1, Channel.B, 1, dt)[:, 0]
        dW = brownian_increments(seed, ids, n + 1, Channel.W, 1, dt)[:, 0]
        x = x + coeffs.b(x, None) * dt + coeffs.sigma(x) * dB
        zeta[1:] += lam * dt
        zeta[1:] += gam * dW[None, :]
        diff = np.diff(zeta, axis=0)
        sq = np.einsum("kn,kn->k", diff, diff) / N
        t1 = (n + 1) * dt
        acc += 0.5 * dt * (np.exp(-c * (t1 - dt)) * prev_sq + np.exp(-c * t1) * sq)
        prev_sq = sq
        if keep_iterates and ((n + 1) % record_stride == 0 or n + 1 == n_steps):
            kept.append(zeta.copy())
    D = np.sqrt(acc)
    ratios, geo, floor, flag = contraction_summary(D, floor_rel)
    iterates = np.stack(kept, axis=1) if keep_iterates else None
    return PicardResult(D, iterates, ratios, geo, floor, flag,
                        {"c": c, "certified": norm.certified(coeffs), "N": N, "seed": seed, "K": K})


def contraction_summary(D: np.ndarray, floor_rel: float = 1e-10):
    """Successive ratios, fitted geometric ratio before the noise floor, floor index, no-contraction flag.

    The floor is the first k with D_k <= floor_rel * D_0 or D_k >= D_k-1; the fit
    is least squares of log D_k on k over the iterates before it.
    """
    D = np.asarray(D, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = D[1:] / D[:-1]
    floor = len(D)
    for k in range(1, len(D)):
        if D[k] <= floor_rel * D[0] or D[k] >= D[k - 1]:
            floor = k
            break
    rises = np.diff(D) > 0
    flag = any(rises[i] and rises[i + 1] and rises[i + 2] for i in range(len(rises) - 2))
    seg = D[:floor]
    seg = seg[seg > 0]
    if seg.size >= 2:
        slope = np.polyfit(np.arange(seg.size), np.log(seg), 1)[0]
        geo = float(np.exp(slope))
    else:
        geo = float("nan")
    return ratios, geo, floor, bool(flag)


# --- pathwise uniqueness ------------------------------------------------------------------------


def path_gap(a: CoupledPath, b: CoupledPath) -> float:
    """max over recorded times of mean |Y^a - Y^b|."""
    return float(np.max(np.mean(np.abs(a.Y - b.Y), axis=1)))


def pathwise_uniqueness_check(coeffs: CoefficientSet, mu0, N: int, seeds: Sequence[int], dt: float = 1e-2,
                              T: float = 0.5, pair=("nw", "binned"), radius: float = 1.0) -> VerificationReport:
    """Two estimator configurations on identical noise, at (N, b) and (4N, b / 4^(1/5)).

    The gap must shrink under refinement (median over seeds). The density lower
    bound on [-radius, radius] at the final time is reported alongside.
    """
    rep = VerificationReport("pathwise-uniqueness")
    gaps = {0: [], 1: []}
    rho_min = np.inf
    for seed in seeds:
        for level, n in enumerate((N, 4 * N)):
            x0, _ = _initial(mu0, seed, n)
            b = default_bandwidth(x0)
            bins = int(np.ceil((np.max(x0) - np.min(x0)) / b))
            cfg = {
                "nw": EstimatorConfig("nw", b),
                "nw_wide": EstimatorConfig("nw", 1.5 * b),
                "binned": EstimatorConfig("binned", b, n_bins=max(bins, 2)),
            }
            r1 = simulate_conditional(coeffs, mu0, n, cfg[pair[0]], dt, T, seed)
            r2 = simulate_conditional(coeffs, mu0, n, cfg[pair[1]], dt, T, seed)
            gaps[level].append(path_gap(r1, r2))
            if level == 1:
                xr = r1.X[-1]
                q = np.linspace(-radius, radius, 41)
                rho = kde(xr, None, MollifierSpec("gaussian", default_bandwidth(xr)), q)
                rho_min = min(rho_min, float(rho.min()))
    g0, g1 = float(np.median(gaps[0])), float(np.median(gaps[1]))
    rep.add("refined_gap_ratio", g1 / g0 if g0 > 0 else 0.0, 1.0, 0.0, "upper", "pathwise-uniqueness",
            coarse=g0, fine=g1)
    rep.add("density_lower_bound", rho_min, 0.0, 0.0, "lower", "density-lower-bound")
    rep.info.update(gaps_coarse=gaps[0], gaps_fine=gaps[1])
    return rep
