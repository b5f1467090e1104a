"""Scalar diffusion laws r -> sigma(r) and the coefficients derived from them.

The Fokker-Planck equation of dX = sigma(u(t, X)) dW reads, in divergence form,

    du/dt = 1/2 div(alpha(u) grad u),   alpha(r) = (sigma(r)^2 r)'.

Models are evaluated on [0, r_max]; outside that range they are undefined.
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import DomainError

ArrayFn = Callable[[np.ndarray], np.ndarray]

# Gauss-Legendre rule on [0, 1] for vectorised antiderivatives
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class DiffusionModel:
    """Diffusion magnitude sigma on [0, r_max].

    ``sigma_prime`` is optional; without it a centred finite difference with
    step ``max(1e-6, 1e-6 r)`` is used. ``sigma_sq_prime`` (the derivative of
    sigma^2) may be supplied by presets whose sigma' is singular at r = 0 while
    (sigma^2)' is not, e.g. sigma(r) = sqrt(r).
    """

    sigma: ArrayFn
    r_max: float
    sigma_prime: Optional[ArrayFn] = None
    sigma_sq_prime: Optional[ArrayFn] = None
    name: str = "custom"

    def __post_init__(self):
        if not np.isfinite(self.r_max) or self.r_max <= 0:
            raise ValueError("r_max must be a positive finite number")

    def check_domain(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r < 0) or np.any(r > self.r_max) or np.any(np.isnan(r)):
            raise DomainError(f"{self.name}: argument outside [0, {self.r_max}]")
        return r

    def with_r_max(self, r_max: float) -> "DiffusionModel":
        return replace(self, r_max=float(r_max))

    def sigma_sq(self, r) -> np.ndarray:
        r = self.check_domain(r)
        s = self.sigma(r)
        return s * s

    def dsigma(self, r) -> np.ndarray:
        """sigma'(r), analytic when available."""
        r = self.check_domain(r)
        if self.sigma_prime is not None:
            return np.asarray(self.sigma_prime(r), dtype=float)
        return _centered_difference(self.sigma, r, self.r_max)

    def dsigma_sq(self, r) -> np.ndarray:
        r = self.check_domain(r)
        if self.sigma_sq_prime is not None:
            return np.asarray(self.sigma_sq_prime(r), dtype=float)
        return 2.0 * self.sigma(r) * self.dsigma(r)


def _centered_difference(fn: ArrayFn, r: np.ndarray, r_max: float) -> np.ndarray:
    h = np.maximum(1e-6, 1e-6 * r)
    lo = np.maximum(r - h, 0.0)
    hi = r + h  # models are smooth slightly past r_max
    return (fn(hi) - fn(lo)) / (hi - lo)


def alpha(model: DiffusionModel, r) -> np.ndarray | float:
    """alpha(r) = 2 sigma'(r) sigma(r) r + sigma(r)^2."""
    r = model.check_domain(r)
    with np.errstate(invalid="ignore"):
        slope = np.where(r > 0, model.dsigma_sq(r) * r, 0.0)
    out = slope + model.sigma_sq(r)
    return float(out) if out.ndim == 0 else out


def alpha_eps(model: DiffusionModel, r, eps: float) -> np.ndarray | float:
    """alpha(r) + eps, the coefficient of the eps-regularised equation."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return alpha(model, r) + eps


def phi_eps(model: DiffusionModel, r, eps: float) -> np.ndarray:
    """Phi_eps(r) = (sigma(r)^2 + eps) r."""
    r = model.check_domain(r)
    return (model.sigma_sq(r) + eps) * r


def psi_eps(model: DiffusionModel, r, eps: float) -> np.ndarray:
    """Vectorised Psi_eps(r) = int_0^r Phi_eps by 32-point Gauss-Legendre."""
    r = model.check_domain(r)
    flat = np.atleast_1d(r).ravel()
    nodes = flat[:, None] * _GL_NODES[None, :]
    vals = phi_eps(model, nodes, eps)
    out = flat * (vals @ _GL_WEIGHTS)
    return out.reshape(np.shape(r))


def phi_psi_eps(model: DiffusionModel, r: float, eps: float) -> tuple[float, float]:
    """(Phi_eps(r), Psi_eps(r)) for scalar r; Psi by adaptive quadrature."""
    r = float(model.check_domain(r))
    phi = float(phi_eps(model, r, eps))
    if r == 0.0:
        return phi, 0.0
    psi, _ = integrate.quad(
        lambda th: float(phi_eps(model, th, eps)), 0.0, r, epsabs=0.0, epsrel=1e-12, limit=200
    )
    return phi, psi


@dataclass
class HypothesisReport:
    a1_ok: bool
    a2_ok: bool
    eta: float
    a2weak_ok: bool
    strictly_increasing_ok: bool
    witnesses: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "a1_ok": self.a1_ok,
            "a2_ok": self.a2_ok,
            "eta": self.eta,
            "a2weak_ok": self.a2weak_ok,
            "strictly_increasing_ok": self.strictly_increasing_ok,
            "witnesses": dict(self.witnesses),
        }


ETA_FLOOR = 1e-12


def check_hypotheses(model: DiffusionModel, n_samples: int = 2001, u_max: Optional[float] = None) -> HypothesisReport:
    """Sample alpha on [0, u_max] and classify the model.

    a2 holds when min alpha > 1e-12 (reported as ``eta``); a2weak when
    min alpha >= -1e-12. Monotonicity compares consecutive samples.
    """
    u_max = model.r_max if u_max is None else float(u_max)
    if u_max > model.r_max:
        raise DomainError("u_max exceeds r_max")
    r = np.linspace(0.0, u_max, int(n_samples))
    witnesses: dict = {}

    sig = np.asarray(model.sigma(r), dtype=float)
    dsig = model.dsigma_sq(r)
    a1_ok = bool(np.all(np.isfinite(sig)) and np.all(np.isfinite(dsig)) and np.all(sig >= 0))
    if not a1_ok:
        bad = ~(np.isfinite(sig) & np.isfinite(dsig) & (sig >= 0))
        witnesses["a1"] = float(r[np.argmax(bad)])

    a = alpha(model, r)
    i_min = int(np.nanargmin(a))
    eta = float(a[i_min])
    a2_ok = bool(eta > ETA_FLOOR)
    a2weak_ok = bool(eta >= -ETA_FLOOR)
    if not a2_ok:
        witnesses["a2"] = float(r[i_min])
    if not a2weak_ok:
        witnesses["a2weak"] = float(r[i_min])

    steps = np.diff(a)
    increasing = bool(np.all(steps > 0))
    if not increasing:
        witnesses["strictly_increasing"] = float(r[int(np.argmax(steps <= 0))])
    return HypothesisReport(a1_ok, a2_ok, eta, a2weak_ok, increasing, witnesses)


def sup_alpha(model: DiffusionModel, u_max: float, eps: float = 0.0, n: int = 2001) -> float:
    r = np.linspace(0.0, float(u_max), n)
    return float(np.max(alpha(model, r))) + eps


# --- presets -----------------------------------------------------------------


def constant(s0: float, r_max: float = 10.0) -> DiffusionModel:
    s0 = float(s0)
    if s0 < 0:
        raise ValueError("s0 must be nonnegative")
    return DiffusionModel(
        sigma=lambda r: np.full(np.shape(r), s0),
        sigma_prime=lambda r: np.zeros(np.shape(r)),
        sigma_sq_prime=lambda r: np.zeros(np.shape(r)),
        r_max=r_max,
        name=f"constant({s0:g})",
    )


def sqrt_affine(a: float, b: float, r_max: float = 10.0) -> DiffusionModel:
    """sigma(r) = sqrt(a + b r); alpha(r) = a + 2 b r."""
    a, b = float(a), float(b)
    if a < 0 or a + b * r_max < 0:
        raise ValueError("a + b r must stay nonnegative on [0, r_max]")
    return DiffusionModel(
        sigma=lambda r: np.sqrt(a + b * np.asarray(r)),
        sigma_prime=lambda r: 0.5 * b / np.sqrt(a + b * np.asarray(r)),
        sigma_sq_prime=lambda r: np.full(np.shape(r), b),
        r_max=r_max,
        name=f"sqrt_affine({a:g},{b:g})",
    )


def pme(m: float, r_max: float = 10.0) -> DiffusionModel:
    """Porous-medium law sigma^2(r) = r^(m-1); alpha(r) = m r^(m-1)."""
    m = float(m)
    if m < 1:
        raise ValueError("pme requires m >= 1")
    k = m - 1.0

    def sigma(r):
        return np.power(np.asarray(r, dtype=float), 0.5 * k)

    def sigma_sq_prime(r):
        r = np.asarray(r, dtype=float)
        if k == 0:
            return np.zeros(np.shape(r))
        if k >= 1:
            return k * np.power(r, k - 1.0)
        with np.errstate(divide="ignore"):
            return k * np.power(r, k - 1.0)

    return DiffusionModel(sigma=sigma, sigma_sq_prime=sigma_sq_prime, r_max=r_max, name=f"pme({m:g})")


def tabulated(r_nodes, sigma_nodes, r_max: Optional[float] = None, name: str = "tabulated") -> DiffusionModel:
    """Monotone-cubic (PCHIP) interpolation of tabulated sigma values."""
    r_nodes = np.asarray(r_nodes, dtype=float)
    sigma_nodes = np.asarray(sigma_nodes, dtype=float)
    if r_nodes.ndim != 1 or r_nodes.shape != sigma_nodes.shape or r_nodes.size < 2:
        raise ValueError("need matching 1-D tables with at least two nodes")
    if np.any(np.diff(r_nodes) <= 0):
        raise ValueError("r nodes must be strictly increasing")
    if np.any(sigma_nodes < 0):
        raise ValueError("tabulated sigma must be nonnegative")
    interp = PchipInterpolator(r_nodes, sigma_nodes, extrapolate=True)
    deriv = interp.derivative()
    r_max = float(r_nodes[-1]) if r_max is None else float(r_max)
    return DiffusionModel(
        sigma=lambda r: interp(np.asarray(r, dtype=float)),
        sigma_prime=lambda r: deriv(np.asarray(r, dtype=float)),
        r_max=r_max,
        name=name,
    )


def load_tabulated_csv(path, r_max: Optional[float] = None) -> DiffusionModel:
    """Read a two-column (r, sigma) CSV; a non-numeric first row is a header."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise
    data = np.array(rows)
    return tabulated(data[:, 0], data[:, 1], r_max=r_max, name=f"csv:{path}")


_PRESET = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def model_from_spec(spec: str, r_max: float = 10.0) -> DiffusionModel:
    """Build a model from ``constant(s0)``, ``sqrt_affine(a,b)``, ``pme(m)`` or ``csv:path``."""
    spec = spec.strip()
    if spec.startswith("csv:"):
        return load_tabulated_csv(spec[4:], r_max=r_max)
    match = _PRESET.match(spec)
    if not match:
        raise ValueError(f"unrecognised model spec {spec!r}")
    name, raw = match.groups()
    args = [float(a) for a in raw.split(",") if a.strip()]
    factories = {"constant": constant, "sqrt_affine": sqrt_affine, "pme": pme}
    if name not in factories:
        raise ValueError(f"unknown model preset {name!r}")
    return factories[name](*args, r_max=r_max)
