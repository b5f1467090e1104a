"""Kernel density and conditional-mean estimators on particle clouds.

``kde`` is the mollified (optionally weighted) empirical measure; ``nw_conditional``
is the Nadaraya-Watson ratio sum_i w_i K(x - X_i) m(Y_i) / sum_i w_i K(x - X_i).

In one dimension both have a binned fast path: linear binning on a grid of
spacing bandwidth / 20, direct discrete convolution with the sampled kernel
(truncated at 5 bandwidths), then linear interpolation of numerator and
denominator separately. Each output is still a nonnegative combination of the
particle values, so the convex-hull property survives the approximation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np
from scipy import ndimage

from .errors import BandwidthError

DENOM_FLOOR = 1e-300
BIN_FRACTION = 20
TRUNCATE = 5.0
_DIRECT_LIMIT = 250_000  # N * Q above which the binned path is used in 1-D


@dataclass(frozen=True)
class MollifierSpec:
    """g_eps(x) = eps^-d g(x / eps) for a Gaussian or Epanechnikov profile g."""

    shape: str = "gaussian"
    bandwidth: float = 0.1
    dim: int = 1

    def __post_init__(self):
        if self.shape not in ("gaussian", "epanechnikov"):
            raise ValueError(f"unknown mollifier shape {self.shape!r}")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if not self.bandwidth > 0:
            raise BandwidthError("bandwidth must be positive")

    @property
    def support(self) -> float:
        """Radius (in bandwidths) outside which the kernel is treated as zero."""
        return TRUNCATE if self.shape == "gaussian" else 1.0

    def profile(self, z2: np.ndarray) -> np.ndarray:
        """g as a function of |z|^2."""
        d = self.dim
        if self.shape == "gaussian":
            return np.exp(-0.5 * z2) / (2.0 * np.pi) ** (d / 2)
        norm = 0.75 if d == 1 else 2.0 / np.pi
        return norm * np.clip(1.0 - z2, 0.0, None)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate g_eps at displacements ``x`` (last axis of length d when d = 2)."""
        x = np.asarray(x, dtype=float)
        eps = self.bandwidth
        z2 = (x / eps) ** 2 if self.dim == 1 else np.sum((x / eps) ** 2, axis=-1)
        return self.profile(z2) / eps**self.dim

    def with_bandwidth(self, bandwidth: float) -> "MollifierSpec":
        return MollifierSpec(self.shape, float(bandwidth), self.dim)


@dataclass
class ConditionalEstimate:
    """Estimates at ``query``; ``values`` has shape (Q, k)."""

    query: np.ndarray
    values: np.ndarray
    mass: np.ndarray
    ess: np.ndarray
    degenerate: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def n_degenerate(self) -> int:
        return int(np.count_nonzero(self.degenerate))

    def column(self, j: int = 0) -> np.ndarray:
        return self.values[:, j]


def default_bandwidth(x, c_b: float = 1.06) -> float:
    """c_b * std(X) * N^(-1/5), per coordinate mean for d = 2."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    std = float(np.mean(np.std(x, axis=0))) if x.ndim > 1 else float(np.std(x))
    if std == 0.0:
        std = 1.0
    return c_b * std * n ** (-0.2)


def _check_bandwidth(points: np.ndarray, bandwidth: float) -> None:
    scale = max(1.0, float(np.max(np.abs(points)))) if points.size else 1.0
    if bandwidth < 1e3 * np.finfo(float).eps * scale:
        raise BandwidthError(f"bandwidth {bandwidth:g} below resolvable scale at |x| ~ {scale:g}")


def _weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError("weights must match the number of points")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise ValueError("weights must have positive total")
    return w


# --- 1-D binned machinery ------------------------------------------------------


@dataclass
class BinnedGrid:
    """Regular grid used by the binned estimators."""

    lo: float
    delta: float
    n: int

    @classmethod
    def cover(cls, points: np.ndarray, query: np.ndarray, spec: MollifierSpec) -> "BinnedGrid":
        b = spec.bandwidth
        reach = spec.support * b
        lo = min(points.min(), query.min()) - reach - b
        hi = max(points.max(), query.max()) + reach + b
        delta = b / BIN_FRACTION
        n = int(np.ceil((hi - lo) / delta)) + 2
        return cls(float(lo), float(delta), n)

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.delta * np.arange(self.n)

    def bin(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Linear binning of weights ``w`` (shape (N,) or (N, k)) onto the nodes."""
        s = (x - self.lo) / self.delta
        i = np.floor(s).astype(np.int64)
        frac = s - i
        if w.ndim == 1:
            return self._bin1(i, frac, w)
        return np.stack([self._bin1(i, frac, w[:, j]) for j in range(w.shape[1])], axis=1)

    def _bin1(self, i, frac, w):
        out = np.bincount(i, w * (1.0 - frac), minlength=self.n + 1)
        out += np.bincount(i + 1, w * frac, minlength=self.n + 1)
        return out[: self.n]

    def kernel(self, spec: MollifierSpec, power: int = 1) -> np.ndarray:
        r = int(np.ceil(spec.support * spec.bandwidth / self.delta))
        offs = self.delta * np.arange(-r, r + 1)
        return spec(offs) ** power

    def smooth(self, binned: np.ndarray, kern: np.ndarray) -> np.ndarray:
        if binned.ndim == 1:
            return np.convolve(binned, kern, mode="same")
        return np.stack([np.convolve(binned[:, j], kern, mode="same") for j in range(binned.shape[1])], axis=1)

    def interp(self, values: np.ndarray, query: np.ndarray) -> np.ndarray:
        """Linear interpolation from the nodes (zero outside the grid)."""
        s = (query - self.lo) / self.delta
        i = np.clip(np.floor(s).astype(np.int64), 0, self.n - 2)
        frac = np.clip(s - i, 0.0, 1.0)
        if values.ndim == 1:
            return (1.0 - frac) * values[i] + frac * values[i + 1]
        return (1.0 - frac)[:, None] * values[i] + frac[:, None] * values[i + 1]


@numba.njit(cache=True)
def _binned_nw_kernel(x, vals, w, lo, delta, n, kern, kern2, query):
    """Fused 1-D binned Nadaraya-Watson: returns numerator (Q, k), denominator, sum of squared weights."""
    N, k = vals.shape
    r = (kern.shape[0] - 1) // 2
    bn = np.zeros((n + 1, k))
    bd = np.zeros(n + 1)
    bs = np.zeros(n + 1)
    for p in range(N):
        s = (x[p] - lo) / delta
        i = int(np.floor(s))
        f = s - i
        wp = w[p]
        bd[i] += wp * (1.0 - f)
        bd[i + 1] += wp * f
        bs[i] += wp * wp * (1.0 - f)
        bs[i + 1] += wp * wp * f
        for j in range(k):
            v = wp * vals[p, j]
            bn[i, j] += v * (1.0 - f)
            bn[i + 1, j] += v * f
    sn = np.zeros((n, k))
    sd = np.zeros(n)
    ss = np.zeros(n)
    for g in range(n):
        lo_m = max(0, g - r)
        hi_m = min(n - 1, g + r)
        for m in range(lo_m, hi_m + 1):
            kv = kern[m - g + r]
            if bd[m] != 0.0:
                sd[g] += kv * bd[m]
                ss[g] += kern2[m - g + r] * bs[m]
                for j in range(k):
                    sn[g, j] += kv * bn[m, j]
    Q = query.shape[0]
    num = np.empty((Q, k))
    den = np.empty(Q)
    sq = np.empty(Q)
    for q in range(Q):
        s = (query[q] - lo) / delta
        i = int(np.floor(s))
        if i < 0:
            i = 0
        if i > n - 2:
            i = n - 2
        f = s - i
        if f < 0.0:
            f = 0.0
        if f > 1.0:
            f = 1.0
        den[q] = (1.0 - f) * sd[i] + f * sd[i + 1]
        sq[q] = (1.0 - f) * ss[i] + f * ss[i + 1]
        for j in range(k):
            num[q, j] = (1.0 - f) * sn[i, j] + f * sn[i + 1, j]
    return num, den, sq


@numba.njit(cache=True)
def _ratio_clip(num, den, floor, vmin, vmax, clip):
    """num / den row-wise, clipped to [vmin, vmax]; rows with den < floor become 0."""
    Q, k = num.shape
    out = np.empty((Q, k))
    for q in range(Q):
        d = den[q]
        if not d >= floor:
            for j in range(k):
                out[q, j] = 0.0
            continue
        for j in range(k):
            v = num[q, j] / d
            if clip:
                if v < vmin[j]:
                    v = vmin[j]
                elif v > vmax[j]:
                    v = vmax[j]
            out[q, j] = v
    return out


def _use_binned(method: str, spec: MollifierSpec, n: int, q: int) -> bool:
    if method == "direct":
        return False
    if method == "binned":
        return True
    return n * q > _DIRECT_LIMIT


def _kde_binned_2d(pts: np.ndarray, w: np.ndarray, spec: MollifierSpec, query: np.ndarray) -> np.ndarray:
    """Bilinear binning and a separable Gaussian smoothing pass per axis."""
    if spec.shape != "gaussian":
        raise ValueError("the 2-D binned path needs the (separable) Gaussian mollifier")
    b = spec.bandwidth
    delta = b / BIN_FRACTION * 2  # coarser in 2-D to bound the grid size
    reach = spec.support * b + b
    lo = np.minimum(pts.min(axis=0), query.min(axis=0)) - reach
    hi = np.maximum(pts.max(axis=0), query.max(axis=0)) + reach
    shape = (np.ceil((hi - lo) / delta).astype(int) + 2)
    s = (pts - lo) / delta
    i = np.floor(s).astype(np.int64)
    f = s - i
    grid = np.zeros(shape)
    for dx in (0, 1):
        for dy in (0, 1):
            wx = f[:, 0] if dx else 1.0 - f[:, 0]
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            np.add.at(grid, (i[:, 0] + dx, i[:, 1] + dy), w * wx * wy)
    r = int(np.ceil(spec.support * b / delta))
    k1 = np.exp(-0.5 * (delta * np.arange(-r, r + 1) / b) ** 2) / (np.sqrt(2 * np.pi) * b)
    grid = ndimage.convolve1d(grid, k1, axis=0, mode="constant")
    grid = ndimage.convolve1d(grid, k1, axis=1, mode="constant")
    coords = ((query - lo) / delta).T
    return ndimage.map_coordinates(grid, coords, order=1, mode="constant")


# --- density ------------------------------------------------------------------


def kde(points, weights=None, spec: MollifierSpec | None = None, query=None, method: str = "auto") -> np.ndarray:
    """sum_i w_i g_eps(x - X_i) / sum_i w_i at each query point."""
    spec = MollifierSpec() if spec is None else spec
    pts = np.asarray(points, dtype=float)
    if spec.dim == 1:
        pts = pts.reshape(-1)
    q = np.asarray(query, dtype=float)
    if pts.shape[0] < 1:
        raise ValueError("need at least one point")
    _check_bandwidth(pts, spec.bandwidth)
    w = _weights(weights, pts.shape[0])
    total = w.sum()
    n_query = q.reshape(-1).size if spec.dim == 1 else q.reshape(-1, 2).shape[0]
    if spec.dim == 2 and _use_binned(method, spec, pts.shape[0], n_query):
        qf = q.reshape(-1, 2)
        return (_kde_binned_2d(pts, w, spec, qf) / total).reshape(q.shape[:-1])
    if _use_binned(method, spec, pts.shape[0], n_query):
        qf = q.reshape(-1)
        grid = BinnedGrid.cover(pts, qf, spec)
        dens = grid.smooth(grid.bin(pts, w), grid.kernel(spec)) / total
        return grid.interp(dens, qf).reshape(q.shape)
    dens = _direct_sum(pts, w[:, None], spec, q)[..., 0] / total
    return dens if spec.dim == 1 else dens.reshape(q.shape[:-1])


def _direct_sum(pts: np.ndarray, vals: np.ndarray, spec: MollifierSpec, query: np.ndarray,
                power: int = 1, chunk: int = 2048) -> np.ndarray:
    """sum_i K(x - X_i)^power vals_i for each query, in fixed query chunks."""
    if spec.dim == 1:
        qf = query.reshape(-1)
        out = np.empty((qf.size, vals.shape[1]))
        for s in range(0, qf.size, chunk):
            k = spec(qf[s : s + chunk, None] - pts[None, :]) ** power
            out[s : s + chunk] = k @ vals
        return out.reshape(query.shape + (vals.shape[1],))
    qf = query.reshape(-1, spec.dim)
    out = np.empty((qf.shape[0], vals.shape[1]))
    for s in range(0, qf.shape[0], chunk):
        k = spec(qf[s : s + chunk, None, :] - pts[None, :, :]) ** power
        out[s : s + chunk] = k @ vals
    return out


# --- conditional means ------------------------------------------------------------


def _as_columns(values: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape[0] != n:
        raise ValueError("paired samples must have equal length")
    return v.reshape(n, -1)


def nw_conditional(xs, ys, weights=None, m: Optional[Callable] = None, bandwidth: float | MollifierSpec = 0.1,
                   query=None, denom_floor: float = DENOM_FLOOR, method: str = "auto",
                   clip: bool = True) -> ConditionalEstimate:
    """Nadaraya-Watson estimate of E[m(Y) | X = x] at ``query``.

    ``m`` maps the (N, ...) array ``ys`` to (N,) or (N, k) values; by default
    ``ys`` is used as is. Queries whose denominator falls below ``denom_floor``
    get the value 0 and are flagged.
    """
    spec = bandwidth if isinstance(bandwidth, MollifierSpec) else MollifierSpec("gaussian", float(bandwidth))
    xs = np.asarray(xs, dtype=float)
    if spec.dim == 1:
        xs = xs.reshape(-1)
    n = xs.shape[0]
    vals = _as_columns(ys if m is None else m(np.asarray(ys)), n)
    w = _weights(weights, n)
    _check_bandwidth(xs, spec.bandwidth)
    q = np.asarray(query, dtype=float)
    q = q.reshape(-1) if spec.dim == 1 else q.reshape(-1, spec.dim)

    if spec.dim == 1 and method == "binned_numpy":
        # reference route for the compiled kernel
        grid = BinnedGrid.cover(xs, q, spec)
        kern = grid.kernel(spec)
        num = grid.interp(grid.smooth(grid.bin(xs, w[:, None] * vals), kern), q).reshape(q.shape[0], -1)
        den = grid.interp(grid.smooth(grid.bin(xs, w), kern), q)
        sq = grid.interp(grid.smooth(grid.bin(xs, w * w), grid.kernel(spec, power=2)), q)
    elif spec.dim == 1 and _use_binned(method, spec, n, q.shape[0]):
        grid = BinnedGrid.cover(xs, q, spec)
        num, den, sq = _binned_nw_kernel(xs, vals, w, grid.lo, grid.delta, grid.n,
                                         grid.kernel(spec), grid.kernel(spec, power=2), q)
    else:
        num = _direct_sum(xs, w[:, None] * vals, spec, q)
        den = _direct_sum(xs, w[:, None], spec, q)[..., 0]
        sq = _direct_sum(xs, (w * w)[:, None], spec, q, power=2)[..., 0]
    num = num.reshape(q.shape[0], -1)
    den = np.maximum(den, 0.0)
    degenerate = ~(den >= denom_floor)
    if n:
        vmin, vmax = vals.min(axis=0), vals.max(axis=0)
    else:
        vmin = vmax = np.zeros(num.shape[1])
    est = _ratio_clip(num, den, denom_floor, vmin, vmax, bool(clip and n))
    with np.errstate(invalid="ignore", divide="ignore"):
        ess = np.where(sq > 0, den * den / np.where(sq > 0, sq, 1.0), 0.0)
    mass = den / w.sum()
    return ConditionalEstimate(q, est, mass, ess, degenerate, {"bandwidth": spec.bandwidth})


def binned_conditional(xs, ys, weights=None, m: Optional[Callable] = None, n_bins: int = 50,
                       range_: tuple | None = None, query=None) -> ConditionalEstimate:
    """Per-bin weighted mean of m(Y); empty bins copy the nearest filled bin and are flagged.

    Without ``query`` the estimate is reported at bin centres; otherwise each
    query takes the value of the bin containing it (clamped to the range).
    """
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    xs = np.asarray(xs, dtype=float).reshape(-1)
    n = xs.shape[0]
    vals = _as_columns(ys if m is None else m(np.asarray(ys)), n)
    w = _weights(weights, n)
    lo, hi = (float(xs.min()), float(xs.max())) if range_ is None else map(float, range_)
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, xs, side="right") - 1, 0, n_bins - 1)
    den = np.bincount(idx, w, minlength=n_bins)
    sq = np.bincount(idx, w * w, minlength=n_bins)
    num = np.stack([np.bincount(idx, w * vals[:, j], minlength=n_bins) for j in range(vals.shape[1])], axis=1)
    empty = den <= 0
    if empty.all():
        raise ValueError("no positive weight inside the range")
    est = np.zeros_like(num)
    est[~empty] = num[~empty] / den[~empty, None]
    if empty.any():
        filled = np.flatnonzero(~empty)
        centres = np.arange(n_bins)
        nearest = filled[np.argmin(np.abs(centres[:, None] - filled[None, :]), axis=1)]
        est[empty] = est[nearest[empty]]
    est = np.clip(est, vals.min(axis=0), vals.max(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        ess = np.where(sq > 0, den * den / np.where(sq > 0, sq, 1.0), 0.0)
    centres = 0.5 * (edges[1:] + edges[:-1])
    if query is None:
        return ConditionalEstimate(centres, est, den / w.sum(), ess, empty, {"edges": edges})
    q = np.asarray(query, dtype=float).reshape(-1)
    qi = np.clip(np.searchsorted(edges, q, side="right") - 1, 0, n_bins - 1)
    return ConditionalEstimate(q, est[qi], den[qi] / w.sum(), ess[qi], empty[qi], {"edges": edges})


def bootstrap_se(stat: Callable[[np.ndarray], np.ndarray], n: int, n_boot: int = 50, seed: int = 0) -> np.ndarray:
    """Bootstrap standard error of ``stat(indices)`` over resampled index sets."""
    rng = np.random.default_rng(seed)
    draws = [np.asarray(stat(rng.integers(0, n, size=n)), dtype=float) for _ in range(n_boot)]
    return np.std(np.stack(draws), axis=0, ddof=1)
