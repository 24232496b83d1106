"""Marginal and conditional CDF estimation, inversion, and the clamped
normal quantile map used to Gaussianize uniforms.

Two marginal estimators: the empirical CDF with rank/(n+1) scaling (never
returns 0 or 1 on observed data, so the normal quantile stays finite), and
the integrated-Gaussian-kernel smoother.  The conditional estimator weights
the smoothed CDF with a product-Gaussian kernel over the conditioning
coordinates (Nadaraya-Watson).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DegenerateSampleError, DomainError, ExtrapolationError, InputError

# Open-interval guard for probabilities: the accurate domain of the normal
# quantile, and the widest range the inverse maps can take.
U_FLOOR = 1e-300
U_CEIL = float(np.nextafter(1.0, 0.0))

_INVERT_TOL = 1e-10
_BRACKET_BANDWIDTHS = 8.0


def plugin_bandwidth(values: np.ndarray) -> float:
    """Normal-reference plug-in rate 1.06 * sigma * n^(-1/5)."""
    values = np.asarray(values, dtype=np.float64)
    sigma = float(values.std(ddof=1))
    return 1.06 * sigma * len(values) ** (-0.2)


def _check_unit_interval(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0.0) or np.any(u >= 1.0) or not np.all(np.isfinite(u)):
        raise DomainError("probability must lie strictly inside (0, 1)")
    return u


class EmpiricalCdf:
    """Empirical CDF with rank/(n+1) scaling and order-statistic inversion."""

    kind = "empirical"
    bandwidth = None

    def __init__(self, values):
        data = np.sort(np.asarray(values, dtype=np.float64))
        if data.ndim != 1 or len(data) < 1:
            raise InputError("need a one-dimensional sample")
        if not np.all(np.isfinite(data)):
            raise InputError("sample contains non-finite values")
        self.data = data
        self.n = len(data)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.data[0]), float(self.data[-1])

    @property
    def u_support(self) -> tuple[float, float]:
        """Attainable PIT range: ranks resolve no finer than 1/(n+1), so
        points outside the fitted sample saturate at the extreme ranks."""
        return 1.0 / (self.n + 1.0), self.n / (self.n + 1.0)

    def evaluate(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        rank = np.searchsorted(self.data, y, side="right")
        return rank / (self.n + 1.0)

    def invert(self, u) -> np.ndarray:
        """inf{y : F(y) >= u}, clamped to the observed order statistics.

        The tiny slack keeps round trips through the normal CDF/quantile
        pair exact: it is far below the 1/(n+1) grid spacing but above the
        float error of u -> quantile -> CDF -> u.
        """
        u = _check_unit_interval(u)
        k = np.ceil(u * (self.n + 1.0) - 1e-8).astype(np.int64)
        k = np.clip(k, 1, self.n)
        return self.data[k - 1]

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "support": list(self.support),
            "data_sha256": hashlib.sha256(self.data.tobytes()).hexdigest(),
        }


class KernelCdf:
    """Integrated-Gaussian-kernel CDF smoother, inverted by bisection."""

    kind = "kernel"

    def __init__(self, values, bandwidth: float | None = None):
        data = np.sort(np.asarray(values, dtype=np.float64))
        if data.ndim != 1 or len(data) < 2:
            raise InputError("need at least two sample values")
        if not np.all(np.isfinite(data)):
            raise InputError("sample contains non-finite values")
        if data[0] == data[-1]:
            raise DegenerateSampleError("all sample values identical; kernel CDF undefined")
        if bandwidth is None:
            bandwidth = plugin_bandwidth(data)
        if not bandwidth > 0:
            raise DomainError(f"bandwidth must be positive, got {bandwidth}")
        self.data = data
        self.n = len(data)
        self.bandwidth = float(bandwidth)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.data[0]), float(self.data[-1])

    def evaluate(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        out = ndtr((y[:, np.newaxis] - self.data[np.newaxis, :]) / self.bandwidth).mean(axis=1)
        return np.clip(out, U_FLOOR, U_CEIL)

    def invert(self, u) -> np.ndarray:
        u = np.atleast_1d(_check_unit_interval(u))
        lo, hi = self._bracket()
        return _bisect_monotone(self.evaluate, u, lo, hi)

    def _bracket(self) -> tuple[float, float]:
        pad = _BRACKET_BANDWIDTHS * self.bandwidth
        return self.data[0] - pad, self.data[-1] + pad

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "bandwidth": self.bandwidth,
            "support": list(self.support),
            "data_sha256": hashlib.sha256(self.data.tobytes()).hexdigest(),
        }


def _bisect_monotone(func, u: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Vectorized bisection for inf{y : F(y) >= u} on [lo, hi].

    F must be nondecreasing; convergence is guaranteed regardless of
    flatness, which is why bisection is used instead of Newton steps.
    """
    lo_arr = np.full(u.shape, lo, dtype=np.float64)
    hi_arr = np.full(u.shape, hi, dtype=np.float64)
    steps = int(np.ceil(np.log2(max((hi - lo) / _INVERT_TOL, 2.0)))) + 1
    for _ in range(steps):
        mid = 0.5 * (lo_arr + hi_arr)
        above = func(mid) >= u
        hi_arr = np.where(above, mid, hi_arr)
        lo_arr = np.where(above, lo_arr, mid)
    return 0.5 * (lo_arr + hi_arr)


class ConditionalCdf:
    """Smoothed conditional CDF of one coordinate given the earlier ones.

    F(y | x) = sum_t w_t(x) * Phi((y - Y_t) / b) with product-Gaussian
    weights w_t(x) over the conditioning coordinates, normalized to sum
    to one.  Monotone in y for any fixed x by construction.
    """

    kind = "conditional"

    def __init__(self, conditioning, targets, cond_bandwidths, target_bandwidth):
        x = np.atleast_2d(np.asarray(conditioning, dtype=np.float64))
        y = np.asarray(targets, dtype=np.float64)
        if x.shape[0] != len(y):
            raise InputError("conditioning rows and targets must align")
        hb = np.asarray(cond_bandwidths, dtype=np.float64)
        if hb.shape != (x.shape[1],) or not np.all(hb > 0):
            raise DomainError("need one positive bandwidth per conditioning coordinate")
        if not target_bandwidth > 0:
            raise DomainError("target bandwidth must be positive")
        self.conditioning = x
        self.targets = y
        self.cond_bandwidths = hb
        self.bandwidth = float(target_bandwidth)
        self.n = len(y)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.targets.min()), float(self.targets.max())

    def weights(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        z = (x[np.newaxis, :] - self.conditioning) / self.cond_bandwidths
        w = np.exp(-0.5 * np.sum(z * z, axis=1))
        total = w.sum()
        if total == 0.0:
            raise ExtrapolationError("conditioning point outside the data cloud; all kernel weights underflow")
        return w / total

    def evaluate(self, y, x) -> np.ndarray:
        w = self.weights(x)
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        phi = ndtr((y[:, np.newaxis] - self.targets[np.newaxis, :]) / self.bandwidth)
        return np.clip(phi @ w, U_FLOOR, U_CEIL)

    def invert(self, u, x) -> np.ndarray:
        u = np.atleast_1d(_check_unit_interval(u))
        lo, hi = self._bracket()
        return _bisect_monotone(lambda y: self.evaluate(y, x), u, lo, hi)

    def evaluate_pairs(self, y, x_rows) -> np.ndarray:
        """F(y_j | x_j) for paired queries; one weight row per query."""
        w = self._weight_rows(x_rows)
        y = np.asarray(y, dtype=np.float64)
        phi = ndtr((y[:, np.newaxis] - self.targets[np.newaxis, :]) / self.bandwidth)
        return np.clip(np.einsum("jt,jt->j", w, phi), U_FLOOR, U_CEIL)

    def invert_pairs(self, u, x_rows) -> np.ndarray:
        """inf{y : F(y | x_j) >= u_j} for paired queries, by bisection."""
        u = _check_unit_interval(u)
        w = self._weight_rows(x_rows)
        lo, hi = self._bracket()

        def batch_eval(y):
            phi = ndtr((y[:, np.newaxis] - self.targets[np.newaxis, :]) / self.bandwidth)
            return np.einsum("jt,jt->j", w, phi)

        return _bisect_monotone(batch_eval, u, lo, hi)

    def _weight_rows(self, x_rows) -> np.ndarray:
        x_rows = np.atleast_2d(np.asarray(x_rows, dtype=np.float64))
        z = (x_rows[:, np.newaxis, :] - self.conditioning[np.newaxis, :, :]) / self.cond_bandwidths
        w = np.exp(-0.5 * np.sum(z * z, axis=2))
        totals = w.sum(axis=1)
        if np.any(totals == 0.0):
            raise ExtrapolationError("conditioning point outside the data cloud; all kernel weights underflow")
        return w / totals[:, np.newaxis]

    def _bracket(self) -> tuple[float, float]:
        pad = _BRACKET_BANDWIDTHS * self.bandwidth
        return self.targets.min() - pad, self.targets.max() + pad

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "bandwidth": self.bandwidth,
            "cond_bandwidths": self.cond_bandwidths.tolist(),
            "support": list(self.support),
            "data_sha256": hashlib.sha256(np.sort(self.targets).tobytes()).hexdigest(),
        }


def fit_marginal(values, kind: str = "empirical", bandwidth: float | None = None):
    """Fit a marginal CDF model of the requested kind to one dimension."""
    if kind == "empirical":
        return EmpiricalCdf(values)
    if kind == "kernel":
        return KernelCdf(values, bandwidth=bandwidth)
    raise DomainError(f"unknown CDF kind {kind!r} (expected 'empirical' or 'kernel')")


def fit_conditional(series, target_dim: int, bandwidths=None, target_bandwidth: float | None = None) -> ConditionalCdf:
    """Fit the conditional CDF of dimension ``target_dim`` given dimensions
    0..target_dim-1 of the same time point.

    ``bandwidths`` may supply conditioning-kernel bandwidths; defaults are
    per-dimension plug-in values, as is the target bandwidth.
    """
    if target_dim < 1:
        raise DomainError("conditional model needs at least one conditioning dimension")
    if series.len < 10:
        raise DomainError("need at least 10 time points for a conditional fit")
    x = series.values[:target_dim, :].T
    y = series.values[target_dim, :]
    if bandwidths is None:
        hb = np.array([plugin_bandwidth(x[:, k]) for k in range(target_dim)])
    else:
        hb = np.asarray(bandwidths, dtype=np.float64)
    if target_bandwidth is None:
        target_bandwidth = plugin_bandwidth(y)
    return ConditionalCdf(x, y, hb, target_bandwidth)


@dataclass(frozen=True)
class ThresholdedNormalQuantile:
    """Normal quantile clamped to [-c, c].

    Keeps the Gaussianized values bounded so extreme uniforms cannot blow
    up the covariance estimate; odd symmetry map(1-u) = -map(u) holds up to
    the quantile evaluation's own accuracy.
    """

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"threshold must be positive, got {self.c}")

    def map(self, u) -> np.ndarray:
        u = _check_unit_interval(u)
        return np.clip(ndtri(u), -self.c, self.c)


def default_threshold(n: int) -> float:
    """Default clamp level sqrt(0.5 * ln n), growing slowly with n."""
    return float(np.sqrt(0.5 * np.log(n)))
