"""Prediction regions from root samples: Lp balls/boxes around the point
predictor, studentized variants, stacked joint prediction bands for
univariate series, and the conservative per-coordinate Bonferroni box."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .bootstrap import MfbConfig, PredictiveRootSample, bootstrap_roots, with_overrides
from .errors import DomainError, InsufficientDataError
from .series import MultiSeries


def lp_norm(rows: np.ndarray, p: float) -> np.ndarray:
    """Row-wise Lp norm for p in {1, 2, inf}."""
    rows = np.atleast_2d(rows)
    if p == 1.0:
        return np.abs(rows).sum(axis=1)
    if p == 2.0:
        return np.sqrt((rows * rows).sum(axis=1))
    if math.isinf(p):
        return np.abs(rows).max(axis=1)
    raise DomainError(f"norm order must be 1, 2 or inf, got {p}")


@dataclass(frozen=True)
class QuantileSpec:
    """Upper-alpha order-statistic rule: the ceil((1-alpha)*B)-th smallest.

    Deterministic and conservative by at most 1/B; no interpolation.
    """

    alpha: float
    count: int

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.count < math.ceil(1.0 / self.alpha):
            raise DomainError(
                f"need at least ceil(1/alpha) = {math.ceil(1.0 / self.alpha)} replicates, got {self.count}"
            )

    @property
    def index(self) -> int:
        """1-based order-statistic index."""
        k = math.ceil((1.0 - self.alpha) * self.count)
        return min(max(k, 1), self.count)


@dataclass(frozen=True)
class PredictionRegion:
    """A closed prediction region around ``center``.

    kind "plain": ||y - center||_p <= radius.
    kind "studentized": ||S^-1 (y - center)||_p <= radius for the stored
    lower factor S.
    kind "bonferroni-box": per-coordinate closed intervals in ``box``.
    """

    kind: str
    alpha: float
    center: np.ndarray
    norm: float
    radius: float | None = None
    box: np.ndarray | None = field(default=None, repr=False)
    studentizer: np.ndarray | None = field(default=None, repr=False)
    metadata: dict | None = None

    def __post_init__(self):
        if self.kind not in ("plain", "studentized", "bonferroni-box"):
            raise DomainError(f"unknown region kind {self.kind!r}")
        if self.kind == "bonferroni-box":
            if self.box is None:
                raise DomainError("bonferroni-box region needs interval endpoints")
        else:
            if self.radius is None or self.radius < 0:
                raise DomainError(f"region radius must be nonnegative, got {self.radius}")

    def contains(self, y) -> bool | np.ndarray:
        """Membership of a point (d*h,) or batch (m, d*h); closed boundary."""
        y = np.asarray(y, dtype=np.float64)
        single = y.ndim == 1
        rows = np.atleast_2d(y)
        if not np.all(np.isfinite(rows)):
            raise DomainError("membership query must be finite")
        if self.kind == "bonferroni-box":
            inside = np.all((rows >= self.box[:, 0]) & (rows <= self.box[:, 1]), axis=1)
        else:
            delta = rows - self.center[np.newaxis, :]
            if self.kind == "studentized":
                delta = solve_triangular(self.studentizer, delta.T, lower=True).T
            inside = lp_norm(delta, self.norm) <= self.radius
        return bool(inside[0]) if single else inside

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "alpha": self.alpha,
            "p": "inf" if math.isinf(self.norm) else self.norm,
            "center": self.center.tolist(),
        }
        if self.kind == "bonferroni-box":
            out["box"] = self.box.tolist()
        else:
            out["radius"] = self.radius
        if self.studentizer is not None:
            out["studentizer"] = self.studentizer.tolist()
        if self.metadata:
            out.update(self.metadata)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def contains(region: PredictionRegion, y) -> bool | np.ndarray:
    return region.contains(y)


def region_from_roots(sample: PredictiveRootSample, alpha: float, p: float | None = None) -> PredictionRegion:
    """Lp prediction region from a root sample.

    The radius is the ceil((1-alpha)*B)-th smallest root norm; the
    studentized variant whitens roots by the sample's pooled factor first
    and stores that factor for membership tests.
    """
    if p is None:
        p = sample.config.get("norm", 2.0)
        p = math.inf if p == "inf" else float(p)
    spec = QuantileSpec(alpha=alpha, count=sample.replicates)
    rows = sample.roots
    studentizer = sample.studentizer
    if studentizer is not None:
        rows = solve_triangular(studentizer, rows.T, lower=True).T
    norms = np.sort(lp_norm(rows, p))
    radius = float(norms[spec.index - 1])
    digest = hashlib.sha256(json.dumps(sample.config, sort_keys=True).encode()).hexdigest()
    return PredictionRegion(
        kind="studentized" if studentizer is not None else "plain",
        alpha=alpha,
        center=np.asarray(sample.predictor, dtype=np.float64),
        norm=float(p),
        radius=radius,
        studentizer=studentizer,
        metadata={"seed": sample.seed, "config_digest": digest, "replicates": sample.replicates},
    )


def stack_series(series: MultiSeries, h: int) -> MultiSeries:
    """Stack a univariate series into overlapping h-vectors.

    Column t' of the result is (Y[t'], ..., Y[t'+h-1]), for t' = 0..n-h;
    consecutive columns share h-1 entries by construction.
    """
    if series.dims != 1:
        raise DomainError(f"stacking needs a univariate series, got d={series.dims}")
    if h < 1:
        raise DomainError(f"stacking depth must be >= 1, got {h}")
    y = series.values[0, :]
    n = len(y)
    if n < h + 1:
        raise InsufficientDataError(f"cannot stack {n} points into vectors of {h}")
    stacked = np.stack([y[i : n - h + 1 + i] for i in range(h)])
    return MultiSeries(stacked)


def jpb_stack(series: MultiSeries, h: int, config: MfbConfig, alpha: float) -> PredictionRegion:
    """Joint prediction band for the next h observations of a univariate
    series, by stacking.

    The stacked panel (dimension h) satisfies the same monotone-transform
    model as the original series, and the vector of the next h observations
    is its h-step-ahead observation; the region for that vector is the
    band.  The bootstrap replicates the full h-step block and the trailing
    stacked step is kept.

    Overlapping stacked windows make the exact stacked covariance
    rank-deficient, so the whitened entries are not a sound i.i.d.
    resampling pool; prefer innovations="normal" in the config for joint
    bands (the CLI does this by default).
    """
    if series.dims != 1:
        raise DomainError(f"joint band needs a univariate series, got d={series.dims}")
    if series.len < 3 * h:
        raise InsufficientDataError(f"need n >= 3h = {3 * h} points, got {series.len}")
    stacked = stack_series(series, h)
    sample = bootstrap_roots(stacked, with_overrides(config, horizon=h))
    last_step = np.arange((h - 1) * h, h * h)
    return region_from_roots(sample.select(last_step), alpha, p=config.norm)


def marginal_intervals(series: MultiSeries, h: int, alpha: float, config: MfbConfig) -> list[tuple[float, float]]:
    """Symmetric per-lead intervals at level 1 - alpha/h from one h-step
    univariate bootstrap run (all 1-d norms coincide, so the interval is
    predictor +/- the root-magnitude quantile)."""
    if series.dims != 1:
        raise DomainError(f"marginal intervals need a univariate series, got d={series.dims}")
    sample = bootstrap_roots(series, with_overrides(config, horizon=h))
    level = alpha / h
    spec = QuantileSpec(alpha=level, count=sample.replicates)
    intervals = []
    for lead in range(h):
        magnitudes = np.sort(np.abs(sample.roots[:, lead]))
        radius = float(magnitudes[spec.index - 1])
        center = float(sample.predictor[lead])
        intervals.append((center - radius, center + radius))
    return intervals


def bonferroni_band(intervals, alpha: float, h: int | None = None) -> PredictionRegion:
    """Cross-product box of per-lead intervals built at level 1 - alpha/h.

    Union-bound coverage >= 1 - alpha asymptotically; expected to be
    conservative, increasingly so when the leads are correlated.
    """
    box = np.asarray(intervals, dtype=np.float64)
    if box.ndim != 2 or box.shape[1] != 2:
        raise DomainError("intervals must be (h, 2) endpoint pairs")
    if h is not None and box.shape[0] != h:
        raise DomainError(f"expected {h} intervals, got {box.shape[0]}")
    if np.any(box[:, 0] > box[:, 1]):
        raise DomainError("interval endpoints out of order")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0,1), got {alpha}")
    return PredictionRegion(
        kind="bonferroni-box",
        alpha=alpha,
        center=box.mean(axis=1),
        norm=math.inf,
        box=box,
    )
