"""Multivariate series container and raw lag autocovariance estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError, InputNotFoundError


@dataclass(frozen=True)
class MultiSeries:
    """A d-dimensional series of length n, stored as a (d, n) matrix.

    ``values[i, t]`` is dimension ``i`` at time ``t``; column ``t`` is the
    observation vector at time ``t``.  Entries must be finite, d >= 1 and
    n >= 2.  Instances are immutable and safe to share across threads.
    """

    values: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[np.newaxis, :]
        if values.ndim != 2:
            raise InputError(f"series values must be 2-d (d, n), got shape {values.shape}")
        d, n = values.shape
        if d < 1:
            raise InputError("series must have at least one dimension")
        if n < 2:
            raise InputError(f"series must have at least two time points, got {n}")
        if not np.all(np.isfinite(values)):
            raise InputError("series contains NaN or infinite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != d:
                raise InputError(f"{len(labels)} labels for {d} dimensions")
            object.__setattr__(self, "labels", labels)

    @property
    def dims(self) -> int:
        return self.values.shape[0]

    @property
    def len(self) -> int:
        return self.values.shape[1]

    def at(self, t: int) -> np.ndarray:
        """Observation vector at time t."""
        return self.values[:, t]

    def dimension(self, i: int) -> np.ndarray:
        return self.values[i, :]


@dataclass(frozen=True)
class LagCov:
    """A d x d autocovariance matrix at a given lag."""

    lag: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError(f"lag covariance must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)


def lag_cov(series: MultiSeries, h: int) -> LagCov:
    """Lag-h autocovariance (1/n) * sum_t Y_t Y_{t+h}^T, t = 1..n-h.

    The series is assumed centered by the caller; no means are subtracted
    (the Gaussianized data fed to this in the pipeline is centered by
    construction).  Negative lags follow from the transpose identity and
    are not computed here.
    """
    h = int(h)
    n = series.len
    if h < 0:
        raise DomainError(f"lag must be nonnegative, got {h} (use the transpose identity)")
    if h >= n:
        raise DomainError(f"lag {h} out of range for series of length {n}")
    y = series.values
    left = y[:, : n - h]
    right = y[:, h:]
    return LagCov(lag=h, matrix=(left @ right.T) / n)


def center(series: MultiSeries) -> tuple[MultiSeries, np.ndarray]:
    """Subtract per-dimension sample means; returns (centered, means).

    Means already at float-residue level are not re-subtracted, so an
    already-centered series passes through unchanged and the operation is
    exactly idempotent.
    """
    means = series.values.mean(axis=1)
    scale = max(1.0, float(np.abs(series.values).max()))
    if np.abs(means).max() <= 1e-14 * scale:
        return series, means
    centered = series.values - means[:, np.newaxis]
    return MultiSeries(centered, labels=series.labels), means


def load_csv(path) -> MultiSeries:
    """Read a series from CSV: header of dimension names, one row per time.

    Cells must be plain decimal-point numbers; missing or non-numeric cells
    are rejected.
    """
    import csv
    import os

    if not os.path.exists(path):
        raise InputNotFoundError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"empty CSV file: {path}") from None
        labels = tuple(name.strip() for name in header)
        d = len(labels)
        if d == 0:
            raise InputError("CSV header has no columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d:
                raise InputError(f"{path}:{lineno}: expected {d} cells, got {len(row)}")
            try:
                parsed = [float(cell) for cell in row]
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric cell") from None
            if any(cell.strip() == "" for cell in row):
                raise InputError(f"{path}:{lineno}: missing cell")
            rows.append(parsed)
    if len(rows) < 2:
        raise InputError(f"{path}: need at least two time rows, got {len(rows)}")
    values = np.array(rows, dtype=np.float64).T
    if not np.all(np.isfinite(values)):
        raise InputError(f"{path}: non-finite value")
    return MultiSeries(values, labels=labels)


def save_csv(series: MultiSeries, path) -> None:
    """Write a series as CSV (header row, one row per time step)."""
    import csv

    labels = series.labels or tuple(f"y{i}" for i in range(series.dims))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(labels)
        for t in range(series.len):
            writer.writerow([repr(float(v)) for v in series.values[:, t]])
