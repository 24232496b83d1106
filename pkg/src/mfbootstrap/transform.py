"""The invertible map between observed series and i.i.d. standard normals.

Forward: per-dimension probability integral transform, clamped normal
quantile, then whitening by the banded lower Cholesky factor of the stacked
covariance.  Inverse: color i.i.d. normals with the factor, apply the
normal CDF and invert the marginal (or conditional) CDF models.

The square root of the stacked covariance is realized as the LOWER Cholesky
factor throughout: appending future time steps then appends trailing
coordinates, so the observed block of an extended coloring reproduces the
observed Gaussianized values verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .cdf import U_CEIL, U_FLOOR, ConditionalCdf, ThresholdedNormalQuantile
from .covariance import TaperedBlockCov
from .errors import DomainError, FactorizationError
from .series import MultiSeries


@dataclass(frozen=True)
class GaussianizedSeries:
    """Estimated values of the latent Gaussian process, shape (d, n).

    ``models`` holds the per-dimension CDF models used (None for synthetic
    Gaussian inputs in tests); ``threshold`` the clamp level applied.
    """

    values: np.ndarray = field(repr=False)
    models: tuple | None = None
    threshold: float | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DomainError(f"gaussianized values must be (d, n), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("gaussianized values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> int:
        return self.values.shape[0]

    @property
    def len(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class WhitenedVector:
    """The whitened stacked series: length d*n, time-major (dimension varies
    fastest within each time block)."""

    values: np.ndarray = field(repr=False)
    d: int
    n_steps: int

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1 or len(values) != self.d * self.n_steps:
            raise DomainError(f"whitened vector length {values.shape} != d*n = {self.d * self.n_steps}")
        if not np.all(np.isfinite(values)):
            raise DomainError("whitened vector must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def vec(z: np.ndarray) -> np.ndarray:
    """Stack a (d, n) matrix time-major: t=0 block first, dims contiguous."""
    return np.ascontiguousarray(z.T).reshape(-1)


def unvec(x: np.ndarray, d: int) -> np.ndarray:
    """Inverse of ``vec``: (d*n,) -> (d, n)."""
    if len(x) % d != 0:
        raise DomainError(f"vector length {len(x)} not divisible by d={d}")
    return np.ascontiguousarray(x.reshape(-1, d).T)


def gaussianize(series: MultiSeries, models: Sequence, c: float) -> GaussianizedSeries:
    """PIT each dimension through its fitted CDF model, then map the
    uniforms through the clamped normal quantile.

    Boundary uniforms (possible when the models were fitted on a different
    sample, e.g. a bootstrap world evaluated at the observed series) are
    clamped into the open interval; the quantile clamp at +/-c binds there
    anyway.
    """
    if len(models) != series.dims:
        raise DomainError(f"{len(models)} models for {series.dims} dimensions")
    quantile = ThresholdedNormalQuantile(c)
    z = np.empty_like(series.values)
    for i, model in enumerate(models):
        row = series.values[i, :]
        if isinstance(model, ConditionalCdf):
            u = model.evaluate_pairs(row, series.values[:i, :].T)
        else:
            u = model.evaluate(row)
        if not np.all(np.isfinite(u)):
            raise DomainError("PIT produced a non-finite value; CDF model incompatible with this data")
        lo, hi = getattr(model, "u_support", (U_FLOOR, U_CEIL))
        z[i, :] = quantile.map(np.clip(u, lo, hi))
    return GaussianizedSeries(z, models=tuple(models), threshold=float(c))


def _invert_gaussian_block(models: Sequence, z: np.ndarray) -> np.ndarray:
    """Map a (d, m) Gaussian block back to the observation scale.

    Uses the plain (unclamped) normal CDF on the inverse path; uniforms are
    clipped to the open interval before inversion so extreme colored draws
    stay in the quantile maps' domain.  Conditional models are inverted in
    dimensional order, feeding reconstructed earlier dimensions forward.
    """
    d, m = z.shape
    u = np.clip(ndtr(z), U_FLOOR, U_CEIL)
    y = np.empty_like(z)
    for i, model in enumerate(models):
        if isinstance(model, ConditionalCdf):
            y[i, :] = model.invert_pairs(u[i, :], y[:i, :].T)
        else:
            y[i, :] = model.invert(u[i, :])
    return y


def degaussianize(z: GaussianizedSeries, models: Sequence | None = None) -> MultiSeries:
    """Inverse transform back to the observation scale."""
    models = tuple(models) if models is not None else z.models
    if models is None:
        raise DomainError("no CDF models attached; pass them explicitly")
    if len(models) != z.dims:
        raise DomainError(f"{len(models)} models for {z.dims} dimensions")
    return MultiSeries(_invert_gaussian_block(models, z.values))


def whiten(z: GaussianizedSeries, cov: TaperedBlockCov) -> WhitenedVector:
    """Solve the banded lower-triangular system factor @ xi = vec(z)."""
    if cov.d != z.dims or cov.n_steps != z.len:
        raise DomainError(
            f"covariance order ({cov.d} dims, {cov.n_steps} steps) does not match series ({z.dims}, {z.len})"
        )
    xi = _kernels.forward_solve_banded(cov.factor, vec(z.values))
    if not np.all(np.isfinite(xi)):
        raise FactorizationError("whitening produced non-finite values; factor is singular")
    return WhitenedVector(xi, d=z.dims, n_steps=z.len)


def recolor(xi: WhitenedVector, cov: TaperedBlockCov, models: tuple | None = None,
            threshold: float | None = None) -> GaussianizedSeries:
    """Color a whitened vector: factor @ xi, reshaped to (d, n)."""
    if cov.order != len(xi.values):
        raise DomainError(f"covariance order {cov.order} != vector length {len(xi.values)}")
    z = _kernels.banded_lower_matvec(cov.factor, xi.values)
    return GaussianizedSeries(unvec(z, cov.d), models=models, threshold=threshold)


class ExtensionPieces(NamedTuple):
    """Decomposition of the extended coloring for the future block:
    future = cond_mean + corner @ xi_new, with cond_mean carrying the whole
    contribution of the observed whitened entries."""

    cond_mean: np.ndarray
    corner: np.ndarray


def extension_pieces(cov_ext: TaperedBlockCov, xi_obs: WhitenedVector) -> ExtensionPieces:
    tail = cov_ext.order - len(xi_obs.values)
    if tail <= 0 or tail % cov_ext.d != 0:
        raise DomainError(
            f"extended order {cov_ext.order} must exceed observed length {len(xi_obs.values)} by a block multiple"
        )
    padded = np.concatenate([xi_obs.values, np.zeros(tail)])
    cond_mean = _kernels.banded_lower_matvec(cov_ext.factor, padded)[-tail:]
    return ExtensionPieces(cond_mean=cond_mean, corner=cov_ext.trailing_factor_corner(tail))


def extend_and_draw(xi_obs: WhitenedVector, cov_ext: TaperedBlockCov, xi_new: np.ndarray) -> np.ndarray:
    """Future Gaussian block from appending innovations to the observed
    whitened vector: the trailing rows of factor_ext @ (xi_obs || xi_new),
    reshaped to (d, h).  The leading rows reproduce the observed block by
    the nesting of the lower factor and are not recomputed."""
    xi_new = np.asarray(xi_new, dtype=np.float64)
    pieces = extension_pieces(cov_ext, xi_obs)
    tail = len(pieces.cond_mean)
    if xi_new.shape != (tail,):
        raise DomainError(f"innovation vector must have length {tail}, got shape {xi_new.shape}")
    flat = pieces.cond_mean + pieces.corner @ xi_new
    return unvec(flat, cov_ext.d)


def extend_and_draw_many(pieces: ExtensionPieces, xi_new: np.ndarray) -> np.ndarray:
    """Batch form: (m, tail) innovations -> (m, tail) future blocks, rows
    time-major like ``vec``."""
    xi_new = np.atleast_2d(np.asarray(xi_new, dtype=np.float64))
    if xi_new.shape[1] != len(pieces.cond_mean):
        raise DomainError(f"innovation rows must have length {len(pieces.cond_mean)}")
    return pieces.cond_mean[np.newaxis, :] + xi_new @ pieces.corner.T


def verify_nesting(cov: TaperedBlockCov, cov_ext: TaperedBlockCov, tol: float = 1e-8) -> None:
    """Check that the extended factor's leading block equals the base factor.

    A violation means the two covariances were built inconsistently (e.g.
    different ridge), which would silently corrupt the appended-future
    mechanism; that is an internal error, not a user error.
    """
    lead = cov_ext.leading(cov.n_steps)
    rows = min(lead.factor.shape[0], cov.factor.shape[0])
    diff = np.abs(lead.factor[:rows] - cov.factor[:rows]).max()
    if lead.factor.shape[0] > rows and np.abs(lead.factor[rows:]).max() > tol:
        diff = max(diff, float(np.abs(lead.factor[rows:]).max()))
    if cov.factor.shape[0] > rows and np.abs(cov.factor[rows:]).max() > tol:
        diff = max(diff, float(np.abs(cov.factor[rows:]).max()))
    if diff > tol:
        raise FactorizationError(f"factor nesting violated: max deviation {diff:.3e} > {tol:.1e}")
