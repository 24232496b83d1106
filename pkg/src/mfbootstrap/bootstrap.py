"""The bootstrap engine: pipeline fitting, the optimal point predictor, and
replication of the predictive root.

One replicate draws innovations (resampled from the observed whitened
entries, or limit-normal), appends a future Gaussian block conditionally on
the observed series, maps it back to the observation scale, and subtracts a
predictor.  Under the resampled-predictor variant the predictor itself is
re-estimated on a full bootstrap world per replicate; under the fixed
variant every replicate reuses the sample predictor, trading a little
theoretical fidelity for speed and stability.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .cdf import default_threshold, fit_conditional, fit_marginal
from .covariance import TaperedBlockCov, build_tapered, default_banding
from .errors import ConfigError, MfbError, RunError
from .series import MultiSeries
from .transform import (
    ExtensionPieces,
    GaussianizedSeries,
    WhitenedVector,
    extension_pieces,
    extend_and_draw_many,
    gaussianize,
    recolor,
    verify_nesting,
    whiten,
    _invert_gaussian_block,
)

_LOSSES = ("l1", "l2")
_VARIANTS = ("fixed", "resampled")
_INNOVATIONS = ("resample", "normal")
_CDF_KINDS = ("empirical", "kernel")
_MAX_ATTEMPTS = 3
_MAX_SKIP_FRACTION = 0.05


@dataclass(frozen=True)
class MfbConfig:
    """Run configuration; every CLI flag maps to exactly one field.

    ``bandwidth`` (CDF smoothing), ``banding`` (covariance taper) and
    ``threshold`` (quantile clamp) default to sample-size-driven rules when
    None.  ``norm`` is the root-norm order p (1, 2 or inf); ``loss`` picks
    the optimal predictor (componentwise mean for l2, median for l1).
    ``model`` selects plain marginal CDFs (1) or sequentially conditional
    CDFs (2).
    """

    replicates: int = 500
    predictor_draws: int = 2000
    inner_predictor_draws: int = 500
    loss: str = "l2"
    norm: float = 2.0
    variant: str = "fixed"
    innovations: str = "resample"
    studentize: bool = False
    horizon: int = 1
    seed: int = 0
    cdf: str = "empirical"
    model: int = 1
    bandwidth: float | None = None
    banding: float | None = None
    threshold: float | None = None

    def __post_init__(self):
        norm = self.norm
        if isinstance(norm, str):
            norm = math.inf if norm.lower() in ("inf", "infinity") else float(norm)
        object.__setattr__(self, "norm", float(norm))
        self.validate()

    def validate(self) -> None:
        if self.replicates < 100:
            raise ConfigError(f"need at least 100 replicates, got {self.replicates}")
        if self.predictor_draws < 100 or self.inner_predictor_draws < 100:
            raise ConfigError("predictor Monte Carlo sizes must be at least 100")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.loss not in _LOSSES:
            raise ConfigError(f"loss must be one of {_LOSSES}, got {self.loss!r}")
        if self.norm not in (1.0, 2.0, math.inf):
            raise ConfigError(f"norm order must be 1, 2 or inf, got {self.norm}")
        if self.variant not in _VARIANTS:
            raise ConfigError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if self.innovations not in _INNOVATIONS:
            raise ConfigError(f"innovations must be one of {_INNOVATIONS}, got {self.innovations!r}")
        if self.cdf not in _CDF_KINDS:
            raise ConfigError(f"cdf must be one of {_CDF_KINDS}, got {self.cdf!r}")
        if self.model not in (1, 2):
            raise ConfigError(f"model must be 1 or 2, got {self.model}")
        for name in ("bandwidth", "banding", "threshold"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")

    def to_dict(self) -> dict:
        out = {
            "replicates": self.replicates,
            "predictor_draws": self.predictor_draws,
            "inner_predictor_draws": self.inner_predictor_draws,
            "loss": self.loss,
            "norm": "inf" if math.isinf(self.norm) else self.norm,
            "variant": self.variant,
            "innovations": self.innovations,
            "studentize": self.studentize,
            "horizon": self.horizon,
            "seed": self.seed,
            "cdf": self.cdf,
            "model": self.model,
            "bandwidth": self.bandwidth,
            "banding": self.banding,
            "threshold": self.threshold,
        }
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class FittedWorld:
    """Everything the pipeline estimates on one series: CDF models, the
    Gaussianized values, the (extended) stacked covariance with its factor,
    the whitened vector, and the cached future-extension pieces."""

    series: MultiSeries
    models: tuple
    threshold: float
    banding: float
    z: GaussianizedSeries
    cov: TaperedBlockCov
    cov_ext: TaperedBlockCov
    xi: WhitenedVector
    pieces: ExtensionPieces = field(repr=False)


def fit_models(series: MultiSeries, config: MfbConfig) -> tuple:
    """Fit the per-dimension CDF models (marginal, or sequentially
    conditional under model 2)."""
    models = [fit_marginal(series.values[0, :], kind=config.cdf, bandwidth=config.bandwidth)]
    for i in range(1, series.dims):
        if config.model == 2:
            models.append(fit_conditional(series, i, target_bandwidth=config.bandwidth))
        else:
            models.append(fit_marginal(series.values[i, :], kind=config.cdf, bandwidth=config.bandwidth))
    return tuple(models)


def fit_world(series: MultiSeries, config: MfbConfig) -> FittedWorld:
    """Run the estimation pipeline: CDFs, Gaussianization, tapered stacked
    covariance (extended by the horizon), whitening.

    The covariance is repaired and factorized once at the extended order;
    the observed-order factor is its leading block, so nesting is exact by
    construction.
    """
    n = series.len
    c = config.threshold if config.threshold is not None else default_threshold(n)
    banding = config.banding if config.banding is not None else default_banding(n)
    models = fit_models(series, config)
    z = gaussianize(series, models, c)
    cov_ext = build_tapered(z, banding, extend_by=config.horizon)
    cov = cov_ext.leading(n)
    verify_nesting(cov, cov_ext)
    xi = whiten(z, cov)
    return FittedWorld(
        series=series,
        models=models,
        threshold=c,
        banding=banding,
        z=z,
        cov=cov,
        cov_ext=cov_ext,
        xi=xi,
        pieces=extension_pieces(cov_ext, xi),
    )


def refit_world(bootstrap_series: MultiSeries, config: MfbConfig) -> FittedWorld:
    """Re-estimate the full pipeline on a bootstrap world; identical to
    ``fit_world`` and shares its determinism."""
    return fit_world(bootstrap_series, config)


def refit_for_prediction(bootstrap_series: MultiSeries, anchor: MultiSeries,
                         config: MfbConfig) -> FittedWorld:
    """Transforms re-estimated on the bootstrap series, conditioning state
    taken from the anchor (original) series.

    The bootstrap replicate's predictor must differ from the sample
    predictor only through re-estimated transforms: the future draw it is
    subtracted from is conditioned on the observed history, so the
    predictor has to condition on that same history.  Anchoring on the
    bootstrap path instead would add a state mismatch that does not vanish
    with the sample size and inflates the roots.
    """
    n = anchor.len
    c = config.threshold if config.threshold is not None else default_threshold(n)
    banding = config.banding if config.banding is not None else default_banding(n)
    models = fit_models(bootstrap_series, config)
    z_boot = gaussianize(bootstrap_series, models, c)
    cov_ext = build_tapered(z_boot, banding, extend_by=config.horizon)
    cov = cov_ext.leading(n)
    z_anchor = gaussianize(anchor, models, c)
    xi = whiten(z_anchor, cov)
    return FittedWorld(
        series=anchor,
        models=models,
        threshold=c,
        banding=banding,
        z=z_anchor,
        cov=cov,
        cov_ext=cov_ext,
        xi=xi,
        pieces=extension_pieces(cov_ext, xi),
    )


def _draw_innovations(world: FittedWorld, rng: np.random.Generator, shape, source: str) -> np.ndarray:
    if source == "resample":
        idx = rng.integers(0, len(world.xi.values), size=shape)
        return world.xi.values[idx]
    return rng.standard_normal(shape)


def _future_blocks_to_rows(world: FittedWorld, z_rows: np.ndarray, horizon: int) -> np.ndarray:
    """Map (m, d*h) Gaussian future rows to observation-scale rows.

    Each future time point is one column of the inversion batch, so
    conditional (model 2) inversion sees the reconstructed earlier
    dimensions of its own time point.
    """
    m = z_rows.shape[0]
    d = world.series.dims
    z_cols = z_rows.reshape(m * horizon, d).T
    y_cols = _invert_gaussian_block(world.models, z_cols)
    return y_cols.T.reshape(m, horizon * d)


def point_predict(world: FittedWorld, config: MfbConfig, rng: np.random.Generator,
                  draws: int | None = None) -> np.ndarray:
    """Loss-optimal point predictor of the future block, by Monte Carlo over
    the estimated conditional law.

    Draws ``draws`` conditional futures (fresh innovations per the
    configured source), maps them to the observation scale, and returns the
    componentwise mean (l2 loss) or median (l1 loss).
    """
    m = draws if draws is not None else config.predictor_draws
    if m < 100:
        raise ConfigError(f"predictor Monte Carlo size must be at least 100, got {m}")
    tail = config.horizon * world.series.dims
    xi_new = _draw_innovations(world, rng, (m, tail), config.innovations)
    z_rows = extend_and_draw_many(world.pieces, xi_new)
    y_rows = _future_blocks_to_rows(world, z_rows, config.horizon)
    if config.loss == "l2":
        return y_rows.mean(axis=0)
    return np.median(y_rows, axis=0)


@dataclass(frozen=True)
class PredictiveRootSample:
    """Bootstrap replicates of the predictive root (future minus predictor).

    ``roots`` has one row per surviving replicate, time-major columns;
    ``studentizer`` is the lower Cholesky factor of the pooled root
    covariance when studentization was requested (the same factor standing
    in for the per-replicate covariance, which a single root cannot
    estimate).
    """

    roots: np.ndarray = field(repr=False)
    predictor: np.ndarray
    d: int
    horizon: int
    seed: int
    config: dict
    skipped: int = 0
    studentizer: np.ndarray | None = field(default=None, repr=False)
    repair: dict | None = None

    @property
    def replicates(self) -> int:
        return self.roots.shape[0]

    def select(self, columns) -> "PredictiveRootSample":
        """Restrict roots and predictor to a coordinate subset (e.g. the
        final stacked step of a joint band); the studentizer is recomputed
        on the slice."""
        columns = np.asarray(columns, dtype=np.int64)
        roots = self.roots[:, columns]
        studentizer = _pooled_root_factor(roots) if self.studentizer is not None else None
        return PredictiveRootSample(
            roots=roots,
            predictor=self.predictor[columns],
            d=len(columns),
            horizon=1,
            seed=self.seed,
            config=self.config,
            skipped=self.skipped,
            studentizer=studentizer,
            repair=self.repair,
        )

    def save(self, csv_path, meta_path=None) -> None:
        """Roots as CSV (one replicate per row) plus a JSON metadata sidecar."""
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"root_{k}" for k in range(self.roots.shape[1])])
            for row in self.roots:
                writer.writerow([repr(float(v)) for v in row])
        if meta_path is not None:
            meta = {
                "config": self.config,
                "seed": self.seed,
                "replicates": self.replicates,
                "skipped": self.skipped,
                "predictor": self.predictor.tolist(),
                "repair": self.repair,
                "studentized": self.studentizer is not None,
            }
            with open(meta_path, "w") as fh:
                json.dump(meta, fh, sort_keys=True, indent=2)


def _pooled_root_factor(roots: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of the pooled root covariance, ridged just
    enough to stay factorizable on degenerate samples."""
    cov = np.atleast_2d(np.cov(roots, rowvar=False))
    scale = max(float(np.trace(cov)) / cov.shape[0], 1.0e-30)
    for eps in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            return np.linalg.cholesky(cov + eps * scale * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    return np.eye(cov.shape[0])


def bootstrap_roots(series: MultiSeries, config: MfbConfig) -> PredictiveRootSample:
    """Replicate the predictive root ``replicates`` times.

    Replicate b's randomness comes from the substream (seed, replicate, b,
    attempt), so results are independent of execution order and bit-stable
    for a fixed (series, config, seed).  A replicate whose re-fit fails is
    retried with fresh draws up to 3 times, then skipped; more than 5%
    skips aborts the run.
    """
    config.validate()
    world = fit_world(series, config)
    d = series.dims
    tail = d * config.horizon
    predictor = point_predict(world, config, rngmod.substream(config.seed, rngmod.PREDICTOR))

    if config.variant == "fixed":
        xi_new = np.empty((config.replicates, tail))
        for b in range(config.replicates):
            rng = rngmod.substream(config.seed, rngmod.REPLICATE, b, 0)
            xi_new[b] = _draw_innovations(world, rng, (tail,), config.innovations)
        z_rows = extend_and_draw_many(world.pieces, xi_new)
        y_rows = _future_blocks_to_rows(world, z_rows, config.horizon)
        roots = y_rows - predictor[np.newaxis, :]
        skipped = 0
    else:
        rows = []
        skipped = 0
        dn = len(world.xi.values)
        for b in range(config.replicates):
            root = None
            for attempt in range(_MAX_ATTEMPTS):
                rng = rngmod.substream(config.seed, rngmod.REPLICATE, b, attempt)
                try:
                    xi_star = _draw_innovations(world, rng, (dn,), config.innovations)
                    z_star = recolor(
                        WhitenedVector(xi_star, d=d, n_steps=series.len),
                        world.cov,
                        models=world.models,
                        threshold=world.threshold,
                    )
                    y_star = MultiSeries(
                        _invert_gaussian_block(world.models, z_star.values), labels=series.labels
                    )
                    world_b = refit_for_prediction(y_star, series, config)
                    pred_b = point_predict(world_b, config, rng, draws=config.inner_predictor_draws)
                    xi_fut = _draw_innovations(world, rng, (1, tail), config.innovations)
                    z_fut = extend_and_draw_many(world.pieces, xi_fut)
                    y_fut = _future_blocks_to_rows(world, z_fut, config.horizon)[0]
                    root = y_fut - pred_b
                    break
                except MfbError:
                    continue
            if root is None:
                skipped += 1
            else:
                rows.append(root)
        if skipped > _MAX_SKIP_FRACTION * config.replicates:
            raise RunError(
                f"{skipped} of {config.replicates} replicates failed after {_MAX_ATTEMPTS} attempts each"
            )
        roots = np.array(rows) if rows else np.empty((0, tail))

    if not (np.all(np.isfinite(roots)) and np.all(np.isfinite(predictor))):
        raise RunError("bootstrap produced non-finite roots or predictor")
    studentizer = _pooled_root_factor(roots) if config.studentize else None
    return PredictiveRootSample(
        roots=roots,
        predictor=predictor,
        d=d,
        horizon=config.horizon,
        seed=config.seed,
        config=config.to_dict(),
        skipped=skipped,
        studentizer=studentizer,
        repair={
            "applied": world.cov_ext.repair.applied,
            "epsilon": world.cov_ext.repair.epsilon,
            "min_eig_bound": world.cov_ext.repair.min_eig_bound,
            "attempts": world.cov_ext.repair.attempts,
        },
    )


def with_overrides(config: MfbConfig, **kwargs) -> MfbConfig:
    """Functional update helper for derived runs (e.g. per-lead intervals)."""
    return replace(config, **kwargs)
