"""Synthetic-data generators, coverage-rate experiments against an exact
conditional oracle, and the rolling backtest on user-supplied series.

The synthetic model is a stable VAR(1) with Gaussian innovations pushed
through per-dimension strictly monotone maps.  Because the latent state is
retained, true conditional futures can be sampled exactly, making the
empirical coverage rate an unbiased estimate of a region's conditional
coverage given the path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import rng as rngmod
from .bootstrap import MfbConfig, bootstrap_roots, with_overrides
from .errors import ConfigError, DomainError, InsufficientDataError, MfbError, RunError
from .regions import jpb_stack, region_from_roots
from .series import MultiSeries


class TabulatedMonotoneMap:
    """Piecewise-linear strictly increasing map given by breakpoints."""

    def __init__(self, inputs, outputs):
        x = np.asarray(inputs, dtype=np.float64)
        y = np.asarray(outputs, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape or len(x) < 2:
            raise DomainError("need matching 1-d breakpoint arrays of length >= 2")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise DomainError("breakpoints must be strictly increasing")
        self.inputs = x
        self.outputs = y

    def __call__(self, w):
        return np.interp(w, self.inputs, self.outputs)

    def inverse(self, y):
        return np.interp(y, self.outputs, self.inputs)


def _signed_sqrt(w):
    return np.sign(w) * np.sqrt(np.abs(w))


def _signed_sqrt_inverse(y):
    return np.sign(y) * np.square(y)


_TRANSFORMS = {
    "identity": (lambda w: np.asarray(w, dtype=np.float64), lambda y: np.asarray(y, dtype=np.float64)),
    "signed-sqrt": (_signed_sqrt, _signed_sqrt_inverse),
}


def _resolve_transform(spec_entry):
    if isinstance(spec_entry, str):
        try:
            return _TRANSFORMS[spec_entry]
        except KeyError:
            raise DomainError(f"unknown transform {spec_entry!r}; expected one of {sorted(_TRANSFORMS)}") from None
    if isinstance(spec_entry, TabulatedMonotoneMap):
        return spec_entry, spec_entry.inverse
    raise DomainError(f"transform must be a name or TabulatedMonotoneMap, got {type(spec_entry)}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Stable VAR(1) with monotone per-dimension output maps.

    ``transform`` is one identifier for all dimensions or a tuple with one
    entry per dimension.
    """

    dims: int
    coef: np.ndarray
    innovation_cov: np.ndarray
    transform: object = "identity"
    n: int = 500
    burn_in: int = 500
    seed: int = 0

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=np.float64)
        cov = np.asarray(self.innovation_cov, dtype=np.float64)
        if coef.shape != (self.dims, self.dims) or cov.shape != (self.dims, self.dims):
            raise ConfigError(f"coefficient and innovation matrices must be {self.dims}x{self.dims}")
        radius = float(np.abs(np.linalg.eigvals(coef)).max())
        if radius >= 1.0:
            raise ConfigError(f"VAR coefficient spectral radius {radius:.4f} >= 1; process not stable")
        if np.abs(cov - cov.T).max() > 1e-12:
            raise ConfigError("innovation covariance must be symmetric")
        if float(np.linalg.eigvalsh(cov).min()) < -1e-10:
            raise ConfigError("innovation covariance must be positive semidefinite")
        if self.burn_in < 200:
            raise ConfigError(f"burn-in must be at least 200 steps, got {self.burn_in}")
        if self.n < 2:
            raise ConfigError("need at least two retained time steps")
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "innovation_cov", cov)
        transform = self.transform
        if isinstance(transform, (list, tuple)):
            transform = tuple(transform)
            if len(transform) != self.dims:
                raise ConfigError(f"{len(transform)} transforms for {self.dims} dimensions")
        object.__setattr__(self, "transform", transform)

    def transform_pairs(self) -> list:
        entries = self.transform if isinstance(self.transform, tuple) else (self.transform,) * self.dims
        return [_resolve_transform(entry) for entry in entries]

    def innovation_factor(self) -> np.ndarray:
        """A factor F with F F^T = innovation covariance (PSD-safe)."""
        try:
            return np.linalg.cholesky(self.innovation_cov)
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(self.innovation_cov)
            return vecs * np.sqrt(np.clip(vals, 0.0, None))

    def to_dict(self) -> dict:
        entries = self.transform if isinstance(self.transform, tuple) else (self.transform,) * self.dims
        names = [e if isinstance(e, str) else "custom-tabulated" for e in entries]
        return {
            "dims": self.dims,
            "coef": np.asarray(self.coef).tolist(),
            "innovation_cov": np.asarray(self.innovation_cov).tolist(),
            "transform": names,
            "n": self.n,
            "burn_in": self.burn_in,
            "seed": self.seed,
        }


def preset_spec(name: str, n: int, seed: int = 0) -> SyntheticSpec:
    """Built-in demo specs: the two-dimensional nonlinear VAR used by the
    coverage experiments, and univariate white noise."""
    if name == "var2-sqrt":
        return SyntheticSpec(
            dims=2,
            coef=np.array([[0.5, 0.2], [0.2, 0.6]]),
            innovation_cov=np.array([[2.0, 0.5], [0.5, 2.0]]),
            transform="signed-sqrt",
            n=n,
            seed=seed,
        )
    if name == "white-noise":
        return SyntheticSpec(
            dims=1,
            coef=np.zeros((1, 1)),
            innovation_cov=np.eye(1),
            transform="identity",
            n=n,
            seed=seed,
        )
    raise ConfigError(f"unknown preset {name!r}; expected 'var2-sqrt' or 'white-noise'")


def simulate(spec: SyntheticSpec) -> tuple[MultiSeries, MultiSeries]:
    """Draw one path; returns the observed series and the latent state
    (retained so conditional oracles stay available)."""
    rng = rngmod.substream(spec.seed, rngmod.SIMULATE)
    factor = spec.innovation_factor()
    total = spec.burn_in + spec.n
    eps = rng.standard_normal((total, spec.dims)) @ factor.T
    w = np.zeros((spec.dims, total))
    state = np.zeros(spec.dims)
    for t in range(total):
        state = spec.coef @ state + eps[t]
        w[:, t] = state
    w = w[:, spec.burn_in :]
    pairs = spec.transform_pairs()
    y = np.empty_like(w)
    for i, (fwd, _) in enumerate(pairs):
        y[i, :] = fwd(w[i, :])
    return MultiSeries(y), MultiSeries(w)


def oracle_futures(spec: SyntheticSpec, w_last: np.ndarray, count: int,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Exact draws of the next observation conditional on the latent state:
    advance the VAR one step ``count`` times with fresh innovations and
    apply the output maps.  Returns (count, d)."""
    if rng is None:
        rng = rngmod.substream(spec.seed, rngmod.ORACLE)
    w_last = np.asarray(w_last, dtype=np.float64)
    if w_last.shape != (spec.dims,):
        raise DomainError(f"latent state must have shape ({spec.dims},), got {w_last.shape}")
    factor = spec.innovation_factor()
    eps = rng.standard_normal((count, spec.dims)) @ factor.T
    w_next = w_last @ spec.coef.T + eps
    pairs = spec.transform_pairs()
    y = np.empty_like(w_next)
    for i, (fwd, _) in enumerate(pairs):
        y[:, i] = fwd(w_next[:, i])
    return y


@dataclass(frozen=True)
class CoverageReport:
    """Per-path coverage rates of 1-step regions against the exact oracle."""

    alpha: float
    cvr_values: tuple[float, ...]
    failed_paths: int
    config: dict
    spec: dict
    elapsed_seconds: float

    @property
    def mean_cvr(self) -> float:
        return float(np.mean(self.cvr_values))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "nominal": 1.0 - self.alpha,
            "mean_cvr": self.mean_cvr,
            "cvr_values": list(self.cvr_values),
            "paths": len(self.cvr_values),
            "failed_paths": self.failed_paths,
            "config": self.config,
            "spec": self.spec,
        }


def cvr_experiment(spec: SyntheticSpec, config: MfbConfig, alpha: float,
                   paths: int = 50, oracle_draws: int = 2000) -> CoverageReport:
    """Average empirical coverage of 1-step regions over independent paths.

    Each path simulates a fresh realization, fits the bootstrap, builds the
    region, and scores it against exact conditional futures.  Path p's
    randomness derives from (config.seed, path, p).
    """
    if paths < 10:
        raise ConfigError(f"need at least 10 paths, got {paths}")
    if oracle_draws < 1000:
        raise ConfigError(f"need at least 1000 oracle draws, got {oracle_draws}")
    if config.horizon != 1:
        raise ConfigError("coverage experiment scores 1-step regions; set horizon=1")
    start = time.perf_counter()
    cvrs = []
    failed = 0
    for p in range(paths):
        path_rng = rngmod.substream(config.seed, rngmod.PATH, p)
        sim_seed = int(path_rng.integers(2**62))
        boot_seed = int(path_rng.integers(2**62))
        try:
            observed, latent = simulate(replace(spec, seed=sim_seed))
            sample = bootstrap_roots(observed, with_overrides(config, seed=boot_seed))
            region = region_from_roots(sample, alpha, p=config.norm)
            futures = oracle_futures(spec, latent.values[:, -1], oracle_draws, rng=path_rng)
            cvrs.append(float(np.mean(region.contains(futures))))
        except MfbError:
            failed += 1
    if failed > 0.1 * paths:
        raise RunError(f"{failed} of {paths} coverage paths failed")
    return CoverageReport(
        alpha=alpha,
        cvr_values=tuple(cvrs),
        failed_paths=failed,
        config=config.to_dict(),
        spec=spec.to_dict(),
        elapsed_seconds=time.perf_counter() - start,
    )


@dataclass(frozen=True)
class EcvrReport:
    """Backtest verdicts of joint bands over non-overlapping future windows.

    ``window_count`` is the nominal count floor((n - n0)/h) + 1; windows
    whose future block would run past the end of the series are dropped
    (the truncation is recorded by ``evaluated`` being smaller).
    """

    n0: int
    h: int
    alpha: float
    verdicts: tuple[bool, ...]
    window_count: int
    config: dict
    elapsed_seconds: float

    @property
    def evaluated(self) -> int:
        return len(self.verdicts)

    @property
    def ecvr(self) -> float:
        return float(np.mean(self.verdicts)) if self.verdicts else float("nan")

    def to_dict(self) -> dict:
        return {
            "n0": self.n0,
            "h": self.h,
            "alpha": self.alpha,
            "ecvr": self.ecvr,
            "verdicts": [bool(v) for v in self.verdicts],
            "window_count": self.window_count,
            "evaluated": self.evaluated,
            "config": self.config,
        }


def ecvr_backtest(series: MultiSeries, n0: int, h: int, config: MfbConfig, alpha: float) -> EcvrReport:
    """Rolling joint-band backtest on a univariate series.

    Window k uses observations kh+1..kh+n0 (1-based) as the past and the
    next h observations as the future; futures are non-overlapping across
    windows.  Window k's bootstrap seed derives from (config.seed, window, k).
    """
    if series.dims != 1:
        raise DomainError(f"backtest needs a univariate series, got d={series.dims}")
    n = series.len
    if n < n0 + h:
        raise InsufficientDataError(f"need n >= n0 + h = {n0 + h}, got {n}")
    start = time.perf_counter()
    window_count = (n - n0) // h + 1
    verdicts = []
    y = series.values[0, :]
    for k in range(window_count):
        past_start = k * h
        future_start = n0 + k * h
        future_end = future_start + h
        if future_end > n:
            break
        past = MultiSeries(y[np.newaxis, past_start : past_start + n0])
        window_seed = int(rngmod.substream(config.seed, rngmod.WINDOW, k).integers(2**62))
        region = jpb_stack(past, h, with_overrides(config, seed=window_seed), alpha)
        verdicts.append(bool(region.contains(y[future_start:future_end])))
    return EcvrReport(
        n0=n0,
        h=h,
        alpha=alpha,
        verdicts=tuple(verdicts),
        window_count=window_count,
        config=config.to_dict(),
        elapsed_seconds=time.perf_counter() - start,
    )


def write_rows_csv(path, header, rows) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def emit_gnuplot_script(path, csv_path, x_label: str, y_label: str, title: str,
                        x_column: int, y_column: int, nominal: float | None = None) -> None:
    """A minimal gnuplot driver for the long-format experiment CSVs."""
    lines = [
        "set datafile separator ','",
        f"set xlabel '{x_label}'",
        f"set ylabel '{y_label}'",
        f"set title '{title}'",
        "set key outside",
        "set grid",
    ]
    plot = f"plot '{csv_path}' every ::1 using {x_column}:{y_column} with linespoints title '{y_label}'"
    if nominal is not None:
        plot += f", {nominal} with lines dashtype 2 title 'nominal'"
    lines.append(plot)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
