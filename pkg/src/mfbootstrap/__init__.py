"""Model-free bootstrap prediction regions for multivariate time series.

The pipeline maps an observed series to approximately i.i.d. standard
normals (per-dimension probability integral transform, clamped normal
quantile, block-Toeplitz whitening with a flat-top tapered covariance),
resamples predictive roots there, and maps back to build Lp prediction
regions, joint prediction bands, and coverage reports.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .bootstrap import (
    FittedWorld,
    MfbConfig,
    PredictiveRootSample,
    bootstrap_roots,
    fit_world,
    point_predict,
    refit_world,
)
from .cdf import (
    ConditionalCdf,
    EmpiricalCdf,
    KernelCdf,
    ThresholdedNormalQuantile,
    fit_conditional,
    fit_marginal,
)
from .covariance import (
    FlatTopKernel,
    TaperedBlockCov,
    build_tapered,
    factor_banded,
    from_blocks,
    op_norm_diff,
    psd_repair,
)
from .errors import MfbError
from .experiments import (
    CoverageReport,
    EcvrReport,
    SyntheticSpec,
    cvr_experiment,
    ecvr_backtest,
    oracle_futures,
    preset_spec,
    simulate,
)
from .regions import (
    PredictionRegion,
    QuantileSpec,
    bonferroni_band,
    jpb_stack,
    marginal_intervals,
    region_from_roots,
    stack_series,
)
from .series import LagCov, MultiSeries, center, lag_cov, load_csv, save_csv
from .transform import (
    GaussianizedSeries,
    WhitenedVector,
    degaussianize,
    extend_and_draw,
    gaussianize,
    recolor,
    whiten,
)

__all__ = [
    "KERNEL_BACKEND",
    "MfbError",
    "MultiSeries",
    "LagCov",
    "lag_cov",
    "center",
    "load_csv",
    "save_csv",
    "EmpiricalCdf",
    "KernelCdf",
    "ConditionalCdf",
    "ThresholdedNormalQuantile",
    "fit_marginal",
    "fit_conditional",
    "GaussianizedSeries",
    "WhitenedVector",
    "gaussianize",
    "degaussianize",
    "whiten",
    "recolor",
    "extend_and_draw",
    "FlatTopKernel",
    "TaperedBlockCov",
    "build_tapered",
    "from_blocks",
    "psd_repair",
    "factor_banded",
    "op_norm_diff",
    "MfbConfig",
    "FittedWorld",
    "PredictiveRootSample",
    "fit_world",
    "refit_world",
    "point_predict",
    "bootstrap_roots",
    "QuantileSpec",
    "PredictionRegion",
    "region_from_roots",
    "jpb_stack",
    "stack_series",
    "marginal_intervals",
    "bonferroni_band",
    "SyntheticSpec",
    "simulate",
    "oracle_futures",
    "cvr_experiment",
    "ecvr_backtest",
    "CoverageReport",
    "EcvrReport",
    "preset_spec",
]
