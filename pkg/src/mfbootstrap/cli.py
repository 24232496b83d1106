"""Command-line entry point.

Subcommands wire CSV ingestion, the bootstrap pipeline, and the experiment
harnesses, and every run emits a manifest (config digest, seed, input
digests, outputs, timing) from which the run is byte-reproducible on the
same platform.

Configuration precedence: explicit flags > config file (``key=value``
lines, ``#`` comments, keys named like the flags) > built-in defaults.
All randomness flows from ``--seed`` through documented substreams.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .bootstrap import MfbConfig, bootstrap_roots
from .errors import (
    ConfigError,
    DomainError,
    InputError,
    InsufficientDataError,
    MfbError,
)
from .experiments import (
    SyntheticSpec,
    cvr_experiment,
    ecvr_backtest,
    emit_gnuplot_script,
    preset_spec,
    simulate,
    write_rows_csv,
)
from .regions import bonferroni_band, jpb_stack, marginal_intervals, region_from_roots
from .series import load_csv, save_csv

_INPUT_ERROR_EXIT = 2
_PIPELINE_ERROR_EXIT = 3

# Flags map 1:1 onto MfbConfig fields (--B replicates, --M predictor_draws,
# --h horizon, --l banding, --c threshold, --p norm; the rest share names);
# --alpha is a region-level parameter on top.
_DEFAULTS = {
    "alpha": 0.05,
    "p": "2",
    "loss": "l2",
    "variant": "fixed",
    "innovations": "resample",
    "studentize": False,
    "B": 500,
    "M": 2000,
    "h": 1,
    "l": None,
    "bandwidth": None,
    "c": None,
    "seed": 0,
    "model": 1,
    "cdf": "empirical",
}

# Stacked joint-band runs default to limit-normal innovations: the stacked
# covariance is structurally rank-deficient (overlapping windows), which
# makes its whitened entries an invalid i.i.d. resampling pool.
_JPB_DEFAULTS = dict(_DEFAULTS, innovations="normal")

# The backtest defaults follow the returns-data convention: tight CDF
# bandwidth, lag-0-only banding, mean predictor scored with the L1 norm.
_ECVR_DEFAULTS = dict(
    _JPB_DEFAULTS, bandwidth=0.01, l="0.4", cdf="kernel", loss="l2", p="1"
)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MfbError as exc:
        payload = {"error": {"kind": getattr(exc, "kind", "error"), "message": str(exc)}}
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        if isinstance(exc, (InputError, ConfigError, DomainError, InsufficientDataError)):
            return _INPUT_ERROR_EXIT
        return _PIPELINE_ERROR_EXIT


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfb", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mfb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    region = sub.add_parser("region", help="prediction region for the next observation(s) of a CSV series")
    region.add_argument("--input", required=True)
    region.add_argument("--export-roots", action="store_true", help="also write the root sample CSV + metadata")
    _add_common(region)
    region.set_defaults(func=cmd_region)

    sim = sub.add_parser("simulate", help="draw a synthetic series from a built-in or JSON spec")
    sim.add_argument("--preset", default="var2-sqrt", help="var2-sqrt or white-noise")
    sim.add_argument("--spec-file", default=None, help="JSON file with a full synthetic spec")
    sim.add_argument("--n", type=int, default=500)
    sim.add_argument("--with-latent", action="store_true", help="also write the latent state series")
    _add_common(sim)
    sim.set_defaults(func=cmd_simulate)

    cov = sub.add_parser("coverage", help="synthetic coverage-rate experiment across sample sizes")
    cov.add_argument("--preset", default="var2-sqrt")
    cov.add_argument("--spec-file", default=None)
    cov.add_argument("--n", default="100..500", help="comma list and/or lo..hi[..step] ranges")
    cov.add_argument("--paths", type=int, default=50)
    cov.add_argument("--oracle-draws", type=int, default=2000)
    cov.add_argument("--variants", default=None, help="comma list; defaults to the --variant value")
    cov.add_argument("--norms", default=None, help="comma list of p values; defaults to --p")
    cov.add_argument("--losses", default=None, help="comma list; defaults to --loss")
    _add_common(cov)
    cov.set_defaults(func=cmd_coverage)

    jpb = sub.add_parser("jpb", help="joint prediction band for the next h observations")
    jpb.add_argument("--input", required=True)
    jpb.add_argument("--method", choices=("stack", "bonferroni"), default="stack")
    _add_common(jpb, defaults=_JPB_DEFAULTS)
    jpb.set_defaults(func=cmd_jpb)

    ecvr = sub.add_parser("ecvr", help="rolling joint-band backtest on a CSV series")
    ecvr.add_argument("--input", required=True)
    ecvr.add_argument("--n0", default="500", help="comma list of backtrack lengths")
    _add_common(ecvr, defaults=_ECVR_DEFAULTS)
    ecvr.set_defaults(func=cmd_ecvr)

    return parser


def _add_common(parser: argparse.ArgumentParser, defaults: dict | None = None) -> None:
    parser.add_argument("--output-dir", default=".")
    parser.add_argument("--config", default=None, help="key=value config file; flags override it")
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--p", choices=("1", "2", "inf"), default=None)
    parser.add_argument("--loss", choices=("l1", "l2"), default=None)
    parser.add_argument("--variant", choices=("fixed", "resampled"), default=None)
    parser.add_argument("--innovations", choices=("resample", "normal"), default=None)
    parser.add_argument("--studentize", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--B", type=int, default=None, help="bootstrap replicates")
    parser.add_argument("--M", type=int, default=None, help="predictor Monte Carlo draws")
    parser.add_argument("--h", type=int, default=None, help="prediction horizon / band depth")
    parser.add_argument("--l", default=None, help="covariance banding: absolute lags, or 'x%%n' for x*n")
    parser.add_argument("--bandwidth", type=float, default=None, help="CDF kernel bandwidth")
    parser.add_argument("--c", type=float, default=None, help="normal-quantile clamp level")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--model", type=int, choices=(1, 2), default=None)
    parser.add_argument("--cdf", choices=("empirical", "kernel"), default=None)
    parser.set_defaults(_defaults=defaults or _DEFAULTS)


def _load_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise InputError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = value
    return out


_FILE_PARSERS = {
    "alpha": float,
    "p": str,
    "loss": str,
    "variant": str,
    "innovations": str,
    "studentize": lambda v: v.lower() in ("1", "true", "yes", "on"),
    "B": int,
    "M": int,
    "h": int,
    "l": str,
    "bandwidth": float,
    "c": float,
    "seed": int,
    "model": int,
    "cdf": str,
}


def _merged_settings(args) -> dict:
    merged = dict(args._defaults)
    if args.config:
        file_cfg = _load_config_file(args.config)
        for key, raw in file_cfg.items():
            try:
                merged[key] = _FILE_PARSERS[key](raw)
            except ValueError:
                raise ConfigError(f"config key {key}={raw!r} does not parse") from None
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _resolve_banding(setting, n: int) -> float | None:
    """--l accepts an absolute lag count ('12', may be fractional) or a
    fraction of the series length ('0.02%n' -> 0.02 * n)."""
    if setting is None:
        return None
    if isinstance(setting, (int, float)):
        return float(setting)
    text = str(setting).strip()
    try:
        if text.endswith("%n"):
            return float(text[:-2]) * n
        return float(text)
    except ValueError:
        raise ConfigError(f"banding value {setting!r} does not parse (expected e.g. '8' or '0.02%n')") from None


def _build_config(settings: dict, n: int) -> MfbConfig:
    return MfbConfig(
        replicates=settings["B"],
        predictor_draws=settings["M"],
        loss=settings["loss"],
        norm=math.inf if settings["p"] == "inf" else float(settings["p"]),
        variant=settings["variant"],
        innovations=settings["innovations"],
        studentize=bool(settings["studentize"]),
        horizon=settings["h"],
        seed=settings["seed"],
        cdf=settings["cdf"],
        model=settings["model"],
        bandwidth=settings["bandwidth"],
        banding=_resolve_banding(settings["l"], n),
        threshold=settings["c"],
    )


def _sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _emit_manifest(args, settings: dict, inputs: list[str], outputs: list[str], started: float) -> str:
    out_dir = args.output_dir
    canonical = {k: settings[k] for k in sorted(settings)}
    manifest = {
        "command": args.command,
        "version": __version__,
        "kernel_backend": BACKEND,
        "seed": settings["seed"],
        "config": canonical,
        "config_digest": hashlib.sha256(json.dumps(canonical, sort_keys=True).encode()).hexdigest(),
        "inputs": {path: _sha256_file(path) for path in inputs},
        "outputs": sorted(os.path.basename(p) for p in outputs),
        "wall_clock_seconds": time.perf_counter() - started,
    }
    path = os.path.join(out_dir, "manifest.json")
    _write_json(path, manifest)
    return path


def _prepare(args):
    os.makedirs(args.output_dir, exist_ok=True)
    return _merged_settings(args), time.perf_counter()


def cmd_region(args) -> int:
    settings, started = _prepare(args)
    series = load_csv(args.input)
    config = _build_config(settings, series.len)
    sample = bootstrap_roots(series, config)
    region = region_from_roots(sample, settings["alpha"], p=config.norm)
    outputs = [os.path.join(args.output_dir, "region.json")]
    _write_json(outputs[0], region.to_dict())
    if args.export_roots:
        roots_csv = os.path.join(args.output_dir, "roots.csv")
        roots_meta = os.path.join(args.output_dir, "roots_meta.json")
        sample.save(roots_csv, roots_meta)
        outputs += [roots_csv, roots_meta]
    _emit_manifest(args, settings, [args.input], outputs, started)
    return 0


def _load_spec(args, n: int, seed: int) -> SyntheticSpec:
    if args.spec_file:
        if not os.path.exists(args.spec_file):
            raise InputError(f"spec file not found: {args.spec_file}")
        with open(args.spec_file) as fh:
            raw = json.load(fh)
        raw.setdefault("n", n)
        raw.setdefault("seed", seed)
        raw["transform"] = tuple(raw.get("transform", "identity")) if isinstance(
            raw.get("transform"), list
        ) else raw.get("transform", "identity")
        return SyntheticSpec(
            dims=raw["dims"],
            coef=np.asarray(raw["coef"], dtype=np.float64),
            innovation_cov=np.asarray(raw["innovation_cov"], dtype=np.float64),
            transform=raw["transform"],
            n=raw["n"],
            burn_in=raw.get("burn_in", 500),
            seed=raw["seed"],
        )
    return preset_spec(args.preset, n=n, seed=seed)


def cmd_simulate(args) -> int:
    settings, started = _prepare(args)
    spec = _load_spec(args, n=args.n, seed=settings["seed"])
    observed, latent = simulate(spec)
    outputs = [os.path.join(args.output_dir, "series.csv")]
    save_csv(observed, outputs[0])
    if args.with_latent:
        latent_path = os.path.join(args.output_dir, "latent.csv")
        save_csv(latent, latent_path)
        outputs.append(latent_path)
    inputs = [args.spec_file] if args.spec_file else []
    _emit_manifest(args, settings, inputs, outputs, started)
    return 0


def _parse_n_list(text: str) -> list[int]:
    values: list[int] = []
    for token in str(text).split(","):
        token = token.strip()
        if ".." in token:
            parts = token.split("..")
            if len(parts) == 2:
                lo, hi, step = int(parts[0]), int(parts[1]), 100
            elif len(parts) == 3:
                lo, hi, step = int(parts[0]), int(parts[1]), int(parts[2])
            else:
                raise ConfigError(f"range {token!r} does not parse (expected lo..hi[..step])")
            values.extend(range(lo, hi + 1, step))
        elif token:
            values.append(int(token))
    if not values:
        raise ConfigError(f"no sample sizes in {text!r}")
    return values


def _parse_list(text, fallback) -> list[str]:
    if text is None:
        return [fallback]
    return [token.strip() for token in str(text).split(",") if token.strip()]


def cmd_coverage(args) -> int:
    settings, started = _prepare(args)
    sizes = _parse_n_list(args.n)
    variants = _parse_list(args.variants, settings["variant"])
    norms = _parse_list(args.norms, settings["p"])
    losses = _parse_list(args.losses, settings["loss"])
    alpha = settings["alpha"]
    path_rows = []
    summary_rows = []
    summaries = []
    for n in sizes:
        spec = _load_spec(args, n=n, seed=settings["seed"])
        for variant in variants:
            for p_text in norms:
                for loss in losses:
                    run = dict(settings, variant=variant, p=p_text, loss=loss)
                    config = _build_config(run, n)
                    report = cvr_experiment(
                        spec, config, alpha, paths=args.paths, oracle_draws=args.oracle_draws
                    )
                    for path_idx, cvr in enumerate(report.cvr_values):
                        path_rows.append([n, variant, p_text, loss, path_idx, repr(cvr)])
                    summary_rows.append(
                        [n, variant, p_text, loss, repr(report.mean_cvr), len(report.cvr_values),
                         report.failed_paths]
                    )
                    summaries.append(report.to_dict())
    out_dir = args.output_dir
    paths_csv = os.path.join(out_dir, "cvr_paths.csv")
    summary_csv = os.path.join(out_dir, "cvr_summary.csv")
    summary_json = os.path.join(out_dir, "coverage.json")
    plot = os.path.join(out_dir, "cvr.gnuplot")
    write_rows_csv(paths_csv, ["n", "variant", "p", "loss", "path", "cvr"], path_rows)
    write_rows_csv(
        summary_csv, ["n", "variant", "p", "loss", "mean_cvr", "paths", "failed"], summary_rows
    )
    _write_json(summary_json, {"alpha": alpha, "runs": summaries})
    emit_gnuplot_script(
        plot, "cvr_summary.csv", "n", "mean CVR", "coverage vs sample size", 1, 5, nominal=1 - alpha
    )
    inputs = [args.spec_file] if args.spec_file else []
    _emit_manifest(args, settings, inputs, [paths_csv, summary_csv, summary_json, plot], started)
    return 0


def cmd_jpb(args) -> int:
    settings, started = _prepare(args)
    series = load_csv(args.input)
    config = _build_config(settings, series.len)
    h = settings["h"]
    alpha = settings["alpha"]
    if args.method == "stack":
        region = jpb_stack(series, h, config, alpha)
    else:
        intervals = marginal_intervals(series, h, alpha, config)
        region = bonferroni_band(intervals, alpha, h=h)
    outputs = [os.path.join(args.output_dir, "region.json")]
    payload = region.to_dict()
    payload["method"] = args.method
    payload["h"] = h
    _write_json(outputs[0], payload)
    _emit_manifest(args, settings, [args.input], outputs, started)
    return 0


def cmd_ecvr(args) -> int:
    settings, started = _prepare(args)
    series = load_csv(args.input)
    config = _build_config(settings, series.len)
    h = settings["h"]
    alpha = settings["alpha"]
    window_rows = []
    summary_rows = []
    reports = []
    for n0 in _parse_n_list(args.n0):
        report = ecvr_backtest(series, n0, h, config, alpha)
        for k, verdict in enumerate(report.verdicts):
            window_rows.append([n0, k, int(verdict)])
        summary_rows.append([n0, h, repr(report.ecvr), report.evaluated, report.window_count])
        reports.append(report.to_dict())
    out_dir = args.output_dir
    windows_csv = os.path.join(out_dir, "ecvr_windows.csv")
    summary_csv = os.path.join(out_dir, "ecvr_summary.csv")
    summary_json = os.path.join(out_dir, "ecvr.json")
    plot = os.path.join(out_dir, "ecvr.gnuplot")
    write_rows_csv(windows_csv, ["n0", "window", "covered"], window_rows)
    write_rows_csv(summary_csv, ["n0", "h", "ecvr", "evaluated", "window_count"], summary_rows)
    _write_json(summary_json, {"alpha": alpha, "runs": reports})
    emit_gnuplot_script(
        plot, "ecvr_summary.csv", "n0", "ECVR", "backtest coverage vs history length", 1, 3,
        nominal=1 - alpha,
    )
    _emit_manifest(args, settings, [args.input], [windows_csv, summary_csv, summary_json, plot], started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
