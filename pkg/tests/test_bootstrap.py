import numpy as np
import pytest
from scipy.special import ndtr, ndtri

import mfbootstrap.bootstrap as bootstrap_mod
from mfbootstrap import (
    GaussianizedSeries,
    MfbConfig,
    MultiSeries,
    bootstrap_roots,
    fit_world,
    point_predict,
    refit_world,
)
from mfbootstrap import rng as rngmod
from mfbootstrap.bootstrap import FittedWorld, with_overrides
from mfbootstrap.covariance import from_blocks
from mfbootstrap.errors import ConfigError, RunError
from mfbootstrap.transform import extension_pieces, whiten
from tests.conftest import ar1_path


class TestConfig:
    def test_defaults_valid(self):
        MfbConfig().validate()

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(replicates=50),
            dict(predictor_draws=10),
            dict(horizon=0),
            dict(loss="huber"),
            dict(norm=3.0),
            dict(variant="other"),
            dict(innovations="bayes"),
            dict(cdf="histogram"),
            dict(model=3),
            dict(bandwidth=-0.1),
            dict(banding=0.0),
            dict(threshold=-2.0),
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            MfbConfig(**kwargs)

    def test_norm_string_inf(self):
        cfg = MfbConfig(norm="inf")
        assert np.isinf(cfg.norm)
        assert cfg.to_dict()["norm"] == "inf"

    def test_digest_stable(self):
        assert MfbConfig(seed=1).digest() == MfbConfig(seed=1).digest()
        assert MfbConfig(seed=1).digest() != MfbConfig(seed=2).digest()


def oracle_world(phi: float, n: int, seed: int, horizon: int = 1) -> FittedWorld:
    """A fitted world with exact transforms: standard-normal marginal on a
    Gaussian AR(1) path and the true covariance blocks."""

    class OracleNormalCdf:
        kind = "oracle"

        def __init__(self, scale):
            self.scale = scale

        def evaluate(self, y):
            return ndtr(np.asarray(y) / self.scale)

        def invert(self, u):
            return ndtri(np.asarray(u)) * self.scale

    z = ar1_path(phi, n, seed=seed)
    sigma = 1.0 / np.sqrt(1.0 - phi * phi)
    series = MultiSeries(z[None, :])
    blocks = (phi ** np.arange(61))[:, None, None]
    cov_ext = from_blocks(blocks, n + horizon)
    cov = cov_ext.leading(n)
    zg = GaussianizedSeries((z / sigma)[None, :])
    xi = whiten(zg, cov)
    return FittedWorld(
        series=series,
        models=(OracleNormalCdf(sigma),),
        threshold=10.0,
        banding=60.0,
        z=zg,
        cov=cov,
        cov_ext=cov_ext,
        xi=xi,
        pieces=extension_pieces(cov_ext, xi),
    )


class TestPointPredict:
    def test_iid_prediction_near_zero(self):
        rng = np.random.default_rng(0)
        series = MultiSeries(rng.standard_normal((2, 1000)))
        cfg = MfbConfig(predictor_draws=2000, cdf="kernel", threshold=8.0, seed=3)
        world = fit_world(series, cfg)
        pred = point_predict(world, cfg, rngmod.substream(3, rngmod.PREDICTOR))
        assert np.abs(pred).max() < 0.15

    def test_ar1_conditional_mean_oracle(self):
        phi = 0.9
        world = oracle_world(phi, 2000, seed=4)
        cfg = MfbConfig(predictor_draws=2000, innovations="normal", seed=5)
        pred = point_predict(world, cfg, rngmod.substream(5, rngmod.PREDICTOR))
        target = phi * world.series.values[0, -1]
        # conditional sd is 1, Monte Carlo error 3/sqrt(M) plus taper truncation slack
        assert abs(pred[0] - target) < 3.0 / np.sqrt(2000) + 0.01

    def test_l1_l2_agree_on_symmetric_law(self):
        world = oracle_world(0.5, 1500, seed=6)
        draws = 4000
        preds = {}
        for loss in ("l1", "l2"):
            cfg = MfbConfig(predictor_draws=draws, loss=loss, innovations="normal", seed=7)
            preds[loss] = point_predict(world, cfg, rngmod.substream(7, rngmod.PREDICTOR))
        se = 1.0 / np.sqrt(draws)
        assert abs(preds["l1"][0] - preds["l2"][0]) < 2 * 1.2533 * se + 1e-3

    def test_small_draw_count_rejected(self):
        world = oracle_world(0.5, 200, seed=8)
        cfg = MfbConfig(seed=8)
        with pytest.raises(ConfigError):
            point_predict(world, cfg, rngmod.substream(8, 0), draws=50)


class TestBootstrapRoots:
    def test_seed_determinism_fixed(self, small_series):
        cfg = MfbConfig(replicates=150, predictor_draws=150, seed=11)
        a = bootstrap_roots(small_series, cfg)
        b = bootstrap_roots(small_series, cfg)
        assert np.array_equal(a.roots, b.roots)
        assert np.array_equal(a.predictor, b.predictor)

    def test_seed_determinism_resampled(self, small_series):
        cfg = MfbConfig(
            replicates=100, predictor_draws=150, inner_predictor_draws=100, variant="resampled", seed=12
        )
        a = bootstrap_roots(small_series, cfg)
        b = bootstrap_roots(small_series, cfg)
        assert np.array_equal(a.roots, b.roots)

    def test_fixed_variant_uses_sample_predictor(self, small_series):
        cfg = MfbConfig(replicates=150, predictor_draws=200, seed=13)
        sample = bootstrap_roots(small_series, cfg)
        world = fit_world(small_series, cfg)
        pred = point_predict(world, cfg, rngmod.substream(13, rngmod.PREDICTOR))
        assert np.array_equal(sample.predictor, pred)

    def test_limit_normal_iid_root_moments(self):
        rng = np.random.default_rng(14)
        series = MultiSeries(rng.standard_normal((1, 2000)))
        cfg = MfbConfig(
            replicates=500, predictor_draws=2000, innovations="normal", cdf="kernel", threshold=8.0, seed=15
        )
        sample = bootstrap_roots(series, cfg)
        assert abs(sample.roots.mean()) < 0.1
        assert 0.8 < sample.roots.var() < 1.2 * (1 + 1.0 / cfg.predictor_draws)

    def test_root_distribution_matches_analytic_oracle(self):
        phi = 0.6
        world = oracle_world(phi, 400, seed=16)
        cfg = MfbConfig(replicates=2000, predictor_draws=5000, innovations="normal", seed=17)
        pred = point_predict(world, cfg, rngmod.substream(17, rngmod.PREDICTOR))
        g = rngmod.substream(17, 1)
        from mfbootstrap.transform import extend_and_draw_many

        sigma = 1.0 / np.sqrt(1.0 - phi * phi)
        z_fut = extend_and_draw_many(world.pieces, g.standard_normal((2000, 1)))
        y_fut = ndtri(np.clip(ndtr(z_fut), 1e-300, 1 - 1e-16)) * sigma
        roots = np.abs((y_fut - pred).ravel())
        cm = world.pieces.cond_mean[0] * sigma
        s = world.pieces.corner[0, 0] * sigma
        oracle = np.abs(cm + s * np.random.default_rng(18).standard_normal(100_000) - pred[0])
        from scipy.stats import ks_2samp

        assert ks_2samp(roots, oracle).statistic < 0.05

    def test_studentizer_present_and_lower(self, small_series):
        cfg = MfbConfig(replicates=200, predictor_draws=150, studentize=True, seed=19)
        sample = bootstrap_roots(small_series, cfg)
        s = sample.studentizer
        assert s is not None and s.shape == (2, 2)
        assert s[0, 1] == 0.0 and s[0, 0] > 0 and s[1, 1] > 0

    def test_refit_equals_fit_on_same_series(self, small_series):
        cfg = MfbConfig(seed=20)
        a = fit_world(small_series, cfg)
        b = refit_world(small_series, cfg)
        assert np.array_equal(a.xi.values, b.xi.values)
        assert np.array_equal(a.cov_ext.factor, b.cov_ext.factor)

    def test_refit_on_round_trip_world_matches(self, small_series):
        cfg = MfbConfig(cdf="empirical", threshold=10.0, seed=21)
        world = fit_world(small_series, cfg)
        from mfbootstrap.transform import recolor

        z_round = recolor(world.xi, world.cov, models=world.models, threshold=world.threshold)
        from mfbootstrap.transform import _invert_gaussian_block

        y_round = MultiSeries(_invert_gaussian_block(world.models, z_round.values))
        refit = refit_world(y_round, cfg)
        grid = np.linspace(-2, 2, 30)
        for m_old, m_new in zip(world.models, refit.models):
            assert np.abs(m_old.evaluate(grid) - m_new.evaluate(grid)).max() < 0.05

    def test_horizon_block_shape(self, small_series):
        cfg = MfbConfig(replicates=120, predictor_draws=150, horizon=3, seed=22)
        sample = bootstrap_roots(small_series, cfg)
        assert sample.roots.shape == (120, 6)
        assert sample.predictor.shape == (6,)

    def test_skips_counted_and_run_error(self, small_series, monkeypatch):
        cfg = MfbConfig(
            replicates=100, predictor_draws=150, inner_predictor_draws=100, variant="resampled", seed=23
        )

        calls = {"n": 0}
        real = bootstrap_mod.refit_for_prediction

        def mostly_fail(series, anchor, config):
            calls["n"] += 1
            raise RunError("synthetic failure")

        monkeypatch.setattr(bootstrap_mod, "refit_for_prediction", mostly_fail)
        with pytest.raises(RunError):
            bootstrap_roots(small_series, cfg)
        assert calls["n"] == 300  # three attempts per replicate

        def fail_one(series, anchor, config):
            calls["n"] += 1
            if calls["n"] <= 3:
                raise RunError("synthetic failure")
            return real(series, anchor, config)

        calls["n"] = 0
        monkeypatch.setattr(bootstrap_mod, "refit_for_prediction", fail_one)
        sample = bootstrap_roots(small_series, cfg)
        assert sample.skipped == 1
        assert sample.roots.shape[0] == 99

    def test_export_roots(self, tmp_path, small_series):
        cfg = MfbConfig(replicates=120, predictor_draws=150, seed=24)
        sample = bootstrap_roots(small_series, cfg)
        csv_path = tmp_path / "roots.csv"
        meta_path = tmp_path / "meta.json"
        sample.save(csv_path, meta_path)
        lines = csv_path.read_text().strip().splitlines()
        assert len(lines) == 121
        import json

        meta = json.loads(meta_path.read_text())
        assert meta["replicates"] == 120 and meta["skipped"] == 0
        assert meta["config"]["seed"] == 24

    def test_select_slices_consistently(self, small_series):
        cfg = MfbConfig(replicates=150, predictor_draws=150, horizon=2, seed=25)
        sample = bootstrap_roots(small_series, cfg)
        tail = sample.select([2, 3])
        assert np.array_equal(tail.roots, sample.roots[:, 2:])
        assert np.array_equal(tail.predictor, sample.predictor[2:])


class TestVariantAgreement:
    def test_fixed_and_resampled_percentiles_converge(self):
        # loose trend check at moderate n: the two variants' root-norm
        # 95th percentiles agree within 25%

        from mfbootstrap.experiments import preset_spec, simulate
        from mfbootstrap.regions import lp_norm

        spec = preset_spec("var2-sqrt", n=500, seed=3)
        observed, _ = simulate(spec)
        base = MfbConfig(
            replicates=150, predictor_draws=300, inner_predictor_draws=150,
            cdf="empirical", threshold=10.0, seed=30,
        )
        q95 = {}
        for variant in ("fixed", "resampled"):
            sample = bootstrap_roots(observed, with_overrides(base, variant=variant))
            norms = np.sort(lp_norm(sample.roots, 2.0))
            q95[variant] = norms[int(np.ceil(0.95 * len(norms))) - 1]
        assert abs(q95["fixed"] - q95["resampled"]) < 0.25 * max(q95.values())

    def test_horizon_one_is_the_one_step_path(self, small_series):
        cfg_default = MfbConfig(replicates=120, predictor_draws=150, seed=31)
        cfg_explicit = MfbConfig(replicates=120, predictor_draws=150, seed=31, horizon=1)
        a = bootstrap_roots(small_series, cfg_default)
        b = bootstrap_roots(small_series, cfg_explicit)
        assert np.array_equal(a.roots, b.roots)
        assert np.array_equal(a.predictor, b.predictor)


class TestModelTwo:
    def test_pipeline_runs_and_is_deterministic(self):
        rng = np.random.default_rng(26)
        x = rng.standard_normal(150)
        y = 0.6 * x + 0.8 * rng.standard_normal(150)
        series = MultiSeries(np.vstack([x, y]))
        cfg = MfbConfig(replicates=120, predictor_draws=150, model=2, cdf="kernel", seed=27)
        a = bootstrap_roots(series, cfg)
        b = bootstrap_roots(series, cfg)
        assert np.array_equal(a.roots, b.roots)
        assert a.roots.shape == (120, 2)

    def test_conditional_dependence_flows_into_prediction(self):
        # dimension 1 tracks dimension 0 tightly; its predictive draws must
        # track the same-time draw of dimension 0
        rng = np.random.default_rng(28)
        x = rng.standard_normal(800)
        y = 2.0 * x + 0.1 * rng.standard_normal(800)
        series = MultiSeries(np.vstack([x, y]))
        cfg = MfbConfig(replicates=300, predictor_draws=300, model=2, cdf="kernel", seed=29)
        sample = bootstrap_roots(series, cfg)
        futures = sample.roots + sample.predictor
        corr = np.corrcoef(futures[:, 0], futures[:, 1])[0, 1]
        assert corr > 0.9
