import math

import numpy as np
import pytest

from mfbootstrap import (
    MfbConfig,
    MultiSeries,
    PredictiveRootSample,
    bonferroni_band,
    bootstrap_roots,
    jpb_stack,
    marginal_intervals,
    region_from_roots,
    stack_series,
)
from mfbootstrap.errors import DomainError, InsufficientDataError
from mfbootstrap.regions import PredictionRegion, QuantileSpec, lp_norm


def sample_from_roots(roots, predictor=None, studentizer=None, seed=0):
    roots = np.atleast_2d(np.asarray(roots, dtype=np.float64))
    if predictor is None:
        predictor = np.zeros(roots.shape[1])
    return PredictiveRootSample(
        roots=roots,
        predictor=np.asarray(predictor, dtype=np.float64),
        d=roots.shape[1],
        horizon=1,
        seed=seed,
        config={"seed": seed, "norm": 2.0},
        studentizer=studentizer,
    )


class TestQuantileSpec:
    def test_order_statistic_index(self):
        assert QuantileSpec(0.05, 100).index == 95
        assert QuantileSpec(0.01, 1000).index == 990

    def test_requires_enough_replicates(self):
        with pytest.raises(DomainError):
            QuantileSpec(0.01, 99)

    def test_alpha_domain(self):
        with pytest.raises(DomainError):
            QuantileSpec(0.0, 100)
        with pytest.raises(DomainError):
            QuantileSpec(1.0, 100)


class TestRegionFromRoots:
    def test_norms_1_to_100(self):
        sample = sample_from_roots(np.arange(1.0, 101.0)[:, None])
        region = region_from_roots(sample, 0.05, p=2.0)
        assert region.radius == 95.0

    def test_all_zero_roots(self):
        sample = sample_from_roots(np.zeros((200, 2)), predictor=[1.0, -1.0])
        region = region_from_roots(sample, 0.05, p=2.0)
        assert region.radius == 0.0
        assert region.contains(np.array([1.0, -1.0]))
        assert not region.contains(np.array([1.0, -0.999]))

    def test_norm_equivalence_radii(self):
        rng = np.random.default_rng(1)
        sample = sample_from_roots(rng.standard_normal((300, 4)))
        r_inf = region_from_roots(sample, 0.1, p=math.inf).radius
        r_two = region_from_roots(sample, 0.1, p=2.0).radius
        assert r_inf <= r_two <= math.sqrt(4) * r_inf

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(2)
        sample = sample_from_roots(rng.standard_normal((500, 3)))
        radii = [region_from_roots(sample, a, p=2.0).radius for a in (0.01, 0.05, 0.2)]
        assert radii[0] >= radii[1] >= radii[2]

    def test_exact_sort_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            count = int(rng.integers(100, 800))
            dim = int(rng.integers(1, 5))
            alpha = float(rng.choice([0.01, 0.05, 0.1]))
            roots = rng.standard_normal((count, dim))
            sample = sample_from_roots(roots)
            for p in (1.0, 2.0, math.inf):
                region = region_from_roots(sample, alpha, p=p)
                norms = sorted(lp_norm(roots, p).tolist())
                k = math.ceil((1 - alpha) * count)
                assert region.radius == norms[k - 1]

    def test_studentized_region(self):
        rng = np.random.default_rng(4)
        raw = rng.standard_normal((400, 2)) @ np.array([[2.0, 0.0], [0.5, 0.2]]).T
        cov = np.cov(raw, rowvar=False)
        factor = np.linalg.cholesky(cov)
        sample = sample_from_roots(raw, studentizer=factor)
        region = region_from_roots(sample, 0.05, p=2.0)
        assert region.kind == "studentized"
        # studentized radius is on the whitened scale: close to chi quantile
        assert 2.0 < region.radius < 3.2


class TestContains:
    def test_center_and_boundary(self):
        region = PredictionRegion(kind="plain", alpha=0.1, center=np.zeros(2), norm=2.0, radius=1.5)
        assert region.contains(np.zeros(2))
        assert region.contains(np.array([1.5, 0.0]))  # closed boundary
        assert not region.contains(np.array([1.5 + 1e-12, 0.0]))

    def test_brute_force_verdicts(self):
        rng = np.random.default_rng(5)
        center = rng.standard_normal(3)
        region = PredictionRegion(kind="plain", alpha=0.1, center=center, norm=1.0, radius=2.0)
        pts = rng.standard_normal((10_000, 3)) * 1.5 + center
        got = region.contains(pts)
        expected = np.array([np.abs(p - center).sum() <= 2.0 for p in pts])
        assert np.array_equal(got, expected)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(6)
        roots = rng.standard_normal((300, 2))
        shift = np.array([5.0, -3.0])
        region_a = region_from_roots(sample_from_roots(roots, predictor=[0.0, 0.0]), 0.05, p=2.0)
        region_b = region_from_roots(sample_from_roots(roots, predictor=shift), 0.05, p=2.0)
        pts = rng.standard_normal((500, 2))
        assert np.array_equal(region_a.contains(pts), region_b.contains(pts + shift))

    def test_norm_shapes(self):
        ball = PredictionRegion(kind="plain", alpha=0.1, center=np.zeros(2), norm=2.0, radius=1.0)
        box = PredictionRegion(kind="plain", alpha=0.1, center=np.zeros(2), norm=math.inf, radius=1.0)
        corner = np.array([0.9, 0.9])
        assert box.contains(corner) and not ball.contains(corner)
        axis = np.array([0.99, 0.0])
        assert ball.contains(axis) and box.contains(axis)

    def test_rejects_non_finite(self):
        region = PredictionRegion(kind="plain", alpha=0.1, center=np.zeros(1), norm=2.0, radius=1.0)
        with pytest.raises(DomainError):
            region.contains(np.array([np.nan]))


class TestStacking:
    def test_pinned_index_bookkeeping(self):
        series = MultiSeries(np.array([[1.0, 2.0, 3.0, 4.0, 5.0]]))
        stacked = stack_series(series, 2)
        assert stacked.values.shape == (2, 4)
        assert np.array_equal(stacked.values.T, [[1, 2], [2, 3], [3, 4], [4, 5]])

    def test_univariate_only(self):
        with pytest.raises(DomainError):
            stack_series(MultiSeries(np.zeros((2, 10)) + np.arange(10.0)), 2)

    def test_h1_band_equals_univariate_region(self):
        rng = np.random.default_rng(7)
        series = MultiSeries(rng.standard_normal((1, 300)))
        cfg = MfbConfig(replicates=200, predictor_draws=200, innovations="normal", seed=8)
        band = jpb_stack(series, 1, cfg, 0.05)
        sample = bootstrap_roots(series, cfg)
        direct = region_from_roots(sample, 0.05, p=cfg.norm)
        assert band.radius == direct.radius
        assert np.array_equal(band.center, direct.center)

    def test_insufficient_data(self):
        series = MultiSeries(np.arange(8.0)[None, :])
        cfg = MfbConfig(replicates=100, predictor_draws=100, seed=9)
        with pytest.raises(InsufficientDataError):
            jpb_stack(series, 3, cfg, 0.05)

    def test_band_center_has_h_coordinates(self):
        rng = np.random.default_rng(10)
        series = MultiSeries(rng.standard_normal((1, 240)))
        cfg = MfbConfig(replicates=150, predictor_draws=150, innovations="normal", seed=11)
        band = jpb_stack(series, 3, cfg, 0.05)
        assert band.center.shape == (3,)
        assert band.radius > 0


class TestBonferroni:
    def test_single_interval(self):
        region = bonferroni_band([(-1.0, 2.0)], 0.05, h=1)
        assert region.contains(np.array([0.0]))
        assert region.contains(np.array([2.0]))
        assert not region.contains(np.array([2.1]))

    def test_membership_is_coordinatewise_and(self):
        region = bonferroni_band([(-1.0, 1.0), (0.0, 2.0)], 0.05)
        assert region.contains(np.array([0.5, 1.0]))
        assert not region.contains(np.array([0.5, -0.5]))
        assert not region.contains(np.array([-2.0, 1.0]))

    def test_interval_count_checked(self):
        with pytest.raises(DomainError):
            bonferroni_band([(-1.0, 1.0)], 0.05, h=3)

    def test_endpoint_order_checked(self):
        with pytest.raises(DomainError):
            bonferroni_band([(1.0, -1.0)], 0.05)

    def test_marginal_intervals_cover_center(self):
        rng = np.random.default_rng(12)
        series = MultiSeries(rng.standard_normal((1, 400)))
        cfg = MfbConfig(replicates=300, predictor_draws=200, innovations="normal", seed=13)
        intervals = marginal_intervals(series, 3, 0.05, cfg)
        assert len(intervals) == 3
        for lo, hi in intervals:
            assert lo < hi


class TestRegionJson:
    def test_plain_round_trip(self):
        import json

        region = PredictionRegion(
            kind="plain", alpha=0.05, center=np.array([1.0, 2.0]), norm=math.inf, radius=0.5,
            metadata={"seed": 3, "config_digest": "ff"},
        )
        payload = json.loads(region.to_json())
        assert payload["kind"] == "plain"
        assert payload["p"] == "inf"
        assert payload["center"] == [1.0, 2.0]
        assert payload["radius"] == 0.5
        assert payload["seed"] == 3

    def test_box_payload(self):
        import json

        region = bonferroni_band([(-1.0, 1.0), (0.0, 2.0)], 0.1)
        payload = json.loads(region.to_json())
        assert payload["kind"] == "bonferroni-box"
        assert payload["box"] == [[-1.0, 1.0], [0.0, 2.0]]
