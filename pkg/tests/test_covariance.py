import json

import numpy as np
import pytest

from mfbootstrap import GaussianizedSeries
from mfbootstrap.covariance import (
    FlatTopKernel,
    _banded_to_dense,
    assemble_banded,
    build_tapered,
    default_banding,
    factor_banded,
    from_blocks,
    lag_blocks,
    op_norm_diff,
    psd_repair,
)
from mfbootstrap.errors import DomainError, FactorizationError, RepairFailureError
from tests.conftest import ar1_oracle_blocks, ar1_path


class TestFlatTopKernel:
    def test_piecewise_values(self):
        k = FlatTopKernel(4.0)
        lags = np.arange(0, 12)
        w = k.weight(lags)
        assert np.all(w[lags <= 4] == 1.0)
        assert np.all(w[lags > 8] == 0.0)
        mid = (lags > 4) & (lags <= 8)
        assert np.allclose(w[mid], 2.0 - lags[mid] / 4.0)

    def test_continuity_at_knots(self):
        k = FlatTopKernel(3.0)
        eps = 1e-9
        assert abs(k.weight(3.0 + eps) - 1.0) < 1e-8
        assert abs(k.weight(6.0 - eps)) < 1e-8

    def test_positive_banding_required(self):
        with pytest.raises(DomainError):
            FlatTopKernel(0.0)


class TestBuildTapered:
    def test_large_banding_keeps_raw_blocks(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((2, 24))
        n = 24
        cov = build_tapered(GaussianizedSeries(y), banding=float(n))
        raw = lag_blocks(y, n - 1)
        # ridge only touches the lag-0 diagonal
        off_diag = cov.blocks[0] - np.diag(np.diag(cov.blocks[0]))
        assert np.allclose(off_diag, raw[0] - np.diag(np.diag(raw[0])), atol=1e-12)
        assert np.allclose(cov.blocks[1:], raw[1:], atol=1e-12)

    def test_white_noise_blocks(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal((2, 2000))
        cov = build_tapered(GaussianizedSeries(y), banding=5.0)
        assert np.abs(cov.blocks[0] - np.eye(2)).max() < 0.1
        assert np.abs(cov.blocks[1:]).max() < 0.1

    def test_blocks_zero_beyond_twice_banding(self):
        rng = np.random.default_rng(2)
        y = rng.standard_normal((1, 300))
        cov = build_tapered(GaussianizedSeries(y), banding=3.0)
        assert cov.max_lag <= 6
        assert np.abs(cov.blocks[-1]).max() == 0.0  # ceil(2l) lag has weight exactly 0

    def test_consistency_trend(self):
        phi = 0.5
        oracle = ar1_oracle_blocks(phi, 50)
        wins = 0
        for seed in range(20):
            dists = []
            for n in (500, 4000):
                z = ar1_path(phi, n, seed=seed)
                est = build_tapered(GaussianizedSeries(z[None, :]), banding=n ** (1 / 3))
                dists.append(op_norm_diff(est, from_blocks(oracle, n)).value)
            wins += dists[1] < dists[0]
        assert wins >= 15

    def test_accepts_plain_matrix(self):
        rng = np.random.default_rng(3)
        y = rng.standard_normal((2, 50))
        a = build_tapered(y, banding=2.0)
        b = build_tapered(GaussianizedSeries(y), banding=2.0)
        assert np.array_equal(a.ab, b.ab)

    def test_input_validation(self):
        rng = np.random.default_rng(4)
        with pytest.raises(DomainError):
            build_tapered(rng.standard_normal((1, 3)), banding=1.0)
        with pytest.raises(DomainError):
            build_tapered(rng.standard_normal((1, 30)), banding=-1.0)


class TestPsdRepair:
    def test_already_pd_untouched(self):
        blocks = ar1_oracle_blocks(0.5, 4)
        out, record = psd_repair(blocks, 20)
        assert not record.applied
        assert record.epsilon == 0.0
        assert np.array_equal(out, blocks)

    def test_singular_input_repaired(self):
        # duplicate dimensions force a singular lag-0 block
        rng = np.random.default_rng(5)
        row = rng.standard_normal(60)
        y = np.vstack([row, row])
        blocks = lag_blocks(y, 3)
        out, record = psd_repair(blocks, 60)
        assert record.applied and record.epsilon > 0
        ab = assemble_banded(out, 60)
        factor = factor_banded(ab)
        dense = _banded_to_dense(ab, symmetric=True)
        fd = _banded_to_dense(factor, symmetric=False)
        assert np.abs(fd @ fd.T - dense).max() < 1e-8

    def test_hard_failure_budget(self):
        # lag-1 correlation far above 1 cannot be fixed by any sane ridge
        blocks = np.stack([np.eye(1), 40.0 * np.eye(1)])
        with pytest.raises(RepairFailureError):
            psd_repair(blocks, 30)


class TestFactorBanded:
    def test_identity(self):
        ab = assemble_banded(np.eye(3)[None], 5)
        lb = factor_banded(ab)
        assert np.array_equal(lb, ab)

    def test_matches_dense_small(self):
        blocks = ar1_oracle_blocks(0.6, 2)
        d2 = np.zeros((3, 2, 2))
        d2[0] = [[2.0, 0.3], [0.3, 1.5]]
        d2[1] = [[0.4, 0.1], [0.2, 0.3]]
        d2[2] = [[0.1, 0.0], [0.05, 0.1]]
        for blk, n in ((blocks, 3), (d2, 3)):
            ab = assemble_banded(blk, n)
            lb = factor_banded(ab)
            dense = _banded_to_dense(ab, symmetric=True)
            assert np.abs(_banded_to_dense(lb, False) - np.linalg.cholesky(dense)).max() < 1e-10

    def test_band_zeros_outside(self):
        cov = from_blocks(ar1_oracle_blocks(0.5, 3), 20)
        dense_factor = cov.factor_dense()
        bw = cov.bandwidth
        for r in range(20):
            for c in range(20):
                if r < c or r - c > bw:
                    assert dense_factor[r, c] == 0.0

    def test_nonpositive_pivot_raises(self):
        ab = assemble_banded(np.stack([np.eye(1), 2.0 * np.eye(1)]), 10)
        with pytest.raises(FactorizationError):
            factor_banded(ab)


class TestOpNorm:
    def test_identical_is_zero(self):
        cov = from_blocks(ar1_oracle_blocks(0.3, 4), 15)
        est = op_norm_diff(cov, cov)
        assert est.value == 0.0 and est.converged

    def test_diagonal_difference(self):
        a = from_blocks(3.0 * np.eye(2)[None], 4)
        b = from_blocks(np.eye(2)[None], 4)
        est = op_norm_diff(a, b)
        assert abs(est.value - 2.0) < 1e-8

    def test_matches_dense_eigensolver(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            blocks_a = lag_blocks(rng.standard_normal((2, 50)), 2)
            blocks_b = lag_blocks(rng.standard_normal((2, 50)), 2)
            a = from_blocks(blocks_a, 4)
            b = from_blocks(blocks_b, 4)
            est = op_norm_diff(a, b, tol=1e-10)
            dense = a.dense() - b.dense()
            expected = np.abs(np.linalg.eigvalsh(dense)).max()
            assert abs(est.value - expected) < 1e-5

    def test_order_mismatch(self):
        a = from_blocks(np.eye(1)[None], 4)
        b = from_blocks(np.eye(1)[None], 5)
        with pytest.raises(DomainError):
            op_norm_diff(a, b)


class TestLeading:
    def test_leading_slices_factor_exactly(self):
        cov = from_blocks(ar1_oracle_blocks(0.5, 6), 30)
        lead = cov.leading(20)
        fresh = from_blocks(ar1_oracle_blocks(0.5, 6), 20)
        assert np.abs(lead.factor - fresh.factor).max() < 1e-12
        assert lead.repair == cov.repair

    def test_bounds_checked(self):
        cov = from_blocks(np.eye(1)[None], 5)
        with pytest.raises(DomainError):
            cov.leading(6)


class TestDiagnostics:
    def test_dump_keys_and_json(self):
        cov = from_blocks(ar1_oracle_blocks(0.4, 5), 25, banding=2.5)
        diag = cov.diagnostics()
        for key in ("order", "banding", "bandwidth", "ridge_epsilon", "min_eig_bound", "max_eig_estimate"):
            assert key in diag
        parsed = json.loads(cov.diagnostics_json())
        assert parsed["order"] == 25

    def test_demo_model_stays_pd_across_seeds(self):
        # recorded observation: the synthetic demo model never needs repair
        # at n=500 (assumption that eigenvalues stay away from 0)
        from dataclasses import replace

        from mfbootstrap.bootstrap import MfbConfig, fit_world
        from mfbootstrap.experiments import preset_spec, simulate

        spec = preset_spec("var2-sqrt", n=500, seed=0)
        cfg = MfbConfig(cdf="empirical", threshold=10.0)
        for seed in range(5):
            observed, _ = simulate(replace(spec, seed=seed))
            world = fit_world(observed, cfg)
            assert world.cov_ext.repair.min_eig_bound > -1e-6


def test_default_banding_rule():
    assert default_banding(8) == 2.0
    assert default_banding(1000) == 10.0
    assert default_banding(2) == 1.0
