"""Tests for the 84-dim feature extraction stack."""

import numpy as np
import pytest
from scipy.special import gamma as gamma_fn

from priq._errors import ManifestError
from priq.features import (
    FEATURE_DIM,
    GROUP_SLICES,
    _entropy64,
    _ggd_ratio,
    _haar_level,
    _shape_from_ratio,
    dct_features,
    downsample2,
    extract_all,
    fit_aggd,
    fit_ggd,
    mscn_field,
    read_feature_cache,
    spatial_features,
    wavelet_features,
    write_feature_cache,
)

from conftest import ggd_samples


class TestLayout:
    def test_group_slices_cover_vector_contiguously(self):
        cursor = 0
        for name, start, stop in GROUP_SLICES:
            assert start == cursor
            assert stop > start
            cursor = stop
        assert cursor == FEATURE_DIM

    def test_group_sizes(self):
        sizes = {name: stop - start for name, start, stop in GROUP_SLICES}
        assert sizes == {
            "bld1": 8, "bld2": 8, "bld3": 8,
            "brl1": 18, "brl2": 18,
            "m": 8, "v": 8, "e": 8,
        }


class TestFitGgd:
    @pytest.mark.parametrize("shape", [0.5, 1.0, 2.0, 4.0])
    def test_shape_recovery_within_5_percent(self, shape):
        rng = np.random.default_rng(42)
        x = ggd_samples(rng, shape, 1.7, 100_000)
        fitted, _ = fit_ggd(x)
        assert abs(fitted - shape) <= 0.05 * shape

    @pytest.mark.parametrize("shape", [0.8, 2.0])
    def test_sigma_recovery(self, shape):
        rng = np.random.default_rng(7)
        scale = 2.5
        x = ggd_samples(rng, shape, scale, 200_000)
        _, sigma = fit_ggd(x)
        expected = scale * np.sqrt(gamma_fn(3.0 / shape) / gamma_fn(1.0 / shape))
        assert sigma == pytest.approx(expected, rel=0.02)

    def test_all_equal_fallback(self):
        assert fit_ggd(np.zeros(100)) == (10.0, 0.0)
        assert fit_ggd(np.full(100, 3.3)) == (10.0, 0.0)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_ggd(np.ones(63))

    def test_non_finite_samples(self):
        x = np.ones(100)
        x[3] = np.nan
        with pytest.raises(ValueError):
            fit_ggd(x)

    def test_grid_inversion_round_trip(self):
        shapes = np.logspace(np.log10(0.15), np.log10(8.0), 25)
        recovered = _shape_from_ratio(_ggd_ratio(shapes))
        np.testing.assert_allclose(recovered, shapes, rtol=1e-6)

    def test_ratio_out_of_range_clamps(self):
        assert _shape_from_ratio(1e-9)[0] == 0.1
        assert _shape_from_ratio(0.9)[0] == 10.0
        assert _shape_from_ratio(np.nan)[0] == 10.0


class TestFitAggd:
    def test_symmetric_input_balanced(self):
        rng = np.random.default_rng(11)
        x = ggd_samples(rng, 2.0, 1.0, 200_000)
        shape, eta, s_l, s_r = fit_aggd(x)
        assert shape == pytest.approx(2.0, rel=0.05)
        assert s_l == pytest.approx(s_r, rel=0.02)
        assert abs(eta) < 0.02

    def test_asymmetric_sides_detected(self):
        rng = np.random.default_rng(13)
        n = 200_000
        a_l, a_r, shape = 1.0, 2.0, 2.0
        left = rng.random(n) < a_l / (a_l + a_r)
        mag = rng.gamma(1.0 / shape, 1.0, size=n) ** (1.0 / shape)
        x = np.where(left, -a_l * mag, a_r * mag)
        fitted, eta, s_l, s_r = fit_aggd(x)
        assert s_l < s_r
        assert fitted == pytest.approx(shape, rel=0.1)
        assert eta > 0.0
        expected_sl = a_l * np.sqrt(gamma_fn(3.0 / shape) / gamma_fn(1.0 / shape))
        assert s_l == pytest.approx(expected_sl, rel=0.03)

    def test_one_sided_input_finite(self):
        rng = np.random.default_rng(5)
        x = np.abs(rng.standard_normal(1000)) + 0.1
        shape, eta, s_l, s_r = fit_aggd(x)
        assert np.isfinite([shape, eta, s_l, s_r]).all()
        assert s_l == 0.0
        assert s_r > 0.0

    def test_all_equal_fallback(self):
        assert fit_aggd(np.full(200, -1.5)) == (10.0, 0.0, 0.0, 0.0)


class TestDownsample2:
    def test_exact_block_average(self):
        a = np.arange(24, dtype=float).reshape(4, 6)
        out = downsample2(a)
        expected = np.array([
            [(0 + 1 + 6 + 7) / 4, (2 + 3 + 8 + 9) / 4, (4 + 5 + 10 + 11) / 4],
            [(12 + 13 + 18 + 19) / 4, (14 + 15 + 20 + 21) / 4, (16 + 17 + 22 + 23) / 4],
        ])
        np.testing.assert_array_equal(out, expected)

    def test_odd_trailing_dropped(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((9, 7))
        np.testing.assert_array_equal(downsample2(a), downsample2(a[:8, :6]))

    def test_too_small_raises(self):
        with pytest.raises(ValueError):
            downsample2(np.ones((3, 3)))


class TestMscn:
    def test_constant_image_maps_to_zero(self):
        # Normalized residual of a flat image is float rounding noise at most
        # (the window weights sum to 1 only within machine epsilon).
        f = mscn_field(np.full((64, 64), 120.0))
        np.testing.assert_allclose(f, np.zeros((64, 64)), atol=1e-10)

    def test_shape_preserved(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0, 255, (65, 80))
        assert mscn_field(a).shape == (65, 80)

    def test_normalization_statistics(self):
        rng = np.random.default_rng(2)
        a = np.clip(128 + 40 * rng.standard_normal((128, 128)), 0, 255)
        f = mscn_field(a)
        assert abs(f.mean()) < 0.05
        assert 0.3 < f.std() < 1.5


class TestHaar:
    def test_single_block_oracle(self):
        ll, lh, hl, hh = _haar_level(np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert (ll[0, 0], lh[0, 0], hl[0, 0], hh[0, 0]) == (5.0, -1.0, -2.0, 0.0)

    def test_orthonormal_energy_preserved(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((64, 64))
        ll, lh, hl, hh = _haar_level(a)
        total = sum(float((b * b).sum()) for b in (ll, lh, hl, hh))
        assert total == pytest.approx(float((a * a).sum()), rel=1e-12)

    def test_entropy_oracle(self):
        assert _entropy64(np.full(100, 10.0)) == 0.0
        half = np.concatenate([np.full(50, -10.0), np.full(50, 10.0)])
        assert _entropy64(half) == pytest.approx(np.log(2.0), rel=1e-12)

    def test_constant_image_wavelet_features(self):
        w = wavelet_features(np.full((64, 64), 9.0))
        # All detail coefficients vanish: means, variances, entropies all 0.
        np.testing.assert_array_equal(w, np.zeros(24))


class TestExtractAll:
    def test_shapes_and_finiteness(self):
        rng = np.random.default_rng(42)
        images = [
            np.clip(128 + 32 * rng.standard_normal((96, 96)), 0, 255).round(),
            np.full((64, 64), 200.0),
            np.tile(np.linspace(0, 255, 80), (72, 1)),
        ]
        for img in images:
            vec = extract_all(img)
            assert vec.shape == (FEATURE_DIM,)
            assert np.all(np.isfinite(vec))

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        img = rng.uniform(0, 255, (70, 66))
        np.testing.assert_array_equal(extract_all(img), extract_all(img))

    def test_subvector_lengths(self):
        rng = np.random.default_rng(9)
        img = rng.uniform(0, 255, (64, 64))
        assert dct_features(img).shape == (24,)
        assert spatial_features(img).shape == (36,)
        assert wavelet_features(img).shape == (24,)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            extract_all(np.ones((32, 200)))
        with pytest.raises(ValueError):
            extract_all(np.ones(64))
        bad = np.ones((64, 64))
        bad[0, 0] = np.inf
        with pytest.raises(ValueError):
            extract_all(bad)

    def test_frozen_oracle_vector(self):
        rng = np.random.default_rng(42)
        img = np.clip(128.0 + 32.0 * rng.standard_normal((96, 96)), 0.0, 255.0).round()
        vec = extract_all(img)
        np.testing.assert_allclose(
            vec[:6],
            [3.3430200688734346, 1.1444081935262196, 0.7284612772634363,
             0.9447865391117405, 1.1155631099711711, 1.7871426331950997],
            rtol=1e-7,
        )
        np.testing.assert_allclose(
            vec[24:30],
            [2.968943539061975, 0.740569199090491, 1.0403654886396534,
             -0.09456023201952447, 0.5435574299522148, 0.3658119865113113],
            rtol=1e-7, atol=1e-12,
        )
        np.testing.assert_allclose(
            vec[60:66],
            [25.725260416666668, 25.571614583333332, 25.477864583333332,
             25.934895833333332, 25.85590277777778, 26.116319444444443],
            rtol=1e-7,
        )
        assert float(vec.sum()) == pytest.approx(8446.512309408963, rel=1e-9)


class TestFeatureCache:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(21)
        ids = np.array([3, 1, 41, 7], dtype=np.int64)
        rows = rng.standard_normal((4, FEATURE_DIM))
        path = tmp_path / "cache.bin"
        write_feature_cache(path, ids, rows)
        got_ids, got_rows = read_feature_cache(path)
        np.testing.assert_array_equal(got_ids, ids)
        np.testing.assert_array_equal(got_rows, rows)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTPRIQ" + b"\x00" * 64)
        with pytest.raises(ManifestError):
            read_feature_cache(path)

    def test_truncated_rejected(self, tmp_path):
        rng = np.random.default_rng(22)
        path = tmp_path / "cache.bin"
        write_feature_cache(path, [1, 2], rng.standard_normal((2, FEATURE_DIM)))
        data = path.read_bytes()
        path.write_bytes(data[:-16])
        with pytest.raises(ManifestError):
            read_feature_cache(path)
