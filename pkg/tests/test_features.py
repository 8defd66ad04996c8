import colorsys
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from osskit.features import (
    FeatureConfig,
    aspect_ratio,
    color_hist_mean,
    dct_mean,
    dct_mean_gray,
    feature_vector,
    featurize_table,
    hsv_means,
    resize_bilinear,
    to_gray,
)

from conftest import crop, solid


def naive_dct2(img):
    """Direct O(N^4) orthonormal DCT-II."""
    m, n = img.shape
    out = np.zeros((m, n))
    for u in range(m):
        au = math.sqrt((1 if u == 0 else 2) / m)
        for v in range(n):
            av = math.sqrt((1 if v == 0 else 2) / n)
            s = 0.0
            for x in range(m):
                cx = math.cos(math.pi * (2 * x + 1) * u / (2 * m))
                for y in range(n):
                    s += img[x, y] * cx * math.cos(math.pi * (2 * y + 1) * v / (2 * n))
            out[u, v] = au * av * s
    return out


def naive_resize(img, h, w):
    """Per-output-pixel bilinear interpolation with half-pixel centres."""
    H, W = img.shape
    out = np.zeros((h, w))
    for i in range(h):
        sy = min(max((i + 0.5) * H / h - 0.5, 0), H - 1)
        y0 = int(sy)
        y1 = min(y0 + 1, H - 1)
        fy = sy - y0
        for j in range(w):
            sx = min(max((j + 0.5) * W / w - 0.5, 0), W - 1)
            x0 = int(sx)
            x1 = min(x0 + 1, W - 1)
            fx = sx - x0
            top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
            bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
            out[i, j] = top * (1 - fy) + bot * fy
    return out


class TestAspectRatio:
    @pytest.mark.parametrize("w,h,expected", [(100, 50, 2.0), (64, 64, 1.0), (30, 90, 1 / 3)])
    def test_examples(self, w, h, expected):
        assert aspect_ratio(solid(h, w, (0, 0, 0))) == pytest.approx(expected, rel=1e-15)

    @given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 5))
    def test_scale_invariant(self, w, h, k):
        assert aspect_ratio(solid(h * k, w * k, (1, 2, 3))) == pytest.approx(aspect_ratio(solid(h, w, (1, 2, 3))))


class TestDCT:
    def test_constant_128(self):
        assert dct_mean(solid(20, 30, (128, 128, 128)), 64) == pytest.approx(2.0, abs=1e-12)

    def test_constant_zero(self):
        assert dct_mean(solid(7, 9, (0, 0, 0)), 64) == 0.0

    def test_checkerboard_against_naive(self):
        board = np.kron([[0, 255], [255, 0]], np.ones((1, 1)))
        pixels = np.repeat(board[:, :, None], 3, axis=2).astype(np.uint8)
        got = dct_mean(crop(pixels), 8)
        gray = to_gray(pixels)
        expected = naive_dct2(naive_resize(gray, 8, 8)).mean()
        assert got == pytest.approx(expected, rel=1e-9, abs=1e-12)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(8, 32), st.integers(8, 32), st.integers(0, 2**32 - 1))
    def test_matches_naive_dct(self, h, w, seed):
        img = np.random.default_rng(seed).uniform(0, 255, (h, w))
        got = dct_mean_gray(img, 8)
        expected = naive_dct2(naive_resize(img, 8, 8)).mean()
        assert got == pytest.approx(expected, rel=1e-9, abs=1e-9)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(8, 16), st.integers(8, 16), st.integers(0, 2**32 - 1))
    def test_identity_resize_matches_naive_dct(self, h, w, seed):
        img = np.random.default_rng(seed).uniform(0, 255, (h, w))
        from scipy.fft import dctn

        np.testing.assert_allclose(dctn(img, norm="ortho"), naive_dct2(img), rtol=1e-9, atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**32 - 1))
    def test_resize_matches_loop(self, H, W, h, w, seed):
        img = np.random.default_rng(seed).uniform(0, 255, (H, W))
        np.testing.assert_allclose(resize_bilinear(img, h, w), naive_resize(img, h, w), rtol=1e-12, atol=1e-9)

    def test_luma_weights(self):
        assert to_gray(np.array([[[255, 0, 0]]], dtype=np.uint8))[0, 0] == pytest.approx(0.299 * 255)


class TestColorHist:
    def test_raw_mean_is_count_over_bins(self):
        assert color_hist_mean(solid(32, 16, (10, 20, 30)), 8) == 1.0

    def test_single_color_occupancy(self):
        assert color_hist_mean(solid(10, 10, (200, 3, 90)), 8, normalized=True) == 1 / 512

    def test_four_colors_occupancy(self):
        px = np.zeros((2, 2, 3), dtype=np.uint8)
        px[0, 0] = (0, 0, 0)
        px[0, 1] = (255, 0, 0)
        px[1, 0] = (0, 255, 0)
        px[1, 1] = (0, 0, 255)
        assert color_hist_mean(crop(px), 8, normalized=True) == 4 / 512

    @given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12), st.just(3))), st.integers(2, 16))
    def test_raw_mean_exact(self, px, bins):
        assert color_hist_mean(crop(px), bins) == px.shape[0] * px.shape[1] / bins**3


class TestHSV:
    def test_pure_red(self):
        assert hsv_means(solid(4, 4, (255, 0, 0))) == (0.0, 1.0, 1.0)

    def test_pure_white(self):
        assert hsv_means(solid(4, 4, (255, 255, 255))) == (0.0, 0.0, 1.0)

    def test_half_red_half_green(self):
        px = np.zeros((4, 4, 3), dtype=np.uint8)
        px[:, :2] = (255, 0, 0)
        px[:, 2:] = (0, 255, 0)
        hue, sat, val = hsv_means(crop(px))
        assert (hue, sat, val) == pytest.approx((60.0, 1.0, 1.0))

    @settings(max_examples=30)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
    def test_matches_colorsys(self, px):
        ref = np.array([colorsys.rgb_to_hsv(*(p / 255.0)) for p in px.reshape(-1, 3).astype(float)])
        hue, sat, val = hsv_means(crop(px))
        np.testing.assert_allclose([hue, sat, val], [ref[:, 0].mean() * 360, ref[:, 1].mean(), ref[:, 2].mean()], atol=1e-9)


class TestFeaturize:
    def test_three_rows(self):
        crops = [solid(10, 20, (i * 50, 0, 0)) for i in range(3)]
        t = featurize_table(crops, FeatureConfig(), "s", ["x"])
        assert t.values.shape == (3, 3)
        assert t.feature_schema == ["AR", "DCT", "CH"]

    def test_hsv_schema(self):
        cfg = FeatureConfig(use_hue=True, use_sat=True, use_val=True)
        assert cfg.schema == ["AR", "DCT", "CH", "HUE", "SAT", "VAL"]
        assert featurize_table([solid(3, 3, (1, 2, 3))], cfg, "s", ["x"]).dim == 6

    def test_empty(self):
        t = featurize_table([], FeatureConfig(), "s", ["x"])
        assert len(t) == 0 and t.values.shape == (0, 3)

    def test_no_features_rejected(self):
        with pytest.raises(ValueError):
            FeatureConfig(use_ar=False, use_dct=False, use_ch=False)

    @settings(max_examples=20, deadline=None)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20), st.just(3))))
    def test_pure(self, px):
        a = feature_vector(crop(px.copy()))
        b = feature_vector(crop(px.copy()))
        assert a.tobytes() == b.tobytes()
