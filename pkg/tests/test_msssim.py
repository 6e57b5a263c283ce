import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from oracles import naive_ms_ssim
from vizsim.imagecore import ImageRGB, to_grayscale
from vizsim.msssim import (
    MsSsimParams,
    PyramidDepthError,
    check_weights,
    image_similarity,
    max_scales,
    ms_ssim,
    ms_ssim_yuv,
    scale_components,
    similarity_to_distance,
)
from vizsim.render import DatasetTable, EncodingSpec, render
from vizsim.ssim import SsimParams, mean_ssim

weight_vectors = st.lists(st.floats(0.05, 3.0), min_size=1, max_size=4)


def scatter_table(seed, n=30, cats=3):
    r = np.random.default_rng(seed)
    rows = [(f"c{c}", r.uniform(0.05, 0.95), r.uniform(0.05, 0.95)) for c in range(cats) for _ in range(n)]
    return DatasetTable.from_rows(rows)


def multiscale_reference(n=128, seed=0):
    rng = np.random.default_rng(seed)
    ref = np.zeros((n, n))
    for s, a in ((2, 0.15), (6, 0.25), (16, 0.3)):
        f = ndimage.gaussian_filter(rng.standard_normal((n, n)), s)
        ref += a * f / f.std()
    return np.clip(0.5 + 0.5 * ref / (3 * ref.std()), 0, 1), rng


class TestWeights:
    @pytest.mark.parametrize("w", [(), (1.0, 0.0), (1.0, -0.2), (float("nan"),), (float("inf"),)])
    def test_rejected(self, w):
        with pytest.raises(ValueError):
            check_weights(w)

    def test_default_five_uniform(self):
        assert MsSsimParams().weights == (1.0,) * 5


class TestDepth:
    def test_max_scales(self):
        assert max_scales((48, 48), 3) == 5
        assert max_scales((47, 64), 3) == 4
        assert max_scales((2, 2), 3) == 0

    def test_error_names_feasible_depth(self):
        with pytest.raises(PyramidDepthError, match="at most 4 scales"):
            ms_ssim(np.zeros((40, 40)), np.zeros((40, 40)), MsSsimParams(weights=(1,) * 5))

    def test_boundary_ok(self, rng):
        x = rng.random((48, 48))
        assert ms_ssim(x, x) == pytest.approx(1.0, abs=1e-9)


class TestMsSsim:
    @settings(max_examples=25, deadline=None)
    @given(weight_vectors, st.integers(0, 2**32 - 1))
    def test_identity_any_weights(self, w, seed):
        x = np.random.default_rng(seed).random((32, 32))
        assert ms_ssim(x, x, MsSsimParams(weights=w)) == pytest.approx(1.0, abs=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(weight_vectors, st.integers(0, 2**32 - 1))
    def test_symmetric_bit_exact(self, w, seed):
        r = np.random.default_rng(seed)
        x, y = r.random((32, 32)), r.random((32, 32))
        p = MsSsimParams(weights=w)
        assert ms_ssim(x, y, p) == ms_ssim(y, x, p)

    def test_single_scale_is_mean_ssim(self, rng):
        for _ in range(10):
            x, y = rng.random((12, 12)), rng.random((12, 12))
            assert ms_ssim(x, y, MsSsimParams(weights=(1.0,))) == mean_ssim(x, y)

    @pytest.mark.parametrize("w", [(1.0, 1.0, 1.0), (0.2, 0.3, 0.5), (0.5, 2.0), (0.7,)])
    def test_against_oracle(self, rng, w):
        x = rng.random((24, 24))
        y = np.clip(x + 0.2 * rng.standard_normal(x.shape), 0, 1)
        p = MsSsimParams(weights=w)
        b = p.base
        expected = naive_ms_ssim(x, y, w, b.window.taps, b.c1, b.c2, b.c3)
        assert ms_ssim(x, y, p) == pytest.approx(expected, abs=1e-9)

    def test_odd_sizes_against_oracle(self, rng):
        x, y = rng.random((27, 31)), rng.random((27, 31))
        b = SsimParams()
        w = (1.0, 1.0, 1.0)
        assert ms_ssim(x, y, MsSsimParams(weights=w)) == pytest.approx(
            naive_ms_ssim(x, y, w, b.window.taps, b.c1, b.c2, b.c3), abs=1e-9
        )

    def test_components_reusable(self, rng):
        x, y = rng.random((32, 32)), rng.random((32, 32))
        comps = scale_components(x, y, MsSsimParams(weights=(1,) * 4))
        for w in [(0.1, 0.2, 0.3, 0.4), (2, 1, 1, 0.5)]:
            assert comps.combine(w) == ms_ssim(x, y, MsSsimParams(weights=w))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="differ"):
            ms_ssim(np.zeros((48, 48)), np.zeros((48, 50)))

    def test_blur_noise_order_flips_with_weights(self):
        ref, rng = multiscale_reference()
        blur = ndimage.gaussian_filter(ref, 4.0)
        m = np.mean((blur - ref) ** 2)
        noise = rng.standard_normal(ref.shape)
        noisy = ref + noise * np.sqrt(m / np.mean(noise**2))
        assert np.mean((noisy - ref) ** 2) == pytest.approx(m, rel=1e-12)
        fine = MsSsimParams(weights=(0.5, 0.2, 0.1, 0.1, 0.1))
        coarse = MsSsimParams(weights=(0.1, 0.1, 0.1, 0.2, 0.5))
        assert ms_ssim(ref, blur, fine) > ms_ssim(ref, noisy, fine)
        assert ms_ssim(ref, blur, coarse) < ms_ssim(ref, noisy, coarse)


class TestYuv:
    def test_identical(self):
        img = render(scatter_table(0), EncodingSpec(name="x_y_color"))
        assert ms_ssim_yuv(img, img) == pytest.approx(1.0, abs=1e-9)

    def test_color_swap(self):
        t = scatter_table(1)
        spec = EncodingSpec(name="x_y_color")
        a, b = render(t, spec), render(t, spec.swap_palette(0, 1))
        gray = ms_ssim(to_grayscale(a), to_grayscale(b))
        yuv = ms_ssim_yuv(a, b)
        assert gray > 0.99
        assert gray - yuv >= 0.05

    @pytest.mark.parametrize("moved", [1, 3, 5])
    def test_geometry_only_close_to_gray(self, moved):
        t = scatter_table(1)
        q1 = t.q1.copy()
        q1[:moved] = np.clip(q1[:moved] + 0.05, 0, 1)
        spec = EncodingSpec(name="x_y_color")
        a, b = render(t, spec), render(t.with_q1(q1), spec)
        assert abs(ms_ssim_yuv(a, b) - ms_ssim(to_grayscale(a), to_grayscale(b))) <= 0.02

    def test_achromatic_chroma_planes_score_one(self, rng):
        ga, gb = rng.random((48, 48)), rng.random((48, 48))
        a = ImageRGB(ga, ga, ga)
        b = ImageRGB(gb, gb, gb)
        gray = ms_ssim(ga, gb)
        assert ms_ssim_yuv(a, b) == pytest.approx((gray + 2.0) / 3.0, abs=1e-9)

    def test_dispatch(self):
        t = scatter_table(2)
        spec = EncodingSpec(name="x_y_color")
        a, b = render(t, spec), render(t, spec.swap_palette(0, 2))
        assert image_similarity(a, b, MsSsimParams(color_mode="yuv")) == ms_ssim_yuv(a, b)
        gp = MsSsimParams(color_mode="grayscale")
        assert image_similarity(a, b, gp) == ms_ssim(to_grayscale(a), to_grayscale(b), gp)


class TestDistance:
    @pytest.mark.parametrize("s,d", [(1.0, 0.0), (-1.0, 1.0), (0.5, 0.25), (0.0, 0.5)])
    def test_values(self, s, d):
        assert similarity_to_distance(s) == d

    @pytest.mark.parametrize("s", [1.0 + 1e-9, -1.5, float("nan")])
    def test_out_of_range(self, s):
        with pytest.raises(ValueError):
            similarity_to_distance(s)

    @given(st.floats(-1.0, 1.0))
    def test_round_trip(self, s):
        assert 1.0 - 2.0 * similarity_to_distance(s) == pytest.approx(s, abs=1e-15)
