import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vizsim.imagecore import (
    ImageDecodeError,
    ImageRGB,
    convolve,
    downsample2,
    from_yuv,
    gaussian_kernel,
    load_image,
    save_image,
    to_grayscale,
    to_yuv,
    uniform_kernel,
)

unit_floats = st.floats(0.0, 1.0, allow_nan=False)


def rgb_images(max_side=8):
    return st.integers(1, max_side).flatmap(
        lambda h: st.integers(1, max_side).flatmap(
            lambda w: arrays(np.float64, (h, w, 3), elements=unit_floats).map(ImageRGB.from_array)
        )
    )


class TestLoadImage:
    def test_rgb_fixture(self, tmp_path, png_writer):
        path = tmp_path / "four.png"
        png_writer(path, [[0, 0, 0, 255, 255, 255], [255, 0, 0, 0, 0, 255]], color_type=2)
        img = load_image(path)
        assert img.shape == (2, 2)
        expected = np.array(
            [[[0, 0, 0], [1, 1, 1]], [[1, 0, 0], [0, 0, 1]]], dtype=np.float64
        )
        np.testing.assert_array_equal(img.to_array(), expected)

    def test_gray8(self, tmp_path, png_writer):
        path = tmp_path / "g.png"
        png_writer(path, [[128, 0]], color_type=0)
        img = load_image(path)
        for plane in (img.r, img.g, img.b):
            assert plane[0, 0] == 128 / 255
            assert plane[0, 1] == 0.0

    def test_gray16(self, tmp_path, png_writer):
        path = tmp_path / "g16.png"
        png_writer(path, [[65535, 32768]], color_type=0, bit_depth=16)
        img = load_image(path)
        assert img.r[0, 0] == 1.0
        assert img.g[0, 1] == pytest.approx(32768 / 65535, abs=1e-12)

    def test_alpha_composited_over_white(self, tmp_path, png_writer):
        path = tmp_path / "a.png"
        # opaque red, fully transparent black, half-transparent black
        png_writer(path, [[255, 0, 0, 255, 0, 0, 0, 0, 0, 0, 0, 128]], color_type=6)
        img = load_image(path)
        np.testing.assert_array_equal(img.to_array()[0, 0], [1, 0, 0])
        np.testing.assert_array_equal(img.to_array()[0, 1], [1, 1, 1])
        np.testing.assert_allclose(img.to_array()[0, 2], [1 - 128 / 255] * 3)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_image(tmp_path / "nope.png")

    def test_garbage_names_path(self, tmp_path):
        path = tmp_path / "bad.png"
        path.write_bytes(b"not an image")
        with pytest.raises(ImageDecodeError, match="bad.png"):
            load_image(path)

    def test_round_trip(self, tmp_path, rng):
        arr = rng.integers(0, 256, (5, 7, 3)) / 255.0
        img = ImageRGB.from_array(arr)
        save_image(img, tmp_path / "x.png")
        assert load_image(tmp_path / "x.png") == img


class TestImageRGB:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            ImageRGB.from_array(np.full((2, 2, 3), 1.5))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            ImageRGB(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))

    def test_does_not_freeze_caller_array(self):
        a = np.zeros((2, 2))
        ImageRGB(a, a, a)
        a[0, 0] = 0.5  # still writable


class TestGrayscale:
    def test_white(self):
        assert np.all(to_grayscale(ImageRGB.from_array(np.ones((3, 3, 3)))) == 1.0)

    @pytest.mark.parametrize("rgb,luma", [((1, 0, 0), 0.299), ((0, 0, 1), 0.114), ((0, 1, 0), 0.587)])
    def test_primaries(self, rgb, luma):
        img = ImageRGB.from_array(np.array(rgb, dtype=float).reshape(1, 1, 3))
        assert to_grayscale(img)[0, 0] == pytest.approx(luma, abs=1e-15)

    @given(rgb_images())
    def test_range(self, img):
        g = to_grayscale(img)
        assert g.min() >= 0.0 and g.max() <= 1.0


class TestYuv:
    @given(unit_floats)
    def test_gray_axis(self, v):
        y, u, w = to_yuv(ImageRGB.from_array(np.full((1, 1, 3), v)))
        assert y[0, 0] == pytest.approx(v, abs=1e-12)
        assert u[0, 0] == pytest.approx(0.5, abs=1e-12)
        assert w[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_green_vs_red(self):
        red = ImageRGB.from_array(np.array([1.0, 0, 0]).reshape(1, 1, 3))
        green = ImageRGB.from_array(np.array([0, 1.0, 0]).reshape(1, 1, 3))
        _, ur, vr = to_yuv(red)
        _, ug, vg = to_yuv(green)
        # direct BT.601 evaluation: U' = (B-Y)/1.772 + .5, V' = (R-Y)/1.402 + .5
        assert ur[0, 0] == pytest.approx(-0.299 / 1.772 + 0.5)
        assert vr[0, 0] == pytest.approx(0.701 / 1.402 + 0.5)
        assert ug[0, 0] == pytest.approx(-0.587 / 1.772 + 0.5)
        assert vg[0, 0] == pytest.approx(-0.587 / 1.402 + 0.5)
        assert (ur[0, 0], vr[0, 0]) != (ug[0, 0], vg[0, 0])

    def test_red_blue_swap_with_equal_luma_marks(self):
        # marks with equal luma but different hue: swap leaves Y, changes U/V
        a_col = np.array([0.6, 0.45, 0.2])
        b_col = np.array([0.2, 0.5, 0.8])
        b_col[1] = (a_col @ [0.299, 0.587, 0.114] - 0.299 * b_col[0] - 0.114 * b_col[2]) / 0.587
        a = np.ones((4, 4, 3))
        b = np.ones((4, 4, 3))
        a[0, 0], a[3, 3] = a_col, b_col
        b[0, 0], b[3, 3] = b_col, a_col
        ya, ua, va = to_yuv(ImageRGB.from_array(a))
        yb, ub, vb = to_yuv(ImageRGB.from_array(b))
        np.testing.assert_allclose(ya, yb, atol=1e-15)
        assert not np.allclose(ua, ub)
        assert not np.allclose(va, vb)

    @pytest.mark.parametrize("standard", ["bt601", "bt709"])
    @given(img=rgb_images())
    def test_inverse(self, standard, img):
        back = from_yuv(*to_yuv(img, standard), standard=standard)
        np.testing.assert_allclose(back, img.to_array(), atol=1e-6)


class TestKernel:
    def test_size_one(self):
        k = gaussian_kernel(1, 2.0)
        assert k.taps.shape == (1, 1) and k.taps[0, 0] == 1.0

    def test_center_tap(self):
        # separable samples exp(-x^2/2) at x=-1,0,1, renormalized, outer product
        g = np.exp(-np.array([1.0, 0.0, 1.0]) / 2.0)
        expected = (g[1] / g.sum()) ** 2
        assert expected == pytest.approx(0.2042, abs=5e-5)
        assert gaussian_kernel(3, 1.0).taps[1, 1] == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("size", [0, -3, 4, 2])
    def test_bad_size(self, size):
        with pytest.raises(ValueError):
            gaussian_kernel(size, 1.0)

    @pytest.mark.parametrize("sigma", [0.0, -1.0, float("nan")])
    def test_bad_sigma(self, sigma):
        with pytest.raises(ValueError):
            gaussian_kernel(3, sigma)

    @given(st.integers(0, 7).map(lambda k: 2 * k + 1), st.floats(0.05, 20.0))
    def test_normalized_nonnegative_rotation_symmetric(self, size, sigma):
        taps = gaussian_kernel(size, sigma).taps
        assert abs(taps.sum() - 1.0) <= 1e-9
        assert taps.min() >= 0.0
        np.testing.assert_array_equal(taps, np.rot90(taps))


class TestConvolve:
    def test_identity(self, rng):
        p = rng.random((5, 6))
        np.testing.assert_array_equal(convolve(p, gaussian_kernel(1, 1.0)), p)

    def test_constant_interior(self):
        p = np.full((6, 6), 0.37)
        out = convolve(p, gaussian_kernel(3, 1.0), "zero")
        np.testing.assert_allclose(out[1:-1, 1:-1], 0.37, rtol=1e-14)
        assert out[0, 0] < 0.37  # zero padding darkens the border

    def test_valid_dot_product(self):
        p = np.arange(9, dtype=float).reshape(3, 3) / 10
        k = gaussian_kernel(3, 0.8)
        out = convolve(p, k, "valid")
        assert out.shape == (1, 1)
        expected = sum(p[i, j] * k.taps[i, j] for i in range(3) for j in range(3))
        assert out[0, 0] == pytest.approx(expected, rel=1e-14)

    def test_kernel_too_large(self):
        with pytest.raises(ValueError):
            convolve(np.zeros((2, 5)), gaussian_kernel(3, 1.0))

    def test_unknown_padding(self):
        with pytest.raises(ValueError):
            convolve(np.zeros((5, 5)), gaussian_kernel(3, 1.0), "reflect")

    @settings(max_examples=50)
    @given(
        st.integers(3, 20),
        st.integers(3, 20),
        st.sampled_from([1, 3]),
        st.integers(0, 2**32 - 1),
    )
    def test_zero_padding_preserves_shape(self, h, w, size, seed):
        p = np.random.default_rng(seed).random((h, w))
        assert convolve(p, gaussian_kernel(size, 1.0), "zero").shape == (h, w)
        assert convolve(p, uniform_kernel(size), "valid").shape == (h - size + 1, w - size + 1)


class TestDownsample:
    def test_two_by_two(self):
        out = downsample2(np.array([[0.0, 0.0], [1.0, 1.0]]))
        assert out.shape == (1, 1) and out[0, 0] == 0.5

    @given(st.integers(2, 17), st.integers(2, 17), unit_floats)
    def test_constant_exact(self, h, w, c):
        out = downsample2(np.full((h, w), c))
        assert out.shape == (h // 2, w // 2)
        assert np.all(out == c)

    def test_odd_drops_trailing(self, rng):
        p = rng.random((5, 5))
        out = downsample2(p)
        assert out.shape == (2, 2)
        assert out[1, 1] == pytest.approx(p[2:4, 2:4].mean(), rel=1e-14)

    def test_too_small(self):
        with pytest.raises(ValueError):
            downsample2(np.zeros((1, 4)))
