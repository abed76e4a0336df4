import numpy as np
import pytest

from blurforge import ArgumentError, FormatError, Image, bilinear_sample, downsample, sobel_mean_gradient
from blurforge.imgcore import (
    SOBEL_X,
    SOBEL_Y,
    luma,
    read_image,
    read_pfm,
    read_pnm,
    write_image,
    write_pfm,
    write_pnm,
)

from conftest import random_image


class TestImage:
    def test_2d_data_becomes_single_channel(self):
        img = Image(np.zeros((4, 5)))
        assert img.shape == (4, 5, 1)

    def test_rejects_nan(self):
        data = np.zeros((3, 3, 1))
        data[1, 1, 0] = np.nan
        with pytest.raises(ArgumentError):
            Image(data)

    def test_rejects_bad_channel_count(self):
        with pytest.raises(ArgumentError):
            Image(np.zeros((3, 3, 2)))

    def test_rejects_empty(self):
        with pytest.raises(ArgumentError):
            Image(np.zeros((0, 3, 1)))

    def test_data_is_immutable(self):
        img = Image(np.zeros((2, 2, 1)))
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 1.0


class TestBilinearSample:
    def test_midpoint_of_two_pixels(self):
        img = Image(np.array([[0.0, 1.0]]))
        assert bilinear_sample(img, 0.5, 0.0) == 0.5

    def test_identity_at_lattice(self):
        img = Image(np.array([[0.0, 1.0]]))
        assert bilinear_sample(img, 1.0, 0.0) == 1.0

    def test_clamp_far_left(self):
        img = Image(np.array([[0.0, 1.0]]))
        assert bilinear_sample(img, -3.0, 0.0) == 0.0

    def test_invalid_channel(self):
        img = Image(np.zeros((2, 2, 1)))
        with pytest.raises(ArgumentError):
            bilinear_sample(img, 0.0, 0.0, c=1)

    def test_non_finite_coordinate(self):
        img = Image(np.zeros((2, 2, 1)))
        with pytest.raises(ArgumentError):
            bilinear_sample(img, np.nan, 0.0)

    def test_lattice_identity_everywhere(self, rng):
        img = random_image(rng, 6, 7)
        for _ in range(30):
            x = int(rng.integers(0, 7))
            y = int(rng.integers(0, 6))
            c = int(rng.integers(0, 3))
            assert bilinear_sample(img, float(x), float(y), c) == img.data[y, x, c]

    def test_continuity_bound(self, rng):
        # |f(x+e) - f(x)| <= e * max neighbor difference along x
        img = random_image(rng, 5, 9, channels=1)
        max_dx = np.abs(np.diff(img.data[:, :, 0], axis=1)).max()
        for _ in range(100):
            x = float(rng.uniform(0, 8))
            y = float(rng.uniform(0, 4))
            e = float(rng.uniform(1e-6, 1.0 - 1e-9))
            a = bilinear_sample(img, x, y)
            b = bilinear_sample(img, x + e, y)
            assert abs(b - a) <= e * max_dx + 1e-12


def brute_sobel_mean(img):
    # direct 3x3 convolution with edge clamp, independent of the library path
    gray = luma(img) * 255.0
    h, w = gray.shape
    mags = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            gx = gy = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    gx += SOBEL_X[dy + 1, dx + 1] * gray[yy, xx]
                    gy += SOBEL_Y[dy + 1, dx + 1] * gray[yy, xx]
            mags[y, x] = np.hypot(gx, gy)
    return float(mags.mean())


class TestSobelMeanGradient:
    def test_constant_image_is_zero(self):
        assert sobel_mean_gradient(Image(np.full((8, 8, 3), 0.3))) == 0.0

    def test_horizontal_ramp_matches_oracle(self):
        # luma step 2/255 per pixel in [0,1] units -> step 2 on the 0..255 scale
        ramp = np.tile(np.arange(16) * (2.0 / 255.0), (16, 1))[:, :, np.newaxis]
        img = Image(ramp)
        expected = brute_sobel_mean(img)
        got = sobel_mean_gradient(img)
        assert got == pytest.approx(expected, abs=1e-9)
        # interior pixels each contribute gradient magnitude 8 * step
        interior = 8.0 * 2.0
        assert expected < interior  # border columns see clamped (smaller) steps
        assert expected > 0.8 * interior

    def test_checkerboard_matches_oracle(self):
        board = np.indices((16, 16)).sum(axis=0) % 2
        img = Image(board.astype(float)[:, :, np.newaxis])
        assert sobel_mean_gradient(img) == pytest.approx(brute_sobel_mean(img), abs=1e-9)

    def test_random_rgb_matches_oracle(self, rng):
        img = random_image(rng, 7, 9)
        assert sobel_mean_gradient(img) == pytest.approx(brute_sobel_mean(img), abs=1e-9)

    def test_transpose_invariance(self, rng):
        img = random_image(rng, 8, 12)
        transposed = Image(np.transpose(img.data, (1, 0, 2)))
        assert sobel_mean_gradient(img) == pytest.approx(
            sobel_mean_gradient(transposed), abs=1e-12
        )

    def test_too_small(self):
        with pytest.raises(ArgumentError):
            sobel_mean_gradient(Image(np.zeros((2, 5, 1))))


class TestDownsample:
    def test_block_mean(self):
        img = Image(np.array([[0.0, 0.0], [1.0, 1.0]])[:, :, np.newaxis])
        out = downsample(img, 2)
        assert out.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == 0.5

    def test_constant_stays_constant(self):
        img = Image(np.full((6, 6, 3), 0.7))
        assert np.allclose(downsample(img, 3).data, 0.7)

    def test_random_matches_block_oracle(self, rng):
        img = random_image(rng, 8, 8)
        out = downsample(img, 2)
        for by in range(4):
            for bx in range(4):
                block = img.data[2 * by : 2 * by + 2, 2 * bx : 2 * bx + 2]
                assert np.allclose(out.data[by, bx], block.mean(axis=(0, 1)), atol=1e-15)

    def test_mean_preserved_after_constant_upsample(self, rng):
        img = random_image(rng, 12, 8)
        down = downsample(img, 4)
        up = np.repeat(np.repeat(down.data, 4, axis=0), 4, axis=1)
        assert abs(up.mean() - img.data.mean()) < 1e-12

    def test_non_divisible_rejected(self):
        with pytest.raises(ArgumentError):
            downsample(Image(np.zeros((6, 7, 1))), 2)

    def test_bad_factor_rejected(self):
        with pytest.raises(ArgumentError):
            downsample(Image(np.zeros((4, 4, 1))), 1)


class TestPnm:
    def test_p6_minimal_header(self, tmp_path):
        path = tmp_path / "two.ppm"
        payload = bytes(range(12))
        path.write_bytes(b"P6 2 2 255 " + payload)
        img = read_pnm(path)
        assert img.shape == (2, 2, 3)
        assert img.data[0, 0, 0] == 0.0
        assert img.data[1, 1, 2] == 11 / 255.0

    def test_quantized_roundtrip_is_exact(self, tmp_path, rng):
        quantized = rng.integers(0, 256, (5, 4, 3)) / 255.0
        img = Image(quantized)
        path = tmp_path / "q.ppm"
        write_pnm(path, img)
        assert np.array_equal(read_pnm(path).data, img.data)

    def test_gray_roundtrip(self, tmp_path, rng):
        img = Image(rng.integers(0, 256, (3, 7, 1)) / 255.0)
        path = tmp_path / "g.pgm"
        write_pnm(path, img)
        back = read_pnm(path)
        assert back.channels == 1
        assert np.array_equal(back.data, img.data)

    def test_comments_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x00\xff")
        img = read_pnm(path)
        assert img.data[0, 1, 0] == 1.0

    def test_wrong_maxval_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P5 2 1 65535 " + b"\x00" * 4)
        with pytest.raises(FormatError):
            read_pnm(path)

    def test_truncated_payload_reports_offset(self, tmp_path):
        path = tmp_path / "short.ppm"
        path.write_bytes(b"P6 2 2 255 " + b"\x00" * 5)
        with pytest.raises(FormatError) as err:
            read_pnm(path)
        assert err.value.offset == 16  # header (11) + the 5 bytes present

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pnm"
        path.write_bytes(b"P7 1 1 255 \x00")
        with pytest.raises(FormatError):
            read_pnm(path)


class TestPfm:
    def test_roundtrip_is_bit_exact(self, tmp_path, rng):
        # float32-representable samples survive the file's f32 payload untouched
        img = Image(rng.random((6, 5, 3)).astype(np.float32))
        path = tmp_path / "x.pfm"
        write_pfm(path, img)
        assert np.array_equal(read_pfm(path).data, img.data)

    def test_gray_roundtrip(self, tmp_path, rng):
        img = Image(rng.random((4, 9, 1)).astype(np.float32))
        path = tmp_path / "x.pfm"
        write_pfm(path, img)
        back = read_pfm(path)
        assert back.channels == 1
        assert np.array_equal(back.data, img.data)

    def test_rows_are_stored_bottom_up(self, tmp_path):
        img = Image(np.array([[0.0], [1.0]])[:, :, np.newaxis].reshape(2, 1, 1))
        path = tmp_path / "x.pfm"
        write_pfm(path, img)
        raw = path.read_bytes()
        header_end = raw.index(b"-1.0\n") + 5
        floats = np.frombuffer(raw[header_end:], dtype="<f4")
        assert floats[0] == 1.0  # bottom row first
        assert floats[1] == 0.0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.pfm"
        path.write_bytes(b"PX\n1 1\n-1.0\n" + b"\x00" * 4)
        with pytest.raises(FormatError):
            read_pfm(path)

    def test_truncated_payload_reports_offset(self, tmp_path):
        path = tmp_path / "x.pfm"
        path.write_bytes(b"Pf\n2 2\n-1.0\n" + b"\x00" * 6)
        with pytest.raises(FormatError) as err:
            read_pfm(path)
        assert err.value.offset == 19  # header (13) + 6 payload bytes


class TestDispatch:
    def test_extension_dispatch(self, tmp_path, rng):
        img = Image(rng.random((4, 4, 3)).astype(np.float32))
        pfm = tmp_path / "a.pfm"
        ppm = tmp_path / "a.ppm"
        write_image(pfm, img)
        write_image(ppm, img)
        assert np.array_equal(read_image(pfm).data, img.data)
        assert read_image(ppm).shape == img.shape

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(ArgumentError):
            read_image(tmp_path / "a.png")
