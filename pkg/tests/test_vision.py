"""Image loaders, geometry, augmentation, pepper noise, and the extractor."""

import numpy as np
import pytest

from biofuse.errors import DimensionError, FormatError, ParameterError
from biofuse.vision import (
    AugmentConfig,
    ConvStack,
    Image,
    augment,
    extract_features,
    load_image,
    pepper_noise,
    project,
    resize_bilinear,
    standardize,
    write_pgm,
)
from biofuse.numcore import Dense


class TestImageType:
    def test_valid(self):
        img = Image(np.zeros((4, 5)))
        assert img.shape == (4, 5)

    def test_out_of_range_rejected(self):
        with pytest.raises(ParameterError):
            Image(np.full((2, 2), 1.5))

    def test_wrong_rank_rejected(self):
        with pytest.raises(DimensionError):
            Image(np.zeros((2, 2, 3)))


class TestPnmLoading:
    def test_p2_ascii(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_text("P2\n# comment\n3 2\n255\n0 128 255\n64 32 16\n")
        img = load_image(p)
        assert img.shape == (2, 3)
        assert np.allclose(img.pixels[0], [0, 128 / 255, 1.0])

    def test_p5_binary(self, tmp_path):
        p = tmp_path / "b.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        img = load_image(p)
        assert img.shape == (2, 2)
        assert img.pixels[0, 1] == 1.0
        assert np.isclose(img.pixels[1, 0], 128 / 255)

    def test_p5_sixteen_bit(self, tmp_path):
        p = tmp_path / "w.pgm"
        data = np.array([0, 65535, 32768, 1000], dtype=">u2").tobytes()
        p.write_bytes(b"P5\n2 2\n65535\n" + data)
        img = load_image(p)
        assert img.pixels[0, 1] == 1.0
        assert np.isclose(img.pixels[1, 0], 32768 / 65535)

    def test_p6_color_luma(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))
        img = load_image(p)
        assert np.isclose(img.pixels[0, 0], 0.299)

    def test_p3_color_ascii(self, tmp_path):
        p = tmp_path / "d.ppm"
        p.write_text("P3\n1 1\n255\n0 255 0\n")
        img = load_image(p)
        assert np.isclose(img.pixels[0, 0], 0.587)

    def test_round_trip_through_writer(self, tmp_path):
        rng = np.random.default_rng(0)
        img = Image(np.round(rng.random((5, 7)) * 255) / 255)
        p = tmp_path / "rt.pgm"
        write_pgm(p, img)
        back = load_image(p)
        assert np.allclose(back.pixels, img.pixels, atol=1e-12)

    def test_bad_magic_offset(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P7\n2 2\n255\n" + bytes(4))
        with pytest.raises(FormatError, match="byte 0"):
            load_image(p)

    def test_truncated_raster_reports_offset(self, tmp_path):
        p = tmp_path / "short.pgm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes([1, 2]))
        with pytest.raises(FormatError, match="truncated"):
            load_image(p)

    def test_value_above_maxval(self, tmp_path):
        p = tmp_path / "over.pgm"
        p.write_text("P2\n2 1\n100\n50 101\n")
        with pytest.raises(FormatError, match="101"):
            load_image(p)

    def test_nonint_header(self, tmp_path):
        p = tmp_path / "h.pgm"
        p.write_text("P2\nxx 2\n255\n0 0\n")
        with pytest.raises(FormatError, match="width"):
            load_image(p)


class TestCsvImages:
    def test_load(self, tmp_path):
        p = tmp_path / "img.csv"
        p.write_text("0.0,0.5\n1.0,0.25\n")
        img = load_image(p)
        assert img.pixels.tolist() == [[0.0, 0.5], [1.0, 0.25]]

    def test_ragged_rows_rejected(self, tmp_path):
        p = tmp_path / "rag.csv"
        p.write_text("0.1,0.2\n0.3\n")
        with pytest.raises(FormatError, match="byte 8"):
            load_image(p)

    def test_out_of_range_rejected(self, tmp_path):
        p = tmp_path / "oor.csv"
        p.write_text("0.1,1.2\n")
        with pytest.raises(FormatError, match="1.2"):
            load_image(p)

    def test_extension_sniffing(self, tmp_path):
        p = tmp_path / "mystery.dat"
        p.write_bytes(b"P5\n1 1\n255\n\x80")
        assert load_image(p).shape == (1, 1)


class TestResize:
    def test_identity_exact(self):
        rng = np.random.default_rng(1)
        x = rng.random((9, 7))
        out = resize_bilinear(x, 9, 7)
        assert (out == x).all()

    def test_two_by_two_to_one_averages(self):
        x = np.array([[0.0, 1.0], [0.2, 0.6]])
        out = resize_bilinear(x, 1, 1)
        assert np.isclose(out[0, 0], x.mean())

    def test_constant_preserved_any_scale(self):
        x = np.full((5, 8), 0.37)
        assert np.allclose(resize_bilinear(x, 13, 3), 0.37)

    def test_linear_gradient_preserved(self):
        # bilinear on an axis-aligned linear ramp is exact at interior pixels
        x = np.tile(np.linspace(0, 1, 16), (16, 1))
        out = resize_bilinear(x, 8, 8)
        expect = (np.arange(8) + 0.5) * 2 - 0.5
        expect = np.clip(expect, 0, 15) / 15.0
        assert np.allclose(out[3], expect, atol=1e-12)

    def test_range_never_expands(self):
        rng = np.random.default_rng(2)
        x = rng.random((11, 13))
        out = resize_bilinear(x, 24, 5)
        assert out.min() >= x.min() - 1e-12
        assert out.max() <= x.max() + 1e-12

    def test_standardize_square(self):
        img = Image(np.random.default_rng(3).random((10, 14)))
        assert standardize(img, 8).shape == (8, 8)


class TestAugment:
    def test_shape_preserved_and_seeded(self):
        rng = np.random.default_rng(4)
        img = Image(rng.random((16, 16)))
        a = augment(img, np.random.default_rng(7))
        b = augment(img, np.random.default_rng(7))
        assert a.shape == img.shape
        assert (a.pixels == b.pixels).all()
        c = augment(img, np.random.default_rng(8))
        assert not (a.pixels == c.pixels).all()

    def test_zero_ranges_identity(self):
        img = Image(np.random.default_rng(5).random((12, 12)))
        cfg = AugmentConfig(max_rotation_deg=0.0, max_translate=0.0, crop_area=(1.0, 1.0))
        out = augment(img, np.random.default_rng(0), cfg)
        assert np.allclose(out.pixels, img.pixels, atol=1e-12)

    def test_pure_translation_shifts(self):
        px = np.zeros((9, 9))
        px[4, 4] = 1.0
        # force a deterministic positive shift of about 2 pixels
        cfg = AugmentConfig(max_rotation_deg=0.0, max_translate=2.0 / 9.0, crop_area=(1.0, 1.0))

        class FixedRng:
            def uniform(self, lo, hi):
                return hi

            def integers(self, lo, hi):
                return lo

        out = augment(Image(px), FixedRng(), cfg)
        assert out.pixels[6, 6] == 1.0

    def test_zero_fill_outside(self):
        img = Image(np.ones((8, 8)))
        cfg = AugmentConfig(max_rotation_deg=0.0, max_translate=0.5, crop_area=(1.0, 1.0))

        class FixedRng:
            def uniform(self, lo, hi):
                return hi

            def integers(self, lo, hi):
                return lo

        out = augment(img, FixedRng(), cfg)
        assert out.pixels[0, 0] == 0.0  # vacated corner is zero-filled
        assert out.pixels[7, 7] == 1.0

    def test_bad_config_rejected(self):
        img = Image(np.zeros((4, 4)))
        with pytest.raises(ParameterError):
            augment(img, np.random.default_rng(0), AugmentConfig(crop_area=(0.0, 1.0)))


class TestPepperNoise:
    def test_exact_count(self):
        img = Image(np.ones((10, 10)))
        out = pepper_noise(img, 0.05, np.random.default_rng(0))
        assert (out.pixels == 0.0).sum() == 5

    def test_floor_semantics(self):
        img = Image(np.ones((3, 3)))  # 9 pixels, 0.97 * 9 = 8.73 -> 8
        out = pepper_noise(img, 0.97, np.random.default_rng(1))
        assert (out.pixels == 0.0).sum() == 8

    def test_distinct_pixels(self):
        img = Image(np.ones((8, 8)))
        out = pepper_noise(img, 0.5, np.random.default_rng(2))
        assert (out.pixels == 0.0).sum() == 32

    def test_zero_fraction_identity(self):
        img = Image(np.random.default_rng(3).random((6, 6)))
        out = pepper_noise(img, 0.0, np.random.default_rng(0))
        assert (out.pixels == img.pixels).all()

    def test_full_fraction_blackout(self):
        img = Image(np.random.default_rng(4).random((6, 6)))
        out = pepper_noise(img, 1.0, np.random.default_rng(0))
        assert (out.pixels == 0.0).all()

    def test_source_untouched(self):
        img = Image(np.ones((5, 5)))
        pepper_noise(img, 0.5, np.random.default_rng(5))
        assert (img.pixels == 1.0).all()

    def test_bad_fraction(self):
        with pytest.raises(ParameterError):
            pepper_noise(Image(np.ones((2, 2))), 1.5, np.random.default_rng(0))


class TestConvStack:
    def test_output_shape(self):
        stack = ConvStack(np.random.default_rng(0), widths=(8, 16, 32))
        out = stack.forward(np.random.default_rng(1).random((4, 32, 32)))
        assert out.shape == (4, 8 + 16 + 32)

    def test_batch_consistency(self):
        # one image through a batch equals the same image alone
        stack = ConvStack(np.random.default_rng(2), widths=(4, 8))
        rng = np.random.default_rng(3)
        imgs = rng.random((3, 16, 16))
        batch = stack.forward(imgs)
        solo = stack.forward(imgs[1:2])
        assert np.allclose(batch[1], solo[0], atol=1e-12)

    def test_backward_shape(self):
        stack = ConvStack(np.random.default_rng(4), widths=(4, 8))
        x = np.random.default_rng(5).random((2, 16, 16))
        out = stack.forward(x)
        dx = stack.backward(np.ones_like(out))
        assert dx.shape == x.shape

    def test_extract_and_project(self):
        stack = ConvStack(np.random.default_rng(6), widths=(4, 8))
        img = Image(np.random.default_rng(7).random((16, 16)))
        emb = extract_features(stack, img)
        assert emb.shape == (12,)
        proj = Dense(12, 300, np.random.default_rng(8))
        fv = project(proj, emb, "face")
        assert fv.modality == "face"
        assert fv.values.shape == (300,)
