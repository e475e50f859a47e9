import numpy as np
import pytest

from surfelgrad import fileio
from surfelgrad.errors import InvalidParam


class TestPfm:
    def test_gray_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(90)
        data = rng.uniform(0.5, 5.0, size=(13, 17)).astype(np.float32)
        path = tmp_path / "d.pfm"
        fileio.write_pfm(path, data)
        back = fileio.read_pfm(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, data)

    def test_rgb_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(91)
        data = rng.normal(size=(7, 9, 3)).astype(np.float32)
        path = tmp_path / "n.pfm"
        fileio.write_pfm(path, data)
        assert np.array_equal(fileio.read_pfm(path), data)

    def test_float64_written_as_float32(self, tmp_path):
        data = np.random.default_rng(92).uniform(1, 2, size=(4, 4))
        path = tmp_path / "d.pfm"
        fileio.write_pfm(path, data)
        assert np.array_equal(fileio.read_pfm(path), data.astype(np.float32))

    def test_header_is_little_endian_scale(self, tmp_path):
        path = tmp_path / "d.pfm"
        fileio.write_pfm(path, np.ones((2, 3), dtype=np.float32))
        with open(path, "rb") as f:
            assert f.readline().strip() == b"Pf"
            assert f.readline().strip() == b"3 2"
            assert float(f.readline()) == -1.0

    def test_rejects_bad_shapes_and_files(self, tmp_path):
        with pytest.raises(InvalidParam):
            fileio.write_pfm(tmp_path / "x.pfm", np.ones((2, 3, 4)))
        bad = tmp_path / "bad.pfm"
        bad.write_bytes(b"P6\n1 1\n255\n\x00")
        with pytest.raises(InvalidParam):
            fileio.read_pfm(bad)


class TestPng:
    def test_image_export_is_clamped_srgb(self, tmp_path):
        img = np.array([[[0.0, 0.5, 1.0], [2.0, -1.0, 0.21404114048223255]]])
        path = tmp_path / "i.png"
        fileio.write_image_png(path, img)
        back = fileio.read_image_png(path)
        assert back.shape == (1, 2, 3)
        # over-range values clamp to 1, negatives to 0
        assert back[0, 1, 0] == 1.0
        assert back[0, 1, 1] == 0.0
        # linear 0.214041... encodes to sRGB 0.5 -> byte 128 (within rounding)
        assert abs(back[0, 1, 2] - 0.21404114048223255) < 4e-3

    def test_normals_png_mapping(self, tmp_path):
        n = np.zeros((2, 2, 3))
        n[..., 2] = 1.0  # straight-at-camera normals -> (128, 128, 255)
        path = tmp_path / "n.png"
        fileio.write_normals_png(path, n)
        from PIL import Image

        arr = np.asarray(Image.open(path))
        assert tuple(arr[0, 0]) == (128, 128, 255)


class TestPointsetText:
    def test_round_trip_full_precision(self, tmp_path):
        rng = np.random.default_rng(93)
        pts = rng.normal(size=(25, 3))
        path = tmp_path / "p.txt"
        fileio.write_pointset_txt(path, pts)
        assert np.array_equal(fileio.read_pointset_txt(path), pts)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "p.txt"
        path.write_text("1 2 3\n4 5\n")
        with pytest.raises(InvalidParam):
            fileio.read_pointset_txt(path)
