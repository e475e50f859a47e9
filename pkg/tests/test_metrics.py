import numpy as np
import pytest

import surfelgrad as sg
from surfelgrad import metrics
from surfelgrad.errors import EmptyMask, EmptySet, ResolutionMismatch

from conftest import random_camera


class TestChamfer:
    def test_identity_is_zero(self):
        pts = np.random.default_rng(50).uniform(size=(100, 3))
        assert sg.chamfer(pts, pts) == 0.0
        assert sg.chamfer(pts, pts, method="brute") == 0.0

    def test_hand_case(self):
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[1.0, 0.0, 0.0]])
        assert sg.chamfer(a, b) == 2.0  # sum of the two directed means

    def test_grid_equals_brute_force(self):
        for i in range(50):
            rng = np.random.default_rng(500 + i)
            a = rng.uniform(size=(int(rng.integers(1, 300)), 3))
            b = rng.uniform(size=(int(rng.integers(1, 300)), 3))
            assert abs(sg.chamfer(a, b) - sg.chamfer(a, b, method="brute")) <= 1e-12

    def test_empty_set(self):
        with pytest.raises(EmptySet):
            sg.chamfer(np.zeros((0, 3)), np.zeros((5, 3)))


class TestHausdorff:
    def test_identity_is_zero(self):
        pts = np.random.default_rng(51).uniform(size=(64, 3))
        assert sg.hausdorff(pts, pts) == 0.0

    def test_hand_case(self):
        a = np.array([[0.0, 0.0, 0.0]])
        b = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        assert sg.hausdorff(a, b) == 1.0

    def test_symmetry(self):
        for i in range(20):
            rng = np.random.default_rng(600 + i)
            a = rng.uniform(size=(80, 3))
            b = rng.uniform(size=(120, 3)) + 0.3
            assert sg.hausdorff(a, b) == sg.hausdorff(b, a)

    def test_directed_variants(self):
        rng = np.random.default_rng(52)
        a = rng.uniform(size=(60, 3))
        b = rng.uniform(size=(60, 3))
        fwd = sg.hausdorff(a, b, directed="forward")
        rev = sg.hausdorff(a, b, directed="reverse")
        assert sg.hausdorff(a, b) == max(fwd, rev)
        assert fwd == sg.hausdorff(b, a, directed="reverse")

    def test_grid_equals_brute_force(self):
        for i in range(50):
            rng = np.random.default_rng(700 + i)
            a = rng.uniform(size=(int(rng.integers(1, 300)), 3))
            b = rng.uniform(size=(int(rng.integers(1, 300)), 3))
            assert abs(sg.hausdorff(a, b)
                       - sg.hausdorff(a, b, method="brute")) <= 1e-12


class TestTranslationInvariance:
    def test_metrics_shift_invariant(self):
        rng = np.random.default_rng(53)
        a = rng.uniform(size=(150, 3))
        b = rng.uniform(size=(130, 3))
        t = rng.normal(size=3) * 10
        assert abs(sg.chamfer(a + t, b + t) - sg.chamfer(a, b)) < 1e-12
        assert abs(sg.hausdorff(a + t, b + t) - sg.hausdorff(a, b)) < 1e-12


class TestMseDepth:
    def test_identical(self):
        d = np.random.default_rng(54).uniform(1, 3, size=(8, 8))
        assert sg.mse_depth(d, d) == 0.0

    def test_constant_offset(self):
        d = np.random.default_rng(55).uniform(1, 3, size=(8, 8))
        assert abs(sg.mse_depth(d, d + 0.5) - 0.25) < 1e-12

    def test_matches_double_loop(self):
        rng = np.random.default_rng(56)
        a = rng.uniform(1, 3, size=(6, 7))
        b = rng.uniform(1, 3, size=(6, 7))
        total = 0.0
        for r in range(6):
            for c in range(7):
                total += (a[r, c] - b[r, c]) ** 2
        assert abs(sg.mse_depth(a, b) - total / 42) < 1e-12

    def test_mask(self):
        a = np.ones((4, 4))
        b = np.ones((4, 4))
        b[0, 0] = 3.0
        mask = np.zeros((4, 4), dtype=bool)
        mask[0, 0] = True
        assert sg.mse_depth(a, b, mask) == 4.0
        with pytest.raises(EmptyMask):
            sg.mse_depth(a, b, np.zeros((4, 4), dtype=bool))
        with pytest.raises(ResolutionMismatch):
            sg.mse_depth(a, np.ones((3, 3)))


class TestSurfelsToPointset:
    def test_full_grid_count(self):
        rng = np.random.default_rng(57)
        cam = random_camera(rng, resolution=(7, 9))
        depth = rng.uniform(1, 3, size=(7, 9))
        field = sg.build_surfel_field(depth, cam, np.full(3, 0.5))
        pts = sg.surfels_to_pointset(field)
        assert pts.shape == (63, 3)

    def test_constant_depth_shares_z(self, flat_camera):
        field = sg.build_surfel_field(np.full((9, 9), 2.5), flat_camera,
                                      np.full(3, 0.5))
        pts = sg.surfels_to_pointset(field)
        np.testing.assert_allclose(pts[:, 2], -2.5, atol=1e-15)

    def test_round_trip_with_backproject(self):
        rng = np.random.default_rng(58)
        cam = random_camera(rng, resolution=(5, 6))
        depth = rng.uniform(1, 3, size=(5, 6))
        positions = sg.backproject(depth, cam)
        field = sg.build_surfel_field(depth, cam, np.full(3, 0.5))
        pts = sg.surfels_to_pointset(field)
        assert np.array_equal(pts, positions.reshape(-1, 3))

    def test_masked(self):
        rng = np.random.default_rng(59)
        cam = random_camera(rng, resolution=(4, 4))
        field = sg.build_surfel_field(rng.uniform(1, 2, (4, 4)), cam,
                                      np.full(3, 0.5))
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 2] = True
        pts = sg.surfels_to_pointset(field, mask)
        assert pts.shape == (1, 3)
        with pytest.raises(EmptyMask):
            sg.surfels_to_pointset(field, np.zeros((4, 4), dtype=bool))
