import json

import numpy as np
import pytest

import surfelgrad as sg
from surfelgrad import geometry
from surfelgrad.errors import DegenerateFrame, InvalidParam, OutOfBounds

from conftest import random_camera


def test_axis_aligned_camera_looks_down_negative_z():
    cam = sg.make_camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 20, 24, (9, 9))
    # local -z must point from position toward look_at
    np.testing.assert_allclose(-cam.z_axis, (0, 0, -1), atol=1e-15)


def test_fov_from_paper_focal_range():
    # focal 18 mm on a 24 mm sensor: full horizontal FOV = 2 atan(12/18)
    cam = sg.make_camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 18, 24, (4, 4))
    expected = 2 * np.arctan(12.0 / 18.0)
    assert abs(cam.horizontal_fov() - expected) < 1e-15
    assert abs(np.degrees(expected) - 67.38013505195957) < 1e-10


def test_transform_round_trip_many_points():
    rng = np.random.default_rng(1)
    for _ in range(10):
        cam = random_camera(rng)
        pts = rng.normal(size=(100, 3)) * 5
        back = geometry.camera_to_world(cam, geometry.world_to_camera(cam, pts))
        assert np.abs(back - pts).max() < 1e-12


def test_world_to_camera_anchor_points():
    rng = np.random.default_rng(2)
    cam = random_camera(rng)
    np.testing.assert_allclose(
        geometry.world_to_camera(cam, cam.position), np.zeros(3), atol=1e-12
    )
    dist = np.linalg.norm(cam.look_at - cam.position)
    np.testing.assert_allclose(
        geometry.world_to_camera(cam, cam.look_at), (0, 0, -dist), atol=1e-12
    )


def test_center_pixel_ray_points_along_view_axis():
    cam = sg.make_camera((0, 0, 0), (0, 0, -1), (0, 1, 0), 20, 24, (9, 9))
    ray = sg.primary_ray(cam, 4, 4)
    np.testing.assert_allclose(ray.direction, (0, 0, -1), atol=1e-15)
    np.testing.assert_allclose(ray.origin, cam.position, atol=0)


def test_corner_pixel_ray_matches_hand_formula():
    # independent closed-form evaluation for pixel (0, 0) at 128x128
    f, s, n = 20.0, 24.0, 128
    cam = sg.make_camera((0, 0, 0), (0, 0, -1), (0, 1, 0), f, s, (n, n))
    p = s / n
    hand = np.array([-s / 2 + p / 2, s / 2 - p / 2, -f])
    hand /= np.linalg.norm(hand)
    ray = sg.primary_ray(cam, 0, 0)
    np.testing.assert_allclose(ray.direction, hand, atol=1e-15)


def test_all_rays_unit_and_forward():
    rng = np.random.default_rng(3)
    cam = random_camera(rng, resolution=(7, 11))
    dirs = geometry.camera_ray_dirs(cam)
    np.testing.assert_allclose(np.linalg.norm(dirs, axis=-1), 1.0, atol=1e-12)
    assert np.all(dirs[..., 2] < 0)
    for row, col in [(0, 0), (6, 10), (3, 5)]:
        ray = sg.primary_ray(cam, row, col)
        assert abs(np.linalg.norm(ray.direction) - 1.0) < 1e-12


def test_fov_monotone_in_focal_length():
    def corner_angle(focal):
        cam = sg.make_camera((0, 0, 0), (0, 0, -1), (0, 1, 0), focal, 24, (16, 16))
        a = sg.primary_ray(cam, 0, 0).direction
        b = sg.primary_ray(cam, 15, 15).direction
        return np.arccos(np.clip(np.dot(a, b), -1, 1))

    angles = [corner_angle(f) for f in (18, 20, 22, 25)]
    assert all(a > b for a, b in zip(angles, angles[1:]))


def test_degenerate_and_invalid_params():
    with pytest.raises(DegenerateFrame):
        sg.make_camera((0, 0, 5), (0, 0, 0), (0, 0, 1), 20, 24, (4, 4))
    with pytest.raises(InvalidParam):
        sg.make_camera((0, 0, 5), (0, 0, 0), (0, 1, 0), -1, 24, (4, 4))
    with pytest.raises(InvalidParam):
        sg.make_camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 20, 0, (4, 4))
    with pytest.raises(InvalidParam):
        sg.make_camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 20, 24, (0, 4))
    with pytest.raises(InvalidParam):
        sg.make_camera((0, 0, np.nan), (0, 0, 0), (0, 1, 0), 20, 24, (4, 4))
    cam = sg.make_camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 20, 24, (4, 4))
    with pytest.raises(OutOfBounds):
        sg.primary_ray(cam, 4, 0)
    with pytest.raises(OutOfBounds):
        sg.primary_ray(cam, 0, -1)


def test_camera_json_round_trip():
    rng = np.random.default_rng(4)
    cam = random_camera(rng)
    blob = json.dumps(sg.camera_to_json(cam))
    cam2 = sg.camera_from_json(json.loads(blob))
    np.testing.assert_allclose(cam2.position, cam.position)
    np.testing.assert_allclose(cam2.rotation, cam.rotation)
    assert cam2.resolution == cam.resolution
    assert set(sg.camera_to_json(cam)) == {
        "position", "look_at", "up", "focal_mm", "sensor_mm", "resolution"
    }
