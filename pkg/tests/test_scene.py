import json

import numpy as np
import pytest

import surfelgrad as sg
from surfelgrad import geometry, scene as scenemod, shading
from surfelgrad.errors import InvalidParam, PlacementFailure

from conftest import sphere_in_room_scene


# ---------------------------------------------------------------- oracle

def occupancy(spec, points):
    """True where a point is outside the room or inside any primitive."""
    outside = np.any((points <= spec.room_min) | (points >= spec.room_max), axis=-1)
    inside_obj = np.zeros(len(points), dtype=bool)
    for obj in spec.objects:
        rot = scenemod.quat_to_matrix(obj.orientation)
        local = ((points - obj.center) @ rot) / obj.scale
        x, y, z = local[:, 0], local[:, 1], local[:, 2]
        if obj.kind == "sphere":
            hit = np.sum(local * local, axis=-1) <= 1.0
        elif obj.kind == "box":
            hit = np.max(np.abs(local), axis=-1) <= 1.0
        elif obj.kind == "cylinder":
            hit = (x * x + y * y <= 1.0) & (np.abs(z) <= 1.0)
        else:  # cone
            hit = (np.abs(z) <= 1.0) & (x * x + y * y <= ((1.0 - z) / 2.0) ** 2)
        inside_obj |= hit
    return outside | inside_obj


def ray_march_depth(spec, camera, step=1e-3, bisect_iters=60, block=128):
    """Independent tracing oracle: fixed-step march + bisection refinement.

    Marches `block` steps at a time per pending ray so the sample grid is
    exactly t = k * step while the Python loop stays short.
    """
    dirs = geometry.world_ray_dirs(camera).reshape(-1, 3)
    origin = camera.position
    n = len(dirs)
    t_lo = np.zeros(n)
    t_hi = np.full(n, np.nan)
    t_max = spec.room_diagonal + 1.0
    pending = np.arange(n)
    k0 = 1
    while len(pending) and k0 * step < t_max:
        ks = k0 + np.arange(block)
        ts = ks * step
        pts = origin + ts[None, :, None] * dirs[pending, None, :]
        hit = occupancy(spec, pts.reshape(-1, 3)).reshape(len(pending), block)
        any_hit = hit.any(axis=1)
        first = np.argmax(hit[any_hit], axis=1)
        rays = pending[any_hit]
        t_hi[rays] = ts[first]
        t_lo[rays] = ts[first] - step
        pending = pending[~any_hit]
        k0 += block
    assert not len(pending), "march escaped the closed room"
    lo, hi = t_lo.copy(), t_hi.copy()
    for _ in range(bisect_iters):
        mid = 0.5 * (lo + hi)
        inside = occupancy(spec, origin + mid[:, None] * dirs)
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    t_hit = 0.5 * (lo + hi)
    dir_z = geometry.camera_ray_dirs(camera)[..., 2].reshape(-1)
    return (t_hit * (-dir_z)).reshape(camera.rows, camera.cols)


# ----------------------------------------------------------------- tests

class TestTraceDepth:
    def test_on_axis_sphere_exact(self):
        cam = sg.make_camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 20, 24, (9, 9))
        spec = scenemod.SceneSpec(
            room_min=(-6, -6, -6), room_max=(6, 6, 6),
            objects=(scenemod.Primitive("sphere", (0, 0, 0), (1, 1, 1),
                                        (1, 0, 0, 0)),),
            material=shading.Material(albedo=(0.8,) * 3),
            lights=shading.LightingRig(ambient=(0.1,) * 3, lights=()),
            camera=cam, seed=0,
        )
        depth = sg.trace_depth(spec)
        assert depth[4, 4] == 4.0

    def test_empty_room_wall_depth(self):
        cam = sg.make_camera((0, 0, 5), (0, 0, 0), (0, 1, 0), 20, 24, (9, 9))
        spec = scenemod.SceneSpec(
            room_min=(-6, -6, -6), room_max=(6, 6, 6), objects=(),
            material=shading.Material(albedo=(0.8,) * 3),
            lights=shading.LightingRig(ambient=(0.1,) * 3, lights=()),
            camera=cam, seed=0,
        )
        depth = sg.trace_depth(spec)
        assert abs(depth[4, 4] - 11.0) < 1e-12  # camera at 5, wall at -6

    def test_camera_outside_room_rejected(self):
        spec = sphere_in_room_scene()
        bad_cam = sg.make_camera((5, 0, 0), (0, 0, 0), (0, 1, 0), 20, 24, (8, 8))
        with pytest.raises(InvalidParam):
            sg.trace_depth(spec, bad_cam)

    @pytest.mark.parametrize("kind", scenemod.PRIMITIVE_KINDS)
    def test_each_primitive_against_ray_march(self, kind):
        rng = np.random.default_rng(hash(kind) % 2**32)
        cam = sg.make_camera((1.2, 1.0, 1.4), (0, 0, 0), (0, 1, 0), 20, 24,
                             (24, 24))
        spec = scenemod.SceneSpec(
            room_min=(-2, -2, -2), room_max=(2, 2, 2),
            objects=(scenemod.Primitive(
                kind, rng.uniform(-0.3, 0.3, size=3),
                rng.uniform(0.3, 0.6, size=3), scenemod.random_quaternion(rng)),),
            material=shading.Material(albedo=(0.8,) * 3),
            lights=shading.LightingRig(ambient=(0.1,) * 3, lights=()),
            camera=cam, seed=0,
        )
        analytic = sg.trace_depth(spec)
        marched = ray_march_depth(spec, cam)
        assert np.abs(analytic - marched).max() < 1e-3

    def test_random_scenes_against_ray_march(self):
        for i in range(3):
            spec = scenemod.sample_scene(9000 + i,
                                         scenemod.SceneConfig(n_objects=2,
                                                              image_size=(24, 24)))
            analytic = sg.trace_depth(spec)
            marched = ray_march_depth(spec, spec.camera)
            assert np.abs(analytic - marched).max() < 1e-3

    def test_surfels_land_on_surfaces(self):
        spec = sphere_in_room_scene(resolution=(32, 32))
        depth = sg.trace_depth(spec)
        pts_cam = sg.backproject(depth, spec.camera).reshape(-1, 3)
        pts = geometry.camera_to_world(spec.camera, pts_cam)
        # signed-distance residual: on the surface both probes disagree
        eps = 1e-6
        dirs = geometry.world_ray_dirs(spec.camera).reshape(-1, 3)
        before = occupancy(spec, pts - eps * dirs)
        after = occupancy(spec, pts + eps * dirs)
        assert not before.any()
        assert after.all()


class TestSampling:
    def test_sample_scene_deterministic(self):
        cfg = scenemod.SceneConfig(n_objects=2)
        a = scenemod.sample_scene(77, cfg)
        b = scenemod.sample_scene(77, cfg)
        assert json.dumps(scenemod.scene_to_json(a), sort_keys=True) == \
            json.dumps(scenemod.scene_to_json(b), sort_keys=True)

    def test_objects_inside_room_and_disjoint(self):
        cfg = scenemod.SceneConfig(n_objects=3, scale_range=(0.2, 0.35))
        for seed in range(100):
            spec = scenemod.sample_scene(seed, cfg)
            for i, a in enumerate(spec.objects):
                ra = a.bounding_radius()
                assert np.all(a.center - ra >= spec.room_min - 1e-12)
                assert np.all(a.center + ra <= spec.room_max + 1e-12)
                for b in spec.objects[i + 1:]:
                    gap = np.linalg.norm(a.center - b.center)
                    assert gap > ra + b.bounding_radius()

    def test_placement_failure_when_overcrowded(self):
        cfg = scenemod.SceneConfig(n_objects=50, scale_range=(0.6, 0.7))
        with pytest.raises(PlacementFailure):
            scenemod.sample_scene(3, cfg)

    def test_octant_positions_positive(self):
        rng = np.random.default_rng(60)
        for _ in range(200):
            cam = scenemod.sample_camera_pose(rng, "octant_patch", (1.0, 1.5),
                                              (0, 0, 0))
            assert np.all(cam.position > 0)

    def test_full_sphere_mean_near_center(self):
        rng = np.random.default_rng(61)
        pos = np.array([
            scenemod.sample_camera_pose(rng, "full_sphere", (1.0, 1.0),
                                        (0, 0, 0)).position
            for _ in range(10000)
        ])
        assert np.linalg.norm(pos.mean(axis=0)) < 0.05

    def test_camera_looks_at_target(self):
        rng = np.random.default_rng(62)
        for _ in range(50):
            target = rng.uniform(-1, 1, size=3)
            cam = scenemod.sample_camera_pose(rng, "full_sphere", (2.0, 3.0),
                                              target)
            view = -cam.z_axis
            to_target = target - cam.position
            to_target /= np.linalg.norm(to_target)
            assert np.abs(view - to_target).max() < 1e-12

    def test_focal_range_and_sensor(self):
        rng = np.random.default_rng(63)
        focals = [
            scenemod.sample_camera_pose(rng, "full_sphere", (1, 2),
                                        (0, 0, 0)).focal_mm
            for _ in range(200)
        ]
        assert min(focals) >= 18.0 and max(focals) <= 25.0


class TestSceneJson:
    def test_round_trip(self):
        spec = scenemod.sample_scene(5, scenemod.SceneConfig(n_objects=2))
        blob = json.dumps(scenemod.scene_to_json(spec), sort_keys=True)
        spec2 = scenemod.scene_from_json(json.loads(blob))
        assert scenemod.scene_digest(spec) == scenemod.scene_digest(spec2)

    def test_containment_validation(self):
        cam = sg.make_camera((0, 0, 1), (0, 0, 0), (0, 1, 0), 20, 24, (4, 4))
        with pytest.raises(InvalidParam):
            scenemod.SceneSpec(
                room_min=(-1, -1, -1), room_max=(1, 1, 1),
                objects=(scenemod.Primitive("sphere", (0.9, 0, 0), (0.5,) * 3,
                                            (1, 0, 0, 0)),),
                material=shading.Material(albedo=(0.5,) * 3),
                lights=shading.LightingRig(ambient=(0.1,) * 3, lights=()),
                camera=cam, seed=0,
            )
