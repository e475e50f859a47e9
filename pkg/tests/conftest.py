import numpy as np
import pytest

import surfelgrad as sg
from surfelgrad import scene as scenemod
from surfelgrad import shading


@pytest.fixture
def flat_camera():
    """Camera at the world origin looking along -z: camera frame == world frame."""
    return sg.make_camera(
        position=(0.0, 0.0, 0.0),
        look_at=(0.0, 0.0, -1.0),
        up=(0.0, 1.0, 0.0),
        focal_mm=20.0,
        sensor_mm=24.0,
        resolution=(9, 9),
    )


def random_camera(rng, resolution=(8, 8)):
    position = rng.uniform(-3, 3, size=3)
    look_at = position + rng.normal(size=3) * 2
    while np.linalg.norm(look_at - position) < 0.5:
        look_at = position + rng.normal(size=3) * 2
    return sg.make_camera(
        position=position,
        look_at=look_at,
        up=(0.0, 1.0, 0.0),
        focal_mm=rng.uniform(18, 25),
        sensor_mm=24.0,
        resolution=resolution,
    )


def sphere_in_room_scene(resolution=(64, 64), camera_pos=(1.3, 1.1, 1.5),
                         sphere_center=(0.1, -0.2, 0.0), sphere_radius=0.6):
    """One sphere in a 4x4x4 room, one point light."""
    camera = sg.make_camera(
        position=camera_pos, look_at=(0, 0, 0), up=(0, 1, 0),
        focal_mm=20.0, sensor_mm=24.0, resolution=resolution,
    )
    light = shading.PointLight(
        position=(1.2, 1.5, 0.9), color=(1.0, 0.95, 0.9),
        k_l=0.0, k_q=1.0 / (2.1 ** 2),
    )
    return scenemod.SceneSpec(
        room_min=(-2, -2, -2), room_max=(2, 2, 2),
        objects=(scenemod.Primitive("sphere", sphere_center,
                                    (sphere_radius,) * 3, (1, 0, 0, 0)),),
        material=shading.Material(albedo=(0.8, 0.75, 0.7)),
        lights=shading.LightingRig(ambient=(0.1,) * 3, lights=(light,)),
        camera=camera, seed=0,
    )


def recon_demo_scene():
    """The calibrated inverse-rendering demo: sphere before a facing wall.

    Camera framing keeps every visible surface either fronto-parallel or
    on the sphere; the off-axis light paints a strong shading gradient,
    so attenuation + cosine jointly pin absolute depth.
    """
    camera = sg.make_camera(
        position=(0.1, 0.05, 0.9), look_at=(0, 0, 0), up=(0, 1, 0),
        focal_mm=25.0, sensor_mm=24.0, resolution=(64, 64),
    )
    light_pos = np.array([1.4, 1.2, 0.9])
    light = shading.PointLight(
        position=light_pos, color=(1.0, 0.95, 0.9),
        k_l=0.0, k_q=1.0 / float(light_pos @ light_pos),
    )
    return scenemod.SceneSpec(
        room_min=(-2, -2, -2), room_max=(2, 2, 2),
        objects=(scenemod.Primitive("sphere", (0.05, -0.1, -0.9),
                                    (0.45,) * 3, (1, 0, 0, 0)),),
        material=shading.Material(albedo=(0.8, 0.75, 0.7)),
        lights=shading.LightingRig(ambient=(0.1,) * 3, lights=(light,)),
        camera=camera, seed=0,
    )


RECON_DEMO_CONFIG = dict(
    max_iters=2000, step_size=0.1, smoothness_weight=1e-3,
    optimizer="adaptive", pyramid_levels=4, final_step_factor=0.1,
)
