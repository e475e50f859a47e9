"""Procedural room scenes with analytic ray-traced ground-truth depth.

A scene is an axis-aligned box room viewed from inside, containing
oriented, scaled primitives (sphere, box, cone, cylinder — all with exact
quadratic/slab intersections). trace_depth returns z-depth per pixel, the
same convention the surfel pipeline consumes.

Unit primitives in their local frame (before scale/orientation):
  sphere   |u| = 1
  box      [-1, 1]^3
  cylinder x^2 + y^2 = 1, |z| <= 1, with caps
  cone     apex (0,0,1), base circle radius 1 at z = -1, with base cap
"""

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry, shading
from .errors import InvalidParam, PlacementFailure
from .geometry import as_vec3

PRIMITIVE_KINDS = ("sphere", "box", "cone", "cylinder")

_T_EPS = 1e-9


def quat_to_matrix(q):
    """Rotation matrix from a unit quaternion (w, x, y, z)."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_quaternion(rng):
    """Uniform random rotation (Shoemake's method)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1 - u1), np.sqrt(u1)
    return np.array(
        [
            a * np.sin(2 * np.pi * u2),
            a * np.cos(2 * np.pi * u2),
            b * np.sin(2 * np.pi * u3),
            b * np.cos(2 * np.pi * u3),
        ]
    )


@dataclass(frozen=True)
class Primitive:
    kind: str
    center: np.ndarray
    scale: np.ndarray  # per-axis, > 0
    orientation: np.ndarray  # unit quaternion (w, x, y, z)

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise InvalidParam(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "center", as_vec3(self.center, "center"))
        scale = np.asarray(self.scale, dtype=np.float64)
        if scale.shape != (3,) or np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise InvalidParam(f"scale must be positive (3,), got {scale}")
        object.__setattr__(self, "scale", scale)
        q = np.asarray(self.orientation, dtype=np.float64)
        if q.shape != (4,) or abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise InvalidParam("orientation must be a unit quaternion (w,x,y,z)")
        object.__setattr__(self, "orientation", q)

    def bounding_radius(self):
        """Conservative world-space bounding-sphere radius."""
        sx, sy, sz = self.scale
        if self.kind == "sphere":
            return float(max(sx, sy, sz))
        if self.kind == "box":
            return float(np.linalg.norm(self.scale))
        return float(np.hypot(max(sx, sy), sz))  # cone / cylinder


@dataclass(frozen=True)
class SceneSpec:
    room_min: np.ndarray
    room_max: np.ndarray
    objects: tuple  # of Primitive
    material: shading.Material
    lights: shading.LightingRig
    camera: geometry.Camera
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "room_min", as_vec3(self.room_min, "room_min"))
        object.__setattr__(self, "room_max", as_vec3(self.room_max, "room_max"))
        if not np.all(self.room_min < self.room_max):
            raise InvalidParam("room min must be strictly below room max")
        object.__setattr__(self, "objects", tuple(self.objects))
        for obj in self.objects:
            r = obj.bounding_radius()
            if np.any(obj.center - r < self.room_min) or np.any(
                obj.center + r > self.room_max
            ):
                raise InvalidParam(f"object {obj.kind} not fully inside the room")

    @property
    def room_center(self):
        return 0.5 * (self.room_min + self.room_max)

    @property
    def room_diagonal(self):
        return float(np.linalg.norm(self.room_max - self.room_min))


def _solve_quadratic(a, b, c):
    """Stable vectorized roots of a t^2 + b t + c = 0; NaN where none."""
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = b * b - 4.0 * a * c
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        q = -0.5 * (b + np.where(b >= 0, sq, -sq))
        linear = np.abs(a) < 1e-300
        t0 = np.where(linear, np.where(np.abs(b) > 0, -c / b, np.nan), q / a)
        t1 = np.where(linear, np.nan, np.where(np.abs(q) > 0, c / q, t0))
    t0 = np.where(ok, t0, np.nan)
    t1 = np.where(ok, t1, np.nan)
    lo = np.fmin(t0, t1)
    hi = np.fmax(t0, t1)
    return lo, hi


def _min_positive(*candidates):
    """Smallest candidate > _T_EPS per ray; inf where none qualify."""
    best = np.full(candidates[0].shape, np.inf)
    for t in candidates:
        t = np.where(np.isnan(t) | (t <= _T_EPS), np.inf, t)
        best = np.minimum(best, t)
    return best


def _local_rays(prim, origins, dirs):
    rot = quat_to_matrix(prim.orientation)
    o = ((origins - prim.center) @ rot) / prim.scale
    d = (dirs @ rot) / prim.scale
    return o, d


def primitive_intersect(prim, origins, dirs):
    """First positive hit parameter per ray (inf for a miss).

    The hit parameter is measured along the world-space `dirs`; affine
    maps into the unit-primitive frame preserve it.
    """
    o, d = _local_rays(prim, origins, dirs)

    if prim.kind == "sphere":
        a = np.sum(d * d, axis=-1)
        b = 2.0 * np.sum(o * d, axis=-1)
        c = np.sum(o * o, axis=-1) - 1.0
        lo, hi = _solve_quadratic(a, b, c)
        return _min_positive(lo, hi)

    if prim.kind == "box":
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-1.0 - o) / d
            t2 = (1.0 - o) / d
        near = np.nanmax(np.fmin(t1, t2), axis=-1)
        far = np.nanmin(np.fmax(t1, t2), axis=-1)
        hit = (near <= far) & (far > _T_EPS)
        near = np.where(hit, near, np.nan)
        far = np.where(hit, far, np.nan)
        return _min_positive(near, far)

    if prim.kind == "cylinder":
        a = d[..., 0] ** 2 + d[..., 1] ** 2
        b = 2.0 * (o[..., 0] * d[..., 0] + o[..., 1] * d[..., 1])
        c = o[..., 0] ** 2 + o[..., 1] ** 2 - 1.0
        lo, hi = _solve_quadratic(a, b, c)
        side = []
        for t in (lo, hi):
            z = o[..., 2] + t * d[..., 2]
            side.append(np.where(np.abs(z) <= 1.0, t, np.nan))
        caps = []
        with np.errstate(divide="ignore", invalid="ignore"):
            for zc in (-1.0, 1.0):
                t = (zc - o[..., 2]) / d[..., 2]
                x = o[..., 0] + t * d[..., 0]
                y = o[..., 1] + t * d[..., 1]
                caps.append(np.where(x * x + y * y <= 1.0, t, np.nan))
        return _min_positive(*side, *caps)

    # cone: x^2 + y^2 = ((1 - z)/2)^2 between z = -1 and z = 1
    a = d[..., 0] ** 2 + d[..., 1] ** 2 - 0.25 * d[..., 2] ** 2
    one_minus_z = 1.0 - o[..., 2]
    b = 2.0 * (o[..., 0] * d[..., 0] + o[..., 1] * d[..., 1]) + 0.5 * one_minus_z * d[..., 2]
    c = o[..., 0] ** 2 + o[..., 1] ** 2 - 0.25 * one_minus_z**2
    lo, hi = _solve_quadratic(a, b, c)
    surf = []
    for t in (lo, hi):
        z = o[..., 2] + t * d[..., 2]
        surf.append(np.where((z >= -1.0) & (z <= 1.0), t, np.nan))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (-1.0 - o[..., 2]) / d[..., 2]
        x = o[..., 0] + t * d[..., 0]
        y = o[..., 1] + t * d[..., 1]
        base = np.where(x * x + y * y <= 1.0, t, np.nan)
    return _min_positive(*surf, base)


def room_exit(room_min, room_max, origin, dirs):
    """Exit parameter of rays starting inside an axis-aligned box."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (room_min - origin) / dirs
        t2 = (room_max - origin) / dirs
    return np.nanmin(np.fmax(t1, t2), axis=-1)


def trace_hits(objects, camera, room=None):
    """Nearest hit parameter and mask for every pixel ray.

    room, when given, is a (min, max) pair whose interior walls always
    terminate the ray; without a room, pixels may miss everything.
    """
    dirs_world = geometry.world_ray_dirs(camera).reshape(-1, 3)
    origin = camera.position
    t = np.full(dirs_world.shape[0], np.inf)
    if room is not None:
        room_min, room_max = room
        t = room_exit(room_min, room_max, origin, dirs_world)
    for obj in objects:
        t = np.minimum(t, primitive_intersect(obj, origin[None, :], dirs_world))
    t = t.reshape(camera.rows, camera.cols)
    return t, np.isfinite(t)


def trace_depth(scene, camera=None):
    """Ray-traced ground-truth z-depth of a scene from inside its room."""
    cam = camera if camera is not None else scene.camera
    if np.any(cam.position <= scene.room_min) or np.any(cam.position >= scene.room_max):
        raise InvalidParam("camera must be strictly inside the room")
    t, _ = trace_hits(scene.objects, cam, room=(scene.room_min, scene.room_max))
    if not np.all(np.isfinite(t)):
        raise InvalidParam("ray escaped a closed room (malformed scene)")
    # convert ray length to z-depth: z_cam = t * dir_z with dir_z < 0
    dir_z = geometry.camera_ray_dirs(cam)[..., 2]
    return t * (-dir_z)


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for sample_scene; defaults follow the dataset conventions."""

    n_objects: int = 1
    kinds: tuple = PRIMITIVE_KINDS
    room_min: tuple = (-2.0, -2.0, -2.0)
    room_max: tuple = (2.0, 2.0, 2.0)
    scale_range: tuple = (0.3, 0.7)
    image_size: tuple = (128, 128)  # (rows, cols)
    camera_mode: str = "octant_patch"
    camera_radius: tuple = (1.1, 1.8)
    n_lights: int = 1
    light_radius: tuple = (1.2, 1.9)
    albedo: tuple = (0.8, 0.75, 0.7)
    ambient: tuple = (0.1, 0.1, 0.1)
    focal_range: tuple = (18.0, 25.0)  # millimeters
    sensor_mm: float = 24.0
    camera_clearance: float = 0.15

    def to_json(self):
        return {
            "n_objects": self.n_objects,
            "kinds": list(self.kinds),
            "room": {"min": list(self.room_min), "max": list(self.room_max)},
            "scale_range": list(self.scale_range),
            "image_size": list(self.image_size),
            "camera_mode": self.camera_mode,
            "camera_radius": list(self.camera_radius),
            "n_lights": self.n_lights,
            "light_radius": list(self.light_radius),
            "albedo": list(self.albedo),
            "ambient": list(self.ambient),
            "focal_range": list(self.focal_range),
            "sensor_mm": self.sensor_mm,
            "camera_clearance": self.camera_clearance,
        }

    @staticmethod
    def from_json(obj):
        kwargs = {}
        mapping = {
            "n_objects": "n_objects",
            "kinds": "kinds",
            "scale_range": "scale_range",
            "image_size": "image_size",
            "camera_mode": "camera_mode",
            "camera_radius": "camera_radius",
            "n_lights": "n_lights",
            "light_radius": "light_radius",
            "albedo": "albedo",
            "ambient": "ambient",
            "focal_range": "focal_range",
            "sensor_mm": "sensor_mm",
            "camera_clearance": "camera_clearance",
        }
        for key, attr in mapping.items():
            if key in obj:
                val = obj[key]
                kwargs[attr] = tuple(val) if isinstance(val, list) else val
        if "room" in obj:
            kwargs["room_min"] = tuple(obj["room"]["min"])
            kwargs["room_max"] = tuple(obj["room"]["max"])
        return SceneConfig(**kwargs)


def sample_direction(rng, mode):
    """Unit direction, uniform on the sphere or on the positive octant."""
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    if mode == "octant_patch":
        v = np.abs(v)
    elif mode != "full_sphere":
        raise InvalidParam(f"unknown sampling mode {mode!r}")
    return v


def sample_camera_pose(rng, mode, radius_range, target, image_size=(128, 128),
                       focal_range=(18.0, 25.0), sensor_mm=24.0):
    """Camera on a spherical domain around `target`, looking at it.

    mode "octant_patch" keeps the position in the positive octant relative
    to the target; "full_sphere" samples the whole sphere. Focal length is
    uniform in focal_range (millimeters).
    """
    r_min, r_max = radius_range
    if not 0 < r_min <= r_max:
        raise InvalidParam(f"need 0 < r_min <= r_max, got {radius_range}")
    target = as_vec3(target, "target")
    direction = sample_direction(rng, mode)
    radius = rng.uniform(r_min, r_max)
    position = target + radius * direction
    focal = rng.uniform(*focal_range)
    return geometry.make_camera(
        position=position,
        look_at=target,
        up=(0.0, 1.0, 0.0),
        focal_mm=focal,
        sensor_mm=sensor_mm,
        resolution=image_size,
    )


def sample_scene(seed, config=SceneConfig()):
    """Deterministic scene draw: objects, lights, camera from one seed.

    Objects are rejection-sampled so their bounding spheres stay inside
    the room, avoid each other, and keep clear of the camera; placement
    gives up after 1000 rejections.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF]))
    cfg = config
    room_min = np.asarray(cfg.room_min, dtype=np.float64)
    room_max = np.asarray(cfg.room_max, dtype=np.float64)
    center = 0.5 * (room_min + room_max)
    if cfg.n_objects < 1:
        raise InvalidParam("n_objects must be >= 1")

    camera = sample_camera_pose(
        rng, cfg.camera_mode, cfg.camera_radius, center,
        image_size=cfg.image_size, focal_range=cfg.focal_range,
        sensor_mm=cfg.sensor_mm,
    )
    # camera orbit radii must stay inside the room for the tracer
    if np.any(camera.position <= room_min) or np.any(camera.position >= room_max):
        raise InvalidParam("camera_radius places the camera outside the room")

    objects = []
    rejections = 0
    while len(objects) < cfg.n_objects:
        kind = str(rng.choice(list(cfg.kinds)))
        if kind == "sphere":
            scale = np.full(3, rng.uniform(*cfg.scale_range))
        else:
            scale = rng.uniform(*cfg.scale_range, size=3)
        orientation = random_quaternion(rng)
        candidate = Primitive(kind=kind, center=center, scale=scale,
                              orientation=orientation)
        r = candidate.bounding_radius()
        lo, hi = room_min + r, room_max - r
        if np.any(lo >= hi):
            raise PlacementFailure(f"{kind} with scale {scale} cannot fit the room")
        pos = rng.uniform(lo, hi)
        candidate = replace(candidate, center=pos)
        clear_of_camera = (
            np.linalg.norm(pos - camera.position) > r + cfg.camera_clearance
        )
        overlaps = any(
            np.linalg.norm(pos - other.center) <= r + other.bounding_radius()
            for other in objects
        )
        if clear_of_camera and not overlaps:
            objects.append(candidate)
        else:
            rejections += 1
            if rejections > 1000:
                raise PlacementFailure(
                    f"placed {len(objects)}/{cfg.n_objects} objects "
                    f"after 1000 rejections"
                )

    lights = []
    for _ in range(cfg.n_lights):
        direction = sample_direction(rng, cfg.camera_mode)
        radius = rng.uniform(*cfg.light_radius)
        pos = center + radius * direction
        color = rng.uniform(0.5, 1.0, size=3)
        # quadratic falloff normalized to 1 at the room center
        k_q = 1.0 / (radius * radius)
        lights.append(shading.PointLight(position=pos, color=color, k_l=0.0, k_q=k_q))

    return SceneSpec(
        room_min=room_min,
        room_max=room_max,
        objects=tuple(objects),
        material=shading.Material(albedo=np.asarray(cfg.albedo)),
        lights=shading.LightingRig(ambient=np.asarray(cfg.ambient), lights=tuple(lights)),
        camera=camera,
        seed=int(seed),
    )


def scene_to_json(scene):
    return {
        "room": {"min": scene.room_min.tolist(), "max": scene.room_max.tolist()},
        "objects": [
            {
                "kind": o.kind,
                "center": o.center.tolist(),
                "scale": o.scale.tolist(),
                "orientation": o.orientation.tolist(),
            }
            for o in scene.objects
        ],
        "material": shading.material_to_json(scene.material),
        "lights": shading.lights_to_json(scene.lights),
        "camera": geometry.camera_to_json(scene.camera),
        "seed": scene.seed,
    }


def scene_from_json(obj):
    try:
        return SceneSpec(
            room_min=obj["room"]["min"],
            room_max=obj["room"]["max"],
            objects=tuple(
                Primitive(
                    kind=o["kind"],
                    center=o["center"],
                    scale=o["scale"],
                    orientation=o["orientation"],
                )
                for o in obj["objects"]
            ),
            material=shading.material_from_json(obj["material"]),
            lights=shading.lights_from_json(obj["lights"]),
            camera=geometry.camera_from_json(obj["camera"]),
            seed=int(obj["seed"]),
        )
    except KeyError as exc:
        raise InvalidParam(f"scene JSON missing field {exc}") from exc


def scene_digest(scene):
    """Stable content hash, handy for regression and determinism checks."""
    payload = json.dumps(scene_to_json(scene), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()
