"""Pinhole camera model, pixel/ray mapping, and world<->camera transforms.

Conventions used throughout the package:

  Camera frame (right-handed): x right, y up, camera looks along -z.
  Pixel frame: row 0 is the top image row, col 0 the left column; pixel
  y therefore increases downward while camera y increases upward.
  Rays pass through pixel centers (offset 0.5 from the pixel corner).
  Pixels are square; the sensor height is sensor_mm * rows / cols.
  Focal length and sensor width are in millimeters; they only ever enter
  as the ratio sensor/focal, so scene units stay arbitrary.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateFrame, InvalidParam, OutOfBounds

_PARALLEL_EPS = 1e-12


def as_vec3(v, name="vector"):
    """Coerce to a float64 (3,) array, rejecting NaN/Inf."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise InvalidParam(f"{name} must have 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParam(f"{name} has non-finite components: {arr}")
    return arr


def normalize(v):
    n = np.linalg.norm(v)
    if n < _PARALLEL_EPS:
        raise InvalidParam("cannot normalize a near-zero vector")
    return v / n


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray  # unit length


@dataclass(frozen=True)
class Camera:
    """Pinhole camera. Use make_camera() so the invariants are checked."""

    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    focal_mm: float
    sensor_mm: float
    resolution: tuple  # (rows, cols)
    # orthonormal camera axes expressed in world coordinates
    x_axis: np.ndarray = field(repr=False, default=None)
    y_axis: np.ndarray = field(repr=False, default=None)
    z_axis: np.ndarray = field(repr=False, default=None)

    @property
    def rows(self):
        return self.resolution[0]

    @property
    def cols(self):
        return self.resolution[1]

    @cached_property
    def rotation(self):
        """3x3 matrix whose columns are the camera axes in world coords."""
        return np.stack([self.x_axis, self.y_axis, self.z_axis], axis=1)

    @cached_property
    def _pixel_dirs(self):
        """Unit per-pixel ray directions in the camera frame (cached)."""
        rr, cc = np.meshgrid(
            np.arange(self.rows), np.arange(self.cols), indexing="ij"
        )
        x, y = sensor_coords(self, rr, cc)
        d = np.stack([x, y, -self.focal_mm * np.ones_like(x)], axis=-1)
        return d / np.linalg.norm(d, axis=-1, keepdims=True)

    @cached_property
    def _ray_scale(self):
        """Per-pixel vector G with backprojection P = depth * G (cached)."""
        rr, cc = np.meshgrid(
            np.arange(self.rows), np.arange(self.cols), indexing="ij"
        )
        x, y = sensor_coords(self, rr, cc)
        return np.stack(
            [x / self.focal_mm, y / self.focal_mm, -np.ones_like(x)], axis=-1
        )

    def horizontal_fov(self):
        """Full horizontal field of view in radians (sensor-edge to edge)."""
        return 2.0 * np.arctan(0.5 * self.sensor_mm / self.focal_mm)


def make_camera(position, look_at, up, focal_mm, sensor_mm, resolution):
    """Build a camera whose local -z axis points from position toward look_at.

    Raises DegenerateFrame when up is parallel to the view direction, and
    InvalidParam for non-positive focal length, sensor width, or resolution.
    """
    position = as_vec3(position, "position")
    look_at = as_vec3(look_at, "look_at")
    up = as_vec3(up, "up")
    focal_mm = float(focal_mm)
    sensor_mm = float(sensor_mm)
    if not np.isfinite(focal_mm) or focal_mm <= 0:
        raise InvalidParam(f"focal_mm must be > 0, got {focal_mm}")
    if not np.isfinite(sensor_mm) or sensor_mm <= 0:
        raise InvalidParam(f"sensor_mm must be > 0, got {sensor_mm}")
    rows, cols = int(resolution[0]), int(resolution[1])
    if rows <= 0 or cols <= 0:
        raise InvalidParam(f"resolution must be positive, got {(rows, cols)}")

    view = look_at - position
    view_norm = np.linalg.norm(view)
    if view_norm < _PARALLEL_EPS:
        raise InvalidParam("look_at coincides with position")
    forward = view / view_norm

    side = np.cross(forward, up)
    side_norm = np.linalg.norm(side)
    if side_norm < _PARALLEL_EPS * np.linalg.norm(up):
        raise DegenerateFrame("up vector is parallel to the view direction")
    x_axis = side / side_norm
    y_axis = np.cross(x_axis, forward)  # already unit: x_axis ⟂ forward
    z_axis = -forward  # camera looks along -z

    return Camera(
        position=position,
        look_at=look_at,
        up=up,
        focal_mm=focal_mm,
        sensor_mm=sensor_mm,
        resolution=(rows, cols),
        x_axis=x_axis,
        y_axis=y_axis,
        z_axis=z_axis,
    )


def world_to_camera(camera, point):
    """Map world coordinates into the camera frame (camera position -> origin).

    Accepts a single (3,) point or an (..., 3) array.
    """
    p = np.asarray(point, dtype=np.float64)
    return (p - camera.position) @ camera.rotation


def camera_to_world(camera, point):
    """Inverse of world_to_camera."""
    p = np.asarray(point, dtype=np.float64)
    return p @ camera.rotation.T + camera.position


def sensor_coords(camera, rows_idx, cols_idx):
    """Sensor-plane coordinates (mm) of pixel centers.

    x grows with column index, y grows upward (opposite to row index).
    """
    pix = camera.sensor_mm / camera.cols
    sensor_h = pix * camera.rows
    x = (np.asarray(cols_idx, dtype=np.float64) + 0.5) * pix - 0.5 * camera.sensor_mm
    y = 0.5 * sensor_h - (np.asarray(rows_idx, dtype=np.float64) + 0.5) * pix
    return x, y


def camera_ray_dirs(camera):
    """Unit ray directions through every pixel center, in the camera frame.

    Returns an (rows, cols, 3) array; the z component is always negative.
    """
    return camera._pixel_dirs


def world_ray_dirs(camera):
    """camera_ray_dirs rotated into world coordinates."""
    return camera_ray_dirs(camera) @ camera.rotation.T


def primary_ray(camera, row, col):
    """World-space ray from the camera center through pixel (row, col)."""
    if not (0 <= row < camera.rows and 0 <= col < camera.cols):
        raise OutOfBounds(
            f"pixel ({row}, {col}) outside resolution {camera.resolution}"
        )
    x, y = sensor_coords(camera, row, col)
    d_cam = np.array([float(x), float(y), -camera.focal_mm])
    d_cam /= np.linalg.norm(d_cam)
    return Ray(origin=camera.position.copy(), direction=camera.rotation @ d_cam)


def camera_to_json(camera):
    """JSON-serializable dict; field names are fixed for cross-module use."""
    return {
        "position": camera.position.tolist(),
        "look_at": camera.look_at.tolist(),
        "up": camera.up.tolist(),
        "focal_mm": camera.focal_mm,
        "sensor_mm": camera.sensor_mm,
        "resolution": list(camera.resolution),
    }


def camera_from_json(obj):
    try:
        return make_camera(
            obj["position"],
            obj["look_at"],
            obj["up"],
            obj["focal_mm"],
            obj["sensor_mm"],
            obj["resolution"],
        )
    except KeyError as exc:
        raise InvalidParam(f"camera JSON missing field {exc}") from exc
