"""The 2.5D surfel grid: back-projection, normal estimation, reprojection.

Depth semantics: a depth map stores camera-space z-depth, i.e. the surfel
position satisfies P.z = -depth. Back-projection still walks along the
pixel ray: P = (depth / |dir.z|) * dir, which for the pinhole model reduces
to P = depth * (x_s/f, y_s/f, -1) with (x_s, y_s) the sensor coordinates.

Normals come from the normalized cross product of central-difference
tangents (one-sided at image borders), sign-fixed so n_z > 0. Pixels where
the tangents are parallel, or where the normal is perpendicular to the
view axis, are flagged degenerate and get the placeholder normal (0,0,1).
A full 8-neighbour least-squares estimator is kept as a slower verification
oracle; it has no backward pass.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import NonPositiveDepth, ResolutionMismatch

DEGENERATE_NZ_EPS = 1e-12


@dataclass(frozen=True)
class SurfelField:
    """Per-pixel surfels in the camera frame of the generating view."""

    positions: np.ndarray  # (H, W, 3)
    normals: np.ndarray  # (H, W, 3), unit, n_z > 0 where not degenerate
    albedo: np.ndarray  # (3,) uniform or (H, W, 3) per pixel
    degenerate: np.ndarray  # (H, W) bool

    @property
    def resolution(self):
        return self.positions.shape[:2]


def validate_depth(depth, camera=None):
    """Check DepthMap invariants; returns the array as float64."""
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise ResolutionMismatch(f"depth map must be 2-D, got shape {d.shape}")
    if camera is not None and d.shape != (camera.rows, camera.cols):
        raise ResolutionMismatch(
            f"depth shape {d.shape} != camera resolution {camera.resolution}"
        )
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise NonPositiveDepth("depth map entries must be finite and > 0")
    return d


def ray_scale_grid(camera):
    """Per-pixel vector G with P = depth * G; equals dir / |dir.z|."""
    return camera._ray_scale


def backproject(depth, camera):
    """Lift a depth map to camera-space positions, one surfel per pixel."""
    d = validate_depth(depth, camera)
    return d[..., None] * ray_scale_grid(camera)


def _tangents(positions):
    """Central-difference tangents, one-sided at the borders.

    t_x points toward increasing column, t_y toward decreasing row (image
    up), so cross(t_x, t_y) has positive z on a fronto-parallel plane.
    """
    p = positions
    tx = np.empty_like(p)
    tx[:, 1:-1] = p[:, 2:] - p[:, :-2]
    tx[:, 0] = p[:, 1] - p[:, 0]
    tx[:, -1] = p[:, -1] - p[:, -2]
    ty = np.empty_like(p)
    ty[1:-1, :] = p[:-2, :] - p[2:, :]
    ty[0, :] = p[0, :] - p[1, :]
    ty[-1, :] = p[-2, :] - p[-1, :]
    return tx, ty


def estimate_normals(positions):
    """Differentiable normal estimate from the cross product of tangents.

    Returns (normals, degenerate): unit normals with n_z > 0, and a bool
    mask of pixels where the estimate is undefined (those get (0,0,1)).
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 2 or p.shape[1] < 2:
        raise ResolutionMismatch(
            f"positions grid must be (H>=2, W>=2, 3), got {p.shape}"
        )
    tx, ty = _tangents(p)
    rx = tx[..., 1] * ty[..., 2] - tx[..., 2] * ty[..., 1]
    ry = tx[..., 2] * ty[..., 0] - tx[..., 0] * ty[..., 2]
    rz = tx[..., 0] * ty[..., 1] - tx[..., 1] * ty[..., 0]
    nn2 = rx * rx + ry * ry + rz * rz
    scale2 = np.sum(tx * tx, axis=-1) * np.sum(ty * ty, axis=-1)
    degenerate = nn2 <= 1e-24 * np.maximum(scale2, 1e-300)

    inv = 1.0 / np.sqrt(np.where(degenerate, 1.0, nn2))
    inv = np.where(rz < 0, -inv, inv)  # sign flip enforces n_z > 0
    n = np.empty_like(p)
    n[..., 0] = rx * inv
    n[..., 1] = ry * inv
    n[..., 2] = rz * inv
    degenerate = degenerate | (np.abs(n[..., 2]) < DEGENERATE_NZ_EPS)
    n[degenerate] = (0.0, 0.0, 1.0)
    return n, degenerate


_NEIGHBOR_OFFSETS = [
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
]


def estimate_normals_lsq_oracle(positions):
    """8-neighbour least-squares normals (verification oracle, no gradients).

    Per pixel, minimizes sum_i (N . t_i)^2 over the neighbour tangents
    t_i = P_i - P_center subject to |N| = 1, i.e. takes the eigenvector of
    the smallest eigenvalue of the 3x3 tangent scatter matrix; the sign is
    fixed so n_z > 0. Border pixels use their in-bounds neighbours only.
    """
    p = np.asarray(positions, dtype=np.float64)
    if p.ndim != 3 or p.shape[2] != 3 or p.shape[0] < 2 or p.shape[1] < 2:
        raise ResolutionMismatch(
            f"positions grid must be (H>=2, W>=2, 3), got {p.shape}"
        )
    h, w = p.shape[:2]
    scatter = np.zeros((h, w, 3, 3))
    tangent_scale = np.zeros((h, w))
    for dr, dc in _NEIGHBOR_OFFSETS:
        r_dst = slice(max(0, -dr), h - max(0, dr))
        r_src = slice(max(0, dr), h - max(0, -dr))
        c_dst = slice(max(0, -dc), w - max(0, dc))
        c_src = slice(max(0, dc), w - max(0, -dc))
        t = p[r_src, c_src] - p[r_dst, c_dst]
        scatter[r_dst, c_dst] += t[..., :, None] * t[..., None, :]
        tangent_scale[r_dst, c_dst] += np.sum(t * t, axis=-1)

    eigvals, eigvecs = np.linalg.eigh(scatter)
    n = eigvecs[..., :, 0]  # eigenvector of the smallest eigenvalue
    # rank < 2 means the tangents do not span a plane: normal is ambiguous
    degenerate = eigvals[..., 1] <= 1e-12 * np.maximum(tangent_scale, 1e-300)
    flip = n[..., 2] < 0
    n = np.where(flip[..., None], -n, n)
    degenerate = degenerate | (np.abs(n[..., 2]) < DEGENERATE_NZ_EPS)
    n = np.where(degenerate[..., None], np.array([0.0, 0.0, 1.0]), n)
    return n, degenerate


def build_surfel_field(depth, camera, albedo):
    """backproject + estimate_normals, bundled with an albedo."""
    positions = backproject(depth, camera)
    normals, degenerate = estimate_normals(positions)
    albedo = np.asarray(albedo, dtype=np.float64)
    return SurfelField(
        positions=positions, normals=normals, albedo=albedo, degenerate=degenerate
    )


def reproject(field, src_camera, dst_camera):
    """Map surfels into another camera and z-buffer them per dst pixel.

    Returns (depth, mask): nearest z-depth per covered dst pixel, and a
    bool mask of covered pixels. Uncovered pixels hold depth 0. Strictly
    smaller depth wins; equal depths leave the stored value unchanged.
    """
    world = geometry.camera_to_world(src_camera, field.positions.reshape(-1, 3))
    q = geometry.world_to_camera(dst_camera, world)

    in_front = q[:, 2] < 0
    q = q[in_front]
    depth = -q[:, 2]

    f = dst_camera.focal_mm
    x_s = f * q[:, 0] / depth
    y_s = f * q[:, 1] / depth
    pix = dst_camera.sensor_mm / dst_camera.cols
    sensor_h = pix * dst_camera.rows
    col = np.round((x_s + 0.5 * dst_camera.sensor_mm) / pix - 0.5).astype(np.int64)
    row = np.round((0.5 * sensor_h - y_s) / pix - 0.5).astype(np.int64)

    inside = (
        (row >= 0) & (row < dst_camera.rows) & (col >= 0) & (col < dst_camera.cols)
    )
    row, col, depth = row[inside], col[inside], depth[inside]

    out = np.full((dst_camera.rows, dst_camera.cols), np.inf)
    np.minimum.at(out, (row, col), depth)
    mask = np.isfinite(out)
    out[~mask] = 0.0
    return out, mask


def surfel_on_ray_residual(field, camera):
    """Max distance of any surfel from its own pixel ray (invariant check)."""
    g = ray_scale_grid(camera)
    t = -field.positions[..., 2]  # depth recovers the ray parameter
    return float(np.max(np.linalg.norm(field.positions - t[..., None] * g, axis=-1)))
