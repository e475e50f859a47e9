"""Mental-rotation question generation over polycube shapes.

A question is a rendered reference shape plus three candidates: one is the
same shape under a fresh rotation, one is its mirror image, and one is a
different shape entirely. Sampled shapes are rejected unless they are
rotationally asymmetric (all 24 grid rotations distinct) and chiral (no
rotation maps the mirror image back onto the shape), so the answer key is
well defined and verifiable from provenance alone — no images needed.
"""

import hashlib
import itertools
from dataclasses import dataclass

import numpy as np

from . import geometry, scene, shading, surfels
from .errors import InvalidParam, SamplingFailure
from .shading import shade

_FACE_NEIGHBORS = [
    (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
]


def rotation_matrices_24():
    """The 24 proper rotations of the cube as integer matrices."""
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3), dtype=np.int64)
            for row, (col, s) in enumerate(zip(perm, signs)):
                m[row, col] = s
            if round(np.linalg.det(m)) == 1:
                mats.append(m)
    return mats


_ROTATIONS = rotation_matrices_24()


def normalize_cells(cells):
    """Canonical translation: min corner at the origin, sorted tuple."""
    arr = np.asarray(sorted(cells), dtype=np.int64)
    arr = arr - arr.min(axis=0)
    return tuple(sorted(map(tuple, arr.tolist())))


def rotate_cells(cells, rot):
    arr = np.asarray(list(cells), dtype=np.int64) @ np.asarray(rot).T
    return normalize_cells(map(tuple, arr))


def mirror_cells(cells):
    arr = np.asarray(list(cells), dtype=np.int64)
    arr[:, 0] = -arr[:, 0]
    return normalize_cells(map(tuple, arr))


def all_rotations(cells):
    return [rotate_cells(cells, rot) for rot in _ROTATIONS]


def canonical_form(cells):
    """Lexicographically smallest rotation; identifies shapes up to rotation."""
    return min(all_rotations(cells))


def shape_id(cells):
    payload = repr(canonical_form(cells)).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def has_rotational_symmetry(cells):
    """True when some non-identity grid rotation maps the shape onto itself."""
    base = normalize_cells(cells)
    rotated = all_rotations(base)
    return sum(1 for r in rotated if r == base) > 1


def is_achiral(cells):
    """True when the mirror image is itself a rotation of the shape."""
    base = normalize_cells(cells)
    return canonical_form(mirror_cells(base)) == canonical_form(base)


def is_connected(cells):
    cells = set(map(tuple, cells))
    if not cells:
        return False
    seen = {next(iter(cells))}
    frontier = list(seen)
    while frontier:
        cur = frontier.pop()
        for d in _FACE_NEIGHBORS:
            nxt = (cur[0] + d[0], cur[1] + d[1], cur[2] + d[2])
            if nxt in cells and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return len(seen) == len(cells)


def sample_polycube(rng, k, max_tries=1000):
    """Face-connected K-cube shape from a self-avoiding random walk.

    Rejects rotationally symmetric and achiral shapes so every accepted
    shape distinguishes itself from its mirror image under all 24 grid
    rotations.
    """
    if k < 4:
        raise InvalidParam(f"polycube size must be >= 4, got {k}")
    for _ in range(max_tries):
        cells = [(0, 0, 0)]
        occupied = {cells[0]}
        dead_end = False
        while len(cells) < k:
            cur = cells[-1]
            free = [
                (cur[0] + d[0], cur[1] + d[1], cur[2] + d[2])
                for d in _FACE_NEIGHBORS
            ]
            free = [c for c in free if c not in occupied]
            if not free:
                dead_end = True
                break
            nxt = free[rng.integers(len(free))]
            cells.append(nxt)
            occupied.add(nxt)
        if dead_end:
            continue
        shape = normalize_cells(cells)
        if has_rotational_symmetry(shape) or is_achiral(shape):
            continue
        return shape
    raise SamplingFailure(f"no admissible {k}-cube shape in {max_tries} tries")


@dataclass(frozen=True)
class IqttConfig:
    k: int = 8
    image_size: tuple = (128, 128)
    albedo: tuple = (0.7, 0.7, 0.7)
    ambient: tuple = (0.15, 0.15, 0.15)
    camera_radius_factor: tuple = (2.6, 3.2)
    light_radius_factor: float = 2.0
    focal_range: tuple = (18.0, 25.0)
    sensor_mm: float = 24.0

    def to_json(self):
        return {
            "k": self.k,
            "image_size": list(self.image_size),
            "albedo": list(self.albedo),
            "ambient": list(self.ambient),
            "camera_radius_factor": list(self.camera_radius_factor),
            "light_radius_factor": self.light_radius_factor,
            "focal_range": list(self.focal_range),
            "sensor_mm": self.sensor_mm,
        }

    @staticmethod
    def from_json(obj):
        kwargs = {}
        for key in (
            "k", "image_size", "albedo", "ambient", "camera_radius_factor",
            "light_radius_factor", "focal_range", "sensor_mm",
        ):
            if key in obj:
                val = obj[key]
                kwargs[key] = tuple(val) if isinstance(val, list) else val
        return IqttConfig(**kwargs)


@dataclass(frozen=True)
class IqttQuestion:
    reference: np.ndarray | None  # (H, W, 3) or None when images skipped
    candidates: tuple  # three images (or Nones)
    answer_index: int
    provenance: dict


def _shape_primitives(cells, rotation_q):
    """Unit-cube primitives of a rotated shape, centered on its centroid."""
    centers = np.asarray(list(cells), dtype=np.float64) + 0.5
    centers -= centers.mean(axis=0)
    rot = scene.quat_to_matrix(rotation_q)
    centers = centers @ rot.T
    prims = [
        scene.Primitive(kind="box", center=c, scale=(0.5, 0.5, 0.5),
                        orientation=rotation_q)
        for c in centers
    ]
    extent = float(np.max(np.linalg.norm(centers, axis=1))) + np.sqrt(3.0) / 2.0
    return prims, extent


def render_polycube_view(cells, rotation_q, camera, lights, albedo):
    """Shade a rotated polycube on a black backdrop; returns (image, depth, mask).

    Rays that miss the shape land on a fronto-parallel zero-albedo backdrop
    so the full depth grid stays valid for normal estimation.
    """
    prims, extent = _shape_primitives(cells, rotation_q)
    t, mask = scene.trace_hits(prims, camera, room=None)
    dir_z = geometry.camera_ray_dirs(camera)[..., 2]
    depth = np.where(mask, t * (-dir_z), 0.0)
    backdrop = np.linalg.norm(camera.position) + 3.0 * extent
    depth = np.where(mask, depth, backdrop)
    albedo_grid = np.where(mask[..., None], np.asarray(albedo, dtype=np.float64), 0.0)
    field = surfels.build_surfel_field(depth, camera, albedo_grid)
    return shade(field, camera, lights), depth, mask


def _distinct_rotation(rng, reference_q):
    for _ in range(100):
        q = scene.random_quaternion(rng)
        if abs(float(np.dot(q, reference_q))) < 0.9999:
            return q
    raise SamplingFailure("could not draw a rotation distinct from the reference")


def gen_iqtt(seed, config=IqttConfig(), render_images=True):
    """One question: reference + {rotated copy, mirrored copy, other shape}.

    Deterministic in `seed`. With render_images=False only the provenance
    and answer key are produced (used for mass soundness checks).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1)]))
    cfg = config

    shape = sample_polycube(rng, cfg.k)
    ref_rotation = scene.random_quaternion(rng)

    correct_rotation = _distinct_rotation(rng, ref_rotation)
    mirrored = mirror_cells(shape)
    mirror_rotation = scene.random_quaternion(rng)
    for _ in range(1000):
        other = sample_polycube(rng, cfg.k)
        if canonical_form(other) != canonical_form(shape):
            break
    else:
        raise SamplingFailure("failed to sample a distinct distractor shape")
    other_rotation = scene.random_quaternion(rng)

    entries = [
        {"cells": shape, "rotation": correct_rotation, "mirrored": False,
         "shape_id": shape_id(shape)},
        {"cells": mirrored, "rotation": mirror_rotation, "mirrored": True,
         "shape_id": shape_id(shape)},
        {"cells": other, "rotation": other_rotation, "mirrored": False,
         "shape_id": shape_id(other)},
    ]
    answer_index = int(rng.integers(3))
    order = list(range(3))
    order.remove(0)
    rng.shuffle(order)
    slots = [None, None, None]
    slots[answer_index] = entries[0]
    rest = iter(order)
    for i in range(3):
        if slots[i] is None:
            slots[i] = entries[next(rest)]

    provenance = {
        "reference": {
            "shape_id": shape_id(shape),
            "cells": [list(c) for c in shape],
            "rotation": ref_rotation.tolist(),
        },
        "candidates": [
            {
                "shape_id": e["shape_id"],
                "cells": [list(c) for c in e["cells"]],
                "rotation": np.asarray(e["rotation"]).tolist(),
                "mirrored": e["mirrored"],
            }
            for e in slots
        ],
        "seed": int(seed),
        "k": cfg.k,
    }

    reference_img = None
    candidate_imgs = (None, None, None)
    if render_images:
        _, extent = _shape_primitives(shape, ref_rotation)
        radius = rng.uniform(*cfg.camera_radius_factor) * extent
        cam_dir = scene.sample_direction(rng, "full_sphere")
        # keep the camera off the exact poles so up=(0,1,0) stays valid
        while abs(cam_dir[1]) > 0.999:
            cam_dir = scene.sample_direction(rng, "full_sphere")
        camera = geometry.make_camera(
            position=radius * cam_dir,
            look_at=(0.0, 0.0, 0.0),
            up=(0.0, 1.0, 0.0),
            focal_mm=rng.uniform(*cfg.focal_range),
            sensor_mm=cfg.sensor_mm,
            resolution=cfg.image_size,
        )
        light_dir = scene.sample_direction(rng, "full_sphere")
        light_r = cfg.light_radius_factor * extent
        lights = shading.LightingRig(
            ambient=np.asarray(cfg.ambient),
            lights=(
                shading.PointLight(
                    position=light_r * light_dir,
                    color=(1.0, 1.0, 1.0),
                    k_l=0.0,
                    k_q=1.0 / (light_r * light_r),
                ),
            ),
        )
        reference_img, _, _ = render_polycube_view(
            shape, ref_rotation, camera, lights, cfg.albedo
        )
        candidate_imgs = tuple(
            render_polycube_view(
                e["cells"], np.asarray(e["rotation"]), camera, lights, cfg.albedo
            )[0]
            for e in slots
        )

    return IqttQuestion(
        reference=reference_img,
        candidates=candidate_imgs,
        answer_index=answer_index,
        provenance=provenance,
    )


def answer_from_provenance(provenance):
    """Recover the answer index from cell sets alone (voxel oracle).

    Returns the unique candidate whose cells match the reference cells
    under one of the 24 grid rotations; raises if zero or several match.
    """
    ref = normalize_cells(map(tuple, provenance["reference"]["cells"]))
    ref_canon = canonical_form(ref)
    matches = [
        i
        for i, cand in enumerate(provenance["candidates"])
        if canonical_form(normalize_cells(map(tuple, cand["cells"]))) == ref_canon
    ]
    if len(matches) != 1:
        raise InvalidParam(f"expected exactly one matching candidate, got {matches}")
    return matches[0]
