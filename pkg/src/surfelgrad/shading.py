"""Forward shading: ambient + attenuated Lambertian point lights, with an
optional Phong specular lobe.

Per pixel the diffuse model is

    I = albedo * (ambient + sum_j L_j * max(0, N.d_j/|d_j|)
                                  / (k_l |d_j| + k_q |d_j|^2))

with d_j the vector from the surfel to light j. There is deliberately no
constant attenuation term; validation requires k_l + k_q > 0 instead, and
|d_j| >= 1e-8 guards the light-at-surfel singularity. Lights are given in
world coordinates and transformed into the camera frame once per call.

Images hold linear radiance; values are clamped and sRGB-encoded only at
PNG export (fileio), never here, so gradients see the raw function.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry, surfels
from .errors import InvalidParam, LightAtSurfel, NonFiniteOutput

LIGHT_DISTANCE_EPS = 1e-8


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray  # world coordinates
    color: np.ndarray  # RGB radiance, >= 0
    k_l: float  # linear attenuation coefficient
    k_q: float  # quadratic attenuation coefficient

    def __post_init__(self):
        object.__setattr__(self, "position", geometry.as_vec3(self.position, "light position"))
        color = geometry.as_vec3(self.color, "light color")
        if np.any(color < 0):
            raise InvalidParam(f"light color must be non-negative, got {color}")
        object.__setattr__(self, "color", color)
        k_l, k_q = float(self.k_l), float(self.k_q)
        if k_l < 0 or k_q < 0 or k_l + k_q <= 0:
            raise InvalidParam(f"need k_l, k_q >= 0 and k_l + k_q > 0, got {k_l}, {k_q}")
        object.__setattr__(self, "k_l", k_l)
        object.__setattr__(self, "k_q", k_q)


@dataclass(frozen=True)
class LightingRig:
    ambient: np.ndarray  # RGB radiance, >= 0
    lights: tuple  # of PointLight

    def __post_init__(self):
        ambient = geometry.as_vec3(self.ambient, "ambient")
        if np.any(ambient < 0):
            raise InvalidParam(f"ambient must be non-negative, got {ambient}")
        object.__setattr__(self, "ambient", ambient)
        object.__setattr__(self, "lights", tuple(self.lights))


@dataclass(frozen=True)
class Specular:
    k_s: np.ndarray  # RGB in [0, 1]
    shininess: float  # > 0

    def __post_init__(self):
        k_s = geometry.as_vec3(self.k_s, "k_s")
        if np.any(k_s < 0) or np.any(k_s > 1):
            raise InvalidParam(f"k_s must lie in [0,1]^3, got {k_s}")
        object.__setattr__(self, "k_s", k_s)
        shininess = float(self.shininess)
        if not shininess > 0:
            raise InvalidParam(f"shininess must be > 0, got {shininess}")
        object.__setattr__(self, "shininess", shininess)


@dataclass(frozen=True)
class Material:
    albedo: np.ndarray  # (3,) uniform or (H, W, 3) per pixel, in [0, 1]
    specular: Specular | None = None

    def __post_init__(self):
        albedo = np.asarray(self.albedo, dtype=np.float64)
        if albedo.shape != (3,) and not (albedo.ndim == 3 and albedo.shape[2] == 3):
            raise InvalidParam(f"albedo must be (3,) or (H,W,3), got {albedo.shape}")
        if not np.all(np.isfinite(albedo)) or np.any(albedo < 0) or np.any(albedo > 1):
            raise InvalidParam("albedo channels must be finite and in [0, 1]")
        object.__setattr__(self, "albedo", albedo)


def _check_finite(image):
    if not np.all(np.isfinite(image)):
        raise NonFiniteOutput("shading produced NaN/Inf")
    return image


def _light_terms(field, camera, light, light_index):
    """Attenuation, clamped cosine, and geometry shared by both models."""
    p = field.positions
    lp = geometry.world_to_camera(camera, light.position)
    d = lp - p
    r = np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2 + d[..., 2] ** 2)
    if np.any(r < LIGHT_DISTANCE_EPS):
        bad = np.argwhere(r < LIGHT_DISTANCE_EPS)[0]
        raise LightAtSurfel(pixel=tuple(int(v) for v in bad), light_index=light_index)
    atten = 1.0 / (light.k_l * r + light.k_q * r * r)
    n = field.normals
    dot = n[..., 0] * d[..., 0] + n[..., 1] * d[..., 1] + n[..., 2] * d[..., 2]
    cosine = np.maximum(0.0, dot / r)
    return d, r, atten, cosine


def shade(field, camera, lights):
    """Evaluate the diffuse shading equation per surfel; returns (H, W, 3)."""
    h, w = field.resolution
    radiance = np.broadcast_to(lights.ambient, (h, w, 3)).copy()
    for j, light in enumerate(lights.lights):
        _, _, atten, cosine = _light_terms(field, camera, light, j)
        radiance += (atten * cosine)[..., None] * light.color
    return _check_finite(field.albedo * radiance)


def shade_phong(field, camera, lights, material):
    """Diffuse shading plus the classic Phong highlight.

    Adds sum_j atten * k_s * L_j * max(0, R.V)^shininess, with R the light
    direction reflected about the normal and V the unit vector from the
    surfel toward the camera origin.
    """
    if material.specular is None:
        raise InvalidParam("shade_phong requires a material with a specular lobe")
    k_s, alpha = material.specular.k_s, material.specular.shininess
    p = field.positions
    v = -p / np.linalg.norm(p, axis=-1, keepdims=True)

    h, w = field.resolution
    diffuse = np.broadcast_to(lights.ambient, (h, w, 3)).copy()
    specular = np.zeros((h, w, 3))
    for j, light in enumerate(lights.lights):
        d, r, atten, cosine = _light_terms(field, camera, light, j)
        diffuse += (atten * cosine)[..., None] * light.color
        d_hat = d / r[..., None]
        refl = -d_hat + 2.0 * np.sum(d_hat * field.normals, axis=-1, keepdims=True) * field.normals
        lobe = np.maximum(0.0, np.sum(refl * v, axis=-1)) ** alpha
        specular += (atten * lobe)[..., None] * (k_s * light.color)
    return _check_finite(field.albedo * diffuse + specular)


def render(depth, camera, material, lights):
    """Full forward pass: backproject -> estimate normals -> shade.

    Uses the Phong model when the material carries a specular lobe,
    otherwise pure Lambertian shading.
    """
    field = surfels.build_surfel_field(depth, camera, material.albedo)
    if material.specular is not None:
        return shade_phong(field, camera, lights, material)
    return shade(field, camera, lights)


def lights_to_json(lights):
    return {
        "ambient": lights.ambient.tolist(),
        "points": [
            {
                "position": l.position.tolist(),
                "color": l.color.tolist(),
                "k_l": l.k_l,
                "k_q": l.k_q,
            }
            for l in lights.lights
        ],
    }


def lights_from_json(obj):
    try:
        return LightingRig(
            ambient=obj["ambient"],
            lights=tuple(
                PointLight(
                    position=p["position"], color=p["color"], k_l=p["k_l"], k_q=p["k_q"]
                )
                for p in obj["points"]
            ),
        )
    except KeyError as exc:
        raise InvalidParam(f"lighting JSON missing field {exc}") from exc


def material_to_json(material):
    out = {"albedo": np.asarray(material.albedo).tolist()}
    if material.specular is not None:
        out["specular"] = {
            "k_s": material.specular.k_s.tolist(),
            "shininess": material.specular.shininess,
        }
    else:
        out["specular"] = None
    return out


def material_from_json(obj):
    try:
        spec = obj.get("specular")
        specular = None
        if spec is not None:
            specular = Specular(k_s=spec["k_s"], shininess=spec["shininess"])
        return Material(albedo=obj["albedo"], specular=specular)
    except KeyError as exc:
        raise InvalidParam(f"material JSON missing field {exc}") from exc
