"""Analytic backward pass of the render pipeline, plus a finite-difference
verification oracle.

render_backward computes the exact vector-Jacobian product of
shading.render with respect to the depth map, chaining

    shading  ->  cross-product normals  ->  back-projection.

Subgradient conventions: max(0, x) differentiates to 0 at x = 0; the
normal sign flip (n_z enforcement) is treated as locally constant; pixels
flagged degenerate by the normal estimator contribute and receive zero
gradient.
"""

import numpy as np

from . import geometry, surfels
from .errors import InvalidParam, LightAtSurfel, NonFiniteOutput, ResolutionMismatch
from .shading import LIGHT_DISTANCE_EPS


def _dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _cross(a, b):
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _norm(a):
    return np.sqrt(a[..., 0] ** 2 + a[..., 1] ** 2 + a[..., 2] ** 2)


def render_backward(depth, camera, material, lights, upstream):
    """Map an image-shaped upstream gradient to a depth-shaped gradient.

    upstream is dL/dI with shape (H, W, 3); the result is dL/ddepth with
    shape (H, W). Degenerate-normal pixels are zeroed per the GradMap
    contract.
    """
    d_map = surfels.validate_depth(depth, camera)
    u = np.asarray(upstream, dtype=np.float64)
    if u.shape != (camera.rows, camera.cols, 3):
        raise ResolutionMismatch(
            f"upstream shape {u.shape} != {(camera.rows, camera.cols, 3)}"
        )

    # forward recompute, keeping every intermediate the chain rule needs
    g = surfels.ray_scale_grid(camera)
    p = d_map[..., None] * g
    tx, ty = surfels._tangents(p)
    raw = _cross(tx, ty)
    nn2 = _dot(raw, raw)
    scale2 = _dot(tx, tx) * _dot(ty, ty)
    degenerate = nn2 <= 1e-24 * np.maximum(scale2, 1e-300)
    safe_nrm = np.sqrt(np.where(degenerate, 1.0, nn2))
    n = raw / safe_nrm[..., None]
    sign = np.where(n[..., 2] < 0, -1.0, 1.0)
    n = sign[..., None] * n
    degenerate = degenerate | (np.abs(n[..., 2]) < surfels.DEGENERATE_NZ_EPS)
    n = np.where(degenerate[..., None], np.array([0.0, 0.0, 1.0]), n)

    albedo = material.albedo  # (3,) or (H, W, 3); broadcasts either way
    spec = material.specular
    if spec is not None:
        p_len = _norm(p)
        v = -p / p_len[..., None]

    g_n = np.zeros_like(p)  # dL/dnormal
    g_p = np.zeros_like(p)  # dL/dposition

    for j, light in enumerate(lights.lights):
        lp = geometry.world_to_camera(camera, light.position)
        d = lp - p
        r = _norm(d)
        if np.any(r < LIGHT_DISTANCE_EPS):
            bad = np.argwhere(r < LIGHT_DISTANCE_EPS)[0]
            raise LightAtSurfel(pixel=tuple(int(x) for x in bad), light_index=j)
        d_hat = d / r[..., None]
        atten = 1.0 / (light.k_l * r + light.k_q * r * r)
        datten_dr = -(light.k_l + 2.0 * light.k_q * r) * atten * atten

        # diffuse: albedo * L * atten * max(0, n.d/r), summed over channels
        w = _dot(u, albedo * light.color)
        craw = _dot(n, d) / r
        gate = craw > 0.0
        c = np.where(gate, craw, 0.0)

        g_atten = w * c
        g_craw = np.where(gate, w * atten, 0.0)
        g_n += g_craw[..., None] * d / r[..., None]
        g_d = g_craw[..., None] * (n - craw[..., None] * d_hat) / r[..., None]
        g_d += (g_atten * datten_dr)[..., None] * d_hat

        if spec is not None:
            # specular: k_s * L * atten * max(0, R.V)^alpha
            w_s = _dot(u, spec.k_s * light.color)
            dn = _dot(d_hat, n)
            refl = -d_hat + 2.0 * dn[..., None] * n
            mraw = _dot(refl, v)
            sgate = mraw > 0.0
            m = np.where(sgate, mraw, 0.0)
            lobe = m**spec.shininess

            g_atten_s = w_s * lobe
            g_d += (g_atten_s * datten_dr)[..., None] * d_hat
            g_m = np.where(sgate, w_s * atten * spec.shininess * m ** (spec.shininess - 1.0), 0.0)
            g_refl = g_m[..., None] * v
            g_v = g_m[..., None] * refl
            # R = -d_hat + 2 (d_hat.n) n
            g_n += 2.0 * (
                d_hat * _dot(n, g_refl)[..., None] + dn[..., None] * g_refl
            )
            g_dhat = -g_refl + 2.0 * n * _dot(n, g_refl)[..., None]
            g_d += (g_dhat - d_hat * _dot(d_hat, g_dhat)[..., None]) / r[..., None]
            # V = -P/|P|
            g_p += -(g_v - v * _dot(v, g_v)[..., None]) / p_len[..., None]

        g_p -= g_d  # d = light - P

    # normalization + sign flip (sign held constant)
    g_n = np.where(degenerate[..., None], 0.0, g_n)
    g_raw = sign[..., None] * (g_n - n * _dot(n, g_n)[..., None]) / safe_nrm[..., None]
    g_raw = np.where(degenerate[..., None], 0.0, g_raw)

    # cross product: raw = tx x ty
    g_tx = _cross(ty, g_raw)
    g_ty = _cross(g_raw, tx)

    # adjoint of the difference stencils (one-sided rows/cols at borders)
    g_p[:, 2:] += g_tx[:, 1:-1]
    g_p[:, :-2] -= g_tx[:, 1:-1]
    g_p[:, 1] += g_tx[:, 0]
    g_p[:, 0] -= g_tx[:, 0]
    g_p[:, -1] += g_tx[:, -1]
    g_p[:, -2] -= g_tx[:, -1]

    g_p[:-2, :] += g_ty[1:-1, :]
    g_p[2:, :] -= g_ty[1:-1, :]
    g_p[0, :] += g_ty[0, :]
    g_p[1, :] -= g_ty[0, :]
    g_p[-2, :] += g_ty[-1, :]
    g_p[-1, :] -= g_ty[-1, :]

    grad = _dot(g_p, g)  # P = depth * G
    grad = np.where(degenerate, 0.0, grad)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteOutput("render_backward produced NaN/Inf")
    return grad


def finite_diff_grad(scalar_loss_fn, depth, epsilon):
    """Central-difference gradient of a scalar function of the depth map.

    epsilon may be a scalar or a per-pixel array. This is the verification
    oracle for render_backward; it never shares code with it.
    """
    d = np.asarray(depth, dtype=np.float64)
    eps = np.broadcast_to(np.asarray(epsilon, dtype=np.float64), d.shape)
    if np.any(eps <= 0):
        raise InvalidParam("epsilon must be > 0")
    grad = np.zeros_like(d)
    for r in range(d.shape[0]):
        for c in range(d.shape[1]):
            e = eps[r, c]
            bumped = d.copy()
            bumped[r, c] = d[r, c] + e
            hi = scalar_loss_fn(bumped)
            bumped[r, c] = d[r, c] - e
            lo = scalar_loss_fn(bumped)
            grad[r, c] = (hi - lo) / (2.0 * e)
    return grad


def fd_epsilon(depth, rel=1e-5):
    """Step size for finite differences, scaled by local depth magnitude."""
    return rel * np.maximum(np.asarray(depth, dtype=np.float64), 1.0)


def image_loss_and_grad(rendered, target):
    """Mean squared error over all pixels/channels and its image gradient."""
    a = np.asarray(rendered, dtype=np.float64)
    b = np.asarray(target, dtype=np.float64)
    if a.shape != b.shape:
        raise ResolutionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    diff = a - b
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def clamp_margins(depth, camera, material, lights):
    """Per-pixel distance to the nearest max(0, .) kink of the forward pass.

    Used by gradient-check harnesses to exclude pixels where central
    differences straddle a clamp. Returns an (H, W) array of min |margin|
    over lights (and over the specular lobe when present).
    """
    field = surfels.build_surfel_field(depth, camera, material.albedo)
    p, n = field.positions, field.normals
    margin = np.full(field.resolution, np.inf)
    spec = material.specular
    if spec is not None:
        v = -p / np.linalg.norm(p, axis=-1, keepdims=True)
    for light in lights.lights:
        lp = geometry.world_to_camera(camera, light.position)
        d = lp - p
        r = np.linalg.norm(d, axis=-1)
        margin = np.minimum(margin, np.abs(_dot(n, d) / r))
        if spec is not None:
            d_hat = d / r[..., None]
            refl = -d_hat + 2.0 * _dot(d_hat, n)[..., None] * n
            margin = np.minimum(margin, np.abs(_dot(refl, v)))
    return margin
