"""The analytic backward pass against brute-force finite differences.

Renders a random bumpy depth map, defines a scalar probe loss, and
compares render_backward's vector-Jacobian product with central
differences pixel by pixel.
"""

import numpy as np

import surfelgrad as sg
from surfelgrad import shading

rng = np.random.default_rng(3)
camera = sg.make_camera((0, 0, 0), (0, 0, -1), (0, 1, 0), 20, 24, (12, 12))
depth = rng.uniform(1.0, 3.0, size=(12, 12))
material = shading.Material(albedo=(0.7, 0.6, 0.5))
lights = shading.LightingRig(
    ambient=(0.1, 0.1, 0.1),
    lights=(shading.PointLight(position=(0.3, 0.2, 0.4),
                               color=(1, 0.9, 0.8), k_l=0.4, k_q=0.4),),
)

upstream = rng.normal(size=(12, 12, 3)) / depth.size / 3.0
analytic = sg.render_backward(depth, camera, material, lights, upstream)


def probe_loss(d):
    return float(np.sum(sg.render(d, camera, material, lights) * upstream))


fd = sg.finite_diff_grad(probe_loss, depth, sg.fd_epsilon(depth))
rel = np.abs(analytic - fd) / np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
print("max relative disagreement:", rel.max())
print("gradient magnitude range:", np.abs(analytic).min(), "..", np.abs(analytic).max())

# ambient light carries no depth signal at all
dark = shading.LightingRig(ambient=(0.2, 0.2, 0.2), lights=())
g0 = sg.render_backward(depth, camera, material, dark, upstream)
print("ambient-only gradient is exactly zero:", not g0.any())
