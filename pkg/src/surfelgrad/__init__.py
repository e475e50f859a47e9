"""surfelgrad: a differentiable surfel-rendering and 3D-scene toolkit.

Depth maps back-project to one surfel per pixel; normals are estimated
from the depth; a local shading model produces the image; and the whole
pipeline carries exact analytic gradients from image space back to the
depth map. Scene generation, reconstruction metrics, a gradient-descent
depth-reconstruction harness, and a mental-rotation benchmark generator
round out the toolkit.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateFrame,
    Diverged,
    EmptyMask,
    EmptySet,
    InvalidParam,
    LightAtSurfel,
    NonFiniteOutput,
    NonPositiveDepth,
    OutOfBounds,
    PlacementFailure,
    ResolutionMismatch,
    SamplingFailure,
    SurfelError,
)
from .geometry import (
    Camera,
    Ray,
    camera_from_json,
    camera_to_json,
    camera_to_world,
    make_camera,
    primary_ray,
    world_to_camera,
)
from .surfels import (
    SurfelField,
    backproject,
    build_surfel_field,
    estimate_normals,
    estimate_normals_lsq_oracle,
    reproject,
)
from .shading import (
    LightingRig,
    Material,
    PointLight,
    Specular,
    render,
    shade,
    shade_phong,
)
from .gradients import (
    fd_epsilon,
    finite_diff_grad,
    image_loss_and_grad,
    render_backward,
)
from .metrics import chamfer, hausdorff, mse_depth, surfels_to_pointset
from .scene import (
    Primitive,
    SceneConfig,
    SceneSpec,
    sample_camera_pose,
    sample_scene,
    scene_from_json,
    scene_to_json,
    trace_depth,
)
from .iqtt import IqttConfig, IqttQuestion, gen_iqtt, sample_polycube
from .reconstruct import ReconConfig, ReconReport, reconstruct_depth, total_variation
from .fileio import read_pfm, write_image_png, write_normals_png, write_pfm
