"""Surface-based gaze fixation density maps over 3D triangle meshes.

Computes per-sample fixation density fields on mesh surfaces from recorded
eye-gaze fixation logs, independent of mesh resolution and UV layout, with
depth-buffer occlusion and a 4-sigma gaze-cone sample filter.
"""

from .density import DensityMap, GenerationConfig, Timings, accumulate_fixation, generate, normalize
from .errors import (
    ConfigError,
    GazeOutsideFrustumError,
    GazemapError,
    InvalidFrustumError,
    LayoutMismatchError,
    ParseError,
)
from .estimator import FixationDensityMapper
from .gaze import (
    CropFrustum,
    EllipseParams,
    Fixation,
    GazeCone,
    build_crop_frustum,
    crop_bounds,
    crop_projection_matrix,
    ellipse_intersection,
    gaussian_weight,
    parse_fixation_log,
    perspective_matrix,
)
from .geometry import (
    Mesh,
    SampledMesh,
    Scene,
    SceneObject,
    Transform,
    TriangleSampling,
    adaptive_resolution,
    build_sampled_mesh,
    build_sampled_meshes,
    load_obj,
    load_scene_manifest,
    rowcol_to_barycentric,
    sample_index_to_rowcol,
    sample_world_position,
    triangle_area,
)
from .io_export import load_config, load_map, save_map, scene_layout_hash, write_export
from .raster import DepthBuffer, cull_triangles, depth_to_image, is_visible, rasterize_depth
from .render import ColorMap, default_colormap, load_colormap, render_heatmap

__version__ = "0.1.0"
