"""Software depth rasterization and point-visibility queries.

Depth is stored as linear eye-space distance along -z (meters), so the
visibility tolerance has a uniform physical meaning everywhere in the
frustum. No backface culling: gaze may land on back-facing geometry of open
meshes, and closed meshes self-occlude through their nearer front faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidFrustumError
from .geometry import Scene, Transform

__all__ = [
    "DepthBuffer",
    "rasterize_depth",
    "rasterize_triangles",
    "is_visible",
    "cull_triangles",
    "frustum_planes",
    "scene_world_triangles",
    "depth_to_image",
]

DEFAULT_EPS_ABS = 1e-3  # meters
DEFAULT_EPS_REL = 1e-3
DEFAULT_RESOLUTION = 512


@dataclass(frozen=True)
class DepthBuffer:
    """Immutable min-depth image plus the matrices it was rendered with."""

    depth: np.ndarray  # (H, W) eye-space distance, +inf where nothing drawn
    view_matrix: np.ndarray
    projection_matrix: np.ndarray
    near: float
    far: float

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def height(self) -> int:
        return self.depth.shape[0]


def frustum_planes(view_projection: np.ndarray) -> np.ndarray:
    """Six inward-facing frustum planes (a, b, c, d) from a combined matrix."""
    m = np.asarray(view_projection, dtype=np.float64)
    rows = [
        m[3] + m[0],  # left
        m[3] - m[0],  # right
        m[3] + m[1],  # bottom
        m[3] - m[1],  # top
        m[3] + m[2],  # near
        m[3] - m[2],  # far
    ]
    return np.array(rows)


def scene_world_triangles(
    scene: Scene, overrides: dict[str, Transform] | None = None
) -> np.ndarray:
    """All scene triangles in world space, concatenated in object order."""
    parts = []
    for obj in scene.objects:
        t = overrides.get(obj.object_id) if overrides else None
        parts.append(obj.world_triangles(t))
    if not parts:
        return np.zeros((0, 3, 3))
    return np.concatenate(parts, axis=0)


def cull_triangles(scene: Scene, planes: np.ndarray,
                   overrides: dict[str, Transform] | None = None) -> np.ndarray:
    """Conservative frustum culling; returns the kept (T', 3, 3) triangles.

    A triangle is dropped only when all three vertices lie outside one
    frustum plane, so anything intersecting the frustum survives.
    """
    tris = scene_world_triangles(scene, overrides)
    if len(tris) == 0:
        return tris
    keep = kernels.cull_mask(tris, np.ascontiguousarray(planes, dtype=np.float64))
    return tris[keep]


_DUMMY_ID = np.zeros((1, 1), dtype=np.int32)
_DUMMY_BARY = np.zeros((1, 1, 3), dtype=np.float64)


def rasterize_triangles(
    tris_world: np.ndarray,
    view_matrix: np.ndarray,
    projection_matrix: np.ndarray,
    resolution: tuple[int, int],
) -> DepthBuffer:
    """Render world-space triangles into a fresh min-depth buffer."""
    width, height = resolution
    if width < 1 or height < 1:
        raise InvalidFrustumError(f"buffer resolution must be >= 1x1, got {resolution}")
    view = np.asarray(view_matrix, dtype=np.float64)
    proj = np.asarray(projection_matrix, dtype=np.float64)
    from .gaze import frustum_from_matrix

    _, _, _, _, near, far = frustum_from_matrix(proj)
    depth = np.full((height, width), np.inf)
    if len(tris_world):
        kernels.rasterize(
            np.ascontiguousarray(tris_world, dtype=np.float64),
            np.ascontiguousarray(view[:3, :3]),
            np.ascontiguousarray(view[:3, 3]),
            proj[0, 0], proj[1, 1], proj[0, 2], proj[1, 2],
            width, height, near, far,
            depth, _DUMMY_ID, _DUMMY_BARY, False,
        )
    return DepthBuffer(depth, view, proj, near, far)


def rasterize_depth(
    scene: Scene,
    view_matrix: np.ndarray,
    projection_matrix: np.ndarray,
    resolution: tuple[int, int],
    overrides: dict[str, Transform] | None = None,
) -> DepthBuffer:
    """Cull the scene against the frustum and render its depth buffer."""
    planes = frustum_planes(np.asarray(projection_matrix) @ np.asarray(view_matrix))
    tris = cull_triangles(scene, planes, overrides)
    return rasterize_triangles(tris, view_matrix, projection_matrix, resolution)


def is_visible(
    buffer: DepthBuffer,
    world_point,
    eps_abs: float = DEFAULT_EPS_ABS,
    eps_rel: float = DEFAULT_EPS_REL,
) -> bool:
    """Depth-buffer visibility of a world point from the buffer's viewpoint.

    False outside the viewport or in front of the near plane; otherwise the
    point's eye-space depth must match the stored depth within
    max(eps_abs, eps_rel * depth).
    """
    p = np.asarray(world_point, dtype=np.float64)
    cam = buffer.view_matrix[:3, :3] @ p + buffer.view_matrix[:3, 3]
    w = -cam[2]
    if w <= 0.0:
        return False
    d = w
    if d < buffer.near:
        return False
    proj = buffer.projection_matrix
    ndc_x = (proj[0, 0] * cam[0] + proj[0, 2] * cam[2]) / w
    ndc_y = (proj[1, 1] * cam[1] + proj[1, 2] * cam[2]) / w
    if not (-1.0 <= ndc_x <= 1.0 and -1.0 <= ndc_y <= 1.0):
        return False
    eps = max(eps_abs, eps_rel * d)
    return _depth_match(
        buffer.depth, (ndc_x + 1.0) * 0.5 * buffer.width, (1.0 - ndc_y) * 0.5 * buffer.height,
        d, eps,
    )


def _depth_match(depth: np.ndarray, fx: float, fy: float, d: float, eps: float) -> bool:
    """Depth comparison at a fractional pixel position.

    Delegates to the jitted kernel so visibility queries and the
    accumulation loop share one depth-test implementation: bilinear over
    the 2x2 quad on smooth coverage, any finite texel of the 3x3
    neighborhood at depth edges.
    """
    return bool(kernels.depth_match(depth, fx, fy, d, eps))


def depth_to_image(buffer: DepthBuffer) -> np.ndarray:
    """Grayscale debug view of a depth buffer (nearest = white), uint8 (H, W)."""
    d = buffer.depth
    finite = np.isfinite(d)
    img = np.zeros(d.shape, dtype=np.uint8)
    if finite.any():
        lo = d[finite].min()
        hi = d[finite].max()
        span = hi - lo if hi > lo else 1.0
        img[finite] = np.round(255.0 * (1.0 - (d[finite] - lo) / span)).astype(np.uint8)
    return img
