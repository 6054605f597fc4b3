"""Brute-force reference implementations used by tests and acceptance checks.

Visibility here is geometric ray casting, deliberately a different
algorithm from the depth-buffer path, so agreement between the two is
evidence rather than tautology. Test scale only.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from .density import DensityMap, GenerationConfig, _SampleCache
from .gaze import Fixation, gaussian_weight
from .geometry import Scene, SampledMesh
from .raster import scene_world_triangles

__all__ = ["ray_visible", "ray_visible_many", "cone_contains", "naive_accumulate"]

_SLACK = 1e-6  # meters; excludes the self-hit at the target surface
_EPS = 1e-12
_EDGE = 1e-9  # barycentric tolerance: an exact shared-edge crossing must
# count as a hit on a watertight surface, not slip between both triangles


@njit(cache=True)
def _nearest_hit(tris, ox, oy, oz, dx, dy, dz):
    """Nearest ray/triangle hit distance over (T, 3, 3) triangles, else inf."""
    best = np.inf
    for t in range(tris.shape[0]):
        e1x = tris[t, 1, 0] - tris[t, 0, 0]
        e1y = tris[t, 1, 1] - tris[t, 0, 1]
        e1z = tris[t, 1, 2] - tris[t, 0, 2]
        e2x = tris[t, 2, 0] - tris[t, 0, 0]
        e2y = tris[t, 2, 1] - tris[t, 0, 1]
        e2z = tris[t, 2, 2] - tris[t, 0, 2]
        px = dy * e2z - dz * e2y
        py = dz * e2x - dx * e2z
        pz = dx * e2y - dy * e2x
        det = e1x * px + e1y * py + e1z * pz
        if abs(det) <= _EPS:
            continue
        inv = 1.0 / det
        tx = ox - tris[t, 0, 0]
        ty = oy - tris[t, 0, 1]
        tz = oz - tris[t, 0, 2]
        u = (tx * px + ty * py + tz * pz) * inv
        if u < -_EDGE or u > 1.0 + _EDGE:
            continue
        qx = ty * e1z - tz * e1y
        qy = tz * e1x - tx * e1z
        qz = tx * e1y - ty * e1x
        v = (dx * qx + dy * qy + dz * qz) * inv
        if v < -_EDGE or u + v > 1.0 + _EDGE:
            continue
        dist = (e2x * qx + e2y * qy + e2z * qz) * inv
        if dist > _EPS and dist < best:
            best = dist
    return best


@njit(parallel=True, cache=True)
def _visible_many(tris, origin, targets, out):
    for i in prange(targets.shape[0]):
        dx = targets[i, 0] - origin[0]
        dy = targets[i, 1] - origin[1]
        dz = targets[i, 2] - origin[2]
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        if dist == 0.0:
            out[i] = True
            continue
        hit = _nearest_hit(tris, origin[0], origin[1], origin[2],
                           dx / dist, dy / dist, dz / dist)
        out[i] = hit >= dist - _SLACK


def ray_visible(scene: Scene, origin, target_point, overrides=None) -> bool:
    """True iff nothing in the scene blocks the segment origin -> target.

    An intersection within 1e-6 m of the target itself does not count,
    so a point lying on a surface is visible from an unobstructed viewpoint.
    """
    origin = np.asarray(origin, dtype=np.float64)
    target = np.asarray(target_point, dtype=np.float64)
    if float(np.linalg.norm(target - origin)) == 0.0:
        raise ValueError("origin and target coincide")
    tris = scene_world_triangles(scene, overrides)
    if len(tris) == 0:
        return True
    return bool(ray_visible_many(tris, origin, target[None, :])[0])


def ray_visible_many(tris_world: np.ndarray, origin, targets: np.ndarray) -> np.ndarray:
    """Vectorized ray_visible over many target points against fixed triangles."""
    origin = np.asarray(origin, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    out = np.empty(len(targets), dtype=np.bool_)
    if len(targets) == 0:
        return out
    _visible_many(np.ascontiguousarray(tris_world, dtype=np.float64), origin, targets, out)
    return out


def cone_contains(gaze_dir, p, phi: float) -> bool:
    """Closed-cone membership: angle(p, gaze_dir) <= phi and p in front."""
    g = np.asarray(gaze_dir, dtype=np.float64)
    g = g / np.linalg.norm(g)
    p = np.asarray(p, dtype=np.float64)
    d1 = float(p @ g)
    if d1 <= 0.0:
        return False
    norm = float(np.linalg.norm(p))
    if norm == 0.0:
        return False
    angle = np.arccos(min(1.0, max(-1.0, d1 / norm)))
    return bool(angle <= phi)


def naive_accumulate(
    scene: Scene,
    sampled_meshes: dict[str, SampledMesh],
    fixations: list[Fixation],
    config: GenerationConfig,
) -> DensityMap:
    """Reference accumulation: every sample, ray-cast occlusion, no filtering.

    Uses the same Gaussian and 4-sigma cutoff as the main path but decides
    visibility by casting a ray from the viewpoint to each sample.
    """
    config.validate()
    cone = config.cone()
    dmap = DensityMap.zeros(sampled_meshes)
    cache = _SampleCache(scene, sampled_meshes)
    included = (
        scene.object_ids
        if config.object_include_list is None
        else [o for o in scene.object_ids if o in config.object_include_list]
    )
    for fx in fixations:
        view = fx.view_matrix()
        tris = scene_world_triangles(scene, fx.overrides)
        for oid in included:
            values = dmap.values[oid]
            if len(values) == 0:
                continue
            world = cache.world(oid, fx)
            visible = ray_visible_many(tris, fx.camera_position, world)
            cam = world @ view[:3, :3].T + view[:3, 3]
            for i in np.nonzero(visible)[0]:
                w = gaussian_weight(cam[i], fx.gaze_dir, fx.duration, cone)
                values[i] += w
        dmap.global_max = max(
            [dmap.global_max] + [float(v.max()) for v in dmap.values.values() if len(v)]
        )
    return dmap
