"""Fixation density map accumulation and normalization.

Per fixation the pipeline is: build the 4-sigma crop frustum (when
filtering is on), cull triangles, render one depth buffer, then add each
visible sample's Gaussian contribution. The outer loop over fixations is
sequential and the inner per-sample pass is data parallel with disjoint
writes, so results are independent of the worker count. If the crop
frustum cannot be built for a fixation (gaze cone grazing the near plane),
that fixation silently takes the unfiltered path.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, GazeOutsideFrustumError
from .gaze import (
    DEFAULT_THETA,
    Fixation,
    GazeCone,
    SQRT_TWO_PI,
    build_crop_frustum,
)
from .geometry import Scene, SampledMesh, sample_positions_local
from .raster import (
    DEFAULT_EPS_ABS,
    DEFAULT_EPS_REL,
    DEFAULT_RESOLUTION,
    frustum_planes,
    rasterize_triangles,
    scene_world_triangles,
)

__all__ = ["GenerationConfig", "DensityMap", "Timings", "accumulate_fixation", "generate", "normalize"]

DEFAULT_K = 40000.0  # samples per square meter


@dataclass
class GenerationConfig:
    """Tunable parameters of a density map generation run."""

    k: float = DEFAULT_K
    theta: float = DEFAULT_THETA
    zbuffer_resolution: int = DEFAULT_RESOLUTION
    epsilon_abs: float = DEFAULT_EPS_ABS
    epsilon_rel: float = DEFAULT_EPS_REL
    time_window: tuple[float, float] | None = None
    filtering_enabled: bool = True
    object_include_list: set[str] | None = None

    def validate(self) -> "GenerationConfig":
        if self.k <= 0:
            raise ConfigError(f"k must be > 0, got {self.k}")
        if not (0 < self.theta < math.pi / 2):
            raise ConfigError(f"theta must be in (0, pi/2), got {self.theta}")
        if self.zbuffer_resolution < 1:
            raise ConfigError(f"zbuffer_resolution must be >= 1, got {self.zbuffer_resolution}")
        if self.epsilon_abs < 0 or self.epsilon_rel < 0:
            raise ConfigError("epsilon values must be >= 0")
        if self.time_window is not None and self.time_window[0] > self.time_window[1]:
            raise ConfigError(f"empty time window {self.time_window}")
        return self

    def cone(self) -> GazeCone:
        return GazeCone.from_theta(self.theta)


@dataclass
class DensityMap:
    """Per-object sample value arrays plus the tracked global maximum."""

    values: dict[str, np.ndarray]
    global_max: float = 0.0
    normalized: bool = False

    @classmethod
    def zeros(cls, sampled_meshes: dict[str, SampledMesh]) -> "DensityMap":
        return cls({oid: np.zeros(sm.total_samples) for oid, sm in sampled_meshes.items()})

    @property
    def total_samples(self) -> int:
        return sum(len(v) for v in self.values.values())

    def copy(self) -> "DensityMap":
        return DensityMap({k: v.copy() for k, v in self.values.items()}, self.global_max, self.normalized)


@dataclass
class Timings:
    """Accumulated wall-clock seconds per pipeline phase."""

    phases: dict[str, float] = field(default_factory=lambda: {
        "cull": 0.0, "rasterize": 0.0, "accumulate": 0.0, "normalize": 0.0,
    })

    def add(self, phase: str, seconds: float) -> None:
        self.phases[phase] = self.phases.get(phase, 0.0) + seconds


class _SampleCache:
    """World-space sample positions per object, recomputed only on overrides."""

    def __init__(self, scene: Scene, sampled_meshes: dict[str, SampledMesh]):
        self.scene = scene
        self.local: dict[str, np.ndarray] = {}
        self.base_world: dict[str, np.ndarray] = {}
        # static scene triangles, reused across fixations without overrides
        self.world_triangles = scene_world_triangles(scene)
        for obj in scene.objects:
            sm = sampled_meshes.get(obj.object_id)
            if sm is None:
                continue
            local = sample_positions_local(obj.mesh, sm)
            self.local[obj.object_id] = local
            self.base_world[obj.object_id] = np.ascontiguousarray(obj.transform.apply(local))

    def world(self, object_id: str, fixation: Fixation) -> np.ndarray:
        override = fixation.overrides.get(object_id)
        if override is None:
            return self.base_world[object_id]
        return np.ascontiguousarray(override.apply(self.local[object_id]))


def _included_ids(scene: Scene, config: GenerationConfig) -> list[str]:
    if config.object_include_list is None:
        return scene.object_ids
    return [oid for oid in scene.object_ids if oid in config.object_include_list]


def accumulate_fixation(
    dmap: DensityMap,
    scene: Scene,
    sampled_meshes: dict[str, SampledMesh],
    fixation: Fixation,
    config: GenerationConfig,
    cache: _SampleCache | None = None,
    timers: Timings | None = None,
) -> DensityMap:
    """Add one fixation's contribution to the map; updates the running max."""
    if cache is None:
        cache = _SampleCache(scene, sampled_meshes)
    cone = config.cone()
    view = fixation.view_matrix()

    proj = None
    if config.filtering_enabled:
        try:
            proj = build_crop_frustum(fixation, cone).projection_matrix
        except GazeOutsideFrustumError:
            proj = None  # fall back to the full-frustum path for this fixation
    if proj is None:
        proj = fixation.projection_matrix()

    t0 = time.perf_counter()
    tris_world = (
        scene_world_triangles(scene, fixation.overrides)
        if fixation.overrides
        else cache.world_triangles
    )
    planes = frustum_planes(proj @ view)
    if len(tris_world):
        tris = tris_world[kernels.cull_mask(tris_world, np.ascontiguousarray(planes))]
    else:
        tris = tris_world
    t1 = time.perf_counter()
    res = int(config.zbuffer_resolution)
    buffer = rasterize_triangles(tris, view, proj, (res, res))
    t2 = time.perf_counter()

    rot = np.ascontiguousarray(view[:3, :3])
    trans = np.ascontiguousarray(view[:3, 3])
    gaze = np.ascontiguousarray(fixation.gaze_dir)
    amp = fixation.duration / (cone.sigma * SQRT_TWO_PI)
    running_max = dmap.global_max
    for oid in _included_ids(scene, config):
        values = dmap.values[oid]
        if len(values) == 0:
            continue
        pos = cache.world(oid, fixation)
        kernels.accumulate(
            pos, rot, trans, gaze, cone.sigma, amp,
            proj[0, 0], proj[1, 1], proj[0, 2], proj[1, 2],
            buffer.depth, config.epsilon_abs, config.epsilon_rel,
            buffer.near, buffer.far, values,
        )
        running_max = max(running_max, float(values.max()))
    t3 = time.perf_counter()
    dmap.global_max = running_max

    if timers is not None:
        timers.add("cull", t1 - t0)
        timers.add("rasterize", t2 - t1)
        timers.add("accumulate", t3 - t2)
    return dmap


def generate(
    scene: Scene,
    sampled_meshes: dict[str, SampledMesh],
    fixations: list[Fixation],
    config: GenerationConfig,
    workers: int | None = None,
    progress=None,
    timers: Timings | None = None,
) -> DensityMap:
    """Accumulate all fixations in log order into a fresh (un-normalized) map.

    ``workers`` bounds the data-parallel fan-out of the per-sample pass;
    the result is bit-identical for any worker count. ``progress`` is an
    optional callback(processed, total).
    """
    config.validate()
    kernels.set_workers(workers)
    dmap = DensityMap.zeros(sampled_meshes)
    cache = _SampleCache(scene, sampled_meshes)
    total = len(fixations)
    for i, fx in enumerate(fixations):
        accumulate_fixation(dmap, scene, sampled_meshes, fx, config, cache, timers)
        if progress is not None:
            progress(i + 1, total)
    return dmap


def normalize(dmap: DensityMap, timers: Timings | None = None) -> DensityMap:
    """Scale all values by the global maximum into [0, 1]; idempotent."""
    t0 = time.perf_counter()
    if dmap.normalized or dmap.global_max <= 0.0:
        out = dmap.copy()
        out.normalized = True
    else:
        out = DensityMap(
            {k: v / dmap.global_max for k, v in dmap.values.items()},
            global_max=1.0,
            normalized=True,
        )
    if timers is not None:
        timers.add("normalize", time.perf_counter() - t0)
    return out
