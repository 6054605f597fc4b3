"""Offscreen heatmap rendering of a normalized density map.

Fragments interpolate the three samples of the enclosing sub-triangle of
the sampling grid (piecewise-linear field over each triangle), then map the
value through a gamma exponent and a color ramp. Background pixels are
black. Rendering is serial and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .density import DensityMap
from .errors import ConfigError, ParseError
from .gaze import perspective_matrix
from .geometry import Scene, SampledMesh, quat_to_matrix

__all__ = ["ColorMap", "default_colormap", "load_colormap", "render_heatmap", "camera_view_matrix"]


@dataclass(frozen=True)
class ColorMap:
    """Value-to-RGB ramp with a gamma exponent applied before lookup."""

    stops: tuple[tuple[float, tuple[float, float, float]], ...]
    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        vs = [s[0] for s in self.stops]
        if len(vs) < 2 or vs[0] != 0.0 or vs[-1] != 1.0 or any(b <= a for a, b in zip(vs, vs[1:])):
            raise ConfigError("colormap stops must increase strictly from 0 to 1")

    def with_gamma(self, gamma: float) -> "ColorMap":
        return ColorMap(self.stops, gamma)

    def rgb(self, values: np.ndarray) -> np.ndarray:
        """(N,) normalized values -> (N, 3) float RGB in [0, 1]."""
        v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0) ** self.gamma
        xs = np.array([s[0] for s in self.stops])
        cols = np.array([s[1] for s in self.stops])
        return np.stack([np.interp(v, xs, cols[:, c]) for c in range(3)], axis=-1)


def default_colormap(gamma: float = 1.0) -> ColorMap:
    """Blue -> green -> yellow -> red ramp over [0, 1]."""
    return ColorMap(
        stops=(
            (0.0, (0.0, 0.0, 1.0)),
            (1.0 / 3.0, (0.0, 1.0, 0.0)),
            (2.0 / 3.0, (1.0, 1.0, 0.0)),
            (1.0, (1.0, 0.0, 0.0)),
        ),
        gamma=gamma,
    )


def load_colormap(path, gamma: float = 1.0) -> ColorMap:
    """Read a colormap file: one 'stop r g b' line per stop, floats in [0, 1]."""
    path = Path(path)
    stops = []
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError("expected: stop r g b", path, ln)
        try:
            v, r, g, b = (float(p) for p in parts)
        except ValueError as e:
            raise ParseError(str(e), path, ln)
        stops.append((v, (r, g, b)))
    try:
        return ColorMap(tuple(stops), gamma)
    except ConfigError as e:
        raise ParseError(str(e), path)


def camera_view_matrix(position, rotation_quat) -> np.ndarray:
    """4x4 world-to-camera matrix from a camera pose (position, xyzw quaternion)."""
    rot = quat_to_matrix(rotation_quat)
    m = np.eye(4)
    m[:3, :3] = rot.T
    m[:3, 3] = -rot.T @ np.asarray(position, dtype=np.float64)
    return m


def render_heatmap(
    scene: Scene,
    dmap: DensityMap,
    sampled_meshes: dict[str, SampledMesh],
    camera_position,
    camera_rotation,
    frustum,
    colormap: ColorMap | None = None,
    resolution: tuple[int, int] = (800, 600),
    output_path=None,
) -> np.ndarray:
    """Render the scene's density values from a camera; returns (H, W, 3) uint8.

    ``frustum`` is (l, r, t, b, n, f) like a fixation's. When ``output_path``
    is given the image is also written as PNG.
    """
    if not dmap.normalized:
        raise ConfigError("render_heatmap expects a normalized density map")
    cmap = colormap if colormap is not None else default_colormap()
    width, height = resolution
    l, r, t, b, n, f = frustum
    proj = perspective_matrix(l, r, b, t, n, f)
    view = camera_view_matrix(camera_position, camera_rotation)

    # concatenated triangle arrays with per-triangle object/layout context
    tris, obj_of_tri, res_of_tri, sample_base = [], [], [], []
    value_offset = 0
    values_all = []
    for oi, obj in enumerate(scene.objects):
        sm = sampled_meshes[obj.object_id]
        tris.append(obj.world_triangles())
        obj_of_tri.append(np.full(len(sm.counts), oi, dtype=np.int64))
        res_of_tri.append(sm.resolutions)
        sample_base.append(sm.offsets + value_offset)
        values_all.append(dmap.values[obj.object_id])
        value_offset += sm.total_samples
    tris = np.concatenate(tris) if tris else np.zeros((0, 3, 3))
    obj_of_tri = np.concatenate(obj_of_tri) if len(obj_of_tri) else np.zeros(0, dtype=np.int64)
    res_of_tri = np.concatenate(res_of_tri) if len(res_of_tri) else np.zeros(0, dtype=np.int64)
    sample_base = np.concatenate(sample_base) if len(sample_base) else np.zeros(0, dtype=np.int64)
    values_all = np.concatenate(values_all) if values_all else np.zeros(0)

    depth = np.full((height, width), np.inf)
    tri_id = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3))
    if len(tris):
        kernels.rasterize(
            np.ascontiguousarray(tris, dtype=np.float64),
            np.ascontiguousarray(view[:3, :3]),
            np.ascontiguousarray(view[:3, 3]),
            proj[0, 0], proj[1, 1], proj[0, 2], proj[1, 2],
            width, height, n, f,
            depth, tri_id, bary, True,
        )

    img = np.zeros((height, width, 3), dtype=np.uint8)
    covered = tri_id >= 0
    if covered.any():
        tids = tri_id[covered].astype(np.int64)
        w123 = bary[covered]
        rr = res_of_tri[tids].astype(np.float64)
        # grid coordinates of the fragment: row axis from w3, column axis from w1
        R = np.clip(rr * (1.0 - w123[:, 2]), 0.0, rr)
        C = np.clip(rr * w123[:, 0], 0.0, R)
        r0 = np.minimum(np.floor(R).astype(np.int64), res_of_tri[tids] - 1)
        fr = R - r0
        c0 = np.minimum(np.floor(C).astype(np.int64), r0)
        fc = C - c0
        upper = (fc > fr) & (c0 < r0)
        fc = np.where(~upper, np.minimum(fc, fr), fc)

        def sample_value(row, col):
            idx = sample_base[tids] + row * (row + 1) // 2 + col
            return values_all[idx]

        v_lower = (
            (1.0 - fr) * sample_value(r0, c0)
            + (fr - fc) * sample_value(r0 + 1, c0)
            + fc * sample_value(r0 + 1, c0 + 1)
        )
        c0u = np.minimum(c0, np.maximum(r0 - 1, 0))  # keep (r0, c0+1) in range
        v_upper = (
            (1.0 - fc) * sample_value(r0, c0u)
            + (fc - fr) * sample_value(r0, c0u + 1)
            + fr * sample_value(r0 + 1, c0u + 1)
        )
        vals = np.where(upper, v_upper, v_lower)
        img[covered] = np.round(cmap.rgb(vals) * 255.0).astype(np.uint8)

    if output_path is not None:
        Image.fromarray(img).save(output_path, format="PNG")
    return img
