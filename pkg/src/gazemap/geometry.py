"""Scene loading and quasi-uniform surface sampling of triangle meshes.

Each triangle is subdivided at an integer resolution ``r`` chosen from its
area so that the whole mesh carries roughly ``k`` samples per square meter.
A triangle at resolution ``r`` owns ``(r+1)(r+2)/2`` samples laid out in
rows of its barycentric grid, addressable in O(1) both ways
(index -> (row, col) -> barycentric weights).

Conventions: lengths are meters, the coordinate system is right-handed,
object transforms apply scale, then rotation, then translation.
Sample blocks are private per triangle; edge samples of adjacent triangles
are duplicated on purpose so that every sample has exactly one owner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError

__all__ = [
    "Transform",
    "Mesh",
    "SceneObject",
    "Scene",
    "TriangleSampling",
    "SampledMesh",
    "triangle_area",
    "adaptive_resolution",
    "sample_index_to_rowcol",
    "rowcol_to_barycentric",
    "build_sampled_mesh",
    "sample_world_position",
    "quat_to_matrix",
    "load_obj",
    "save_obj",
    "load_scene_manifest",
]

_UNIT_QUAT_TOL = 1e-6


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix for a unit quaternion given as (x, y, z, w)."""
    x, y, z, w = (float(v) for v in q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass(frozen=True)
class Transform:
    """Scale -> rotate -> translate object transform."""

    translation: np.ndarray
    rotation: np.ndarray  # quaternion (x, y, z, w), unit norm
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=np.float64))
        if self.translation.shape != (3,) or self.rotation.shape != (4,) or self.scale.shape != (3,):
            raise ValueError("transform components must be xyz / xyzw / xyz")
        norm = float(np.linalg.norm(self.rotation))
        if abs(norm - 1.0) > _UNIT_QUAT_TOL:
            raise ValueError(f"rotation quaternion norm {norm} not within {_UNIT_QUAT_TOL} of 1")

    @classmethod
    def identity(cls) -> "Transform":
        return cls(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]), np.ones(3))

    def matrix(self) -> np.ndarray:
        """Rotation*scale as a 3x3 linear part (translation kept separate)."""
        return quat_to_matrix(self.rotation) * self.scale[None, :]

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of local points to world space."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix().T + self.translation


@dataclass(frozen=True)
class Mesh:
    """Indexed triangle mesh: (V, 3) vertex positions, (T, 3) faces."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValueError("face index out of range")

    @property
    def triangle_count(self) -> int:
        return len(self.faces)

    def triangle_vertices(self) -> np.ndarray:
        """(T, 3, 3) array of triangle corner positions."""
        return self.vertices[self.faces]


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    mesh: Mesh
    transform: Transform = field(default_factory=Transform.identity)

    def world_triangles(self, transform: Transform | None = None) -> np.ndarray:
        """(T, 3, 3) triangle corners in world space, optionally overriding the pose."""
        t = transform if transform is not None else self.transform
        tri = self.mesh.triangle_vertices()
        return t.apply(tri.reshape(-1, 3)).reshape(tri.shape)


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate object_id in scene")

    def object(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)

    @property
    def object_ids(self) -> list[str]:
        return [o.object_id for o in self.objects]


# ---------------------------------------------------------------------------
# Triangle subdivision and sample indexing
# ---------------------------------------------------------------------------


def triangle_area(v0, v1, v2) -> float:
    """Area of a 3D triangle from its edge lengths (Heron).

    Degenerate triangles return 0; a slightly negative radicand caused by
    rounding is clamped to 0.
    """
    v0 = np.asarray(v0, dtype=np.float64)
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    a = float(np.linalg.norm(v1 - v0))
    b = float(np.linalg.norm(v2 - v1))
    c = float(np.linalg.norm(v2 - v0))
    s = 0.5 * (a + b + c)
    return math.sqrt(max(s * (s - a) * (s - b) * (s - c), 0.0))


def triangle_areas(triangles: np.ndarray) -> np.ndarray:
    """Vectorized Heron areas for a (T, 3, 3) triangle array."""
    tri = np.asarray(triangles, dtype=np.float64)
    a = np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1)
    b = np.linalg.norm(tri[:, 2] - tri[:, 1], axis=1)
    c = np.linalg.norm(tri[:, 2] - tri[:, 0], axis=1)
    s = 0.5 * (a + b + c)
    return np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0.0))


def sample_count(r: int) -> int:
    """Number of samples in a triangle subdivided at resolution r."""
    return (r + 1) * (r + 2) // 2


def adaptive_resolution(area: float, k: float) -> int:
    """Subdivision resolution achieving at least k samples per square meter.

    Solves r^2 + 3r + 2 - 2*k*area = 0 and takes the ceiling of the positive
    root so the achieved density never undershoots k; resolutions below 1
    (discriminant < 25) clamp to 1 so every triangle keeps its three corner
    samples.
    """
    if k <= 0:
        raise ConfigError(f"sampling density k must be > 0, got {k}")
    if area < 0:
        raise ValueError("negative area")
    delta = 1.0 + 8.0 * k * area
    if delta < 25.0:
        return 1
    return max(1, math.ceil((-3.0 + math.sqrt(delta)) / 2.0))


def adaptive_resolutions(areas: np.ndarray, k: float) -> np.ndarray:
    """Vectorized adaptive_resolution."""
    if k <= 0:
        raise ConfigError(f"sampling density k must be > 0, got {k}")
    areas = np.asarray(areas, dtype=np.float64)
    delta = 1.0 + 8.0 * k * areas
    r = np.ceil((-3.0 + np.sqrt(delta)) / 2.0).astype(np.int64)
    r[delta < 25.0] = 1
    return np.maximum(r, 1)


def sample_index_to_rowcol(idx: int) -> tuple[int, int]:
    """Row and column of a sample within its triangle's barycentric grid.

    O(1): inverts the triangular-number row offset analytically, with an
    integer fix-up guarding against sqrt rounding on row boundaries.
    """
    if idx < 0:
        raise IndexError(f"negative sample index {idx}")
    row = math.ceil((-3.0 + math.sqrt(8.0 * idx + 9.0)) / 2.0)
    col = idx - row * (row + 1) // 2
    while col < 0:
        row -= 1
        col = idx - row * (row + 1) // 2
    while col > row:
        row += 1
        col = idx - row * (row + 1) // 2
    return row, col


def sample_rowcol(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized sample_index_to_rowcol."""
    idx = np.asarray(idx, dtype=np.int64)
    row = np.ceil((-3.0 + np.sqrt(8.0 * idx + 9.0)) / 2.0).astype(np.int64)
    col = idx - row * (row + 1) // 2
    # sqrt rounding can be off by one row near triangular-number boundaries
    row[col < 0] -= 1
    col = idx - row * (row + 1) // 2
    row[col > row] += 1
    col = idx - row * (row + 1) // 2
    return row, col


def rowcol_to_barycentric(row: int, col: int, r: int) -> tuple[float, float, float]:
    """Barycentric weights of grid sample (row, col) at resolution r.

    The three corner samples map exactly onto the triangle vertices:
    (r, r) -> v1, (r, 0) -> v2, (0, 0) -> v3.
    """
    if r < 1:
        raise IndexError(f"resolution must be >= 1, got {r}")
    if not (0 <= col <= row <= r):
        raise IndexError(f"sample (row={row}, col={col}) out of range for r={r}")
    w1 = col / r
    w2 = (row - col) / r
    w3 = 1.0 - row / r
    return w1, w2, w3


@dataclass(frozen=True)
class TriangleSampling:
    resolution_r: int
    sample_count: int
    sample_offset: int

    def __post_init__(self):
        if self.resolution_r < 1:
            raise ValueError("resolution must be >= 1")
        if self.sample_count != sample_count(self.resolution_r):
            raise ValueError("sample_count inconsistent with resolution")


@dataclass(frozen=True)
class SampledMesh:
    """Per-triangle sampling layout of one object.

    ``resolutions``, ``counts`` and ``offsets`` are parallel int64 arrays of
    length T; ``offsets`` is the exclusive prefix sum of ``counts`` so the
    sample block of triangle i is [offsets[i], offsets[i] + counts[i]).
    """

    object_id: str
    resolutions: np.ndarray
    counts: np.ndarray
    offsets: np.ndarray
    total_samples: int
    sampling_density_k: float

    def triangle_sampling(self, triangle_index: int) -> TriangleSampling:
        return TriangleSampling(
            resolution_r=int(self.resolutions[triangle_index]),
            sample_count=int(self.counts[triangle_index]),
            sample_offset=int(self.offsets[triangle_index]),
        )

    def sample_triangle_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample (triangle index, index within triangle), both (N,)."""
        tri = np.repeat(np.arange(len(self.counts), dtype=np.int64), self.counts)
        starts = np.repeat(self.offsets, self.counts)
        within = np.arange(self.total_samples, dtype=np.int64) - starts
        return tri, within


def build_sampled_mesh(mesh: Mesh, k: float, object_id: str = "") -> SampledMesh:
    """Assign an adaptive resolution and a contiguous sample block per triangle."""
    areas = triangle_areas(mesh.triangle_vertices()) if mesh.triangle_count else np.zeros(0)
    res = adaptive_resolutions(areas, k)
    counts = (res + 1) * (res + 2) // 2
    offsets = np.zeros(len(counts), dtype=np.int64)
    if len(counts):
        np.cumsum(counts[:-1], out=offsets[1:])
    return SampledMesh(
        object_id=object_id,
        resolutions=res,
        counts=counts,
        offsets=offsets,
        total_samples=int(counts.sum()),
        sampling_density_k=float(k),
    )


def build_sampled_meshes(scene: Scene, k: float) -> dict[str, SampledMesh]:
    """Sampling layout for every object of a scene, keyed by object_id."""
    return {
        obj.object_id: build_sampled_mesh(obj.mesh, k, obj.object_id)
        for obj in scene.objects
    }


def sample_positions_local(mesh: Mesh, sampled: SampledMesh) -> np.ndarray:
    """(N, 3) local-space positions of every sample, in layout order."""
    if sampled.total_samples == 0:
        return np.zeros((0, 3))
    tri_of_sample, within = sampled.sample_triangle_arrays()
    row, col = sample_rowcol(within)
    r = sampled.resolutions[tri_of_sample].astype(np.float64)
    w1 = col / r
    w2 = (row - col) / r
    w3 = 1.0 - row / r
    corners = mesh.triangle_vertices()[tri_of_sample]  # (N, 3, 3)
    return (
        w1[:, None] * corners[:, 0]
        + w2[:, None] * corners[:, 1]
        + w3[:, None] * corners[:, 2]
    )


def sample_world_position(
    scene_object: SceneObject,
    sampled: SampledMesh,
    triangle_index: int,
    sample_index: int,
    transform: Transform | None = None,
) -> np.ndarray:
    """World-space position of one sample (sample_index is local to the triangle)."""
    if not (0 <= triangle_index < len(sampled.counts)):
        raise IndexError(f"triangle index {triangle_index} out of range")
    if not (0 <= sample_index < sampled.counts[triangle_index]):
        raise IndexError(f"sample index {sample_index} out of range")
    r = int(sampled.resolutions[triangle_index])
    row, col = sample_index_to_rowcol(sample_index)
    w1, w2, w3 = rowcol_to_barycentric(row, col, r)
    v = scene_object.mesh.triangle_vertices()[triangle_index]
    local = w1 * v[0] + w2 * v[1] + w3 * v[2]
    t = transform if transform is not None else scene_object.transform
    return t.apply(local[None, :])[0]


# ---------------------------------------------------------------------------
# Scene and mesh files
# ---------------------------------------------------------------------------


def load_obj(path) -> Mesh:
    """Wavefront OBJ subset loader: v and f records only, fan-triangulated.

    Normals, UVs and any other record types are ignored; face entries may use
    the v/vt/vn syntax, only the vertex index is taken.
    """
    path = Path(path)
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ParseError("vertex record needs 3 coordinates", path, ln)
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as e:
                    raise ParseError(f"bad vertex coordinate: {e}", path, ln)
            elif tag == "f":
                try:
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                except ValueError as e:
                    raise ParseError(f"bad face index: {e}", path, ln)
                if len(idx) < 3:
                    raise ParseError("face needs at least 3 vertices", path, ln)
                # OBJ indices are 1-based; negative indices count from the end
                idx = [i - 1 if i > 0 else len(vertices) + i for i in idx]
                for a, b in zip(idx[1:-1], idx[2:]):
                    faces.append([idx[0], a, b])
            # all other record types are ignored
    try:
        return Mesh(np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
    except ValueError as e:
        raise ParseError(str(e), path)


def save_obj(mesh: Mesh, path) -> None:
    """Write a Mesh as a minimal OBJ file (v/f records)."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_scene_manifest(path) -> Scene:
    """Load a JSON scene manifest.

    Schema::

        {"objects": [{"object_id": str, "mesh": "relative/path.obj",
                      "translation": [x, y, z], "rotation": [x, y, z, w],
                      "scale": [x, y, z]}, ...]}

    Mesh paths are resolved relative to the manifest location; translation,
    rotation and scale are optional and default to the identity pose.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}", path)
    if not isinstance(data, dict) or "objects" not in data:
        raise ParseError('manifest must be an object with an "objects" list', path)
    objects = []
    for i, entry in enumerate(data["objects"]):
        try:
            object_id = entry["object_id"]
            mesh_path = path.parent / entry["mesh"]
            transform = Transform(
                np.asarray(entry.get("translation", [0.0, 0.0, 0.0])),
                np.asarray(entry.get("rotation", [0.0, 0.0, 0.0, 1.0])),
                np.asarray(entry.get("scale", [1.0, 1.0, 1.0])),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"objects[{i}]: {e}", path)
        objects.append(SceneObject(object_id, load_obj(mesh_path), transform))
    try:
        return Scene(tuple(objects))
    except ValueError as e:
        raise ParseError(str(e), path)
