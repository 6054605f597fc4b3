"""Configuration files, per-sample export, and density map persistence.

The export carries full spatial context per sample (object, triangle,
barycentric weights, local and world positions) so the values can serve as
ground truth downstream without re-deriving the sampling layout. World
positions use the static base pose of each object, not per-fixation
overrides; the file header documents this.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import DensityMap, GenerationConfig
from .errors import ConfigError, LayoutMismatchError, ParseError
from .geometry import Scene, SampledMesh, sample_positions_local, sample_rowcol

__all__ = [
    "ExportRecord",
    "EXPORT_HEADER",
    "write_export",
    "load_config",
    "scene_layout_hash",
    "save_map",
    "load_map",
]

EXPORT_HEADER = (
    "object_id,triangle_index,sample_index,w1,w2,w3,"
    "local_x,local_y,local_z,world_x,world_y,world_z,value"
)

_MAP_MAGIC = "GAZEMAP1"


@dataclass(frozen=True)
class ExportRecord:
    object_id: str
    triangle_index: int
    sample_index: int
    w1: float
    w2: float
    w3: float
    local_x: float
    local_y: float
    local_z: float
    world_x: float
    world_y: float
    world_z: float
    value: float


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_export(
    dmap: DensityMap,
    scene: Scene,
    sampled_meshes: dict[str, SampledMesh],
    path,
    objects: list[str] | None = None,
) -> int:
    """Write one CSV record per sample; returns the record count.

    Records are ordered by (object_id, triangle_index, sample_index), so
    output bytes are deterministic for fixed inputs.
    """
    ids = sorted(sampled_meshes if objects is None else objects)
    count = 0
    with open(path, "w") as fh:
        fh.write("# world positions use each object's static base pose\n")
        fh.write(EXPORT_HEADER + "\n")
        for oid in ids:
            sm = sampled_meshes[oid]
            if sm.total_samples == 0:
                continue
            obj = scene.object(oid)
            values = dmap.values[oid]
            tri_of_sample, within = sm.sample_triangle_arrays()
            row, col = sample_rowcol(within)
            r = sm.resolutions[tri_of_sample].astype(np.float64)
            w1 = col / r
            w2 = (row - col) / r
            w3 = 1.0 - row / r
            local = sample_positions_local(obj.mesh, sm)
            world = obj.transform.apply(local)
            for i in range(sm.total_samples):
                fh.write(
                    ",".join(
                        [
                            oid,
                            str(int(tri_of_sample[i])),
                            str(int(within[i])),
                            _fmt(w1[i]),
                            _fmt(w2[i]),
                            _fmt(w3[i]),
                            _fmt(local[i, 0]),
                            _fmt(local[i, 1]),
                            _fmt(local[i, 2]),
                            _fmt(world[i, 0]),
                            _fmt(world[i, 1]),
                            _fmt(world[i, 2]),
                            _fmt(values[i]),
                        ]
                    )
                    + "\n"
                )
                count += 1
    return count


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

_CONFIG_KEYS = {
    "k",
    "theta",
    "theta_deg",
    "zbuffer_resolution",
    "epsilon_abs",
    "epsilon_rel",
    "time_window",
    "filtering_enabled",
    "objects",
}

_BOOL_VALUES = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def load_config(path) -> GenerationConfig:
    """Parse a flat key=value config file; missing keys take defaults.

    Recognized keys: k, theta (radians) or theta_deg, zbuffer_resolution,
    epsilon_abs, epsilon_rel, time_window (t0:t1), filtering_enabled,
    objects (comma-separated include list). Unknown keys are errors.
    """
    path = Path(path)
    cfg = GenerationConfig()
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", path, ln)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}: line {ln}: unknown config key {key!r}")
        try:
            if key == "k":
                cfg.k = float(value)
            elif key == "theta":
                cfg.theta = float(value)
            elif key == "theta_deg":
                cfg.theta = math.radians(float(value))
            elif key == "zbuffer_resolution":
                cfg.zbuffer_resolution = int(value)
            elif key == "epsilon_abs":
                cfg.epsilon_abs = float(value)
            elif key == "epsilon_rel":
                cfg.epsilon_rel = float(value)
            elif key == "time_window":
                t0, _, t1 = value.partition(":")
                cfg.time_window = (float(t0), float(t1))
            elif key == "filtering_enabled":
                if value.lower() not in _BOOL_VALUES:
                    raise ValueError(f"not a boolean: {value!r}")
                cfg.filtering_enabled = _BOOL_VALUES[value.lower()]
            elif key == "objects":
                cfg.object_include_list = {v.strip() for v in value.split(",") if v.strip()}
        except ValueError as e:
            raise ConfigError(f"{path}: line {ln}: bad value for {key!r}: {e}")
    try:
        cfg.validate()
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}")
    return cfg


# ---------------------------------------------------------------------------
# Density map persistence
# ---------------------------------------------------------------------------


def scene_layout_hash(manifest_path, k: float) -> str:
    """Content hash of the scene manifest, its mesh files, and k.

    A persisted map carries this hash so exports against an edited scene are
    rejected instead of silently misaligned.
    """
    manifest_path = Path(manifest_path)
    h = hashlib.sha256()
    data = manifest_path.read_bytes()
    h.update(data)
    manifest = json.loads(data)
    for entry in manifest.get("objects", []):
        h.update((manifest_path.parent / entry["mesh"]).read_bytes())
    h.update(f"k={k!r}".encode())
    return h.hexdigest()


def save_map(dmap: DensityMap, path, layout_hash: str, k: float) -> None:
    """Persist a map: one JSON header line, then raw little-endian float64."""
    header = {
        "magic": _MAP_MAGIC,
        "layout_hash": layout_hash,
        "k": k,
        "normalized": dmap.normalized,
        "global_max": dmap.global_max,
        "objects": [{"object_id": oid, "total_samples": len(v)} for oid, v in dmap.values.items()],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for v in dmap.values.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_map(path, expect_layout_hash: str | None = None) -> tuple[DensityMap, dict]:
    """Load a persisted map; verifies the layout hash when one is expected."""
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ParseError(f"bad map header: {e}", path)
        if header.get("magic") != _MAP_MAGIC:
            raise ParseError("not a gazemap density map file", path)
        if expect_layout_hash is not None and header["layout_hash"] != expect_layout_hash:
            raise LayoutMismatchError(
                "density map layout hash does not match the scene manifest "
                "(scene or k changed since generation)"
            )
        values = {}
        for entry in header["objects"]:
            n = int(entry["total_samples"])
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise ParseError("truncated value array", path)
            values[entry["object_id"]] = np.frombuffer(buf, dtype="<f8").copy()
    dmap = DensityMap(values, global_max=float(header["global_max"]), normalized=bool(header["normalized"]))
    return dmap, header
