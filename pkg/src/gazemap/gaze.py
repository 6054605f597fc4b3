"""Fixation ingestion and the Gaussian gaze-cone model.

A fixation carries the recorded camera pose, its view frustum and the gaze
ray in camera space. Gaze dispersion is modeled as a cone whose angular
deviation ``theta`` corresponds to one standard deviation of a Gaussian
(``sigma = tan(theta)``); contributions are cut off beyond the 4-sigma cone
of half-angle ``phi = atan(4*sigma)``.

The camera looks down -z, +x is right, +y is up; the near clip plane sits
at z = -n. The 4-sigma cone's elliptical intersection with the near plane
yields a cropped sub-frustum used to filter samples and shrink the depth
buffer footprint.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GazeOutsideFrustumError, InvalidFrustumError, ParseError
from .geometry import Transform

__all__ = [
    "GazeCone",
    "Fixation",
    "EllipseParams",
    "CropFrustum",
    "DEFAULT_THETA",
    "parse_fixation_log",
    "gaussian_weight",
    "ellipse_intersection",
    "crop_bounds",
    "crop_projection_matrix",
    "perspective_matrix",
    "frustum_from_matrix",
    "build_crop_frustum",
]

SQRT_TWO_PI = math.sqrt(2.0 * math.pi)

# Angular deviation default: one degree.
DEFAULT_THETA = math.radians(1.0)

_CAMERA_FORWARD = np.array([0.0, 0.0, -1.0])
_CAMERA_RIGHT = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class GazeCone:
    """Gaussian gaze cone: theta = 1 standard deviation, phi = 4-sigma cutoff."""

    theta: float
    sigma: float
    phi: float

    def __post_init__(self):
        if not (0.0 < self.theta < math.pi / 2):
            raise ValueError(f"theta must be in (0, pi/2), got {self.theta}")

    @classmethod
    def from_theta(cls, theta: float) -> "GazeCone":
        sigma = math.tan(theta)
        return cls(theta=theta, sigma=sigma, phi=math.atan(4.0 * sigma))


@dataclass(frozen=True)
class Fixation:
    """One gaze fixation with the camera state it was recorded under.

    ``frustum`` is (left, right, top, bottom, near, far) on the near plane,
    ``gaze_dir`` is a unit vector in camera-local space pointing into the
    viewed half-space (negative z). ``overrides`` carries optional per-object
    poses valid for this fixation only (dynamic scenes).
    """

    start_time: float
    duration: float
    camera_position: np.ndarray
    camera_rotation: np.ndarray  # quaternion (x, y, z, w)
    frustum: tuple[float, float, float, float, float, float]
    gaze_dir: np.ndarray
    overrides: dict[str, Transform] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "camera_position", np.asarray(self.camera_position, dtype=np.float64))
        object.__setattr__(self, "camera_rotation", np.asarray(self.camera_rotation, dtype=np.float64))
        gd = np.asarray(self.gaze_dir, dtype=np.float64)
        norm = float(np.linalg.norm(gd))
        if norm == 0.0:
            raise ValueError("gaze_dir must be a nonzero vector")
        object.__setattr__(self, "gaze_dir", gd / norm)
        l, r, t, b, n, f = self.frustum
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if not (n > 0 and f > n):
            raise ValueError("frustum needs 0 < near < far")
        if not (l < r and b < t):
            raise ValueError("frustum needs left < right and bottom < top")
        if self.gaze_dir[2] >= 0:
            raise ValueError("gaze_dir must point into the viewed half-space (z < 0)")

    @property
    def near(self) -> float:
        return self.frustum[4]

    @property
    def far(self) -> float:
        return self.frustum[5]

    def view_matrix(self) -> np.ndarray:
        """4x4 world-to-camera matrix from the recorded pose."""
        from .geometry import quat_to_matrix

        rot = quat_to_matrix(self.camera_rotation)
        m = np.eye(4)
        m[:3, :3] = rot.T
        m[:3, 3] = -rot.T @ self.camera_position
        return m

    def projection_matrix(self) -> np.ndarray:
        """Full-frustum perspective matrix of the recorded camera."""
        l, r, t, b, n, f = self.frustum
        return perspective_matrix(l, r, b, t, n, f)


def parse_fixation_log(path, time_window=None) -> list[Fixation]:
    """Parse a line-delimited fixation log, keeping start_time in [t0, t1).

    Line schema (whitespace or comma separated, ``#`` starts a comment)::

        start_time_s duration_s cam_pos_xyz(3) cam_rot_quat_xyzw(4)
        frustum_lrtbnf(6) gaze_dir_xyz(3) [object_id tx ty tz qx qy qz qw sx sy sz]...

    The trailing groups are optional per-object pose overrides for dynamic
    scenes. A leading non-numeric header line is skipped.
    """
    path = Path(path)
    fixations: list[Fixation] = []
    t0, t1 = (None, None) if time_window is None else time_window
    with open(path, "r") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = [t for t in re.split(r"[,\s]+", line) if t]
            try:
                float(tokens[0])
            except ValueError:
                continue  # header line
            if len(tokens) < 18:
                raise ParseError(f"expected at least 18 fields, got {len(tokens)}", path, ln)
            try:
                vals = [float(t) for t in tokens[:18]]
            except ValueError as e:
                raise ParseError(f"bad numeric field: {e}", path, ln)
            overrides: dict[str, Transform] = {}
            rest = tokens[18:]
            if len(rest) % 11 != 0:
                raise ParseError("pose override groups must be (object_id + 10 floats)", path, ln)
            for g in range(0, len(rest), 11):
                oid = rest[g]
                try:
                    nums = [float(t) for t in rest[g + 1 : g + 11]]
                    overrides[oid] = Transform(np.array(nums[0:3]), np.array(nums[3:7]), np.array(nums[7:10]))
                except ValueError as e:
                    raise ParseError(f"bad pose override for {oid!r}: {e}", path, ln)
            start = vals[0]
            if t0 is not None and not (t0 <= start < t1):
                continue
            try:
                fixations.append(
                    Fixation(
                        start_time=start,
                        duration=vals[1],
                        camera_position=np.array(vals[2:5]),
                        camera_rotation=np.array(vals[5:9]),
                        frustum=tuple(vals[9:15]),
                        gaze_dir=np.array(vals[15:18]),
                        overrides=overrides,
                    )
                )
            except ValueError as e:
                raise ParseError(str(e), path, ln)
    return fixations


def gaussian_weight(p, gaze_dir, duration_t: float, cone: GazeCone) -> float:
    """Duration-weighted Gaussian contribution of a gaze ray at point p.

    p and gaze_dir are in camera space. The Gaussian is evaluated on the
    ratio of the scalar rejection of p to the cone radius at p's on-axis
    distance, so the weight depends only on the angular offset. Points
    behind the viewpoint or beyond the 4-sigma cutoff weigh zero.
    """
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(gaze_dir, dtype=np.float64)
    g = g / np.linalg.norm(g)
    d1 = float(p @ g)
    if d1 <= 0.0:
        return 0.0
    d2 = float(np.linalg.norm(p - d1 * g))
    d = d1 * cone.sigma  # cone radius (1 sigma) at on-axis distance d1
    ratio = 0.0 if d == 0.0 else d2 / d
    if ratio > 4.0:
        return 0.0
    return duration_t / (cone.sigma * SQRT_TWO_PI) * math.exp(-0.5 * ratio * ratio)


# ---------------------------------------------------------------------------
# 4-sigma cone / near-plane ellipse intersection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EllipseParams:
    """Ellipse cut by the 4-sigma cone on the near plane z = -n."""

    center_E: np.ndarray
    major_a: float
    minor_b: float
    inclination_alpha: float
    A0: np.ndarray
    A1: np.ndarray
    B0: np.ndarray
    B1: np.ndarray


def _quat_rotate(v: np.ndarray, axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotate v about a unit axis by angle using quaternion conjugation."""
    half = 0.5 * angle
    w = math.cos(half)
    u = axis * math.sin(half)
    # q * v * q^-1 expanded: v + 2w (u x v) + 2 u x (u x v)
    uv = np.cross(u, v)
    return v + 2.0 * w * uv + 2.0 * np.cross(u, uv)


def _near_plane_hit(direction: np.ndarray, n: float) -> np.ndarray:
    """Intersection of a ray from the origin with the plane z = -n."""
    if direction[2] >= 0.0:
        raise GazeOutsideFrustumError(
            "gaze cone ray does not reach the near clip plane (z >= 0)"
        )
    t = -n / direction[2]
    return np.array([t * direction[0], t * direction[1], -n])


def ellipse_intersection(gaze_dir, n: float, cone: GazeCone) -> EllipseParams:
    """Geometric parameters of the 4-sigma cone's near-plane ellipse.

    The cone axis is rotated by +-phi about two axes: u1 perpendicular to
    the (gaze, forward) plane, sweeping the major direction, and
    u2 = gaze x u1 sweeping the minor one. Raises GazeOutsideFrustumError
    when any rotated ray fails to hit the near plane (cone grazing or
    exiting the z < 0 half-space).

    The returned parameters are exact: the center is the midpoint of the
    major-axis endpoints (the axis ray's own plane hit lies slightly off
    center for tilted gazes) and the minor radius accounts for the cone
    obliquity. The bounding box built from them therefore contains the
    whole cone cross section, which the sample filter relies on.
    """
    r = np.asarray(gaze_dir, dtype=np.float64)
    r = r / np.linalg.norm(r)
    u1 = np.cross(r, _CAMERA_FORWARD)
    if np.linalg.norm(u1) < 1e-12:
        # central gaze: the cut is a circle, any perpendicular axis pair works
        u1 = _CAMERA_RIGHT.copy()
    u1 = u1 / np.linalg.norm(u1)
    u2 = np.cross(r, u1)
    u2 = u2 / np.linalg.norm(u2)

    a0 = _quat_rotate(r, u1, -cone.phi)
    a1 = _quat_rotate(r, u1, cone.phi)
    b0 = _quat_rotate(r, u2, -cone.phi)
    b1 = _quat_rotate(r, u2, cone.phi)

    E = _near_plane_hit(r, n)
    A0, A1, B0, B1 = (_near_plane_hit(v, n) for v in (a0, a1, b0, b1))

    a = 0.5 * float(np.linalg.norm(A1 - A0))
    # exact minor radius of an oblique cone/plane cut: n sin(phi) /
    # sqrt(cos^2(phi) - sin^2(beta)) with beta the axis tilt off -z
    cos_beta = -float(r[2])
    disc = math.cos(cone.phi) ** 2 - (1.0 - cos_beta * cos_beta)
    if disc <= 0.0:
        raise GazeOutsideFrustumError("gaze cone does not cut the near plane in an ellipse")
    b = n * math.sin(cone.phi) / math.sqrt(disc)
    center = 0.5 * (A0 + A1)
    me = E - np.array([0.0, 0.0, -n])
    me_norm = float(np.linalg.norm(me))
    if me_norm < 1e-15:
        alpha = 0.0  # circle, inclination irrelevant
    else:
        alpha = math.acos(max(-1.0, min(1.0, float(_CAMERA_RIGHT @ (me / me_norm)))))
    return EllipseParams(
        center_E=center,
        major_a=max(a, b),
        minor_b=min(a, b),
        inclination_alpha=alpha,
        A0=A0,
        A1=A1,
        B0=B0,
        B1=B1,
    )


def crop_bounds(e: EllipseParams) -> tuple[float, float, float, float]:
    """Axis-aligned (l', r', b', t') bounding box of the near-plane ellipse."""
    a2, b2 = e.major_a**2, e.minor_b**2
    ca2 = math.cos(e.inclination_alpha) ** 2
    sa2 = math.sin(e.inclination_alpha) ** 2
    dx = math.sqrt(a2 * ca2 + b2 * sa2)
    dy = math.sqrt(a2 * sa2 + b2 * ca2)
    ex, ey = float(e.center_E[0]), float(e.center_E[1])
    return ex - dx, ex + dx, ey - dy, ey + dy


def perspective_matrix(l: float, r: float, b: float, t: float, n: float, f: float) -> np.ndarray:
    """Off-center perspective projection (column-vector convention, -z forward)."""
    if not (l < r and b < t):
        raise InvalidFrustumError(f"degenerate bounds l={l} r={r} b={b} t={t}")
    if not (0 < n < f):
        raise InvalidFrustumError(f"invalid near/far n={n} f={f}")
    return np.array(
        [
            [2.0 * n / (r - l), 0.0, (r + l) / (r - l), 0.0],
            [0.0, 2.0 * n / (t - b), (t + b) / (t - b), 0.0],
            [0.0, 0.0, -(f + n) / (f - n), -2.0 * f * n / (f - n)],
            [0.0, 0.0, -1.0, 0.0],
        ]
    )


def crop_projection_matrix(bounds, n: float, f: float) -> np.ndarray:
    """Perspective matrix of the sub-frustum bounded by the ellipse box."""
    l, r, b, t = bounds
    return perspective_matrix(l, r, b, t, n, f)


def frustum_from_matrix(m: np.ndarray) -> tuple[float, float, float, float, float, float]:
    """Recover (l, r, b, t, n, f) from a perspective matrix of the above form."""
    m = np.asarray(m, dtype=np.float64)
    n = m[2, 3] / (m[2, 2] - 1.0)
    f = m[2, 3] / (m[2, 2] + 1.0)
    rl = 2.0 * n / m[0, 0]
    tb = 2.0 * n / m[1, 1]
    l = -0.5 * rl * (1.0 - m[0, 2])
    r = l + rl
    b = -0.5 * tb * (1.0 - m[1, 2])
    t = b + tb
    return l, r, b, t, n, f


@dataclass(frozen=True)
class CropFrustum:
    """4-sigma-cone-fitted sub-frustum and its projection matrix."""

    left: float
    right: float
    bottom: float
    top: float
    near: float
    far: float
    projection_matrix: np.ndarray


def build_crop_frustum(fixation: Fixation, cone: GazeCone) -> CropFrustum:
    """Crop frustum of a fixation's 4-sigma gaze cone.

    Raises GazeOutsideFrustumError when the cone does not fully face the
    near plane; callers fall back to the unfiltered path.
    """
    n, f = fixation.near, fixation.far
    e = ellipse_intersection(fixation.gaze_dir, n, cone)
    l, r, b, t = crop_bounds(e)
    return CropFrustum(l, r, b, t, n, f, crop_projection_matrix((l, r, b, t), n, f))
