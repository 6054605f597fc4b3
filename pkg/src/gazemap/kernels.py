"""Numba kernels: software rasterizer and the per-sample accumulation loop.

The rasterizer runs serially per buffer (min-depth merges are order
independent, so the output is deterministic). The accumulation kernel fans
out over samples with ``prange``; every sample owns exactly one value slot,
so accumulation is race free and bit-identical for any worker count.
"""

from __future__ import annotations

import os

# The thread pool size is fixed at first numba import; raise the cap here so
# worker counts above the core count remain selectable (oversubscription is
# harmless for these kernels).
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))

import numpy as np
from numba import njit, prange, set_num_threads, get_num_threads, config

_NDC_SLACK = 1e-9  # tolerance against boundary rounding of the crop box


def max_workers() -> int:
    return int(config.NUMBA_NUM_THREADS)


def set_workers(n: int | None) -> None:
    """Set the data-parallel worker count (clamped to the numba thread cap)."""
    if n is None:
        return
    set_num_threads(min(max(1, int(n)), max_workers()))


@njit(cache=True)
def _clip_near(vin, near, vout):
    """Clip a camera-space triangle against the plane z = -near.

    ``vin`` is (3, 6) rows of (x, y, z, a0, a1, a2) where a* are attributes
    interpolated along cut edges; ``vout`` is a (4, 6) scratch polygon.
    Returns the vertex count of the clipped polygon (0, 3 or 4).
    """
    nv = 0
    for i in range(3):
        j = (i + 1) % 3
        cz = vin[i, 2]
        nz = vin[j, 2]
        cin = cz <= -near
        nin = nz <= -near
        if cin:
            for c in range(6):
                vout[nv, c] = vin[i, c]
            nv += 1
        if cin != nin:
            t = (-near - cz) / (nz - cz)
            for c in range(6):
                vout[nv, c] = vin[i, c] + t * (vin[j, c] - vin[i, c])
            nv += 1
    return nv


@njit(cache=True)
def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


@njit(cache=True)
def _raster_tri(sx, sy, iw, attr, tri_index, width, height, near, far,
                depth, tri_id, bary, with_attrs):
    """Fill one projected triangle (screen xy, 1/w, per-vertex attributes)."""
    area = _edge(sx[0], sy[0], sx[1], sy[1], sx[2], sy[2])
    if area == 0.0:
        return
    if area < 0.0:
        # normalize winding so edge functions are positive inside
        tmp = sx[1]
        sx[1] = sx[2]
        sx[2] = tmp
        tmp = sy[1]
        sy[1] = sy[2]
        sy[2] = tmp
        tmp = iw[1]
        iw[1] = iw[2]
        iw[2] = tmp
        for c in range(3):
            tmp = attr[1, c]
            attr[1, c] = attr[2, c]
            attr[2, c] = tmp
        area = -area

    minx = min(sx[0], min(sx[1], sx[2]))
    maxx = max(sx[0], max(sx[1], sx[2]))
    miny = min(sy[0], min(sy[1], sy[2]))
    maxy = max(sy[0], max(sy[1], sy[2]))
    x0 = max(0, int(np.ceil(minx - 0.5)))
    x1 = min(width - 1, int(np.floor(maxx - 0.5)))
    y0 = max(0, int(np.ceil(miny - 0.5)))
    y1 = min(height - 1, int(np.floor(maxy - 0.5)))
    if x1 < x0 or y1 < y0:
        return

    inv_area = 1.0 / area
    for py in range(y0, y1 + 1):
        cy = py + 0.5
        for px in range(x0, x1 + 1):
            cx = px + 0.5
            w0 = _edge(sx[1], sy[1], sx[2], sy[2], cx, cy)
            w1 = _edge(sx[2], sy[2], sx[0], sy[0], cx, cy)
            w2 = _edge(sx[0], sy[0], sx[1], sy[1], cx, cy)
            if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                continue
            # top-left ownership of shared edges
            if w0 == 0.0 and not (sy[2] - sy[1] < 0.0 or (sy[2] == sy[1] and sx[2] - sx[1] > 0.0)):
                continue
            if w1 == 0.0 and not (sy[0] - sy[2] < 0.0 or (sy[0] == sy[2] and sx[0] - sx[2] > 0.0)):
                continue
            if w2 == 0.0 and not (sy[1] - sy[0] < 0.0 or (sy[1] == sy[0] and sx[1] - sx[0] > 0.0)):
                continue
            l0 = w0 * inv_area
            l1 = w1 * inv_area
            l2 = w2 * inv_area
            inv_w = l0 * iw[0] + l1 * iw[1] + l2 * iw[2]
            if inv_w <= 0.0:
                continue
            d = 1.0 / inv_w
            if d < near or d > far:
                continue
            if d < depth[py, px]:
                depth[py, px] = d
                if with_attrs:
                    tri_id[py, px] = tri_index
                    for c in range(3):
                        bary[py, px, c] = (
                            l0 * attr[0, c] * iw[0]
                            + l1 * attr[1, c] * iw[1]
                            + l2 * attr[2, c] * iw[2]
                        ) * d


@njit(cache=True)
def rasterize(tris_world, rot, trans, p00, p11, p02, p12,
              width, height, near, far, depth, tri_id, bary, with_attrs):
    """Rasterize world-space triangles into a min-depth buffer.

    ``rot``/``trans`` map world to camera space; (p00, p11, p02, p12) are the
    nonzero xy entries of the perspective matrix. Stored depth is linear
    eye-space distance along -z. When ``with_attrs`` is set, ``tri_id`` and
    perspective-correct barycentrics of the covering triangle are stored too.
    """
    vin = np.empty((3, 6))
    vout = np.empty((4, 6))
    sx = np.empty(3)
    sy = np.empty(3)
    iw = np.empty(3)
    attr = np.empty((3, 3))
    half_w = 0.5 * width
    half_h = 0.5 * height
    for t in range(tris_world.shape[0]):
        for v in range(3):
            wx = tris_world[t, v, 0]
            wy = tris_world[t, v, 1]
            wz = tris_world[t, v, 2]
            vin[v, 0] = rot[0, 0] * wx + rot[0, 1] * wy + rot[0, 2] * wz + trans[0]
            vin[v, 1] = rot[1, 0] * wx + rot[1, 1] * wy + rot[1, 2] * wz + trans[1]
            vin[v, 2] = rot[2, 0] * wx + rot[2, 1] * wy + rot[2, 2] * wz + trans[2]
            for c in range(3):
                vin[v, 3 + c] = 1.0 if c == v else 0.0
        nv = _clip_near(vin, near, vout)
        if nv < 3:
            continue
        for k in range(nv - 2):
            ok = True
            for m in range(3):
                src = 0 if m == 0 else k + m
                x = vout[src, 0]
                y = vout[src, 1]
                z = vout[src, 2]
                w = -z
                if w <= 0.0:
                    ok = False
                    break
                ndc_x = (p00 * x + p02 * z) / w
                ndc_y = (p11 * y + p12 * z) / w
                sx[m] = (ndc_x + 1.0) * half_w
                sy[m] = (1.0 - ndc_y) * half_h
                iw[m] = 1.0 / w
                attr[m, 0] = vout[src, 3]
                attr[m, 1] = vout[src, 4]
                attr[m, 2] = vout[src, 5]
            if ok:
                _raster_tri(sx, sy, iw, attr, t, width, height, near, far,
                            depth, tri_id, bary, with_attrs)


@njit(cache=True)
def cull_mask(tris_world, planes):
    """Conservative frustum cull: drop only triangles with all three
    vertices outside a single frustum plane."""
    n = tris_world.shape[0]
    keep = np.ones(n, dtype=np.bool_)
    for t in range(n):
        for p in range(planes.shape[0]):
            a = planes[p, 0]
            b = planes[p, 1]
            c = planes[p, 2]
            d = planes[p, 3]
            outside = True
            for v in range(3):
                if (a * tris_world[t, v, 0] + b * tris_world[t, v, 1]
                        + c * tris_world[t, v, 2] + d) >= 0.0:
                    outside = False
                    break
            if outside:
                keep[t] = False
                break
    return keep


@njit(cache=True)
def depth_match(depth, fx, fy, d, eps):
    """Visibility depth test at a fractional pixel position.

    Bilinear over the surrounding 2x2 texels where coverage is smooth, so
    the tolerance is not consumed by the depth gradient across a pixel; at
    depth edges (unwritten texel or inter-texel jump beyond eps) the owning
    surface is ambiguous within about a pixel, so any finite texel of the
    3x3 neighborhood may match.
    """
    height, width = depth.shape
    # texel centers sit at half-integer pixel coordinates
    gx = fx - 0.5
    gy = fy - 0.5
    if width > 1 and height > 1:
        x0 = int(np.floor(gx))
        if x0 < 0:
            x0 = 0
        elif x0 > width - 2:
            x0 = width - 2
        y0 = int(np.floor(gy))
        if y0 < 0:
            y0 = 0
        elif y0 > height - 2:
            y0 = height - 2
        q00 = depth[y0, x0]
        q01 = depth[y0, x0 + 1]
        q10 = depth[y0 + 1, x0]
        q11 = depth[y0 + 1, x0 + 1]
        if np.isfinite(q00) and np.isfinite(q01) and np.isfinite(q10) and np.isfinite(q11):
            tx = gx - x0
            if tx < 0.0:
                tx = 0.0
            elif tx > 1.0:
                tx = 1.0
            ty = gy - y0
            if ty < 0.0:
                ty = 0.0
            elif ty > 1.0:
                ty = 1.0
            top = q00 * (1.0 - tx) + q01 * tx
            bot = q10 * (1.0 - tx) + q11 * tx
            if abs(d - (top * (1.0 - ty) + bot * ty)) <= eps:
                return True
            hi = max(max(q00, q01), max(q10, q11))
            lo = min(min(q00, q01), min(q10, q11))
            if hi - lo <= eps:
                return False  # smooth quad, genuine depth mismatch
    cx = int(np.round(gx))
    if cx < 0:
        cx = 0
    elif cx > width - 1:
        cx = width - 1
    cy = int(np.round(gy))
    if cy < 0:
        cy = 0
    elif cy > height - 1:
        cy = height - 1
    best = np.inf
    for yy in range(max(cy - 1, 0), min(cy + 2, height)):
        for xx in range(max(cx - 1, 0), min(cx + 2, width)):
            t = depth[yy, xx]
            if np.isfinite(t):
                diff = abs(t - d)
                if diff < best:
                    best = diff
    return best <= eps


@njit(parallel=True, cache=True)
def accumulate(pos, rot, trans, gaze, sigma, amp,
               p00, p11, p02, p12, depth, eps_abs, eps_rel, near, far, values):
    """Add one fixation's Gaussian contribution to every sample value.

    ``pos`` is (N, 3) world-space sample positions, ``values`` the matching
    (N,) accumulator. A sample contributes when it projects inside the
    viewport of the supplied projection (crop or full), lies within the
    4-sigma cone in front of the viewpoint, and passes the depth-buffer
    visibility test with tolerance max(eps_abs, eps_rel * depth).
    """
    height, width = depth.shape
    inv_sigma = 1.0 / sigma
    for i in prange(pos.shape[0]):
        wx = pos[i, 0]
        wy = pos[i, 1]
        wz = pos[i, 2]
        x = rot[0, 0] * wx + rot[0, 1] * wy + rot[0, 2] * wz + trans[0]
        y = rot[1, 0] * wx + rot[1, 1] * wy + rot[1, 2] * wz + trans[1]
        z = rot[2, 0] * wx + rot[2, 1] * wy + rot[2, 2] * wz + trans[2]
        w = -z
        if w <= 0.0:
            continue
        d = w
        if d < near * (1.0 - _NDC_SLACK) or d > far * (1.0 + _NDC_SLACK):
            continue
        ndc_x = (p00 * x + p02 * z) / w
        ndc_y = (p11 * y + p12 * z) / w
        if ndc_x < -1.0 - _NDC_SLACK or ndc_x > 1.0 + _NDC_SLACK:
            continue
        if ndc_y < -1.0 - _NDC_SLACK or ndc_y > 1.0 + _NDC_SLACK:
            continue
        # visibility first, weighting second: every sample surviving the NDC
        # filter pays for a depth test, which is exactly the work the crop
        # projection saves by rejecting off-cone samples up front
        eps = eps_abs
        if eps_rel * d > eps:
            eps = eps_rel * d
        if not depth_match(
            depth, (ndc_x + 1.0) * 0.5 * width, (1.0 - ndc_y) * 0.5 * height, d, eps
        ):
            continue
        d1 = x * gaze[0] + y * gaze[1] + z * gaze[2]
        if d1 <= 0.0:
            continue
        # squared rejection avoids a sqrt; ratio = d2 / (d1 * sigma)
        d2sq = x * x + y * y + z * z - d1 * d1
        if d2sq < 0.0:
            d2sq = 0.0
        ratio_sq = d2sq * inv_sigma * inv_sigma / (d1 * d1)
        if ratio_sq > 16.0:
            continue
        values[i] += amp * np.exp(-0.5 * ratio_sq)
