"""Hot per-pixel loops, compiled with numba.

Every kernel iterates output pixels (inverse mapping), so results are
independent of thread scheduling and bit-identical run to run. Pixel
centers sit at integer coordinates; sampling positions within half a pixel
of the source frontier clamp to the edge, anything further out gets the
fill color.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def warp_nearest(src, minv, out, fill_r, fill_g, fill_b):
    src_h, src_w = src.shape[0], src.shape[1]
    out_h, out_w = out.shape[0], out.shape[1]
    covered = 0
    for y in prange(out_h):
        for x in range(out_w):
            w = minv[2, 0] * x + minv[2, 1] * y + minv[2, 2]
            if abs(w) < 1e-12:
                out[y, x, 0] = fill_r
                out[y, x, 1] = fill_g
                out[y, x, 2] = fill_b
                continue
            su = (minv[0, 0] * x + minv[0, 1] * y + minv[0, 2]) / w
            sv = (minv[1, 0] * x + minv[1, 1] * y + minv[1, 2]) / w
            if su < -0.5 or su > src_w - 0.5 or sv < -0.5 or sv > src_h - 0.5:
                out[y, x, 0] = fill_r
                out[y, x, 1] = fill_g
                out[y, x, 2] = fill_b
                continue
            if 0.0 <= su <= src_w - 1 and 0.0 <= sv <= src_h - 1:
                covered += 1
            xi = int(np.floor(su + 0.5))
            yi = int(np.floor(sv + 0.5))
            if xi < 0:
                xi = 0
            elif xi > src_w - 1:
                xi = src_w - 1
            if yi < 0:
                yi = 0
            elif yi > src_h - 1:
                yi = src_h - 1
            out[y, x, 0] = src[yi, xi, 0]
            out[y, x, 1] = src[yi, xi, 1]
            out[y, x, 2] = src[yi, xi, 2]
    return covered


@njit(cache=True, parallel=True)
def warp_bilinear(src, minv, out, fill_r, fill_g, fill_b):
    src_h, src_w = src.shape[0], src.shape[1]
    out_h, out_w = out.shape[0], out.shape[1]
    covered = 0
    for y in prange(out_h):
        for x in range(out_w):
            w = minv[2, 0] * x + minv[2, 1] * y + minv[2, 2]
            if abs(w) < 1e-12:
                out[y, x, 0] = fill_r
                out[y, x, 1] = fill_g
                out[y, x, 2] = fill_b
                continue
            su = (minv[0, 0] * x + minv[0, 1] * y + minv[0, 2]) / w
            sv = (minv[1, 0] * x + minv[1, 1] * y + minv[1, 2]) / w
            if su < -0.5 or su > src_w - 0.5 or sv < -0.5 or sv > src_h - 0.5:
                out[y, x, 0] = fill_r
                out[y, x, 1] = fill_g
                out[y, x, 2] = fill_b
                continue
            if 0.0 <= su <= src_w - 1 and 0.0 <= sv <= src_h - 1:
                covered += 1
            x0 = int(np.floor(su))
            y0 = int(np.floor(sv))
            fx = su - x0
            fy = sv - y0
            x1 = x0 + 1
            y1 = y0 + 1
            if x0 < 0:
                x0 = 0
            if x1 > src_w - 1:
                x1 = src_w - 1
            if x0 > src_w - 1:
                x0 = src_w - 1
            if y0 < 0:
                y0 = 0
            if y1 > src_h - 1:
                y1 = src_h - 1
            if y0 > src_h - 1:
                y0 = src_h - 1
            for c in range(3):
                v00 = src[y0, x0, c]
                v01 = src[y0, x1, c]
                v10 = src[y1, x0, c]
                v11 = src[y1, x1, c]
                top = v00 * (1.0 - fx) + v01 * fx
                bot = v10 * (1.0 - fx) + v11 * fx
                val = top * (1.0 - fy) + bot * fy
                out[y, x, c] = np.uint8(int(val + 0.5))
    return covered


@njit(cache=True, inline="always")
def _cubic_weight(t):
    # Catmull-Rom (a = -0.5): exact on linear ramps.
    at = abs(t)
    if at <= 1.0:
        return 1.5 * at * at * at - 2.5 * at * at + 1.0
    if at < 2.0:
        return -0.5 * (at * at * at - 5.0 * at * at + 8.0 * at - 4.0)
    return 0.0


@njit(cache=True, parallel=True)
def resample(src, out, kind):
    """Separable resize; kind: 0 nearest, 1 bilinear, 2 bicubic."""
    src_h, src_w = src.shape[0], src.shape[1]
    out_h, out_w = out.shape[0], out.shape[1]
    sx = src_w / out_w
    sy = src_h / out_h
    for y in prange(out_h):
        sv = (y + 0.5) * sy - 0.5
        for x in range(out_w):
            su = (x + 0.5) * sx - 0.5
            if kind == 0:
                xi = int(np.floor(su + 0.5))
                yi = int(np.floor(sv + 0.5))
                if xi < 0:
                    xi = 0
                elif xi > src_w - 1:
                    xi = src_w - 1
                if yi < 0:
                    yi = 0
                elif yi > src_h - 1:
                    yi = src_h - 1
                for c in range(3):
                    out[y, x, c] = src[yi, xi, c]
            elif kind == 1:
                x0 = int(np.floor(su))
                y0 = int(np.floor(sv))
                fx = su - x0
                fy = sv - y0
                x1 = min(max(x0 + 1, 0), src_w - 1)
                y1 = min(max(y0 + 1, 0), src_h - 1)
                x0 = min(max(x0, 0), src_w - 1)
                y0 = min(max(y0, 0), src_h - 1)
                for c in range(3):
                    top = src[y0, x0, c] * (1.0 - fx) + src[y0, x1, c] * fx
                    bot = src[y1, x0, c] * (1.0 - fx) + src[y1, x1, c] * fx
                    val = top * (1.0 - fy) + bot * fy
                    out[y, x, c] = np.uint8(int(val + 0.5))
            else:
                x0 = int(np.floor(su))
                y0 = int(np.floor(sv))
                fx = su - x0
                fy = sv - y0
                for c in range(3):
                    acc = 0.0
                    for j in range(-1, 3):
                        wy = _cubic_weight(fy - j)
                        yj = min(max(y0 + j, 0), src_h - 1)
                        rowv = 0.0
                        for i in range(-1, 3):
                            wx = _cubic_weight(fx - i)
                            xi = min(max(x0 + i, 0), src_w - 1)
                            rowv += wx * src[yj, xi, c]
                        acc += wy * rowv
                    if acc < 0.0:
                        acc = 0.0
                    elif acc > 255.0:
                        acc = 255.0
                    out[y, x, c] = np.uint8(int(acc + 0.5))
