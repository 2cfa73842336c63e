from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from overfly.config import SessionConfig


def write_scene(root: Path, width=160, height=90, fps=30, altitude_m=110.0,
                fov_h_deg=82.1, n_frames=12, end_policy="clamp-last", seed=0) -> Path:
    """Create a small scenario: numbered PNG frames plus a manifest."""
    frames = root / "frames"
    frames.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_frames):
        arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
        arr[0, 0] = (i % 256, 0, 0)  # frame-identifying pixel
        Image.fromarray(arr, "RGB").save(frames / f"{i:06d}.png")
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({
        "width": width, "height": height, "fps": fps, "altitude_m": altitude_m,
        "fov_h_deg": fov_h_deg, "frame_source": "frames", "end_policy": end_policy,
    }), encoding="utf-8")
    return manifest


@pytest.fixture(scope="session")
def scene(tmp_path_factory) -> Path:
    """Shared 12-frame 160x90 scenario; treat as read-only."""
    root = tmp_path_factory.mktemp("scene")
    return write_scene(root)


@pytest.fixture()
def small_config(scene) -> SessionConfig:
    return SessionConfig().with_values(
        manifest=str(scene),
        seed=7,
        vac={"width": 64, "height": 36},
        initial={"kind": "fixed", "pos": [0.0, 0.0, 50.0], "yaw": 0.0},
        termination={"max_ticks": 20, "out_of_bounds": "clamp"},
        command_source="hover",
    )


def checkerboard(width: int, height: int, cell: int = 8, seed: int | None = None) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    cells = ((xx // cell) + (yy // cell)) % 2
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[..., 0] = np.where(cells, 220, 30)
    img[..., 1] = np.where(cells, 40, 200)
    img[..., 2] = (xx * 7 + yy * 13) % 256
    if seed is not None:
        rng = np.random.default_rng(seed)
        img ^= rng.integers(0, 8, size=img.shape, dtype=np.uint8)
    return img


def scalar_warp_oracle(src: np.ndarray, matrix: np.ndarray, out_w: int, out_h: int,
                       bilinear: bool = True, fill=(0, 0, 0)) -> np.ndarray:
    """Per-pixel inverse-mapping reference, plain Python floats throughout.

    Independent of the production kernels: no numba, no vectorization, just
    the textbook formulas.
    """
    import math
    minv = np.linalg.inv(matrix)
    m = [[float(minv[r][c]) for c in range(3)] for r in range(3)]
    src_h, src_w = src.shape[:2]
    srcl = src.tolist()
    out = [[list(fill) for _ in range(out_w)] for _ in range(out_h)]
    for y in range(out_h):
        for x in range(out_w):
            w = m[2][0] * x + m[2][1] * y + m[2][2]
            if abs(w) < 1e-12:
                continue
            su = (m[0][0] * x + m[0][1] * y + m[0][2]) / w
            sv = (m[1][0] * x + m[1][1] * y + m[1][2]) / w
            if su < -0.5 or su > src_w - 0.5 or sv < -0.5 or sv > src_h - 0.5:
                continue
            if bilinear:
                x0 = math.floor(su)
                y0 = math.floor(sv)
                fx = su - x0
                fy = sv - y0
                x1 = min(max(x0 + 1, 0), src_w - 1)
                y1 = min(max(y0 + 1, 0), src_h - 1)
                x0 = min(max(x0, 0), src_w - 1)
                y0 = min(max(y0, 0), src_h - 1)
                for c in range(3):
                    top = srcl[y0][x0][c] * (1.0 - fx) + srcl[y0][x1][c] * fx
                    bot = srcl[y1][x0][c] * (1.0 - fx) + srcl[y1][x1][c] * fx
                    out[y][x][c] = int(top * (1.0 - fy) + bot * fy + 0.5)
            else:
                xi = min(max(math.floor(su + 0.5), 0), src_w - 1)
                yi = min(max(math.floor(sv + 0.5), 0), src_h - 1)
                out[y][x] = list(srcl[yi][xi])
    return np.array(out, dtype=np.uint8)
