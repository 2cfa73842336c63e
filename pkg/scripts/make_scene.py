#!/usr/bin/env python3
"""Generate a synthetic scenario (numbered frames + manifest) for demos and tests.

The scene is a procedural city-like texture with moving blobs so that motion
is visible when flying; real recordings drop in with the same layout: a
directory of zero-padded PNG/JPG frames next to a manifest.json.
"""
import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image


def city_texture(width, height, rng):
    img = np.full((height, width, 3), 60, dtype=np.uint8)
    # blocks
    for _ in range(width * height // 4000):
        x, y = rng.integers(0, width), rng.integers(0, height)
        w, h = rng.integers(8, 60), rng.integers(8, 60)
        color = rng.integers(70, 200, 3)
        img[y:y + h, x:x + w] = color
    # roads
    for x in range(0, width, 97):
        img[:, x:x + 6] = (40, 40, 42)
    for y in range(0, height, 83):
        img[y:y + 6] = (40, 40, 42)
    return img


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="output directory")
    ap.add_argument("--width", type=int, default=1920)
    ap.add_argument("--height", type=int, default=1080)
    ap.add_argument("--frames", type=int, default=90)
    ap.add_argument("--fps", type=float, default=30.0)
    ap.add_argument("--altitude", type=float, default=110.0)
    ap.add_argument("--fov", type=float, default=82.1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    base = city_texture(args.width, args.height, rng)

    # moving "vehicles"
    movers = [(rng.integers(0, args.height - 8), rng.uniform(1, 4),
               tuple(int(c) for c in rng.integers(150, 255, 3)))
              for _ in range(12)]
    for k in range(args.frames):
        frame = base.copy()
        for row, speed, color in movers:
            x = int(k * speed) % (args.width - 12)
            frame[row:row + 6, x:x + 12] = color
        Image.fromarray(frame, "RGB").save(frames_dir / f"{k:06d}.png")

    manifest = {
        "width": args.width, "height": args.height, "fps": args.fps,
        "altitude_m": args.altitude, "fov_h_deg": args.fov,
        "frame_source": "frames", "end_policy": "loop",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {args.frames} frames and manifest under {out}")


if __name__ == "__main__":
    main()
