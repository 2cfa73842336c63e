#!/usr/bin/env python3
"""Example external upscaler worker: nearest-neighbor resize over the pipe protocol.

Reads requests from stdin and writes replies to stdout, one at a time:
request  = magic "VIVASR00" + BE32 width + BE32 height + RGB bytes
           + BE32 out_width + BE32 out_height
reply    = magic + BE32 out_width + BE32 out_height + RGB bytes

Swap in any learned model with the same framing to upgrade the simulator's
low-altitude image quality.
"""
import struct
import sys
import time

import numpy as np

MAGIC = b"VIVASR00"


def read_exact(stream, n):
    data = b""
    while len(data) < n:
        chunk = stream.read(n - len(data))
        if not chunk:
            return None
        data += chunk
    return data


def main():
    delay = float(sys.argv[1]) if len(sys.argv) > 1 else 0.0
    stdin, stdout = sys.stdin.buffer, sys.stdout.buffer
    while True:
        header = read_exact(stdin, 16)
        if header is None:
            return 0
        assert header[:8] == MAGIC, header
        w, h = struct.unpack(">II", header[8:16])
        raw = read_exact(stdin, w * h * 3)
        out_w, out_h = struct.unpack(">II", read_exact(stdin, 8))
        img = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
        xs = np.clip(np.floor((np.arange(out_w) + 0.5) * w / out_w - 0.5 + 0.5), 0, w - 1).astype(int)
        ys = np.clip(np.floor((np.arange(out_h) + 0.5) * h / out_h - 0.5 + 0.5), 0, h - 1).astype(int)
        out = img[np.ix_(ys, xs)]
        if delay:
            time.sleep(delay)
        stdout.write(MAGIC + struct.pack(">II", out_w, out_h) + out.tobytes())
        stdout.flush()


if __name__ == "__main__":
    sys.exit(main())
