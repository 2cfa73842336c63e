#!/usr/bin/env python3
"""Minimal external controller over the raw TCP wire protocol.

Connects to a running `overfly serve` endpoint, acknowledges every state
with a gentle scripted stick pattern, and prints telemetry. Use it as the
skeleton for plugging in an actual vision/navigation stack: the VAC raster
arrives in each state message's payload.
"""
import argparse
import socket

import numpy as np

from overfly import wire


def run(host: str, port: int, descend: float) -> None:
    sock = socket.create_connection((host, port))
    rfile = sock.makefile("rb")
    sock.sendall(wire.encode_message({"type": "hello", "protocol_version": 1}))
    hello = wire.read_message(rfile)
    print(f"connected: {hello.header['manifest']} mode={hello.header['mode']}")
    while True:
        msg = wire.read_message(rfile)
        if msg.type == "end":
            print(f"session over: {msg.header['status']} at {msg.header['final_pos']}")
            return
        if msg.type == "error":
            print(f"server error: {msg.header['reason']}")
            continue
        if msg.type != "state":
            continue
        raster = wire.decode_state_raster(msg)
        mean_lum = float(np.mean(raster))
        h = msg.header
        print(f"tick {h['tick']:5d} z={h['pos'][2]:7.2f} m "
              f"v=({h['vel'][0]:+.2f},{h['vel'][1]:+.2f},{h['vel'][2]:+.2f}) "
              f"luma={mean_lum:5.1f} cov={h.get('coverage', 1.0):.2f}")
        stick = [0.0, 0.0, -descend, 0.0]
        sock.sendall(wire.encode_message(
            {"type": "command", "stick": stick, "tick_ack": h["tick"]}))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--endpoint", default="127.0.0.1:8473")
    ap.add_argument("--descend", type=float, default=0.0,
                    help="thrust stick deflection toward descent, 0..1")
    args = ap.parse_args()
    host, _, port = args.endpoint.rpartition(":")
    run(host, int(port), args.descend)


if __name__ == "__main__":
    main()
