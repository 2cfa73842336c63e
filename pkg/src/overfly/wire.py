"""Byte-exact framed protocol between the simulator and controllers.

A message is a 4-byte big-endian header length, a UTF-8 JSON header object
carrying at least "type", and an optional binary payload whose size the
header declares in "payload_bytes". Concatenated messages parse back into
exactly the same sequence; there is no resynchronization ambiguity.

The same bytes travel over raw TCP or wrapped one-message-per-binary-frame
inside a WebSocket.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .serialize import canon_dumps

__all__ = [
    "ProtocolError", "FramingError", "WireMessage", "CommandMessage",
    "encode_message", "decode_message", "decode_stream", "read_message",
    "encode_state", "encode_hello", "encode_error", "decode_command",
    "PROTOCOL_VERSION",
]

PROTOCOL_VERSION = 1
MAX_HEADER_BYTES = 1 << 20
MAX_PAYLOAD_BYTES = 1 << 28

KNOWN_TYPES = ("hello", "state", "command", "error", "end", "overview")


class ProtocolError(ValueError):
    """Malformed or semantically invalid message."""


class FramingError(ProtocolError):
    """Byte stream cannot be split into messages."""


@dataclass(frozen=True)
class WireMessage:
    header: dict
    payload: bytes = b""

    @property
    def type(self) -> str:
        return self.header["type"]


def encode_message(header: dict, payload: bytes = b"") -> bytes:
    """Frame a header (+payload) into wire bytes."""
    if "type" not in header:
        raise ProtocolError("header must carry a 'type' field")
    if payload and header.get("payload_bytes") != len(payload):
        raise ProtocolError("header payload_bytes does not match payload length")
    raw = canon_dumps(header).encode("utf-8")
    return struct.pack(">I", len(raw)) + raw + payload


def _parse_header_bytes(raw: bytes) -> dict:
    """Parse header bytes far enough to locate the payload boundary.

    Failures here mean the stream cannot be split further and are fatal
    (FramingError); field-level validation happens in _validate_header.
    """
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise FramingError("header must be a JSON object")
    pb = header.get("payload_bytes", 0)
    if not isinstance(pb, int) or isinstance(pb, bool) or pb < 0 or pb > MAX_PAYLOAD_BYTES:
        raise FramingError(f"invalid payload_bytes: {pb!r}")
    return header


def _validate_header(header: dict) -> None:
    if not isinstance(header.get("type"), str):
        raise ProtocolError("header missing string 'type' field")


def decode_message(data: bytes) -> tuple[WireMessage, int]:
    """Decode one message from the head of data; returns (message, bytes consumed)."""
    if len(data) < 4:
        raise FramingError("truncated frame: missing length prefix")
    (hlen,) = struct.unpack(">I", data[:4])
    if hlen == 0 or hlen > MAX_HEADER_BYTES:
        raise FramingError(f"implausible header length {hlen}")
    if len(data) < 4 + hlen:
        raise FramingError("truncated frame: incomplete header")
    header = _parse_header_bytes(data[4:4 + hlen])
    pb = header.get("payload_bytes", 0)
    end = 4 + hlen + pb
    if len(data) < end:
        raise FramingError("truncated frame: incomplete payload")
    _validate_header(header)
    return WireMessage(header=header, payload=bytes(data[4 + hlen:end])), end


def decode_stream(data: bytes) -> list[WireMessage]:
    """Split a byte string of concatenated messages into all of them."""
    out = []
    offset = 0
    while offset < len(data):
        msg, used = decode_message(data[offset:])
        out.append(msg)
        offset += used
    return out


def read_message(sock_file) -> WireMessage:
    """Read exactly one message from a binary file-like stream.

    FramingError means the stream is desynchronized and unrecoverable;
    ProtocolError leaves the stream positioned at the next message.
    """
    prefix = _read_exact(sock_file, 4, eof_ok=True)
    if prefix is None:
        raise EOFError("stream closed")
    (hlen,) = struct.unpack(">I", prefix)
    if hlen == 0 or hlen > MAX_HEADER_BYTES:
        raise FramingError(f"implausible header length {hlen}")
    header = _parse_header_bytes(_read_exact(sock_file, hlen))
    payload = b""
    pb = header.get("payload_bytes", 0)
    if pb:
        payload = _read_exact(sock_file, pb)
    _validate_header(header)
    return WireMessage(header=header, payload=payload)


def _read_exact(stream, n: int, eof_ok: bool = False) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            if eof_ok and remaining == n:
                return None
            raise FramingError("stream closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def _png_bytes(raster: np.ndarray) -> bytes:
    from PIL import Image
    buf = io.BytesIO()
    Image.fromarray(raster, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_to_raster(data: bytes) -> np.ndarray:
    from PIL import Image
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def encode_state(state_fields: dict, raster: np.ndarray, encoding: str = "rgb8",
                 extra: dict | None = None) -> bytes:
    """Frame a per-tick state message carrying the virtual-camera raster."""
    h, w = raster.shape[:2]
    if encoding == "rgb8":
        payload = raster.tobytes()
    elif encoding == "png":
        payload = _png_bytes(raster)
    else:
        raise ProtocolError(f"unknown encoding {encoding!r}")
    header = {"type": "state", **state_fields,
              "encoding": encoding, "width": w, "height": h,
              "payload_bytes": len(payload)}
    if extra:
        header.update(extra)
    return encode_message(header, payload)


def decode_state_raster(msg: WireMessage) -> np.ndarray:
    enc = msg.header.get("encoding")
    w, h = msg.header.get("width"), msg.header.get("height")
    if enc == "rgb8":
        if len(msg.payload) != w * h * 3:
            raise ProtocolError(f"rgb8 payload of {len(msg.payload)} bytes != {w}x{h}x3")
        return np.frombuffer(msg.payload, dtype=np.uint8).reshape(h, w, 3)
    if enc == "png":
        return png_to_raster(msg.payload)
    raise ProtocolError(f"unknown encoding {enc!r}")


def encode_hello(manifest_summary: dict, vac_dims: tuple[int, int], mode: str) -> bytes:
    return encode_message({
        "type": "hello", "protocol_version": PROTOCOL_VERSION,
        "manifest": manifest_summary,
        "vac": {"width": vac_dims[0], "height": vac_dims[1]},
        "mode": mode,
    })


def encode_error(reason: str) -> bytes:
    return encode_message({"type": "error", "reason": reason})


@dataclass(frozen=True)
class CommandMessage:
    attitude: dict | None = None       # {roll, pitch, yaw, thrust}
    stick: tuple[float, float, float, float] | None = None
    tick_ack: int | None = None


def decode_command(msg: WireMessage | bytes) -> CommandMessage:
    """Validate a command message: exactly one of attitude / stick form."""
    if isinstance(msg, (bytes, bytearray)):
        msg, _ = decode_message(bytes(msg))
    header = msg.header
    if header.get("type") != "command":
        raise ProtocolError(f"expected type 'command', got {header.get('type')!r}")
    has_att = "attitude" in header
    has_stick = "stick" in header
    if has_att == has_stick:
        raise ProtocolError("command must carry exactly one of 'attitude' or 'stick'")
    tick_ack = header.get("tick_ack")
    if tick_ack is not None and not isinstance(tick_ack, int):
        raise ProtocolError(f"tick_ack must be an integer, got {tick_ack!r}")
    if has_stick:
        stick = header["stick"]
        if (not isinstance(stick, list) or len(stick) != 4
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in stick)):
            raise ProtocolError("stick must be a list of 4 numbers")
        if not all(-1.0 <= float(c) <= 1.0 for c in stick):
            raise ProtocolError(f"stick components out of range [-1, 1]: {stick}")
        return CommandMessage(stick=tuple(float(c) for c in stick), tick_ack=tick_ack)
    att = header["attitude"]
    if not isinstance(att, dict):
        raise ProtocolError("attitude must be an object")
    fields = {}
    for key in ("roll", "pitch", "yaw", "thrust"):
        v = att.get(key)
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ProtocolError(f"attitude field '{key}' must be a number, got {v!r}")
        fields[key] = float(v)
    if fields["thrust"] < 0:
        raise ProtocolError(f"thrust must be >= 0, got {fields['thrust']}")
    return CommandMessage(attitude=fields, tick_ack=tick_ack)
