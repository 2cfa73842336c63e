"""Scenario manifests and source-video frame delivery.

A scenario is a folder of numbered images (or a raw RGB pipe) plus a JSON
manifest describing the recording: resolution, frame rate, the altitude the
camera hovered at, and its field of view. Frames are indexed by simulation
time as floor(t * fps); what happens past the last frame is governed by the
manifest's end policy.
"""
from __future__ import annotations

import json
import math
import re
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .serialize import canon_hash

PIPE_MAGIC = b"VIVAFRM0"

END_POLICIES = ("clamp-last", "loop", "terminate")

_MANIFEST_KEYS = {
    "width", "height", "fps", "altitude_m", "fov_h_deg", "fov_v_deg",
    "frame_source", "end_policy", "ground_z",
}


class ManifestError(ValueError):
    """Manifest file missing, malformed, or violating an invariant."""


class FrameSourceError(RuntimeError):
    """Frame source unreadable, inconsistent, or misused."""


class SourceExhausted(FrameSourceError):
    """Raised past the last frame under the terminate end policy."""


@dataclass(frozen=True)
class ScenarioManifest:
    width: int
    height: int
    fps: float
    altitude_m: float
    fov_h_deg: float
    fov_v_deg: float
    frame_source: str
    end_policy: str = "clamp-last"
    ground_z: float = 0.0

    def content_hash(self) -> str:
        return canon_hash({
            "width": self.width, "height": self.height, "fps": self.fps,
            "altitude_m": self.altitude_m, "fov_h_deg": self.fov_h_deg,
            "fov_v_deg": self.fov_v_deg, "frame_source": self.frame_source,
            "end_policy": self.end_policy, "ground_z": self.ground_z,
        })


@dataclass(frozen=True)
class Frame:
    index: int
    pixels: np.ndarray  # (H, W, 3) uint8, RGB
    timestamp_s: float


def derive_fov_v_deg(width: int, height: int, fov_h_deg: float) -> float:
    """Vertical FoV for square pixels: tan(v/2) / tan(h/2) = height / width."""
    return math.degrees(2.0 * math.atan((height / width) * math.tan(math.radians(fov_h_deg) / 2.0)))


def _positive(doc: dict, field: str) -> float:
    v = doc[field]
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
        raise ManifestError(f"manifest field '{field}' must be strictly positive, got {v!r}")
    return float(v)


def parse_manifest(doc: dict, base_dir: Path | None = None) -> ScenarioManifest:
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")
    unknown = set(doc) - _MANIFEST_KEYS
    if unknown:
        raise ManifestError(f"unknown manifest keys: {sorted(unknown)}")
    for field in ("width", "height", "fps", "altitude_m", "fov_h_deg", "frame_source"):
        if field not in doc:
            raise ManifestError(f"manifest field '{field}' is required")

    width = int(_positive(doc, "width"))
    height = int(_positive(doc, "height"))
    fps = _positive(doc, "fps")
    altitude_m = _positive(doc, "altitude_m")

    fov_h = float(doc["fov_h_deg"])
    if not 0.0 < fov_h < 180.0:
        raise ManifestError(f"manifest field 'fov_h_deg' must lie in (0, 180), got {fov_h!r}")
    if doc.get("fov_v_deg") is not None:
        fov_v = float(doc["fov_v_deg"])
        if not 0.0 < fov_v < 180.0:
            raise ManifestError(f"manifest field 'fov_v_deg' must lie in (0, 180), got {fov_v!r}")
    else:
        fov_v = derive_fov_v_deg(width, height, fov_h)

    end_policy = doc.get("end_policy", "clamp-last")
    if end_policy not in END_POLICIES:
        raise ManifestError(f"manifest field 'end_policy' must be one of {END_POLICIES}, got {end_policy!r}")

    ground_z = float(doc.get("ground_z", 0.0))
    if ground_z != 0.0:
        raise ManifestError("manifest field 'ground_z' must be 0 (scene points lie on z=0)")

    source = str(doc["frame_source"])
    if base_dir is not None and not source.startswith("pipe:"):
        source = str((base_dir / source))

    return ScenarioManifest(
        width=width, height=height, fps=fps, altitude_m=altitude_m,
        fov_h_deg=fov_h, fov_v_deg=fov_v, frame_source=source,
        end_policy=end_policy, ground_z=ground_z,
    )


def load_manifest(path: str | Path) -> ScenarioManifest:
    """Load and validate a scenario manifest, deriving fov_v_deg when absent."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {path}: {exc}") from exc
    return parse_manifest(doc, base_dir=path.parent)


class FrameSource:
    """Base reader; concrete sources implement _fetch(index)."""

    random_access = False

    def __init__(self, manifest: ScenarioManifest):
        self.manifest = manifest

    @property
    def frame_count(self) -> int | None:
        return None

    def frame_at(self, sim_time_s: float) -> Frame:
        return frame_at(self, sim_time_s)

    def _fetch(self, index: int) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass


def _resolve_index(source: FrameSource, raw_index: int) -> int:
    count = source.frame_count
    if count is None or raw_index < count:
        return raw_index
    policy = source.manifest.end_policy
    if policy == "clamp-last":
        return count - 1
    if policy == "loop":
        return raw_index % count
    raise SourceExhausted(f"frame {raw_index} past end of {count}-frame source")


def frame_at(source: FrameSource, sim_time_s: float) -> Frame:
    """Frame at floor(t * fps), with the end policy applied past the last frame."""
    if sim_time_s < 0:
        raise ValueError(f"sim_time_s must be >= 0, got {sim_time_s}")
    raw = int(math.floor(sim_time_s * source.manifest.fps))
    return frame_at_index(source, raw)


def frame_at_index(source: FrameSource, raw_index: int) -> Frame:
    """Frame by raw index, with the end policy applied past the last frame."""
    if raw_index < 0:
        raise ValueError(f"frame index must be >= 0, got {raw_index}")
    index = _resolve_index(source, raw_index)
    pixels = source._fetch(index)
    return Frame(index=index, pixels=pixels, timestamp_s=index / source.manifest.fps)


class DirectorySource(FrameSource):
    """Random-access reader over zero-padded numbered .png/.jpg files."""

    random_access = True

    def __init__(self, manifest: ScenarioManifest, directory: Path):
        super().__init__(manifest)
        self.directory = directory
        pattern = re.compile(r"^(\d+)\.(png|jpg|jpeg)$", re.IGNORECASE)
        entries = []
        for p in directory.iterdir():
            m = pattern.match(p.name)
            if m:
                entries.append((int(m.group(1)), p))
        entries.sort()
        if not entries:
            raise FrameSourceError(f"no numbered .png/.jpg frames in {directory}")
        self._paths = [p for _, p in entries]
        first = self._decode(self._paths[0])
        h, w = first.shape[:2]
        if (w, h) != (manifest.width, manifest.height):
            raise FrameSourceError(
                f"frame dimensions {w}x{h} do not match manifest {manifest.width}x{manifest.height}"
            )
        self._cache_index = 0
        self._cache = first

    @property
    def frame_count(self) -> int:
        return len(self._paths)

    def _decode(self, path: Path) -> np.ndarray:
        try:
            with Image.open(path) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except Exception as exc:
            raise FrameSourceError(f"failed to decode {path}: {exc}") from exc
        return arr

    def _fetch(self, index: int) -> np.ndarray:
        if index == self._cache_index:
            return self._cache
        if not 0 <= index < len(self._paths):
            raise FrameSourceError(f"frame index {index} out of range 0..{len(self._paths) - 1}")
        arr = self._decode(self._paths[index])
        if arr.shape[:2] != (self.manifest.height, self.manifest.width):
            raise FrameSourceError(f"frame {index} has inconsistent dimensions {arr.shape[1]}x{arr.shape[0]}")
        self._cache_index, self._cache = index, arr
        return arr


class PipeSource(FrameSource):
    """Sequential reader of the raw-RGB stream protocol.

    Stream layout: 16-byte header (magic, 4-byte BE width, 4-byte BE height),
    then back-to-back width*height*3 RGB frames, row-major, top-left origin.
    Only forward access is possible; the last frame is kept so the clamp-last
    policy can keep serving it after the stream ends.
    """

    def __init__(self, manifest: ScenarioManifest, stream):
        super().__init__(manifest)
        if manifest.end_policy == "loop":
            raise FrameSourceError("loop end policy requires a random-access source")
        self._stream = stream
        header = self._read_exact(16, allow_eof=False)
        if header[:8] != PIPE_MAGIC:
            raise FrameSourceError(f"bad stream magic {header[:8]!r}, expected {PIPE_MAGIC!r}")
        w, h = struct.unpack(">II", header[8:16])
        if (w, h) != (manifest.width, manifest.height):
            raise FrameSourceError(f"stream dimensions {w}x{h} do not match manifest "
                                   f"{manifest.width}x{manifest.height}")
        self._frame_bytes = manifest.width * manifest.height * 3
        self._next_index = 0
        self._last: np.ndarray | None = None
        self._ended = False

    def _read_exact(self, n: int, allow_eof: bool) -> bytes | None:
        chunks = []
        remaining = n
        while remaining:
            chunk = self._stream.read(remaining)
            if not chunk:
                if allow_eof and remaining == n:
                    return None
                raise FrameSourceError("stream ended mid-frame (broken pipe)")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    @property
    def frame_count(self) -> int | None:
        return self._next_index if self._ended else None

    def _fetch(self, index: int) -> np.ndarray:
        if index < self._next_index - 1:
            raise FrameSourceError(f"sequential source cannot seek back to frame {index}")
        if index == self._next_index - 1 and self._last is not None:
            return self._last
        while self._next_index <= index:
            raw = self._read_exact(self._frame_bytes, allow_eof=True)
            if raw is None:
                self._ended = True
                if self._last is None:
                    raise FrameSourceError("stream ended before the first frame")
                _resolve_index(self, index)  # raises under terminate policy
                return self._last  # clamp-last keeps serving the final frame
            self._last = np.frombuffer(raw, dtype=np.uint8).reshape(
                self.manifest.height, self.manifest.width, 3)
            self._next_index += 1
        return self._last

    def close(self) -> None:
        try:
            self._stream.close()
        except Exception:
            pass


def open_frame_source(manifest: ScenarioManifest) -> FrameSource:
    """Open the manifest's frame source (image directory or raw pipe)."""
    locator = manifest.frame_source
    if locator.startswith("pipe:"):
        target = locator[5:]
        if target == "-":
            return PipeSource(manifest, sys.stdin.buffer)
        return PipeSource(manifest, open(target, "rb"))
    directory = Path(locator)
    if not directory.is_dir():
        raise FrameSourceError(f"frame directory not found: {directory}")
    return DirectorySource(manifest, directory)


def write_pipe_header(stream, width: int, height: int) -> None:
    stream.write(PIPE_MAGIC + struct.pack(">II", width, height))
