"""Virtual-camera image synthesis.

Each tick the source frame is inverse-warped through the plane-induced
homography into the virtual camera's raster. When the vehicle flies low,
the covered region of the source holds fewer pixels than the output asks
for; the frame is then warped at the source's native scale and handed to an
upscaler (classical kernels built in, or an external worker speaking the
upscaler pipe protocol) to reach the output size.
"""
from __future__ import annotations

import logging
import math
import shlex
import struct
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np

from . import warp_kernels
from .geometry import CameraIntrinsics, Homography, RigidTransform
from .scenario import Frame

__all__ = [
    "VacFrame", "UpscalerSpec", "RenderConfig", "render", "select_scale",
    "upscale", "render_vac_frame", "ExternalUpscaler", "UPSCALER_MAGIC",
]

log = logging.getLogger(__name__)

UPSCALER_MAGIC = b"VIVASR00"

SAMPLING_MODES = ("nearest", "bilinear")
_RESAMPLE_CODE = {"nearest": 0, "bilinear": 1, "bicubic": 2}


class RenderError(RuntimeError):
    pass


class UpscalerProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class VacFrame:
    pixels: np.ndarray                 # (H, W, 3) uint8
    tick: int
    sim_time_s: float
    eav_pose: RigidTransform | None
    homography: Homography
    footprint_corners_src: np.ndarray  # (4, 2) source px
    scale_factor: float                # output px per source px along u
    upscaled: bool
    coverage: float


@dataclass(frozen=True)
class UpscalerSpec:
    kind: str = "bicubic"              # nearest | bilinear | bicubic | external
    external: str | None = None        # subprocess command line
    timeout_s: float = 10.0

    def __post_init__(self):
        if self.kind not in ("nearest", "bilinear", "bicubic", "external"):
            raise ValueError(f"unknown upscaler kind {self.kind!r}")
        if self.kind == "external" and not self.external:
            raise ValueError("external upscaler requires a command locator")


@dataclass(frozen=True)
class RenderConfig:
    sampling: str = "bilinear"
    fill: tuple[int, int, int] = (0, 0, 0)
    upscaler: UpscalerSpec = field(default_factory=UpscalerSpec)
    engage_threshold: float = 1.0      # upscale when scale_factor exceeds this
    sr_enabled: bool = True

    def __post_init__(self):
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")


def _out_corners(width: int, height: int) -> np.ndarray:
    w, h = float(width), float(height)
    return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


def _warp(src: np.ndarray, m: Homography, out_w: int, out_h: int,
          sampling: str, fill) -> tuple[np.ndarray, float]:
    if out_w <= 0 or out_h <= 0:
        raise RenderError(f"zero-sized output {out_w}x{out_h}")
    minv = m.inverse().matrix
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    kernel = warp_kernels.warp_nearest if sampling == "nearest" else warp_kernels.warp_bilinear
    covered = kernel(src, minv, out,
                     np.uint8(fill[0]), np.uint8(fill[1]), np.uint8(fill[2]))
    return out, covered / (out_w * out_h)


def footprint_src_extent(corners_src: np.ndarray) -> tuple[float, float]:
    """Mean opposite-edge lengths of the source-pixel footprint quad, (w, h)."""
    c = corners_src
    top = float(np.hypot(*(c[1] - c[0])))
    bottom = float(np.hypot(*(c[2] - c[3])))
    left = float(np.hypot(*(c[3] - c[0])))
    right = float(np.hypot(*(c[2] - c[1])))
    return (0.5 * (top + bottom), 0.5 * (left + right))


def select_scale(footprint_px_src: tuple[float, float], vac_dims: tuple[int, int]) -> float:
    """Output pixels per source pixel along u: vac width / source footprint width."""
    w_src = footprint_px_src[0]
    if not w_src > 0 or not vac_dims[0] > 0:
        raise ValueError("footprint and output dims must be positive")
    return vac_dims[0] / w_src


def render(src: Frame, m: Homography, vac_cam: CameraIntrinsics,
           sampling: str = "bilinear", fill=(0, 0, 0)) -> VacFrame:
    """Warp the source frame through m into the virtual camera's raster.

    Out-of-bounds output pixels take the fill color and are excluded from
    coverage. Deterministic: equal inputs give byte-identical rasters.
    """
    if sampling not in SAMPLING_MODES:
        raise ValueError(f"sampling must be one of {SAMPLING_MODES}, got {sampling!r}")
    pixels, coverage = _warp(src.pixels, m, vac_cam.width, vac_cam.height, sampling, fill)
    corners = m.inverse().apply(_out_corners(vac_cam.width, vac_cam.height))
    scale = select_scale(footprint_src_extent(corners), (vac_cam.width, vac_cam.height))
    return VacFrame(
        pixels=pixels, tick=0, sim_time_s=0.0, eav_pose=None, homography=m,
        footprint_corners_src=corners, scale_factor=scale, upscaled=False,
        coverage=coverage,
    )


def _builtin_resample(image: np.ndarray, out_w: int, out_h: int, kind: str) -> np.ndarray:
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    warp_kernels.resample(image, out, _RESAMPLE_CODE[kind])
    return out


def upscale(image: np.ndarray, factor: float, spec: UpscalerSpec,
            external: "ExternalUpscaler | None" = None) -> np.ndarray:
    """Resize by factor >= 1; output dims are round(input dims * factor)."""
    if factor < 1.0:
        raise ValueError(f"factor must be >= 1, got {factor}")
    in_h, in_w = image.shape[:2]
    out_w = int(math.floor(in_w * factor + 0.5))
    out_h = int(math.floor(in_h * factor + 0.5))
    return resample_to(image, out_w, out_h, spec, external)


def resample_to(image: np.ndarray, out_w: int, out_h: int, spec: UpscalerSpec,
                external: "ExternalUpscaler | None" = None) -> np.ndarray:
    if (out_h, out_w) == image.shape[:2]:
        return image.copy()
    if spec.kind == "external":
        worker = external or ExternalUpscaler(spec)
        try:
            return worker.request(image, out_w, out_h)
        except (UpscalerProtocolError, TimeoutError, OSError) as exc:
            log.warning("external upscaler failed (%s); falling back to bicubic", exc)
            return _builtin_resample(image, out_w, out_h, "bicubic")
    return _builtin_resample(image, out_w, out_h, spec.kind)


def render_vac_frame(src: Frame, m: Homography, vac_cam: CameraIntrinsics,
                     cfg: RenderConfig,
                     external: "ExternalUpscaler | None" = None) -> VacFrame:
    """Full per-tick image pipeline: warp, and upscale when resolution-poor.

    When the source footprint holds fewer pixels than the output (scale
    factor above the engagement threshold), the warp runs at the footprint's
    native scale and the upscaler stretches it to the output size.
    """
    corners = m.inverse().apply(_out_corners(vac_cam.width, vac_cam.height))
    scale = select_scale(footprint_src_extent(corners), (vac_cam.width, vac_cam.height))
    engaged = cfg.sr_enabled and scale > cfg.engage_threshold
    if engaged:
        red_w = max(1, int(math.floor(vac_cam.width / scale + 0.5)))
        red_h = max(1, int(math.floor(vac_cam.height / scale + 0.5)))
        shrink = np.array([
            [red_w / vac_cam.width, 0.0, 0.0],
            [0.0, red_h / vac_cam.height, 0.0],
            [0.0, 0.0, 1.0],
        ])
        reduced = Homography(shrink @ m.matrix)
        raster, coverage = _warp(src.pixels, reduced, red_w, red_h, cfg.sampling, cfg.fill)
        raster = resample_to(raster, vac_cam.width, vac_cam.height, cfg.upscaler, external)
    else:
        raster, coverage = _warp(src.pixels, m, vac_cam.width, vac_cam.height,
                                 cfg.sampling, cfg.fill)
    return VacFrame(
        pixels=raster, tick=0, sim_time_s=0.0, eav_pose=None, homography=m,
        footprint_corners_src=corners, scale_factor=scale, upscaled=engaged,
        coverage=coverage,
    )


class ExternalUpscaler:
    """Client for a subprocess speaking the upscaler pipe protocol.

    Request: 16-byte header (magic, 4-byte BE width, 4-byte BE height), raw
    RGB payload, then 4-byte BE requested output width and height. Reply:
    header with the output dims followed by the output RGB payload. One
    request in flight at a time.
    """

    def __init__(self, spec: UpscalerSpec):
        if spec.kind != "external" or not spec.external:
            raise ValueError("spec must describe an external upscaler")
        self.spec = spec
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure_proc(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                shlex.split(self.spec.external),
                stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            )
        return self._proc

    def request(self, image: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
        with self._lock:
            proc = self._ensure_proc()
            in_h, in_w = image.shape[:2]
            msg = (UPSCALER_MAGIC + struct.pack(">II", in_w, in_h)
                   + image.tobytes() + struct.pack(">II", out_w, out_h))
            reply: dict = {}

            def _exchange():
                try:
                    proc.stdin.write(msg)
                    proc.stdin.flush()
                    header = _read_exact(proc.stdout, 16)
                    if header[:8] != UPSCALER_MAGIC:
                        raise UpscalerProtocolError(f"bad reply magic {header[:8]!r}")
                    w, h = struct.unpack(">II", header[8:16])
                    if (w, h) != (out_w, out_h):
                        raise UpscalerProtocolError(
                            f"reply dims {w}x{h} != requested {out_w}x{out_h}")
                    reply["data"] = _read_exact(proc.stdout, w * h * 3)
                except Exception as exc:  # surfaced to the caller below
                    reply["error"] = exc

            t = threading.Thread(target=_exchange, daemon=True)
            t.start()
            t.join(self.spec.timeout_s)
            if t.is_alive():
                proc.kill()
                self._proc = None
                raise TimeoutError(f"upscaler timed out after {self.spec.timeout_s}s")
            if "error" in reply:
                self._proc = None
                raise UpscalerProtocolError(str(reply["error"]))
            return np.frombuffer(reply["data"], dtype=np.uint8).reshape(out_h, out_w, 3)

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc = None


def _read_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise UpscalerProtocolError("upscaler stream closed mid-reply")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)
