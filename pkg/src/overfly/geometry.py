"""Pinhole camera model, rigid transforms, and the plane-induced homography.

Frame conventions used throughout:

* World: right-handed, z up, ground plane z = 0, origin at the nadir point
  of the reference (recording) camera.
* Images: origin top-left, u right, v down. Image v maps to world -y, so a
  level hover view is upright with north (+y) at the top.
* Camera: optical axis along camera +z; the default mount points it along
  body -z (straight down) with the camera u-axis along body x, which makes
  the mount rotation diag(1, -1, -1).

All scene points are assumed coplanar on z = 0, so any two camera views of
the scene are related by an exact 3x3 projective map; vac_homography builds
the one taking recorded-video pixels to virtual-camera pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import ScenarioManifest

__all__ = [
    "CameraIntrinsics", "RigidTransform", "Homography", "GroundPoint",
    "NADIR_MOUNT_ROTATION", "nadir_mount", "reference_camera_pose",
    "intrinsics_from_manifest", "intrinsics_from_fov",
    "pixel_to_ground", "ground_to_pixel", "camera_pose", "footprint",
    "ground_intersection", "vac_homography", "vac_ground_corners",
]

_AXIS_EPS = 1e-6

# Camera-to-body rotation of the default straight-down mount.
NADIR_MOUNT_ROTATION = np.diag([1.0, -1.0, -1.0])


class DegeneratePoseError(ValueError):
    """Optical axis (nearly) parallel to the ground, or intersection behind camera."""


@dataclass(frozen=True)
class GroundPoint:
    """A point on the world ground plane z = 0."""
    x: float
    y: float

    def homogeneous(self) -> np.ndarray:
        return np.array([self.x, self.y, 0.0, 1.0])


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_px: float          # horizontal focal length, pixels
    width: int
    height: int
    principal: tuple[float, float]
    fov_h_rad: float
    fov_v_rad: float
    focal_v_px: float | None = None  # defaults to focal_px (square pixels)

    def __post_init__(self):
        expected = (self.width / 2.0) / math.tan(self.fov_h_rad / 2.0)
        if abs(self.focal_px - expected) > 1e-9 * max(abs(expected), 1.0):
            raise ValueError(
                f"focal_px {self.focal_px} inconsistent with fov_h (expected {expected})")
        u0, v0 = self.principal
        if not (0.0 <= u0 <= self.width and 0.0 <= v0 <= self.height):
            raise ValueError(f"principal point {self.principal} outside image")
        if self.focal_v_px is None:
            object.__setattr__(self, "focal_v_px", self.focal_px)

    def matrix(self) -> np.ndarray:
        u0, v0 = self.principal
        return np.array([
            [self.focal_px, 0.0, u0],
            [0.0, self.focal_v_px, v0],
            [0.0, 0.0, 1.0],
        ])


def intrinsics_from_fov(width: int, height: int, fov_h_deg: float,
                        fov_v_deg: float | None = None) -> CameraIntrinsics:
    """Centered intrinsics from a horizontal FoV; square pixels when the
    vertical FoV is absent or aspect-derived."""
    fov_h = math.radians(fov_h_deg)
    focal = (width / 2.0) / math.tan(fov_h / 2.0)
    if fov_v_deg is None:
        fov_v = 2.0 * math.atan((height / width) * math.tan(fov_h / 2.0))
        focal_v = focal
    else:
        fov_v = math.radians(fov_v_deg)
        focal_v = (height / 2.0) / math.tan(fov_v / 2.0)
    return CameraIntrinsics(
        focal_px=focal, width=width, height=height,
        principal=(width / 2.0, height / 2.0),
        fov_h_rad=fov_h, fov_v_rad=fov_v, focal_v_px=focal_v,
    )


def intrinsics_from_manifest(manifest: ScenarioManifest) -> CameraIntrinsics:
    """Recording-camera intrinsics synthesized from the manifest's FoV."""
    from .scenario import derive_fov_v_deg
    fov_v = manifest.fov_v_deg
    if fov_v == derive_fov_v_deg(manifest.width, manifest.height, manifest.fov_h_deg):
        fov_v = None  # aspect-derived: keep pixels exactly square
    return intrinsics_from_fov(manifest.width, manifest.height,
                               manifest.fov_h_deg, fov_v)


def _orthonormalize(r: np.ndarray) -> np.ndarray:
    """Snap a near-rotation back onto SO(3) (Gram-Schmidt on columns).

    Keeps arbitrarily long composition chains within 1e-12 of orthonormal
    instead of drifting linearly with chain length.
    """
    x = r[:, 0]
    x = x / np.linalg.norm(x)
    y = r[:, 1] - (x @ r[:, 1]) * x
    y = y / np.linalg.norm(y)
    return np.column_stack([x, y, np.cross(x, y)])


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element: x_out = rotation @ x_in + translation."""
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64))
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=np.float64).reshape(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self o other)(x) = self(other(x))."""
        return RigidTransform(
            rotation=_orthonormalize(self.rotation @ other.rotation),
            translation=self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rotation=rt, translation=-(rt @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def nadir_mount(translation=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Default camera-to-body mount: optical axis straight down, u along body x."""
    return RigidTransform(rotation=NADIR_MOUNT_ROTATION.copy(),
                          translation=np.asarray(translation, dtype=np.float64))


def reference_camera_pose(altitude_m: float) -> RigidTransform:
    """Recording-camera pose: nadir view from the world origin at altitude z_o."""
    return RigidTransform(rotation=NADIR_MOUNT_ROTATION.copy(),
                          translation=np.array([0.0, 0.0, altitude_m]))


def camera_pose(eav_pose: RigidTransform, mount: RigidTransform) -> RigidTransform:
    """Camera-to-world transform: body pose composed with the camera mount."""
    return eav_pose.compose(mount)


def pixel_to_ground(cam: CameraIntrinsics, z_cam: float, pixel) -> GroundPoint:
    """Back-project a pixel of a nadir camera at height z_cam onto z = 0.

    Valid for the reference viewing geometry: camera axes aligned with
    world x / -y, optical axis straight down.
    """
    if not z_cam > 0:
        raise ValueError(f"z_cam must be > 0, got {z_cam}")
    u, v = float(pixel[0]), float(pixel[1])
    u0, v0 = cam.principal
    return GroundPoint(
        x=z_cam * (u - u0) / cam.focal_px,
        y=-z_cam * (v - v0) / cam.focal_v_px,
    )


def ground_to_pixel(cam: CameraIntrinsics, z_cam: float, point: GroundPoint) -> tuple[float, float]:
    """Exact inverse of pixel_to_ground."""
    if not z_cam > 0:
        raise ValueError(f"z_cam must be > 0, got {z_cam}")
    u0, v0 = cam.principal
    return (u0 + cam.focal_px * point.x / z_cam,
            v0 - cam.focal_v_px * point.y / z_cam)


def footprint(z_k: float, fov_h_rad: float, fov_v_rad: float) -> tuple[float, float]:
    """Ground extent (meters) of a nadir view at height z_k: 2 z tan(fov/2)."""
    if z_k < 0:
        raise ValueError(f"z_k must be >= 0, got {z_k}")
    return (2.0 * z_k * math.tan(fov_h_rad / 2.0),
            2.0 * z_k * math.tan(fov_v_rad / 2.0))


def ground_intersection(cam_pose: RigidTransform) -> GroundPoint:
    """Where the optical axis pierces the ground plane.

    The axis point at camera depth -z_k / (z_v . z_w) lands on z = 0, with
    z_v the optical axis in world coordinates and z_w the world vertical.
    """
    z_v = cam_pose.rotation[:, 2]
    dot = z_v[2]  # z_v . e3
    if abs(dot) < _AXIS_EPS:
        raise DegeneratePoseError("optical axis parallel to ground plane")
    z_k = cam_pose.translation[2]
    depth = -z_k / dot
    if depth <= 0:
        raise DegeneratePoseError("ground intersection behind camera")
    p = cam_pose.translation + depth * z_v
    return GroundPoint(x=p[0], y=p[1])


def _ground_to_cam_pixels(cam: CameraIntrinsics, cam_pose: RigidTransform) -> np.ndarray:
    """3x3 map from homogeneous ground coords [x, y, 1] to homogeneous pixels."""
    world_to_cam = cam_pose.inverse()
    r = world_to_cam.rotation
    cols = np.column_stack([r[:, 0], r[:, 1], world_to_cam.translation])
    return cam.matrix() @ cols


def _src_pixels_to_ground(src_cam: CameraIntrinsics, z_o: float) -> np.ndarray:
    """3x3 map from recorded-video pixels to homogeneous ground coords."""
    u0, v0 = src_cam.principal
    su = z_o / src_cam.focal_px
    sv = z_o / src_cam.focal_v_px
    return np.array([
        [su, 0.0, -su * u0],
        [0.0, -sv, sv * v0],
        [0.0, 0.0, 1.0],
    ])


@dataclass(frozen=True)
class Homography:
    """3x3 projective pixel map, normalized so element (2,2) is 1 when nonzero."""
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if not np.all(np.isfinite(m)):
            raise ValueError("homography has non-finite entries")
        if m[2, 2] != 0.0:
            m = m / m[2, 2]
        det = np.linalg.det(m)
        if not np.isfinite(det) or abs(det) < 1e-12:
            raise ValueError(f"homography is singular (det={det})")
        object.__setattr__(self, "matrix", m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (..., 2) pixel coordinates through the homography."""
        pts = np.asarray(points, dtype=np.float64)
        ones = np.ones(pts.shape[:-1] + (1,))
        h = np.concatenate([pts, ones], axis=-1) @ self.matrix.T
        return h[..., :2] / h[..., 2:3]


def vac_homography(src_cam: CameraIntrinsics, z_o: float,
                   vac_cam: CameraIntrinsics, cam_pose: RigidTransform) -> Homography:
    """Plane-induced homography from recorded-video pixels to virtual-camera pixels.

    Chains the nadir back-projection of the recording camera (at altitude
    z_o over the origin) onto the ground plane with the projection of
    ground points into the posed virtual camera. Exact for all points on
    z = 0.
    """
    if not cam_pose.translation[2] > 0:
        raise DegeneratePoseError("camera must be above the ground plane")
    ground_intersection(cam_pose)  # raises on degenerate viewing geometry
    m = _ground_to_cam_pixels(vac_cam, cam_pose) @ _src_pixels_to_ground(src_cam, z_o)
    return Homography(m)


def vac_ground_corners(vac_cam: CameraIntrinsics, cam_pose: RigidTransform) -> np.ndarray:
    """World ground-plane corners of the virtual camera's view, (4, 2).

    Corners are the outer pixel-grid corners (0,0), (W,0), (W,H), (0,H), so
    a nadir view at height z spans exactly the footprint() extent.
    """
    w, h = float(vac_cam.width), float(vac_cam.height)
    corners = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
    to_pixels = _ground_to_cam_pixels(vac_cam, cam_pose)
    return Homography(np.linalg.inv(to_pixels)).apply(corners)
