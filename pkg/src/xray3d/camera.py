"""Pinhole camera, per-pixel ray generation, and spherical view sampling.

Conventions, fixed once for the whole codec:
  - camera space is right-handed, looking down -z, up is +y;
  - pixel (row j, col i) maps to the pre-normalized camera-frame
    direction ((i - cx)/fx, -(j - cy)/fx, -1) with fx = 0.5*W/tan(fov_x/2),
    cx = W/2, cy = H/2 (integer pixel coordinates, square pixels);
  - directions are rotated by the camera-to-world rotation and then
    unit-normalized, so stored depths are Euclidean distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import _frozen

# Horizontal field of view (radians) paired with a view distance of 1.2
# so that a bounding sphere of radius 0.5 just fills the frame.
DEFAULT_FOV_X = 0.8575560450553894
DEFAULT_DISTANCE = 1.2


@dataclass(frozen=True)
class Camera:
    width: int
    height: int
    fov_x: float
    c2w: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1 pixel")
        if not 0.0 < self.fov_x < math.pi:
            raise ValueError("fov_x must lie in (0, pi)")
        mat = np.asarray(self.c2w, dtype=np.float64).reshape(4, 4)
        rot = mat[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("camera rotation block is not orthonormal")
        if not np.allclose(mat[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValueError("last row of c2w must be (0, 0, 0, 1)")
        object.__setattr__(self, "c2w", _frozen(mat))

    @property
    def position(self) -> np.ndarray:
        return self.c2w[:3, 3]

    @property
    def rotation(self) -> np.ndarray:
        return self.c2w[:3, :3]

    @property
    def fx(self) -> float:
        return 0.5 * self.width / math.tan(0.5 * self.fov_x)


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64).reshape(3)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        object.__setattr__(self, "origin", _frozen(o))
        object.__setattr__(self, "direction", _frozen(d))


@dataclass(frozen=True)
class RayGrid:
    """One ray per pixel: origins and unit directions, shape (H, W, 3)."""

    origins: np.ndarray
    directions: np.ndarray

    @property
    def height(self) -> int:
        return self.origins.shape[0]

    @property
    def width(self) -> int:
        return self.origins.shape[1]

    def flat(self) -> tuple[np.ndarray, np.ndarray]:
        return self.origins.reshape(-1, 3), self.directions.reshape(-1, 3)

    def ray(self, row: int, col: int) -> Ray:
        return Ray(self.origins[row, col], self.directions[row, col])


def generate_rays(camera: Camera) -> RayGrid:
    """Build the per-pixel ray grid for a camera."""
    w, h = camera.width, camera.height
    fx = camera.fx
    cx, cy = w / 2.0, h / 2.0
    i = np.arange(w, dtype=np.float64)
    j = np.arange(h, dtype=np.float64)
    ii, jj = np.meshgrid(i, j)  # (H, W)
    dirs = np.stack([(ii - cx) / fx, -(jj - cy) / fx, -np.ones_like(ii)], axis=-1)
    dirs = dirs @ camera.rotation.T
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.position, dirs.shape).copy()
    return RayGrid(_frozen(origins), _frozen(dirs))


def look_at(
    position,
    target=(0.0, 0.0, 0.0),
    up=(0.0, 1.0, 0.0),
) -> np.ndarray:
    """Camera-to-world matrix for a camera at `position` facing `target`."""
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    z_cam = position - target
    norm = np.linalg.norm(z_cam)
    if norm < 1e-12:
        raise ValueError("camera position coincides with target")
    z_cam = z_cam / norm
    x_cam = np.cross(up, z_cam)
    x_norm = np.linalg.norm(x_cam)
    if x_norm < 1e-12:
        raise ValueError("view direction is parallel to the up vector")
    x_cam = x_cam / x_norm
    y_cam = np.cross(z_cam, x_cam)
    c2w = np.eye(4)
    c2w[:3, 0] = x_cam
    c2w[:3, 1] = y_cam
    c2w[:3, 2] = z_cam
    c2w[:3, 3] = position
    return c2w


def camera_from_spherical(
    azimuth_deg: float,
    elevation_deg: float,
    distance: float = DEFAULT_DISTANCE,
    width: int = 256,
    height: int = 256,
    fov_x: float = DEFAULT_FOV_X,
) -> Camera:
    """Camera on a sphere around the origin, looking inward.

    Azimuth 0 / elevation 0 places the camera at (0, 0, distance) facing
    -z; azimuth rotates about +y, elevation lifts toward +y.
    """
    az = math.radians(azimuth_deg)
    el = math.radians(elevation_deg)
    position = distance * np.array(
        [math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)]
    )
    return Camera(width, height, fov_x, look_at(position))


def sample_view_angles(seed: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic random view angles: azimuth uniform in [-180, 180)
    degrees, elevation uniform in [0, 45] degrees."""
    if n < 1:
        raise ValueError("need at least one view")
    rng = np.random.default_rng(seed)
    azimuths = rng.uniform(-180.0, 180.0, size=n)
    elevations = rng.uniform(0.0, 45.0, size=n)
    return azimuths, elevations


def sample_views(
    seed: int,
    n: int,
    width: int = 256,
    height: int = 256,
    fov_x: float = DEFAULT_FOV_X,
    distance: float = DEFAULT_DISTANCE,
) -> list[Camera]:
    """Draw n deterministic random views around the origin, fixed
    distance, looking at the origin with up = +y."""
    azimuths, elevations = sample_view_angles(seed, n)
    return [
        camera_from_spherical(az, el, distance, width, height, fov_x)
        for az, el in zip(azimuths, elevations)
    ]
