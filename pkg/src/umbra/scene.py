"""Light parameterization, camera model, and light-map conditioning.

The light sits on a sphere of radius `radius` around the origin, positioned
by a polar angle `theta` (degrees from the zenith) and an azimuth `phi`
(degrees from +x toward +y). It emits from a square of side `size` that
faces the origin. `intensity` is a post-render scalar on the shadow map.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np


@dataclass(frozen=True)
class LightParams:
    theta: float
    phi: float
    size: float
    intensity: float = 1.0
    radius: float = 8.0

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"light size must be positive, got {self.size}")
        if self.intensity <= 0:
            raise ValueError(f"intensity must be positive, got {self.intensity}")
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


@dataclass(frozen=True)
class Camera:
    position: tuple
    look_at: tuple = (0.0, 0.0, 0.0)
    up: tuple = (0.0, 0.0, 1.0)
    vertical_fov: float = 40.0
    image_size: tuple = (256, 256)

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64)
        tgt = np.asarray(self.look_at, dtype=np.float64)
        if np.allclose(pos, tgt):
            raise ValueError("camera position equals look_at")
        if not 0.0 < self.vertical_fov < 180.0:
            raise ValueError(f"vertical_fov out of range: {self.vertical_fov}")

    def basis(self):
        """Return (position, right, up, forward) as float64 arrays."""
        pos = np.asarray(self.position, dtype=np.float64)
        fwd = np.asarray(self.look_at, dtype=np.float64) - pos
        fwd = fwd / np.linalg.norm(fwd)
        up_hint = np.asarray(self.up, dtype=np.float64)
        right = np.cross(fwd, up_hint)
        nr = np.linalg.norm(right)
        if nr < 1e-9:
            raise ValueError("camera up vector is parallel to the view direction")
        right = right / nr
        up = np.cross(right, fwd)
        return pos, right, up, fwd

    @property
    def tan_half_fov(self):
        return float(np.tan(np.deg2rad(self.vertical_fov) / 2.0))

    @property
    def aspect(self):
        w, h = self.image_size
        return w / h


def default_camera(image_size=(256, 256), dolly=6.0):
    """Camera on the negative y-axis looking at the origin."""
    return Camera(position=(0.0, -float(dolly), 2.0), image_size=tuple(image_size))


def camera_project(camera: Camera, point):
    """Project a world point to continuous (col, row) pixel coordinates.

    Inverse of the pinhole ray construction: raises ValueError for points at
    or behind the camera plane.
    """
    pos, right, up, fwd = camera.basis()
    v = np.asarray(point, dtype=np.float64) - pos
    depth = float(v @ fwd)
    if depth <= 0.0:
        raise ValueError(f"point {point} is behind the camera")
    w, h = camera.image_size
    sx = float(v @ right) / depth / (camera.tan_half_fov * camera.aspect)
    sy = float(v @ up) / depth / camera.tan_half_fov
    col = (sx + 1.0) / 2.0 * w - 0.5
    row = (1.0 - sy) / 2.0 * h - 0.5
    return col, row


def light_position(p: LightParams):
    """Cartesian light center: spherical-to-Cartesian with z up."""
    th = np.deg2rad(p.theta)
    ph = np.deg2rad(p.phi)
    return p.radius * np.array(
        [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]
    )


def light_frame(p: LightParams):
    """Return (center, u, v): an orthonormal tangent basis of the light square.

    `u` and `v` span the plane perpendicular to the center-to-origin
    direction. At the pole (light straight overhead) the cross product with
    the world z-axis degenerates and a fixed frame is used instead.
    """
    center = light_position(p)
    d = -center / np.linalg.norm(center)  # unit direction light -> origin
    z = np.array([0.0, 0.0, 1.0])
    u = np.cross(z, d)
    nu = np.linalg.norm(u)
    if nu < 1e-6:
        u = np.array([1.0, 0.0, 0.0])
        v = np.array([0.0, 1.0, 0.0])
    else:
        u = u / nu
        v = np.cross(d, u)
    return center, u, v


def sample_area_light(p: LightParams, grid, rng):
    """Stratified-jittered sample points on the light square.

    Returns (grid**2, 3) points: one jittered sample per stratum cell of a
    grid x grid subdivision, in row-major cell order.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    center, u, v = light_frame(p)
    jitter = rng.random((grid * grid, 2))
    cells = np.stack(
        np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij"), axis=-1
    ).reshape(-1, 2)
    # cell (i, j) -> offsets in [-1/2, 1/2) of the square side
    frac = (cells + jitter) / grid - 0.5
    return center + p.size * (frac[:, :1] * u + frac[:, 1:] * v)


def blob_map(p: LightParams, resolution):
    """Encode light position and size as a Gaussian blob image in [0, 1].

    The light's ground-plane coordinates (x, y) are mapped from the square
    [-radius, radius]^2 onto the image (x right, y up); the blob's standard
    deviation grows linearly with the light size, peak value 1.
    """
    w, h = resolution
    if w < 1 or h < 1:
        raise ValueError(f"resolution must be positive, got {resolution}")
    th = np.deg2rad(p.theta)
    ph = np.deg2rad(p.phi)
    x = p.radius * np.sin(th) * np.cos(ph)
    y = p.radius * np.sin(th) * np.sin(ph)
    col = (x + p.radius) / (2.0 * p.radius) * (w - 1)
    row = (p.radius - y) / (2.0 * p.radius) * (h - 1)
    sigma = blob_sigma(p.size, w)
    cc, rr = np.meshgrid(np.arange(w), np.arange(h))
    d2 = (cc - col) ** 2 + (rr - row) ** 2
    return np.exp(-d2 / (2.0 * sigma * sigma))


def blob_sigma(size, width):
    """Blob standard deviation in pixels for a light of the given size."""
    return (width / 64.0) * size


def blob_center_pixel(p: LightParams, resolution):
    """(col, row) continuous pixel coordinates of the blob center."""
    w, h = resolution
    th = np.deg2rad(p.theta)
    ph = np.deg2rad(p.phi)
    x = p.radius * np.sin(th) * np.cos(ph)
    y = p.radius * np.sin(th) * np.sin(ph)
    return (x + p.radius) / (2.0 * p.radius) * (w - 1), (p.radius - y) / (2.0 * p.radius) * (h - 1)
