"""
RGB-D frame → cropped, down-sampled metric point cloud.

Conventions: camera frame is x right, y down, z forward; depth is the
camera-frame z coordinate; pixel (u, v) is sampled at its centre
(u + 0.5, v + 0.5). CameraModel.rotation/translation map camera → world.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True, eq=False)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError(f"camera focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        rot = np.asarray(self.rotation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise ConfigError(f"camera rotation must be 3x3, got {rot.shape}")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6) or abs(np.linalg.det(rot) - 1.0) > 1e-6:
            raise ConfigError("camera rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @classmethod
    def look_at(cls, eye, target, fx: float, fy: float, cx: float, cy: float,
                width: int, height: int, up=(0.0, 0.0, 1.0)) -> "CameraModel":
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            raise ConfigError("camera look_at: view direction parallel to up vector")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward], axis=1)
        return cls(fx, fy, cx, cy, width, height, rotation, eye)

    @classmethod
    def orbit(cls, azimuth_deg: float, elevation_deg: float, distance: float, target,
              fov_deg: float, resolution: int) -> "CameraModel":
        """Camera on a sphere around `target`, looking at it, square image."""
        az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
        target = np.asarray(target, dtype=np.float64)
        eye = target + distance * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        focal = resolution / (2.0 * np.tan(np.radians(fov_deg) / 2.0))
        return cls.look_at(eye, target, focal, focal, resolution / 2.0, resolution / 2.0, resolution, resolution)

    def camera_rays(self) -> np.ndarray:
        """Per-pixel ray directions in the camera frame, scaled so z == 1. Shape (H, W, 3)."""
        u = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        v = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv, np.ones_like(uu)], axis=-1)

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation

    def project(self, points: np.ndarray) -> tuple:
        """World points → continuous pixel coordinates (u, v) and depth z."""
        cam = self.world_to_camera(points)
        z = cam[:, 2]
        u = self.fx * cam[:, 0] / z + self.cx
        v = self.fy * cam[:, 1] / z + self.cy
        return u, v, z

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx), "fy": float(self.fy), "cx": float(self.cx), "cy": float(self.cy),
            "width": int(self.width), "height": int(self.height),
            "rotation": self.rotation.tolist(), "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraModel":
        return cls(data["fx"], data["fy"], data["cx"], data["cy"], data["width"], data["height"],
                   np.array(data["rotation"]), np.array(data["translation"]))


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    colors: np.ndarray = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise ShapeError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", points)
        if self.colors is not None:
            colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(colors) != len(points):
                raise ShapeError(f"point cloud has {len(points)} points but {len(colors)} colors")
            object.__setattr__(self, "colors", colors)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, index) -> "PointCloud":
        colors = None if self.colors is None else self.colors[index]
        return PointCloud(self.points[index], colors)

    def features(self, with_colors: bool = False) -> np.ndarray:
        """Network input: (N, 3) coordinates, or (N, 6) with colors appended."""
        if not with_colors:
            return self.points.astype(np.float32)
        colors = self.colors if self.colors is not None else np.zeros_like(self.points)
        return np.concatenate([self.points, colors], axis=1).astype(np.float32)


@dataclass(frozen=True, eq=False)
class WorkspaceBox:
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.minimum, dtype=np.float64).reshape(3)
        hi = np.asarray(self.maximum, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ConfigError(f"workspace box min {lo} exceeds max {hi}")
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    @property
    def center(self) -> np.ndarray:
        return (self.minimum + self.maximum) / 2.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all((points >= self.minimum) & (points <= self.maximum), axis=1)


def backproject(depth: np.ndarray, rgb: np.ndarray, camera: CameraModel) -> PointCloud:
    """One colored world-frame point per pixel with depth > 0."""
    depth = np.asarray(depth)
    if depth.shape != (camera.height, camera.width):
        raise ShapeError(f"backproject: depth {depth.shape} does not match camera {(camera.height, camera.width)}")
    if rgb.shape[:2] != depth.shape:
        raise ShapeError(f"backproject: rgb {rgb.shape} and depth {depth.shape} differ in resolution")
    valid = np.isfinite(depth) & (depth > 0)
    rows, cols = np.nonzero(valid)
    z = depth[rows, cols].astype(np.float64)
    x = (cols + 0.5 - camera.cx) / camera.fx * z
    y = (rows + 0.5 - camera.cy) / camera.fy * z
    cam = np.stack([x, y, z], axis=1)
    world = cam @ camera.rotation.T + camera.translation
    colors = rgb[rows, cols].astype(np.float64)
    if rgb.dtype == np.uint8:
        colors /= 255.0
    return PointCloud(world, colors)


def crop_workspace(cloud: PointCloud, box: WorkspaceBox) -> PointCloud:
    """Points inside the closed box, original order kept."""
    return cloud.subset(np.nonzero(box.contains(cloud.points))[0])


def farthest_point_sample(points: np.ndarray, k: int, seed_index: int = 0) -> np.ndarray:
    """Greedy max-min selection; ties go to the lowest index.

    When k exceeds the number of points the selection is cycled.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if n == 0:
        raise ShapeError("farthest_point_sample: empty point cloud")
    if k < 1:
        raise ValueError(f"farthest_point_sample: k must be >= 1, got {k}")
    if not 0 <= seed_index < n:
        raise ValueError(f"farthest_point_sample: seed_index {seed_index} out of range for {n} points")

    m = min(k, n)
    selected = np.empty(m, dtype=np.int64)
    selected[0] = seed_index
    nearest = np.full(n, np.inf)
    for i in range(1, m):
        nearest = np.minimum(nearest, np.sum((points - points[selected[i - 1]]) ** 2, axis=1))
        # chosen indices leave the pool; duplicates would otherwise tie at 0
        nearest[selected[:i]] = -np.inf
        selected[i] = int(np.argmax(nearest))
    if k > n:
        selected = selected[np.arange(k) % n]
    return selected


def resample_to_count(cloud: PointCloud, target: int, rng: np.random.Generator) -> PointCloud:
    """Exactly `target` points: FPS down-sampling, or padding with duplicates."""
    if target < 1:
        raise ValueError(f"resample_to_count: target must be >= 1, got {target}")
    n = len(cloud)
    if n == 0:
        raise ShapeError("resample_to_count: empty point cloud")
    if n >= target:
        index = farthest_point_sample(cloud.points, target, seed_index=int(rng.integers(n)))
    else:
        index = np.concatenate([np.arange(n), rng.integers(n, size=target - n)])
    return cloud.subset(index)


def normalize_points(cloud: PointCloud, box: WorkspaceBox) -> PointCloud:
    """Translate so the box centre is the origin; no scaling."""
    return PointCloud(cloud.points - box.center, cloud.colors)
