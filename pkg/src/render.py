"""
Scene description and a vectorized ray caster.

Spheres and yaw-rotated boxes, nearest-hit z-buffering, flat Lambertian
shading from one directional light. Depth is the camera-frame z of the
hit (0 where nothing is hit). Pixels with no geometry show the
background albedo unshaded.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import CameraModel

_EPS = 1e-9


def _check_albedo(albedo) -> np.ndarray:
    albedo = np.asarray(albedo, dtype=np.float64).reshape(3)
    if np.any(albedo < 0) or np.any(albedo > 1):
        raise ConfigError(f"albedo must lie in [0, 1]^3, got {albedo}")
    return albedo


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(eq=False)
class Sphere:
    center: np.ndarray
    radius: float
    albedo: np.ndarray
    name: str = "sphere"
    target: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.albedo = _check_albedo(self.albedo)

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> tuple:
        """Nearest positive hit parameter and unit normal per ray (inf on miss)."""
        oc = origin - self.center
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * np.sum(dirs * oc, axis=-1)
        c = float(oc @ oc) - self.radius ** 2
        disc = b * b - 4.0 * a * c
        root = np.sqrt(np.maximum(disc, 0.0))
        t = (-b - root) / (2.0 * a)
        t = np.where(t > _EPS, t, (-b + root) / (2.0 * a))
        t = np.where((disc >= 0) & (t > _EPS), t, np.inf)
        hit = origin + np.where(np.isfinite(t), t, 0.0)[..., None] * dirs
        normals = (hit - self.center) / self.radius
        return t, normals

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.center, axis=-1) - self.radius


@dataclass(eq=False)
class Box:
    center: np.ndarray
    half_extents: np.ndarray
    albedo: np.ndarray
    yaw: float = 0.0
    name: str = "box"
    target: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        self.albedo = _check_albedo(self.albedo)

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> tuple:
        """Slab test in the box frame; the normal is the entering face's."""
        to_local = _yaw_matrix(-self.yaw)
        o = to_local @ (origin - self.center)
        d = dirs @ to_local.T
        h = self.half_extents
        parallel = d == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (-h - o) * inv
            t2 = (h - o) * inv
        inside_slab = np.abs(o) <= h
        t_lo = np.where(parallel, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
        t_hi = np.where(parallel, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = t_lo.max(axis=-1)
        t_far = t_hi.min(axis=-1)
        hit = (t_near <= t_far) & (t_near > _EPS)
        t = np.where(hit, t_near, np.inf)

        face = np.argmax(t_lo, axis=-1)
        local_normal = np.zeros(d.shape)
        face_dir = np.take_along_axis(d, face[..., None], axis=-1)[..., 0]
        np.put_along_axis(local_normal, face[..., None], -np.sign(face_dir)[..., None], axis=-1)
        normals = local_normal @ _yaw_matrix(self.yaw).T
        return t, normals

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        local = (points - self.center) @ _yaw_matrix(self.yaw)
        q = np.abs(local) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside


@dataclass(eq=False)
class Scene:
    camera: CameraModel
    background: np.ndarray
    light_direction: np.ndarray
    light_intensity: float = 0.7
    ambient: float = 0.3
    table: Box = None
    objects: list = field(default_factory=list)

    def __post_init__(self):
        self.background = _check_albedo(self.background)
        light = np.asarray(self.light_direction, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(light)
        if norm < _EPS:
            raise ConfigError("light direction must be non-zero")
        self.light_direction = light / norm

    def shapes(self) -> list:
        return ([self.table] if self.table is not None else []) + list(self.objects)

    def target_objects(self) -> list:
        return [shape for shape in self.objects if shape.target]


def render(scene: Scene) -> tuple:
    """Ray-cast the scene. Returns (rgb uint8 H×W×3, depth float32 H×W)."""
    cam = scene.camera
    dirs = cam.camera_rays() @ cam.rotation.T
    origin = cam.translation

    depth = np.full(dirs.shape[:2], np.inf)
    normals = np.zeros(dirs.shape)
    albedo = np.broadcast_to(scene.background, dirs.shape).copy()
    for shape in scene.shapes():
        t, n = shape.intersect(origin, dirs)
        closer = t < depth
        depth[closer] = t[closer]
        normals[closer] = n[closer]
        albedo[closer] = shape.albedo

    hit = np.isfinite(depth)
    lambert = np.maximum(normals @ scene.light_direction, 0.0)
    shade = np.clip(scene.ambient + scene.light_intensity * lambert, 0.0, 1.0)
    color = np.where(hit[..., None], albedo * shade[..., None], albedo)
    rgb = np.round(np.clip(color, 0.0, 1.0) * 255.0).astype(np.uint8)
    return rgb, np.where(hit, depth, 0.0).astype(np.float32)
